"""Fixed-step closed-loop simulation, velocity estimation and run statistics."""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import trapezoid

from .control import Controller, GuidanceConfig, Law
from .model import (
    Dynamics,
    LiftoffError,
    ModelParams,
    SystemState,
    ValidationError,
    as_vec3,
)
from .stability import RegulationLyapunov

BLOWUP_LIMIT = 1e6
#: Convergence: velocity change over one second below this ...
CONVERGENCE_TOL = 1e-4
#: ... continuously for this long.
CONVERGENCE_HOLD = 2.0


class VelocitySource(str, enum.Enum):
    TRUE_STATE = "TrueState"
    SAVITZKY_GOLAY = "SavitzkyGolay"


class ControlHold(str, enum.Enum):
    """``zoh`` holds the control over each step; ``continuous`` re-evaluates it at every stage."""

    ZOH = "zoh"
    CONTINUOUS = "continuous"


class NumericalBlowup(RuntimeError):
    pass


class SimulationAborted(RuntimeError):
    """Raised by :func:`run`; carries the samples logged before the failure."""

    def __init__(self, log: "TrajectoryLog", cause: Exception):
        super().__init__(f"simulation aborted at t={log.t[-1]:.6g} s: {cause}")
        self.log = log
        self.cause = cause


@dataclass(frozen=True)
class SineProfile:
    """``amplitude * sin(2 pi frequency t + phase)`` along ``axis``."""

    amplitude: float
    frequency: float
    axis: tuple = (1.0, 0.0, 0.0)
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "axis", tuple(as_vec3(self.axis, "axis").tolist()))
        if not self.frequency >= 0:
            raise ValidationError("profile frequency must be non-negative")

    def __call__(self, t: float):
        s = self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)
        return (s * self.axis[0], s * self.axis[1], s * self.axis[2])


@dataclass(frozen=True)
class NoiseProfile:
    """Smooth bounded random force: linear interpolation between random knots.

    Knots are drawn every ``1/frequency`` seconds, uniformly inside the ball
    of radius ``amplitude``.
    """

    amplitude: float
    frequency: float

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValidationError("noise knot frequency must be positive")

    def sampler(self, duration: float, seed: int):
        rng = np.random.default_rng(seed)
        n = int(math.ceil(duration * self.frequency)) + 2
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        knots = (d * (self.amplitude * rng.uniform(size=(n, 1)) ** (1.0 / 3.0))).tolist()
        rate = self.frequency

        def value(t: float):
            s = t * rate
            i = min(int(s), n - 2)
            w = s - i
            a, b = knots[i], knots[i + 1]
            return (a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1]), a[2] + w * (b[2] - a[2]))

        return value


def _zero(t: float):
    return (0.0, 0.0, 0.0)


def _horizontal_only(profile):
    def value(t: float):
        v = profile(t)
        return (v[0], v[1], 0.0)

    return value


@dataclass(frozen=True, eq=False)
class SimConfig:
    x0: SystemState
    guidance: GuidanceConfig
    dt: float = 1e-3
    duration: float = 60.0
    velocity_source: VelocitySource = VelocitySource.SAVITZKY_GOLAY
    sg_window: int = 11
    sg_poly_order: int = 3
    sg_rate: float = 100.0
    gait: SineProfile | None = None
    delta_profile: SineProfile | NoiseProfile | None = None
    seed: int = 0
    control_hold: ControlHold = ControlHold.ZOH
    analysis_start: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "velocity_source", VelocitySource(self.velocity_source))
        object.__setattr__(self, "control_hold", ControlHold(self.control_hold))
        if not self.dt > 0:
            raise ValidationError("dt must be positive")
        if not (self.duration > self.dt or self.duration == 0.0):
            raise ValidationError("duration must exceed dt")
        if self.sg_window < 5 or self.sg_window % 2 == 0:
            raise ValidationError("Savitzky-Golay window must be an odd integer >= 5")
        if not 2 <= self.sg_poly_order < self.sg_window:
            raise ValidationError("Savitzky-Golay order must be in [2, window - 1]")
        self.estimator_stride  # validates sg_rate
        if not 0.0 <= self.analysis_start <= max(self.duration, 0.0):
            raise ValidationError("analysis_start must lie inside the run")

    def __eq__(self, other):
        if not isinstance(other, SimConfig):
            return NotImplemented
        return all(getattr(self, f) == getattr(other, f) for f in self.__dataclass_fields__)

    __hash__ = None

    @property
    def estimator_stride(self) -> int:
        """Integrator steps between two estimator samples."""
        ratio = 1.0 / (self.sg_rate * self.dt)
        stride = round(ratio)
        if stride < 1 or abs(stride - ratio) > 1e-6 * ratio:
            raise ValidationError("1/sg_rate must be an integer multiple of dt")
        return stride

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.duration / self.dt - 1e-9))


def savitzky_golay_weights(window: int, order: int, dt: float) -> np.ndarray:
    """End-point first-derivative Savitzky-Golay weights, oldest sample first.

    The least-squares fit runs on abscissae scaled to ``[-1, 0]`` and is
    solved by QR, which keeps the weights accurate at high orders where an
    unscaled Vandermonde solve loses several digits.
    """
    u = np.linspace(-1.0, 0.0, window)
    q, r = np.linalg.qr(np.vander(u, order + 1, increasing=True))
    # row 1 of the pseudo-inverse maps samples to the linear coefficient = d/du at u = 0
    w = np.linalg.solve(r, q.T)[1]
    return w / ((window - 1) * dt)


def savitzky_golay_velocity(positions: Sequence, dt: float, window: int, order: int) -> np.ndarray:
    """Causal velocity estimate at the newest of a sequence of position samples.

    Fits a degree-``order`` polynomial by least squares to the last
    ``window`` samples and differentiates it at the last one.  With fewer
    samples a two-point difference is returned (zero for a single sample).
    """
    P = np.asarray(positions, dtype=float).reshape(len(positions), -1)
    if len(P) >= window:
        # the weights sum to zero; differencing against the newest sample keeps constants exact
        return savitzky_golay_weights(window, order, dt) @ (P[-window:] - P[-1])
    if len(P) < 2:
        return np.zeros(P.shape[1])
    return (P[-1] - P[-2]) / dt


class _Estimator:
    def __init__(self, cfg: SimConfig):
        self.window = cfg.sg_window
        self.h = cfg.estimator_stride * cfg.dt
        self.coeffs = savitzky_golay_weights(cfg.sg_window, cfg.sg_poly_order, self.h).tolist()
        self.buf: deque = deque(maxlen=cfg.sg_window)
        self.value = (0.0, 0.0, 0.0)

    def push(self, p):
        buf = self.buf
        buf.append((p[0], p[1], p[2]))
        if len(buf) == self.window:
            c, last = self.coeffs, buf[-1]
            self.value = tuple(math.fsum(ci * (q[j] - last[j]) for ci, q in zip(c, buf)) for j in range(3))
        elif len(buf) >= 2:
            a, b = buf[-2], buf[-1]
            self.value = ((b[0] - a[0]) / self.h, (b[1] - a[1]) / self.h, (b[2] - a[2]) / self.h)
        return self.value


@dataclass(eq=False)
class TrajectoryLog:
    """Per-sample record of a run, stored column-wise."""

    t: np.ndarray
    x: np.ndarray
    F_c: np.ndarray
    tension: np.ndarray
    u_A: np.ndarray
    gamma_applied: np.ndarray
    v_H_est: np.ndarray
    u_H: np.ndarray
    delta: np.ndarray
    V: np.ndarray
    slack: np.ndarray
    dt: float
    law: Law
    params: ModelParams
    guidance: GuidanceConfig
    analysis_start: float = 0.0
    error: str | None = field(default=None)

    VECTOR_COLUMNS = ("p_H", "v_H", "p_R", "v_R", "F_c")

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> SystemState:
        return SystemState.from_array(self.x[i])

    @property
    def v_H(self) -> np.ndarray:
        return self.x[:, 3:6]

    @property
    def v_R(self) -> np.ndarray:
        return self.x[:, 9:12]

    def columns(self) -> list[str]:
        names = ["t"]
        for block in ("p_H", "v_H", "p_R", "v_R", "F_c"):
            names += [f"{block}_{a}" for a in "xyz"]
        names.append("tension")
        for block in ("u_A", "gamma_applied", "v_H_est", "u_H", "delta"):
            names += [f"{block}_{a}" for a in "xyz"]
        return names + ["V", "slack"]

    def table(self) -> np.ndarray:
        return np.column_stack([
            self.t, self.x, self.F_c, self.tension, self.u_A, self.gamma_applied,
            self.v_H_est, self.u_H, self.delta, self.V, self.slack.astype(float),
        ])

    def to_csv(self, path) -> None:
        """Header row then one row per sample, 9 significant digits."""
        table = self.table()
        fmt = ["%.9g"] * (table.shape[1] - 1) + ["%d"]
        np.savetxt(path, table, fmt=fmt, delimiter=",", header=",".join(self.columns()), comments="")


def _cable_series(X: np.ndarray, params: ModelParams):
    l_c = X[:, 6:9] - X[:, 0:3]
    length = np.linalg.norm(l_c, axis=1)
    stretch = length - params.cable.rest_length
    taut = stretch > 0.0
    tension = np.where(taut, params.cable.stiffness * stretch, 0.0)
    scale = np.divide(tension, length, out=np.zeros_like(length), where=taut)
    return l_c * scale[:, None], tension


def _build_log(cfg: SimConfig, params: ModelParams, rows: list, error: str | None = None) -> TrajectoryLog:
    n = len(rows)
    t = np.arange(n) * cfg.dt
    cols = [np.array([r[i] for r in rows], dtype=float).reshape(n, -1) for i in range(6)]
    X, u_A, gam, v_est, u_H, delta = cols
    F, tension = _cable_series(X, params)
    V = RegulationLyapunov(cfg.guidance, params).series(X)
    return TrajectoryLog(
        t=t, x=X, F_c=F, tension=tension, u_A=u_A, gamma_applied=gam, v_H_est=v_est, u_H=u_H,
        delta=delta, V=V, slack=tension == 0.0, dt=cfg.dt, law=cfg.guidance.law, params=params,
        guidance=cfg.guidance, analysis_start=cfg.analysis_start, error=error,
    )


def _disturbances(cfg: SimConfig):
    u_H = _horizontal_only(cfg.gait) if cfg.gait is not None else _zero
    prof = cfg.delta_profile
    if prof is None:
        delta = _zero
    elif isinstance(prof, NoiseProfile):
        delta = prof.sampler(cfg.duration, cfg.seed)
    else:
        delta = prof
    return u_H, delta


def _rk4(f, x, t, h):
    k1 = f(x, t)
    k2 = f([a + 0.5 * h * b for a, b in zip(x, k1)], t + 0.5 * h)
    k3 = f([a + 0.5 * h * b for a, b in zip(x, k2)], t + 0.5 * h)
    k4 = f([a + h * b for a, b in zip(x, k3)], t + h)
    h6 = h / 6.0
    return [a + h6 * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(x, k1, k2, k3, k4)]


class _Stepper:
    """Shared single-step machinery for :func:`run` and :func:`step`."""

    def __init__(self, cfg: SimConfig, params: ModelParams):
        self.cfg = cfg
        self.dyn = Dynamics(params)
        self.ctrl = Controller(cfg.guidance, params.cable, params.admittance)
        self.u_H, self.delta = _disturbances(cfg)
        self.height = params.handle_height
        self.use_estimate = cfg.velocity_source is VelocitySource.SAVITZKY_GOLAY
        self.continuous = cfg.control_hold is ControlHold.CONTINUOUS

    def advance(self, x, t, u_A, v_est):
        rhs, u_H, delta, h = self.dyn.rhs, self.u_H, self.delta, self.cfg.dt
        if self.continuous:
            ctrl, use_est = self.ctrl, self.use_estimate

            def f(xs, ts):
                u = ctrl(xs, v_est if use_est else xs[3:6])[0]
                return rhs(xs, u, u_H(ts), delta(ts))
        else:
            def f(xs, ts):
                return rhs(xs, u_A, u_H(ts), delta(ts))

        x = _rk4(f, x, t, h)
        x[2] = self.height
        x[5] = 0.0
        for v in x:
            if not abs(v) <= BLOWUP_LIMIT:
                raise NumericalBlowup(f"state component {v!r} exceeds {BLOWUP_LIMIT:g}")
        return x


def step(x: SystemState, t: float, cfg: SimConfig, params: ModelParams, v_H_used=None) -> SystemState:
    """One fixed RK4 step from ``(x, t)``.

    The control is evaluated at step start from ``v_H_used`` (defaults to
    the true human velocity) and held for the step unless the config asks
    for continuous evaluation.
    """
    s = _Stepper(cfg, params)
    xs = x.as_array().tolist()
    v = xs[3:6] if v_H_used is None else as_vec3(v_H_used).tolist()
    u_A = s.ctrl(xs, v)[0]
    return SystemState.from_array(s.advance(xs, t, u_A, v))


def run(cfg: SimConfig, params: ModelParams) -> TrajectoryLog:
    """Integrate the closed loop for ``cfg.duration`` seconds.

    Returns ``n_steps + 1`` samples starting at ``t = 0``.  Identical inputs
    give bit-identical logs.

    Raises
    ------
    SimulationAborted
        On liftoff or numerical blow-up; ``exc.log`` holds the partial log.
    """
    cfg.x0.check_ground(params.handle_height)
    cfg.guidance.check_target(params.handle_height)
    stepper = _Stepper(cfg, params)
    ctrl, u_H_fn, delta_fn = stepper.ctrl, stepper.u_H, stepper.delta
    est = _Estimator(cfg)
    stride = cfg.estimator_stride
    dt = cfg.dt
    x = cfg.x0.as_array().tolist()
    rows = []
    v_est = (0.0, 0.0, 0.0)
    n = cfg.n_steps
    for k in range(n + 1):
        t = k * dt
        if k % stride == 0:
            v_est = est.push(x[0:3])
        u_A, gam, _ = ctrl(x, v_est if stepper.use_estimate else x[3:6])
        rows.append((x, u_A, gam, v_est, u_H_fn(t), delta_fn(t)))
        if k == n:
            break
        try:
            x = stepper.advance(x, t, u_A, v_est)
        except (LiftoffError, NumericalBlowup) as exc:
            raise SimulationAborted(_build_log(cfg, params, rows, str(exc)), exc) from exc
    return _build_log(cfg, params, rows)


@dataclass(frozen=True)
class RunSummary:
    mean_force_error: float
    std_force_error: float
    mean_speed: float
    std_speed: float
    slack_fraction: float
    converged: bool
    settle_time: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def force_error(log: TrajectoryLog) -> np.ndarray:
    """Horizontal gap between the commanded guidance force and the felt cable force."""
    d = log.gamma_applied[:, :2] - log.F_c[:, :2]
    return np.hypot(d[:, 0], d[:, 1])


def _convergence(log: TrajectoryLog, mask: np.ndarray) -> tuple[bool, float | None]:
    lag = int(round(1.0 / log.dt))
    hold = int(round(CONVERGENCE_HOLD / log.dt))
    if len(log) <= lag:
        return False, None
    v = np.hstack([log.v_H, log.v_R])
    change = np.linalg.norm(v[lag:] - v[:-lag], axis=1)
    ok = (change < CONVERGENCE_TOL) & mask[lag:]
    if not ok[-1]:
        return False, None
    bad = np.flatnonzero(~ok)
    first = bad[-1] + 1 if len(bad) else 0
    if len(ok) - first <= hold:
        return False, None
    return True, float(log.t[first + lag])


def summarize(log: TrajectoryLog, start: float | None = None) -> RunSummary:
    """Run statistics over samples with ``t >= start`` (default: the log's analysis start).

    Speed mean and spread are trapezoidal time averages of ``|v_H|``; force
    statistics and the slack fraction weight every sample equally.
    """
    if len(log) == 0:
        raise ValueError("empty log")
    start = log.analysis_start if start is None else start
    mask = log.t >= start - 1e-12
    t = log.t[mask]
    err = force_error(log)[mask]
    speed = np.linalg.norm(log.v_H[mask], axis=1)
    if len(t) >= 2:
        span = t[-1] - t[0]
        mean_speed = float(trapezoid(speed, t) / span)
        std_speed = float(math.sqrt(max(trapezoid((speed - mean_speed) ** 2, t) / span, 0.0)))
    else:
        mean_speed, std_speed = float(speed[0]), 0.0
    converged, settle = _convergence(log, mask)
    return RunSummary(
        mean_force_error=float(err.mean()),
        std_force_error=float(err.std()),
        mean_speed=mean_speed,
        std_speed=std_speed,
        slack_fraction=float(log.slack[mask].mean()),
        converged=converged,
        settle_time=settle,
    )
