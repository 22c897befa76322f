"""Closed-form stability conditions, steady-state predictors and Lyapunov checks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .control import GuidanceConfig, Law, robot_reference
from .model import (
    CableParams,
    HumanParams,
    ModelParams,
    SystemState,
    as_mat3,
    as_vec3,
    cable_energy,
)

if TYPE_CHECKING:
    from .sim import TrajectoryLog


class SingularMatrix(np.linalg.LinAlgError):
    pass


class InsufficientSamples(ValueError):
    pass


def min_eigenvalue(mat) -> float:
    """Smallest eigenvalue of the symmetric part of ``mat``."""
    m = np.asarray(mat, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (m + m.T))[0])


def check_vertical_force(cfg: GuidanceConfig, human: HumanParams) -> tuple[bool, float]:
    """Regulation requires ``0 < f_z_des < m_H g``; margin is the distance to the nearer bound."""
    f = cfg.f_z_des
    margin = min(f, human.weight - f)
    return margin > 0.0, margin


def damping_difference(D_H, D_A) -> np.ndarray:
    """``D_H - D_A/4``, the Schur complement of the velocity-feedback dissipation matrix."""
    S = as_mat3(D_H) - 0.25 * as_mat3(D_A)
    return 0.5 * (S + S.T)


def check_damping_condition(D_H, D_A) -> tuple[bool, float]:
    """Positive definiteness of ``D_H - D_A/4``, with its smallest eigenvalue as margin."""
    lam = min_eigenvalue(damping_difference(D_H, D_A))
    return lam > 0.0, lam


def check_scalar_damping(d_H: float, d_A: float) -> tuple[bool, float]:
    """Scalar form of the damping condition, ``d_A < 4 d_H``."""
    if not (d_H > 0 and d_A > 0):
        raise ValueError("scalar dampings must be positive")
    margin = 4.0 * d_H - d_A
    return margin > 0.0, margin


def dissipation_matrix(D_H, D_A, law: Law | str) -> np.ndarray:
    """6x6 matrix ``B`` with ``dV/dt = -[v_H; v_R]^T B [v_H; v_R]``.

    Block diagonal for ``Gamma``; for ``GammaH`` the off-diagonal blocks are
    ``-D_A/2``.
    """
    D_H, D_A = as_mat3(D_H), as_mat3(D_A)
    off = np.zeros((3, 3)) if Law(law) is Law.GAMMA else -0.5 * D_A
    return np.block([[D_H, off], [off.T, D_A]])


def dissipation_rate(v_H, v_R, D_H, D_A, law: Law | str) -> float:
    y = np.concatenate([as_vec3(v_H), as_vec3(v_R)])
    return -float(y @ dissipation_matrix(D_H, D_A, law) @ y)


def _horizontal(v) -> np.ndarray:
    v = as_vec3(v).copy()
    v[2] = 0.0
    return v


def _solve(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc


def steady_state_gamma(gamma_xy, D_H, D_A) -> tuple[np.ndarray, np.ndarray]:
    """Walking velocity and felt horizontal force under a constant robot input.

    ``v* = (D_A + D_H)^-1 gamma_xy`` and the human feels ``gamma_xy - D_A v*``,
    always less than the commanded force.
    """
    g = _horizontal(gamma_xy)
    D_A = as_mat3(D_A)
    v = _solve(D_A + as_mat3(D_H), g)
    return v, g - D_A @ v


def steady_state_gamma_h(gamma_xy, D_H) -> tuple[np.ndarray, np.ndarray]:
    """With human-velocity feedback ``v* = D_H^-1 gamma_xy`` and the full force is felt."""
    g = _horizontal(gamma_xy)
    return _solve(as_mat3(D_H), g), g


def saturated_potential(e, k_p: float, sat_norm: float) -> float:
    """Potential whose gradient is the saturated position-error force.

    Quadratic ``k_p |e_xy|^2 / 2`` while ``k_p |e_xy| <= sat_norm``, linear
    beyond, so the Lyapunov decrease holds in the saturated regime too.
    """
    r = math.hypot(e[0], e[1])
    if k_p * r <= sat_norm:
        return 0.5 * k_p * r * r
    return sat_norm * r - 0.5 * sat_norm * sat_norm / k_p


def _potential_offset(force_norm: float, cable: CableParams) -> float:
    # minus the minimum over l of T(|l|) - l.f, attained at the stretched equilibrium
    return 0.5 * force_norm * force_norm / cable.stiffness + cable.rest_length * force_norm


class RegulationLyapunov:
    """Storage function of the regulation problem, evaluated on 12-float states.

    ``V = kinetic + saturated_potential(e_R) + T(|l_c|) - l_c . f_ref + V_0``,
    with ``V_0`` making ``V`` vanish at the equilibrium.
    """

    def __init__(self, cfg: GuidanceConfig, params: ModelParams):
        self.cfg = cfg
        self.params = params
        self.p_ref = robot_reference(cfg, params.cable)
        self.m_H = params.human.mass
        self.M = params.admittance.inertia
        self.V0 = _potential_offset(abs(cfg.f_z_des), params.cable)

    def __call__(self, x) -> float:
        return float(self.series(np.asarray(x, dtype=float)[None, :])[0])

    def series(self, X: np.ndarray) -> np.ndarray:
        """Vectorised evaluation over an ``(n, 12)`` array of states."""
        v_H, v_R = X[:, 3:6], X[:, 9:12]
        l_c = X[:, 6:9] - X[:, 0:3]
        kinetic = 0.5 * self.m_H * np.einsum("ni,ni->n", v_H, v_H) + 0.5 * np.einsum(
            "ni,ij,nj->n", v_R, self.M, v_R
        )
        e = self.p_ref[:2] - X[:, 6:8]
        r = np.hypot(e[:, 0], e[:, 1])
        k, s = self.cfg.k_p, self.cfg.sat_norm
        potential = np.where(k * r <= s, 0.5 * k * r * r, s * r - 0.5 * s * s / k)
        stretch = np.maximum(np.linalg.norm(l_c, axis=1) - self.params.cable.rest_length, 0.0)
        elastic = 0.5 * self.params.cable.stiffness * stretch * stretch
        return kinetic + potential + elastic - l_c[:, 2] * self.cfg.f_z_des + self.V0


def lyapunov_regulation(x: SystemState, cfg: GuidanceConfig, params: ModelParams) -> float:
    return RegulationLyapunov(cfg, params)(x.as_array())


def lyapunov_error_coords(x: SystemState, v_star, cable_load, params: ModelParams) -> float:
    """Lyapunov function around the constant-velocity walking trajectory.

    ``cable_load`` is the steady cable force of that trajectory (``gamma -
    D_A v*`` plus the vertical pull for ``Gamma``, ``gamma`` for ``GammaH``);
    its horizontal part equals ``D_H v*``.
    """
    v_star, load = as_vec3(v_star), as_vec3(cable_load)
    dv_H, dv_R = x.v_H - v_star, x.v_R - v_star
    l_c = x.p_R - x.p_H
    kinetic = 0.5 * params.human.mass * (dv_H @ dv_H) + 0.5 * (dv_R @ params.admittance.inertia @ dv_R)
    return float(
        kinetic
        + cable_energy(float(np.linalg.norm(l_c)), params.cable)
        - l_c @ load
        + _potential_offset(float(np.linalg.norm(load)), params.cable)
    )


def walking_cable_load(gamma_xy, f_z_des: float, D_H, D_A, law: Law | str) -> tuple[np.ndarray, np.ndarray]:
    """Steady velocity and full 3-D cable force of the saturated walking regime."""
    if Law(law) is Law.GAMMA:
        v, f = steady_state_gamma(gamma_xy, D_H, D_A)
    else:
        v, f = steady_state_gamma_h(gamma_xy, D_H)
    return v, f + np.array([0.0, 0.0, f_z_des])


@dataclass(frozen=True)
class LyapunovSample:
    t: float
    V: float
    Vdot_numeric: float
    dissipation_bound: float


def lyapunov_samples(log: "TrajectoryLog") -> list[LyapunovSample]:
    """Pair the numerical storage rate with the analytic dissipation at each sample."""
    if len(log) < 3:
        raise InsufficientSamples("need at least 3 samples")
    Vdot = np.gradient(log.V, log.dt, edge_order=2)
    bounds = _dissipation_series(log)
    return [LyapunovSample(float(t), float(v), float(d), float(b))
            for t, v, d, b in zip(log.t, log.V, Vdot, bounds)]


def _dissipation_series(log: "TrajectoryLog") -> np.ndarray:
    B = dissipation_matrix(log.params.human.damping, log.params.admittance.damping, log.law)
    y = np.hstack([log.x[:, 3:6], log.x[:, 9:12]])
    return -np.einsum("ni,ij,nj->n", y, B, y)


def passivity_check(log: "TrajectoryLog", tol: float = 1e-4) -> tuple[bool, float]:
    """Verify ``dV/dt <= u.y - y^T B y`` along a simulated trajectory.

    ``y = [v_H; v_R]`` and ``u = [u_H; delta]``.  The storage rate is a
    second-order finite difference of the logged storage values, so ``tol``
    must cover that truncation error.

    Returns
    -------
    ok : bool
    worst_violation : float
        Largest ``dV/dt - u.y + y^T B y`` over the samples, in watts.
    """
    if len(log) < 3:
        raise InsufficientSamples("passivity check needs at least 3 samples")
    Vdot = np.gradient(log.V, log.dt, edge_order=2)
    supply = np.einsum("ni,ni->n", log.u_H, log.x[:, 3:6]) + np.einsum("ni,ni->n", log.delta, log.x[:, 9:12])
    worst = float(np.max(Vdot - supply - _dissipation_series(log)))
    return worst <= tol, worst


@dataclass(frozen=True)
class StabilityReport:
    law: Law
    vertical_force_ok: bool
    vertical_force_margin: float
    damping_condition_ok: bool
    damping_condition_min_eig: float
    scalar_damping_ok: bool | None
    scalar_damping_margin: float | None
    v_star_gamma: np.ndarray
    v_star_gamma_h: np.ndarray
    f_ss_gamma: np.ndarray
    f_ss_gamma_h: np.ndarray

    @property
    def ok(self) -> bool:
        """Whether every condition that applies to the selected law holds."""
        if self.law is Law.GAMMA:
            return self.vertical_force_ok
        checks = [self.vertical_force_ok, self.damping_condition_ok]
        if self.scalar_damping_ok is not None:
            checks.append(self.scalar_damping_ok)
        return all(checks)

    def to_dict(self) -> dict:
        out = {"law": self.law.value, "all_ok": self.ok}
        for key in ("vertical_force_ok", "vertical_force_margin", "damping_condition_ok",
                    "damping_condition_min_eig", "scalar_damping_ok", "scalar_damping_margin"):
            val = getattr(self, key)
            out[key] = float(val) if isinstance(val, (float, np.floating)) else val
        for key in ("v_star_gamma", "v_star_gamma_h", "f_ss_gamma", "f_ss_gamma_h"):
            for axis, val in zip("xyz", getattr(self, key)):
                out[f"{key}_{axis}"] = float(val)
        return out

    def to_text(self) -> str:
        lines = []
        for key, val in self.to_dict().items():
            if isinstance(val, bool) or val is None:
                val = {True: "true", False: "false", None: "n/a"}[val]
            elif isinstance(val, float):
                val = f"{val:.9g}"
            lines.append(f"{key} = {val}")
        return "\n".join(lines)


def _scalar_of(mat: np.ndarray) -> float | None:
    d = mat[0, 0]
    return float(d) if np.array_equal(mat, d * np.eye(3)) else None


def stability_report(cfg: GuidanceConfig, params: ModelParams, gamma_xy=None) -> StabilityReport:
    """Evaluate every condition and predictor for a configuration.

    ``gamma_xy`` is the saturated horizontal guidance force; it defaults to
    ``sat_norm`` along +x.
    """
    D_H, D_A = params.human.damping, params.admittance.damping
    if gamma_xy is None:
        gamma_xy = (cfg.sat_norm, 0.0, 0.0)
    f_ok, f_margin = check_vertical_force(cfg, params.human)
    d_ok, d_eig = check_damping_condition(D_H, D_A)
    s_ok = s_margin = None
    d_h, d_a = _scalar_of(D_H), _scalar_of(D_A)
    if d_h is not None and d_a is not None:
        s_ok, s_margin = check_scalar_damping(d_h, d_a)
    v_g, f_g = steady_state_gamma(gamma_xy, D_H, D_A)
    v_gh, f_gh = steady_state_gamma_h(gamma_xy, D_H)
    return StabilityReport(cfg.law, f_ok, f_margin, d_ok, d_eig, s_ok, s_margin, v_g, v_gh, f_g, f_gh)
