"""Coupled human / admittance-controlled robot / cable dynamics.

The human is a planar mass-damper holding a handle at a fixed height, the
robot is rendered as a virtual mass-damper by its admittance controller, and
the two are joined by a massless cable that behaves as a unilateral spring.

State vectors are laid out as ``[p_H, v_H, p_R, v_R]`` (12 floats, world
frame, z up).  The public functions accept and return numpy arrays; the
simulator uses :class:`Dynamics`, which evaluates the same equations on
plain Python floats because per-call numpy overhead dominates on 3-vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

#: Default height of the handle above the walking plane, in metres.
HANDLE_HEIGHT = 1.0
#: Default gravitational acceleration, m/s^2.
GRAVITY = 9.81

Z_AXIS = np.array([0.0, 0.0, 1.0])


class LiftoffError(RuntimeError):
    """The cable pulls the human upward with at least their body weight."""


class ValidationError(ValueError):
    """A parameter violates a documented invariant."""


def as_vec3(value, name: str = "vector") -> np.ndarray:
    v = np.array(value, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise ValidationError(f"{name} must have 3 components, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} must be finite")
    return v


def as_mat3(value, name: str = "matrix") -> np.ndarray:
    """Coerce a scalar, a 3-vector (diagonal) or a 3x3 nested list to a matrix."""
    arr = np.array(value, dtype=float)
    if arr.ndim == 0:
        arr = float(arr) * np.eye(3)
    elif arr.shape == (3,):
        arr = np.diag(arr)
    if arr.shape != (3, 3):
        raise ValidationError(f"{name} must be a scalar, 3-vector or 3x3 matrix")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    return arr


def require_spd(mat: np.ndarray, what: str) -> None:
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(mat - mat.T)) > 1e-12 * scale:
        raise ValidationError(f"{what} must be symmetric")
    if np.linalg.eigvalsh(mat)[0] <= 0.0:
        raise ValidationError(f"{what} must be positive definite")


class _ArrayEq:
    """Field-wise equality that understands numpy array fields."""

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None


@dataclass(frozen=True, eq=False)
class HumanParams(_ArrayEq):
    mass: float
    damping: np.ndarray
    g: float = GRAVITY

    def __post_init__(self):
        object.__setattr__(self, "damping", as_mat3(self.damping, "human damping"))
        if not self.mass > 0:
            raise ValidationError("human mass must be positive")
        if not self.g > 0:
            raise ValidationError("gravity must be positive")
        require_spd(self.damping, "human damping")

    @property
    def weight(self) -> float:
        return self.mass * self.g


@dataclass(frozen=True, eq=False)
class AdmittanceParams(_ArrayEq):
    inertia: np.ndarray
    damping: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inertia", as_mat3(self.inertia, "admittance inertia"))
        object.__setattr__(self, "damping", as_mat3(self.damping, "admittance damping"))
        require_spd(self.inertia, "admittance inertia")
        require_spd(self.damping, "admittance damping")


@dataclass(frozen=True)
class CableParams:
    rest_length: float
    stiffness: float

    def __post_init__(self):
        if not self.rest_length > 0:
            raise ValidationError("cable rest length must be positive")
        if not self.stiffness > 0:
            raise ValidationError("cable stiffness must be positive")


@dataclass(frozen=True, eq=False)
class ModelParams(_ArrayEq):
    human: HumanParams
    admittance: AdmittanceParams
    cable: CableParams
    handle_height: float = HANDLE_HEIGHT


@dataclass(frozen=True, eq=False)
class SystemState(_ArrayEq):
    p_H: np.ndarray
    v_H: np.ndarray
    p_R: np.ndarray
    v_R: np.ndarray

    def __post_init__(self):
        for name in ("p_H", "v_H", "p_R", "v_R"):
            object.__setattr__(self, name, as_vec3(getattr(self, name), name))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p_H, self.v_H, self.p_R, self.v_R])

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "SystemState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3], x[3:6], x[6:9], x[9:12])

    def check_ground(self, handle_height: float, tol: float = 1e-9) -> None:
        if abs(self.p_H[2] - handle_height) > tol or abs(self.v_H[2]) > tol:
            raise ValidationError("human must stay on the ground plane at handle height")


@dataclass(frozen=True, eq=False)
class ExogenousInputs(_ArrayEq):
    u_H: np.ndarray = None
    delta: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "u_H", as_vec3(np.zeros(3) if self.u_H is None else self.u_H, "u_H"))
        object.__setattr__(self, "delta", as_vec3(np.zeros(3) if self.delta is None else self.delta, "delta"))

    def bounded(self, u_max: float = math.inf, delta_max: float = math.inf) -> "ExogenousInputs":
        """Return a copy with each input norm-clamped to its bound."""
        return ExogenousInputs(_clip_norm(self.u_H, u_max), _clip_norm(self.delta, delta_max))


def _clip_norm(v: np.ndarray, bound: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v * (bound / n) if n > bound else v


def cable_force(p_H, p_R, cable: CableParams) -> tuple[np.ndarray, float]:
    """Force the cable applies to the handle, and the cable tension.

    The robot receives exactly the negated vector.
    """
    f, tension = _cable_force(*as_vec3(p_H), *as_vec3(p_R), cable.rest_length, cable.stiffness)
    return np.array(f), tension


def _cable_force(hx, hy, hz, rx, ry, rz, l0, k):
    lx, ly, lz = rx - hx, ry - hy, rz - hz
    length = math.sqrt(lx * lx + ly * ly + lz * lz)
    if length - l0 > 0.0:
        tension = k * (length - l0)
        s = tension / length
        return (s * lx, s * ly, s * lz), tension
    return (0.0, 0.0, 0.0), 0.0


def ground_reaction(F_c, human: HumanParams) -> np.ndarray:
    """Vertical ground force that keeps the human on the walking plane."""
    fz = float(as_vec3(F_c)[2])
    if fz >= human.weight:
        raise LiftoffError(
            f"vertical cable force {fz:.6g} N lifts the {human.weight:.6g} N human off the ground"
        )
    return np.array([0.0, 0.0, human.weight - fz])


class Dynamics:
    """Float-level evaluator of the closed-loop state derivative.

    Construct once per parameter set; :meth:`rhs` is the hot path of the
    simulator.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        h, a, c = params.human, params.admittance, params.cable
        self.m_H = h.mass
        self.weight = h.weight
        self.D_H = tuple(h.damping.ravel().tolist())
        self.D_A = tuple(a.damping.ravel().tolist())
        self.M_inv = tuple(np.linalg.inv(a.inertia).ravel().tolist())
        self.l0 = c.rest_length
        self.k = c.stiffness

    def cable(self, x):
        return _cable_force(x[0], x[1], x[2], x[6], x[7], x[8], self.l0, self.k)

    def rhs(self, x, u_A, u_H=(0.0, 0.0, 0.0), delta=(0.0, 0.0, 0.0)):
        (fx, fy, fz), _ = self.cable(x)
        if fz >= self.weight:
            raise LiftoffError(
                f"vertical cable force {fz:.6g} N lifts the {self.weight:.6g} N human off the ground"
            )
        vhx, vhy, vhz = x[3], x[4], x[5]
        vrx, vry, vrz = x[9], x[10], x[11]
        d = self.D_H
        # gravity and ground reaction cancel the vertical channel exactly
        inv_m = 1.0 / self.m_H
        ahx = inv_m * (-(d[0] * vhx + d[1] * vhy + d[2] * vhz) + fx + u_H[0])
        ahy = inv_m * (-(d[3] * vhx + d[4] * vhy + d[5] * vhz) + fy + u_H[1])
        d = self.D_A
        rx = -(d[0] * vrx + d[1] * vry + d[2] * vrz) - fx + u_A[0] + delta[0]
        ry = -(d[3] * vrx + d[4] * vry + d[5] * vrz) - fy + u_A[1] + delta[1]
        rz = -(d[6] * vrx + d[7] * vry + d[8] * vrz) - fz + u_A[2] + delta[2]
        mi = self.M_inv
        return [
            vhx, vhy, 0.0,
            ahx, ahy, 0.0,
            vrx, vry, vrz,
            mi[0] * rx + mi[1] * ry + mi[2] * rz,
            mi[3] * rx + mi[4] * ry + mi[5] * rz,
            mi[6] * rx + mi[7] * ry + mi[8] * rz,
        ]


def state_derivative(x, u_A, exo: ExogenousInputs | None, params: ModelParams) -> np.ndarray:
    """Time derivative of the 12-dimensional closed-loop state.

    Parameters
    ----------
    x : SystemState or array_like of 12 floats
    u_A : array_like
        Additional admittance input chosen by the guidance law.
    exo : ExogenousInputs, optional
        Human intent force and robot tracking-error force (zero if omitted).
    params : ModelParams

    Raises
    ------
    LiftoffError
        If the vertical cable force reaches the human's weight.
    """
    if isinstance(x, SystemState):
        x.check_ground(params.handle_height)
        x = x.as_array()
    exo = exo or ExogenousInputs()
    dyn = Dynamics(params)
    return np.array(dyn.rhs(
        np.asarray(x, dtype=float).tolist(),
        as_vec3(u_A, "u_A").tolist(),
        exo.u_H.tolist(),
        exo.delta.tolist(),
    ))


def mechanical_energy(x, params: ModelParams) -> float:
    """Kinetic energy of both bodies plus elastic energy stored in the cable."""
    x = x.as_array() if isinstance(x, SystemState) else np.asarray(x, dtype=float)
    v_H, v_R = x[3:6], x[9:12]
    kinetic = 0.5 * params.human.mass * v_H @ v_H + 0.5 * v_R @ params.admittance.inertia @ v_R
    return float(kinetic + cable_energy(float(np.linalg.norm(x[6:9] - x[0:3])), params.cable))


def cable_energy(length: float, cable: CableParams) -> float:
    stretch = length - cable.rest_length
    return 0.5 * cable.stiffness * stretch * stretch if stretch > 0.0 else 0.0
