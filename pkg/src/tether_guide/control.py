"""Guidance laws for the tethered robot.

``Gamma`` only looks at the robot state: a horizontal position-error term
toward the robot reference plus a constant vertical pull.  ``GammaH`` adds
``D_A v_H`` so the admittance damping no longer resists the walking human.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import (
    HANDLE_HEIGHT,
    AdmittanceParams,
    CableParams,
    SystemState,
    ValidationError,
    as_vec3,
)


class Law(str, enum.Enum):
    GAMMA = "Gamma"
    GAMMA_H = "GammaH"


class DegenerateReference(ValueError):
    """The robot reference is undefined for a zero vertical force."""


@dataclass(frozen=True, eq=False)
class GuidanceConfig:
    """Guidance law selection and gains.

    ``k_p`` is the horizontal stiffness of ``K_p = diag(k_p, k_p, 0)``,
    ``f_z_des`` the desired vertical cable force and ``sat_norm`` the bound
    on the horizontal norm of ``K_p e_R``.  ``f_z_des`` is not checked
    against the human weight here; that is a stability verdict, reported by
    :func:`tether_guide.stability.check_vertical_force`.
    """

    law: Law
    k_p: float
    f_z_des: float
    p_H_ref: np.ndarray
    sat_norm: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "law", Law(self.law))
        object.__setattr__(self, "p_H_ref", as_vec3(self.p_H_ref, "p_H_ref"))
        if not self.k_p > 0:
            raise ValidationError("position gain k_p must be positive")
        if not self.sat_norm > 0:
            raise ValidationError("saturation bound must be positive")
        if not math.isfinite(self.f_z_des):
            raise ValidationError("f_z_des must be finite")

    def __eq__(self, other):
        if not isinstance(other, GuidanceConfig):
            return NotImplemented
        return (self.law, self.k_p, self.f_z_des, self.sat_norm) == (
            other.law, other.k_p, other.f_z_des, other.sat_norm
        ) and np.array_equal(self.p_H_ref, other.p_H_ref)

    __hash__ = None

    @property
    def f_ref(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.f_z_des])

    def check_target(self, handle_height: float = HANDLE_HEIGHT) -> None:
        if abs(self.p_H_ref[2] - handle_height) > 1e-12:
            raise ValidationError("target p_H_ref must lie on the handle plane")


@dataclass(frozen=True)
class ControlOutput:
    u_A: np.ndarray
    gamma_applied: np.ndarray
    saturated: bool


def robot_reference(cfg: GuidanceConfig, cable: CableParams) -> np.ndarray:
    """Hover point directly above the target, ``l_0 + f_z/k_c`` over the handle."""
    if cfg.f_z_des == 0.0:
        raise DegenerateReference("robot reference needs a nonzero vertical force")
    f_z = cfg.f_z_des
    return cfg.p_H_ref + [0.0, 0.0, f_z / cable.stiffness + math.copysign(cable.rest_length, f_z)]


def clamp_horizontal(force, bound: float) -> tuple[np.ndarray, bool]:
    """Scale the horizontal part of ``force`` down to norm ``bound``."""
    f = as_vec3(force)
    (fx, fy), sat = _clamp_xy(f[0], f[1], bound)
    return np.array([fx, fy, f[2]]), sat


def _clamp_xy(fx: float, fy: float, bound: float):
    n = math.hypot(fx, fy)
    if n > bound:
        s = bound / n
        return (fx * s, fy * s), True
    return (fx, fy), False


class Controller:
    """Precomputed guidance law evaluated on plain floats.

    ``__call__`` takes the 12-float state and the human velocity the law
    should use (true or estimated) and returns ``(u_A, gamma, saturated)``
    as tuples.
    """

    def __init__(self, cfg: GuidanceConfig, cable: CableParams, admittance: AdmittanceParams | None = None):
        if cfg.law is Law.GAMMA_H and admittance is None:
            raise ValueError("GammaH needs the admittance damping")
        self.cfg = cfg
        self.p_ref = tuple(robot_reference(cfg, cable).tolist())
        self.k_p = cfg.k_p
        self.f_z = cfg.f_z_des
        self.sat = cfg.sat_norm
        self.feedback = cfg.law is Law.GAMMA_H
        self.D_A = tuple(admittance.damping.ravel().tolist()) if admittance is not None else None

    def gamma(self, x):
        (gx, gy), sat = _clamp_xy(
            self.k_p * (self.p_ref[0] - x[6]), self.k_p * (self.p_ref[1] - x[7]), self.sat
        )
        return (gx, gy, self.f_z), sat

    def __call__(self, x, v_H):
        g, sat = self.gamma(x)
        if not self.feedback:
            return g, g, sat
        d = self.D_A
        u = (
            g[0] + d[0] * v_H[0] + d[1] * v_H[1] + d[2] * v_H[2],
            g[1] + d[3] * v_H[0] + d[4] * v_H[1] + d[5] * v_H[2],
            g[2] + d[6] * v_H[0] + d[7] * v_H[1] + d[8] * v_H[2],
        )
        return u, g, sat


def gamma(x: SystemState, cfg: GuidanceConfig, cable: CableParams) -> ControlOutput:
    """Robot-state-only guidance ``K_p e_R + f_ref`` with horizontal saturation."""
    raw = cfg.k_p * (robot_reference(cfg, cable) - x.p_R)
    (gx, gy), sat = _clamp_xy(raw[0], raw[1], cfg.sat_norm)
    g = np.array([gx, gy, cfg.f_z_des])
    return ControlOutput(g, g.copy(), sat)


def gamma_h(x: SystemState, cfg: GuidanceConfig, adm: AdmittanceParams, cable: CableParams) -> ControlOutput:
    """``gamma`` plus admittance-damping feedback of the human velocity in ``x``.

    ``gamma_applied`` holds the pre-feedback value so force errors can be
    measured against it.
    """
    base = gamma(x, cfg, cable)
    u = base.u_A + adm.damping @ x.v_H
    return ControlOutput(u, base.gamma_applied, base.saturated)
