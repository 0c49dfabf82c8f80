"""Differential-flatness state recovery for the kinematic bicycle model.

The flat output is the rear-axle position sigma(t); velocity, heading,
acceleration, curvature and yaw rate all come from its first two derivatives.
Constraint violations are expressed as smooth functions of (sigma_dot,
sigma_ddot) with hand-derived gradients so the optimizer can chain them back
to spline coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NearSingularError
from .geometry import Pose2

# below this speed the heading/curvature formulas are numerically meaningless
V_EPS = 1e-4

# H rotates by +90 degrees; sigma_ddot^T H sigma_dot is the planar cross product
H = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class FlatPoint:
    """Flat output and derivatives at one instant: position, velocity, accel, jerk."""

    sigma: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray | None = None

    def __post_init__(self):
        for name in ("sigma", "d1", "d2", "d3"):
            v = getattr(self, name)
            if v is None:
                continue
            object.__setattr__(self, name, np.asarray(v, dtype=float))


@dataclass(frozen=True)
class VehicleState:
    pose: Pose2
    v: float
    a: float
    kappa: float
    thetadot: float
    phi: float
    gamma: int


@dataclass(frozen=True)
class ViolationResult:
    """Scalar constraint violation (<= 0 feasible) and gradients wrt d1, d2."""

    value: float
    grad_d1: np.ndarray
    grad_d2: np.ndarray


def _cross(d2: np.ndarray, d1: np.ndarray) -> float:
    # d2^T H d1
    return float(d1[0] * d2[1] - d1[1] * d2[0])


def _speed_or_raise(d1: np.ndarray) -> float:
    n = math.hypot(d1[0], d1[1])
    if n <= V_EPS:
        raise NearSingularError(f"flat-output speed {n:.2e} below {V_EPS:.0e}")
    return n


def recover_state(p: FlatPoint, gamma: int, wheelbase: float) -> VehicleState:
    """Vehicle state from flat derivatives for motion direction gamma in {-1, +1}."""
    if gamma not in (-1, 1):
        raise ValueError("gamma must be -1 or +1")
    n = _speed_or_raise(p.d1)
    v = gamma * n
    theta = math.atan2(gamma * p.d1[1], gamma * p.d1[0])
    cross = _cross(p.d2, p.d1)
    dot = float(p.d2 @ p.d1)
    thetadot = cross / n**2
    a = gamma * dot / n
    kappa = gamma * cross / n**3
    phi = math.atan(wheelbase * kappa)
    return VehicleState(
        pose=Pose2(float(p.sigma[0]), float(p.sigma[1]), theta),
        v=v,
        a=a,
        kappa=kappa,
        thetadot=thetadot,
        phi=phi,
        gamma=gamma,
    )


def violation_v(p: FlatPoint, limit: float) -> ViolationResult:
    """|sigma_dot|^2 - v_max^2 <= 0."""
    d1 = p.d1
    value = float(d1 @ d1) - limit**2
    return ViolationResult(value, 2.0 * d1, np.zeros(2))


def violation_a(p: FlatPoint, limit: float) -> ViolationResult:
    """(sigma_ddot . sigma_dot / |sigma_dot|)^2 - a_max^2 <= 0."""
    d1, d2 = p.d1, p.d2
    n = _speed_or_raise(d1)
    n2 = n * n
    dot = float(d2 @ d1)
    value = dot**2 / n2 - limit**2
    grad_d1 = 2.0 * dot / n2 * d2 - 2.0 * dot**2 / n2**2 * d1
    grad_d2 = 2.0 * dot / n2 * d1
    return ViolationResult(value, grad_d1, grad_d2)


def violation_thetadot(p: FlatPoint, limit: float) -> ViolationResult:
    """(sigma_ddot^T H sigma_dot / |sigma_dot|^2)^2 - thetadot_max^2 <= 0."""
    d1, d2 = p.d1, p.d2
    n = _speed_or_raise(d1)
    n2 = n * n
    cross = _cross(d2, d1)
    value = (cross / n2) ** 2 - limit**2
    grad_d1 = 2.0 * cross / n2**2 * (H.T @ d2) - 4.0 * cross**2 / n2**3 * d1
    grad_d2 = 2.0 * cross / n2**2 * (H @ d1)
    return ViolationResult(value, grad_d1, grad_d2)


def violation_kappa(p: FlatPoint, limit: float) -> ViolationResult:
    """Denominator-cleared curvature bound:
    (sigma_ddot^T H sigma_dot)^2 - kappa_max^2 |sigma_dot|^6 <= 0.

    Equivalent to |kappa| <= kappa_max for any nonzero speed and smooth through
    gear changes, so it needs no singularity guard.
    """
    d1, d2 = p.d1, p.d2
    n2 = float(d1 @ d1)
    cross = _cross(d2, d1)
    value = cross**2 - limit**2 * n2**3
    grad_d1 = 2.0 * cross * (H.T @ d2) - 6.0 * limit**2 * n2**2 * d1
    grad_d2 = 2.0 * cross * (H @ d1)
    return ViolationResult(value, grad_d1, grad_d2)
