"""Piecewise quintic flat-output trajectories driven by waypoints and times.

Each direction-constant segment is M >= 2 time-uniform quintic pieces. Given
boundary position/velocity/acceleration, interior waypoints and a duration,
the coefficients are the unique solution of a banded linear system enforcing
interpolation plus derivative continuity up to order four — the minimum-jerk
interpolant. Gradients of any coefficient-level cost propagate back to the
waypoints, boundary conditions and duration through the adjoint of the same
banded system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import IllConditionedError

# coefficients per piece per dimension (degree-5 polynomials)
NCOEF = 6
# lower/upper bandwidth of the assembled system
_BAND_L, _BAND_U = 8, 2

_FACT = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0]


def beta(order: int, t: float) -> np.ndarray:
    """Derivative of the monomial basis [1, t, ..., t^5] at t."""
    out = np.zeros(NCOEF)
    for k in range(order, NCOEF):
        out[k] = _FACT[k] / _FACT[k - order] * t ** (k - order) if k > order else _FACT[k]
    return out


@dataclass(frozen=True)
class BoundaryCondition:
    """Position, velocity and acceleration pinned at a segment end."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def __post_init__(self):
        for name in ("position", "velocity", "acceleration"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def as_matrix(self) -> np.ndarray:
        return np.vstack([self.position, self.velocity, self.acceleration])

    @staticmethod
    def rest(position) -> "BoundaryCondition":
        return BoundaryCondition(np.asarray(position, float), np.zeros(2), np.zeros(2))


@dataclass(frozen=True)
class TrajSegment:
    """One direction-constant segment: M quintic pieces of equal duration tau."""

    gamma: int
    coeffs: np.ndarray  # (M, 6, 2)
    tau: float
    waypoints: np.ndarray  # (M-1, 2)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        wps = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        coeffs.setflags(write=False)
        wps.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "waypoints", wps)

    @property
    def pieces(self) -> int:
        return self.coeffs.shape[0]

    @property
    def duration(self) -> float:
        return self.tau * self.pieces

    def eval_local(self, t: float, order: int = 0) -> np.ndarray:
        """Evaluate at segment-local time t in [0, duration]; right-continuous."""
        m = self.pieces
        j = min(int(t / self.tau), m - 1) if self.tau > 0 else 0
        ts = t - j * self.tau
        return self.coeffs[j].T @ beta(order, ts)


def construct_segment(
    start: BoundaryCondition,
    end: BoundaryCondition,
    waypoints,
    T: float,
    M: int,
    gamma: int = 1,
) -> TrajSegment:
    """Solve the banded coefficient system for one segment.

    Conditions: order-0..2 boundary values at both ends, position equal to the
    waypoint at each interior joint, and derivative orders 1..4 continuous
    across joints. That is 6M equations for 6M unknowns per dimension.
    """
    if T <= 0:
        raise ValueError("segment duration must be positive")
    if M < 2:
        raise ValueError("a segment needs at least two pieces")
    wps = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if wps.shape[0] != M - 1:
        raise ValueError(f"expected {M - 1} waypoints, got {wps.shape[0]}")
    tau = T / M
    ab, rhs = _assemble(start, end, wps, tau, M)
    try:
        sol = solve_banded((_BAND_L, _BAND_U), ab, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy raises ValueError mostly
        raise IllConditionedError(str(exc)) from exc
    if not np.all(np.isfinite(sol)):
        raise IllConditionedError("banded solve produced non-finite coefficients")
    return TrajSegment(gamma=gamma, coeffs=sol.reshape(M, NCOEF, 2), tau=tau, waypoints=wps)


def _assemble(start, end, wps, tau, M):
    n = NCOEF * M
    ab = np.zeros((_BAND_L + _BAND_U + 1, n))
    rhs = np.zeros((n, 2))

    def put(r, c, val):
        ab[_BAND_U + r - c, c] = val

    def put_row(r, c0, vec):
        for k, v in enumerate(vec):
            if v != 0.0:
                put(r, c0 + k, v)

    b0 = [beta(d, 0.0) for d in range(5)]
    bt = [beta(d, tau) for d in range(5)]

    for d in range(3):
        put_row(d, 0, b0[d])
    rhs[0:3] = start.as_matrix()

    for j in range(1, M):
        base = 3 + NCOEF * (j - 1)
        left = NCOEF * (j - 1)
        right = NCOEF * j
        put_row(base, left, bt[0])
        rhs[base] = wps[j - 1]
        for d in range(5):
            r = base + 1 + d
            put_row(r, left, bt[d])
            put_row(r, right, -b0[d])

    for d in range(3):
        put_row(n - 3 + d, NCOEF * (M - 1), bt[d])
    rhs[n - 3 : n] = end.as_matrix()
    return ab, rhs


def _transpose_band(ab: np.ndarray, n: int) -> np.ndarray:
    """Band storage of A^T given band storage of A; bandwidths (l, u) swap to (u, l)."""
    abt = np.zeros_like(ab)
    for r in range(_BAND_L + _BAND_U + 1):
        off = r - _BAND_U  # row offset: A[i, j] with i = j + off lives in ab[r, j]
        src = ab[r]
        dest = _BAND_L - off
        if off >= 0:
            abt[dest, off:n] = src[: n - off]
        else:
            abt[dest, : n + off] = src[-off:n]
    return abt


def propagate_gradients(seg: TrajSegment, dJ_dc: np.ndarray, dJ_dT: float):
    """Back-propagate coefficient/time gradients to waypoints, boundaries, T.

    ``dJ_dc`` has shape (M, 6, 2). Returns (dJ_dq, dJ_dstart, dJ_dend,
    dJ_dT_total) where the boundary gradients are (3, 2) matrices ordered
    position/velocity/acceleration.
    """
    M = seg.pieces
    n = NCOEF * M
    g = np.asarray(dJ_dc, dtype=float).reshape(n, 2)
    # re-assemble the band (cheap, O(M)) and solve the adjoint system
    start = BoundaryCondition(*[seg.eval_local(0.0, d) for d in range(3)])
    end = BoundaryCondition(*[seg.eval_local(seg.duration, d) for d in range(3)])
    ab, _ = _assemble(start, end, seg.waypoints, seg.tau, M)
    abt = _transpose_band(ab, n)
    lam = solve_banded((_BAND_U, _BAND_L), abt, g)

    dJ_dq = np.zeros((M - 1, 2))
    for j in range(1, M):
        dJ_dq[j - 1] = lam[3 + NCOEF * (j - 1)]
    dJ_dstart = lam[0:3].copy()
    dJ_dend = lam[n - 3 :].copy()

    # d(M c)/dtau rows are higher-derivative evaluations at tau
    dMc = np.zeros((n, 2))
    tau = seg.tau
    for j in range(1, M):
        base = 3 + NCOEF * (j - 1)
        cj = seg.coeffs[j - 1]
        dMc[base] = cj.T @ beta(1, tau)
        for d in range(5):
            dMc[base + 1 + d] = cj.T @ beta(d + 1, tau)
    cM = seg.coeffs[M - 1]
    for d in range(3):
        dMc[n - 3 + d] = cM.T @ beta(d + 1, tau)
    dJ_dtau = -float(np.sum(lam * dMc))
    return dJ_dq, dJ_dstart, dJ_dend, dJ_dT + dJ_dtau / M


def _sq(a: np.ndarray) -> np.ndarray:
    return np.sum(a * a, axis=1)


def _dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=1)


def energy(seg: TrajSegment):
    """Integral of squared jerk over the segment, with gradients.

    Returns (value, dE_dc of shape (M, 6, 2), dE_dT scalar).
    """
    tau = seg.tau
    c3 = seg.coeffs[:, 3, :]
    c4 = seg.coeffs[:, 4, :]
    c5 = seg.coeffs[:, 5, :]
    t2, t3, t4, t5 = tau**2, tau**3, tau**4, tau**5
    val = (
        36.0 * _sq(c3) * tau
        + 144.0 * _dot(c3, c4) * t2
        + 192.0 * _sq(c4) * t3
        + 240.0 * _dot(c3, c5) * t3
        + 720.0 * _dot(c4, c5) * t4
        + 720.0 * _sq(c5) * t5
    )
    dE_dc = np.zeros_like(seg.coeffs)
    dE_dc[:, 3, :] = 72.0 * tau * c3 + 144.0 * t2 * c4 + 240.0 * t3 * c5
    dE_dc[:, 4, :] = 144.0 * t2 * c3 + 384.0 * t3 * c4 + 720.0 * t4 * c5
    dE_dc[:, 5, :] = 240.0 * t3 * c3 + 720.0 * t4 * c4 + 1440.0 * t5 * c5
    dE_dtau = (
        36.0 * _sq(c3)
        + 288.0 * _dot(c3, c4) * tau
        + 576.0 * _sq(c4) * t2
        + 720.0 * _dot(c3, c5) * t2
        + 2880.0 * _dot(c4, c5) * t3
        + 3600.0 * _sq(c5) * t4
    )
    return float(np.sum(val)), dE_dc, float(np.sum(dE_dtau)) / seg.pieces


@dataclass(frozen=True)
class PolyTrajectory:
    """Gear-segmented piecewise-quintic trajectory over global time [0, T_sigma]."""

    segments: tuple[TrajSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("trajectory needs at least one segment")

    @property
    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.segments])

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def locate(self, t: float) -> tuple[int, float]:
        """Map global time to (segment index, local time); right-continuous."""
        total = self.total_duration
        if t < -1e-9 or t > total + 1e-9:
            raise ValueError(f"time {t} outside [0, {total}]")
        t = min(max(t, 0.0), total)
        acc = 0.0
        for i, seg in enumerate(self.segments):
            if t < acc + seg.duration or i == len(self.segments) - 1:
                return i, min(t - acc, seg.duration)
            acc += seg.duration
        raise AssertionError("unreachable")

    def eval(self, t: float, order: int = 0) -> np.ndarray:
        i, ts = self.locate(t)
        return self.segments[i].eval_local(ts, order)

    def gamma_at(self, t: float) -> int:
        i, _ = self.locate(t)
        return self.segments[i].gamma

    def total_energy(self) -> float:
        return float(sum(energy(s)[0] for s in self.segments))
