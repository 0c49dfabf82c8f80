"""Penalty assembly, gradient back-propagation and the quasi-Newton solve.

The constrained trajectory problem is reduced to an unconstrained one over
interior waypoints, gear-change positions/headings/accelerations and
log-parameterized segment durations. Inequality constraints (speed,
acceleration, curvature, yaw rate, corridor containment) become smoothed-L1
penalties summed over per-piece quadrature points; every gradient is analytic.
"""
from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from . import lbfgs
from .body_model import AAVModel
from .corridor import CorridorSequence, build_sequence, seed_heading
from .errors import InfeasibleSeedError, NonFiniteCostError
from .flatness import V_EPS
from .frontend import FrontEndPath, PathSegment, segment as segment_path
from .geometry import OccupancyGrid, Pose2, normalize_angle
from .minco import (
    BoundaryCondition,
    PolyTrajectory,
    TrajSegment,
    beta,
    construct_segment,
    energy,
    propagate_gradients,
)

_TAU_LIMIT = 30.0


@dataclass(frozen=True)
class PenaltyConfig:
    """Weights and discretization of the penalty-relaxed problem."""

    w_time: float = 40.0
    w_v: float = 1e3
    w_a: float = 1e3
    w_kappa: float = 1e3
    w_thetadot: float = 1e3
    w_corridor: float = 2e3
    K: int = 8  # quadrature points per piece (K+1 samples, ends included)
    mu: float = 2e-2  # smoothed-L1 blend width
    w_cusp: float = 2e3  # penalty on the curvature spike left by cusp jerk
    cusp_kappa_budget: float = 0.15  # 1/m; allowed curvature-spike amplitude at
    # the slowest certified speed (V_REST_REPORT) next to a gear change
    w_gear_accel: float = 1e3  # keeps |a_hat| within a_max at gear changes
    a_hat_min: float = 0.3  # |a_hat| floor; a vanishing junction acceleration
    # makes the post-cusp curvature blow up a full order faster
    kappa_reg_speed: float = 0.25  # m/s; scales the curvature penalty so it
    # keeps pressure at crawl speeds (the raw cleared form decays like v^6)
    max_expand: float = 5.0
    grad_tol_rel: float = 1e-5
    max_iterations: int = 3000
    lbfgs_memory: int = 16
    boundary_speed: float = 0.3  # m/s along the pose heading at start/goal;
    # the turn follows in-row driving, so the vehicle arrives and leaves
    # rolling, which keeps the fixed endpoints away from the cusp singularity

    def __post_init__(self):
        if min(self.w_time, self.w_v, self.w_a, self.w_kappa, self.w_thetadot,
               self.w_corridor) <= 0:
            raise ValueError("penalty weights must be positive")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.K < 1:
            raise ValueError("K must be >= 1")

    def quad_weights(self) -> np.ndarray:
        w = np.ones(self.K + 1)
        w[0] = w[-1] = 0.5
        return w


@dataclass
class OptimizeReport:
    cost: float
    iterations: int
    evaluations: int
    converged: bool
    wall_time_s: float
    max_violation: dict[str, float] = field(default_factory=dict)
    message: str = ""


def time_map(tau_virtual: float) -> tuple[float, float]:
    """Map unbounded virtual time to a positive duration: T = exp(tau)."""
    if abs(tau_virtual) > _TAU_LIMIT:
        raise NonFiniteCostError(f"time_map overflow: |{tau_virtual:.2f}| > {_TAU_LIMIT}")
    T = math.exp(tau_virtual)
    return T, T


def time_map_inverse(T: float) -> float:
    if T <= 0:
        raise ValueError("duration must be positive")
    return math.log(T)


def smoothed_l1(x, mu: float):
    """C2-at-zero one-sided ramp: 0 for x<=0, x - mu/2 for x>=mu, quartic blend
    x^3 (mu - x/2) / mu^3 in between. Returns (value, derivative); accepts arrays."""
    x = np.asarray(x, dtype=float)
    value = np.where(x >= mu, x - 0.5 * mu, 0.0)
    deriv = np.where(x >= mu, 1.0, 0.0)
    mid = (x > 0) & (x < mu)
    xm = np.where(mid, x, 0.0)
    value = np.where(mid, xm**3 * (mu - 0.5 * xm) / mu**3, value)
    deriv = np.where(mid, xm**2 * (3.0 * mu - 2.0 * xm) / mu**3, deriv)
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def assemble_boundaries(p_hat, theta_hat: float, a_hat: float) -> BoundaryCondition:
    """Gear-change boundary: pinned position, zero velocity, acceleration of
    magnitude a_hat aligned with the junction heading."""
    direction = np.array([math.cos(theta_hat), math.sin(theta_hat)])
    return BoundaryCondition(np.asarray(p_hat, float), np.zeros(2), a_hat * direction)


@dataclass(frozen=True)
class ProblemSpec:
    """Everything fixed during one optimization run."""

    model: AAVModel
    S0: BoundaryCondition
    SN: BoundaryCondition
    gammas: tuple[int, ...]
    pieces: tuple[int, ...]
    start_heading: float
    goal_heading: float
    corridors: CorridorSequence
    cfg: PenaltyConfig

    @property
    def n_segments(self) -> int:
        return len(self.gammas)


class DecisionVector:
    """Packing/unpacking of (q, p_hat, theta_hat, a_hat, tau_tilde)."""

    def __init__(self, pieces: tuple[int, ...]):
        self.pieces = pieces
        n = len(pieces)
        self.q_sizes = [2 * (m - 1) for m in pieces]
        self.q_offsets = np.concatenate([[0], np.cumsum(self.q_sizes)]).astype(int)
        q_total = int(self.q_offsets[-1])
        self.i_p = q_total
        self.i_theta = self.i_p + 2 * (n - 1)
        self.i_a = self.i_theta + (n - 1)
        self.i_tau = self.i_a + (n - 1)
        self.size = self.i_tau + n
        self.n = n

    def pack(self, q_list, p_hat, theta_hat, a_hat, tau_tilde) -> np.ndarray:
        x = np.empty(self.size)
        for i, q in enumerate(q_list):
            x[self.q_offsets[i] : self.q_offsets[i + 1]] = np.asarray(q, float).ravel()
        x[self.i_p : self.i_theta] = np.asarray(p_hat, float).ravel()
        x[self.i_theta : self.i_a] = np.asarray(theta_hat, float)
        x[self.i_a : self.i_tau] = np.asarray(a_hat, float)
        x[self.i_tau :] = np.asarray(tau_tilde, float)
        return x

    def unpack(self, x: np.ndarray):
        q_list = [
            x[self.q_offsets[i] : self.q_offsets[i + 1]].reshape(-1, 2)
            for i in range(self.n)
        ]
        p_hat = x[self.i_p : self.i_theta].reshape(-1, 2)
        theta_hat = x[self.i_theta : self.i_a]
        a_hat = x[self.i_a : self.i_tau]
        tau_tilde = x[self.i_tau :]
        return q_list, p_hat, theta_hat, a_hat, tau_tilde


def _segment_boundaries(spec: ProblemSpec, p_hat, theta_hat, a_hat):
    """Per-segment (start, end) boundary conditions from the decision variables."""
    n = spec.n_segments
    bcs = []
    for i in range(n):
        start = spec.S0 if i == 0 else assemble_boundaries(
            p_hat[i - 1], theta_hat[i - 1], a_hat[i - 1]
        )
        end = spec.SN if i == n - 1 else assemble_boundaries(
            p_hat[i], theta_hat[i], a_hat[i]
        )
        bcs.append((start, end))
    return bcs


def build_trajectory(spec: ProblemSpec, x: np.ndarray) -> PolyTrajectory:
    layout = DecisionVector(spec.pieces)
    q_list, p_hat, theta_hat, a_hat, tau_tilde = layout.unpack(x)
    bcs = _segment_boundaries(spec, p_hat, theta_hat, a_hat)
    segs = []
    for i in range(spec.n_segments):
        T, _ = time_map(float(tau_tilde[i]))
        segs.append(
            construct_segment(
                bcs[i][0], bcs[i][1], q_list[i], T, spec.pieces[i], spec.gammas[i]
            )
        )
    return PolyTrajectory(segments=tuple(segs))


class PenaltyProblem:
    """Vectorized cost/gradient evaluation for the unconstrained problem."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.layout = DecisionVector(spec.pieces)
        cfg = spec.cfg
        self.wbar = cfg.quad_weights()
        # stacked corridor arrays, sliced per segment
        A, b = spec.corridors.arrays()
        self.cor_A = A
        self.cor_b = b
        self.part_vertices = spec.corridors.part_vertices
        self.seed_headings = spec.corridors.seed_headings
        counts = [m * (cfg.K + 1) for m in spec.pieces]
        self.sample_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
        self.has_corridors = self.cor_A.size > 0
        if self.has_corridors and len(spec.corridors.points) != self.sample_offsets[-1]:
            raise ValueError("corridor sequence does not match the sample schedule")
        # rest boundaries get the cusp regularizer; moving ones do not
        self.start_at_rest = float(spec.S0.velocity @ spec.S0.velocity) < V_EPS**2
        self.goal_at_rest = float(spec.SN.velocity @ spec.SN.velocity) < V_EPS**2

    # -- helpers ---------------------------------------------------------

    def _betas(self, tau: float, K: int) -> list[np.ndarray]:
        s = np.arange(K + 1) * (tau / K)
        return [np.vstack([beta(d, t) for t in s]) for d in range(5)]

    def cost_grad(self, x: np.ndarray):
        spec = self.spec
        cfg = spec.cfg
        model = spec.model
        K = cfg.K
        layout = self.layout
        n = spec.n_segments
        q_list, p_hat, theta_hat, a_hat, tau_tilde = layout.unpack(x)
        bcs = _segment_boundaries(spec, p_hat, theta_hat, a_hat)

        J = 0.0
        grad = np.zeros_like(x)
        # gradients wrt junction boundary matrices accumulate here: (n-1, 3, 2)
        dJ_dS = np.zeros((max(n - 1, 0), 3, 2))
        dJ_dtheta_hat = np.zeros(max(n - 1, 0))
        dJ_da_hat = np.zeros(max(n - 1, 0))
        dJ_dtau = np.zeros(n)

        w_dyn = {
            "v": cfg.w_v,
            "a": cfg.w_a,
            "kappa": cfg.w_kappa,
            "thetadot": cfg.w_thetadot,
        }
        mu = cfg.mu

        for i in range(n):
            M = spec.pieces[i]
            gamma = spec.gammas[i]
            T, dT_dtau = time_map(float(tau_tilde[i]))
            seg = construct_segment(bcs[i][0], bcs[i][1], q_list[i], T, M, gamma)
            tau = seg.tau

            E, dJ_dc, dE_dT = energy(seg)
            if not math.isfinite(E):
                raise NonFiniteCostError(f"energy non-finite in segment {i}")
            J += E + cfg.w_time * T
            dJ_dT = dE_dT + cfg.w_time

            B = self._betas(tau, K)
            # sample arrays shaped (M, K+1, 2)
            pos = np.einsum("mkc,lk->mlc", seg.coeffs, B[0])
            vel = np.einsum("mkc,lk->mlc", seg.coeffs, B[1])
            acc = np.einsum("mkc,lk->mlc", seg.coeffs, B[2])
            jerk = np.einsum("mkc,lk->mlc", seg.coeffs, B[3])
            S = M * (K + 1)
            posf = pos.reshape(S, 2)
            velf = vel.reshape(S, 2)
            accf = acc.reshape(S, 2)
            jerkf = jerk.reshape(S, 2)

            alpha = tau / K
            W = np.tile(self.wbar, M) * alpha  # (S,)
            lam_frac = np.tile(np.arange(K + 1), M) / (M * K)  # dt_sample/dT

            n2 = np.sum(velf * velf, axis=1)
            active = n2 > V_EPS**2
            n2s = np.where(active, n2, 1.0)  # guarded denominator
            cross = velf[:, 0] * accf[:, 1] - velf[:, 1] * accf[:, 0]
            dot = np.sum(velf * accf, axis=1)
            Hvel = np.column_stack([-velf[:, 1], velf[:, 0]])
            HTacc = np.column_stack([accf[:, 1], -accf[:, 0]])

            dP_dvel = np.zeros((S, 2))
            dP_dacc = np.zeros((S, 2))
            dP_dsig = np.zeros((S, 2))
            dP_dT_samples = 0.0

            def add_penalty(name, G, gvel, gacc, mask=None):
                nonlocal J, dP_dvel, dP_dacc, dP_dT_samples
                w = w_dyn[name]
                vals, dvals = smoothed_l1(G, mu)
                if mask is not None:
                    vals = np.where(mask, vals, 0.0)
                    dvals = np.where(mask, dvals, 0.0)
                coef = w * W * dvals
                J_add = w * float(np.sum(W * vals))
                if not math.isfinite(J_add):
                    raise NonFiniteCostError(f"{name} penalty non-finite in segment {i}")
                J += J_add
                dP_dvel += coef[:, None] * gvel
                dP_dacc += coef[:, None] * gacc
                # Eq-style time chain: alpha scales with T, samples drift with T
                tt = np.sum(accf * gvel, axis=1) + np.sum(jerkf * gacc, axis=1)
                dP_dT_samples_local = J_add / T + float(np.sum(coef * lam_frac * tt))
                dP_dT_samples += dP_dT_samples_local

            # speed: |v|^2 - vmax^2 (no singularity)
            add_penalty(
                "v",
                n2 - model.v_max**2,
                2.0 * velf,
                np.zeros_like(accf),
            )
            # acceleration: (a.v/|v|)^2 - amax^2, guarded near v = 0
            Ga = dot**2 / n2s - model.a_max**2
            gvel_a = (2.0 * dot / n2s)[:, None] * accf - (2.0 * dot**2 / n2s**2)[:, None] * velf
            gacc_a = (2.0 * dot / n2s)[:, None] * velf
            add_penalty("a", Ga, gvel_a, gacc_a, mask=active)
            # yaw rate: (cross/|v|^2)^2 - thetadot_max^2, guarded
            Gtd = cross**2 / n2s**2 - model.thetadot_max**2
            gvel_td = (2.0 * cross / n2s**2)[:, None] * HTacc - (
                4.0 * cross**2 / n2s**3
            )[:, None] * velf
            gacc_td = (2.0 * cross / n2s**2)[:, None] * Hvel
            add_penalty("thetadot", Gtd, gvel_td, gacc_td, mask=active)
            # curvature: cleared form cross^2 - kmax^2 |v|^6 rescaled by
            # (|v|^6 + c); same feasible set for v > 0, no singularity, and
            # the penalty keeps its bite at crawl speeds
            k2 = model.kappa_max**2
            reg = cfg.kappa_reg_speed**6
            Nk = cross**2 - k2 * n2**3
            Dk = n2**3 + reg
            Gk = Nk / Dk
            dN_dvel = 2.0 * cross[:, None] * HTacc - (6.0 * k2 * n2**2)[:, None] * velf
            dD_dvel = (6.0 * n2**2)[:, None] * velf
            gvel_k = (dN_dvel * Dk[:, None] - Nk[:, None] * dD_dvel) / (Dk**2)[:, None]
            gacc_k = 2.0 * cross[:, None] * Hvel / Dk[:, None]
            add_penalty("kappa", Gk, gvel_k, gacc_k)

            if i == 0:
                theta_fixed_start = spec.start_heading
            else:
                theta_fixed_start = float(theta_hat[i - 1])
            if i == n - 1:
                theta_fixed_end = spec.goal_heading
            else:
                theta_fixed_end = float(theta_hat[i])

            # corridor containment ---------------------------------------
            if self.has_corridors:
                s0, s1 = self.sample_offsets[i], self.sample_offsets[i + 1]
                A = self.cor_A[s0:s1]  # (S, P, 4, 2)
                bvec = self.cor_b[s0:s1]  # (S, P, 4)
                V = self.part_vertices  # (P, 4, 2)

                # per-sample heading + chain case
                theta_s = np.arctan2(gamma * velf[:, 1], gamma * velf[:, 0])
                case_a = active.copy()
                is_start = np.zeros(S, dtype=bool)
                is_end = np.zeros(S, dtype=bool)
                is_start[0] = True
                is_end[S - 1] = True
                struct_start = is_start & ~case_a
                struct_end = is_end & ~case_a
                other = ~case_a & ~struct_start & ~struct_end
                theta_s = np.where(struct_start, theta_fixed_start, theta_s)
                theta_s = np.where(struct_end, theta_fixed_end, theta_s)
                if other.any():
                    theta_s = np.where(other, self.seed_headings[s0:s1], theta_s)

                ct, st = np.cos(theta_s), np.sin(theta_s)
                R = np.empty((S, 2, 2))
                R[:, 0, 0] = ct
                R[:, 0, 1] = -st
                R[:, 1, 0] = st
                R[:, 1, 1] = ct
                world_v = np.einsum("sij,pej->spei", R, V) + posf[:, None, None, :]
                G = np.einsum("spri,spei->spre", A, world_v) - bvec[:, :, :, None]
                vals, dvals = smoothed_l1(G, mu)
                J_cor = cfg.w_corridor * float(np.sum(W[:, None, None, None] * vals))
                if not math.isfinite(J_cor):
                    raise NonFiniteCostError(f"corridor penalty non-finite in segment {i}")
                J += J_cor
                coef = cfg.w_corridor * W[:, None, None, None] * dvals  # (S,P,4,4)
                g_sigma = np.einsum("spre,spri->si", coef, A)  # (S, 2)
                dP_dsig += g_sigma
                # dR/dtheta = H R
                HR = np.empty_like(R)
                HR[:, 0, 0] = -st
                HR[:, 0, 1] = -ct
                HR[:, 1, 0] = ct
                HR[:, 1, 1] = -st
                dG_dtheta = np.einsum("spri,sij,pej->spre", A, HR, V)
                g_theta = np.einsum("spre,spre->s", coef, dG_dtheta)  # (S,)
                # case A: theta depends on sigma_dot
                chainA = case_a
                if chainA.any():
                    gv = (g_theta / n2s)[:, None] * Hvel
                    dP_dvel += np.where(chainA[:, None], gv, 0.0)
                # structural junction samples: gradient goes straight to theta_hat
                if i > 0 and struct_start.any():
                    dJ_dtheta_hat[i - 1] += float(np.sum(g_theta[struct_start]))
                if i < n - 1 and struct_end.any():
                    dJ_dtheta_hat[i] += float(np.sum(g_theta[struct_end]))
                # time chain for the corridor term
                tt_cor = np.sum(velf * g_sigma, axis=1)
                gv_full = np.where(chainA[:, None], (g_theta / n2s)[:, None] * Hvel, 0.0)
                tt_cor += np.sum(accf * gv_full, axis=1)
                # note: coef already carries alpha through W
                dP_dT_samples += J_cor / T + float(np.sum(lam_frac * tt_cor))

            # fold sample gradients back into coefficients ---------------
            dP_dsig3 = dP_dsig.reshape(M, K + 1, 2)
            dP_dvel3 = dP_dvel.reshape(M, K + 1, 2)
            dP_dacc3 = dP_dacc.reshape(M, K + 1, 2)
            dJ_dc = dJ_dc + np.einsum("lk,mlc->mkc", B[0], dP_dsig3)
            dJ_dc = dJ_dc + np.einsum("lk,mlc->mkc", B[1], dP_dvel3)
            dJ_dc = dJ_dc + np.einsum("lk,mlc->mkc", B[2], dP_dacc3)
            dJ_dT = dJ_dT + dP_dT_samples

            # cusp regularizer: curvature spike next to rest boundaries --
            rest_start = (i > 0) or self.start_at_rest
            rest_end = (i < n - 1) or self.goal_at_rest
            if cfg.w_cusp > 0 and rest_start:
                theta_b = theta_fixed_start if i > 0 else spec.start_heading
                a_b = float(a_hat[i - 1]) if i > 0 else float(
                    np.linalg.norm(spec.S0.acceleration)
                )
                Jc, dJ_dc, dJ_dT, dtheta, da = self._cusp_term(
                    seg, 0.0, 0, theta_b, a_b, dJ_dc, dJ_dT, is_end_side=False
                )
                J += Jc
                if i > 0:
                    dJ_dtheta_hat[i - 1] += dtheta
                    dJ_da_hat[i - 1] += da
            if cfg.w_cusp > 0 and rest_end:
                theta_b = theta_fixed_end if i < n - 1 else spec.goal_heading
                a_b = float(a_hat[i]) if i < n - 1 else float(
                    np.linalg.norm(spec.SN.acceleration)
                )
                Jc, dJ_dc, dJ_dT, dtheta, da = self._cusp_term(
                    seg, tau, M - 1, theta_b, a_b, dJ_dc, dJ_dT, is_end_side=True
                )
                J += Jc
                if i < n - 1:
                    dJ_dtheta_hat[i] += dtheta
                    dJ_da_hat[i] += da

            # back-propagate through the banded system -------------------
            dq, dstart, dend, dT_total = propagate_gradients(seg, dJ_dc, dJ_dT)
            if M > 1:
                grad[layout.q_offsets[i] : layout.q_offsets[i + 1]] = dq.ravel()
            if i > 0:
                dJ_dS[i - 1] += dstart
            if i < n - 1:
                dJ_dS[i] += dend
            dJ_dtau[i] = dT_total * dT_dtau

        # junction variables ---------------------------------------------
        for j in range(n - 1):
            th, ah = float(theta_hat[j]), float(a_hat[j])
            u = np.array([math.cos(th), math.sin(th)])
            du = np.array([-math.sin(th), math.cos(th)])
            dacc = dJ_dS[j][2]
            grad[layout.i_p + 2 * j : layout.i_p + 2 * j + 2] = dJ_dS[j][0]
            dJ_dtheta_hat[j] += ah * float(dacc @ du)
            dJ_da_hat[j] += float(dacc @ u)
            # gear-change acceleration limits: below a_max, above the floor
            Gax = ah**2 - self.spec.model.a_max**2
            val, dval = smoothed_l1(Gax, mu)
            J += cfg.w_gear_accel * val
            dJ_da_hat[j] += cfg.w_gear_accel * dval * 2.0 * ah
            Glo = cfg.a_hat_min**2 - ah**2
            val_lo, dval_lo = smoothed_l1(Glo, mu)
            J += cfg.w_gear_accel * val_lo
            dJ_da_hat[j] -= cfg.w_gear_accel * dval_lo * 2.0 * ah

        if n > 1:
            grad[layout.i_theta : layout.i_a] = dJ_dtheta_hat
            grad[layout.i_a : layout.i_tau] = dJ_da_hat
        grad[layout.i_tau :] = dJ_dtau
        if not math.isfinite(J) or not np.all(np.isfinite(grad)):
            raise NonFiniteCostError("total cost or gradient non-finite")
        return J, grad

    _CUSP_A_REG = 1e-2  # added to a_hat^2 so the spike estimate stays finite

    def _cusp_term(self, seg, t_local, piece, theta_b, a_b, dJ_dc, dJ_dT, is_end_side):
        """Penalty on the curvature spike a cusp leaves at the slowest
        certified speed: kappa(v) ~ |lat jerk| / (2 |a| v).

        Returns (value, dJ_dc, dJ_dT, dP/dtheta, dP/da).
        """
        cfg = self.spec.cfg
        w = cfg.w_cusp
        b3 = beta(3, t_local)
        j3 = seg.coeffs[piece].T @ b3
        u = np.array([math.cos(theta_b), math.sin(theta_b)])
        uperp = np.array([-u[1], u[0]])
        lat = float(uperp @ j3)
        a2 = a_b * a_b + self._CUSP_A_REG
        denom = 4.0 * a2 * V_REST_REPORT**2
        G = lat * lat / denom - cfg.cusp_kappa_budget**2
        mu_c = 0.25 * cfg.cusp_kappa_budget**2
        val, dval = smoothed_l1(G, mu_c)
        scale = w * dval * 2.0 * lat / denom  # dP/dlat
        dJ_dc = dJ_dc.copy()
        dJ_dc[piece] += scale * np.outer(b3, uperp)
        if is_end_side:
            j4 = seg.coeffs[piece].T @ beta(4, t_local)
            dJ_dT = dJ_dT + scale * float(uperp @ j4) / seg.pieces
        dtheta = scale * float(-(u @ j3))
        da = w * dval * (-(lat * lat / denom) * 2.0 * a_b / a2)
        return w * val, dJ_dc, dJ_dT, dtheta, da


def total_cost_grad(
    x: np.ndarray,
    spec: ProblemSpec,
) -> tuple[float, np.ndarray]:
    """Cost and analytic gradient of the unconstrained objective."""
    return PenaltyProblem(spec).cost_grad(x)


# ---------------------------------------------------------------------------
# pipeline


def _choose_pieces(length: float, piece_target: float = 1.0) -> int:
    return int(np.clip(math.ceil(length / piece_target), 2, 8))


def _resample_waypoints(seg: PathSegment, m: int) -> np.ndarray:
    """m-1 interior waypoints spaced uniformly in arc length."""
    pts = np.array([[p.x, p.y] for p in seg.poses])
    if len(pts) == 1:
        return np.repeat(pts, m - 1, axis=0)
    arc = seg.arc
    targets = np.linspace(0.0, arc[-1], m + 1)[1:-1]
    idx = np.searchsorted(arc, targets, side="left")
    idx = np.clip(idx, 1, len(arc) - 1)
    t0 = arc[idx - 1]
    t1 = arc[idx]
    frac = np.where(t1 > t0, (targets - t0) / np.maximum(t1 - t0, 1e-12), 0.0)
    return pts[idx - 1] + frac[:, None] * (pts[idx] - pts[idx - 1])


def _pose_at_fraction(seg: PathSegment, frac: float) -> Pose2:
    arc = seg.arc
    target = float(np.clip(frac, 0.0, 1.0)) * (arc[-1] if len(arc) else 0.0)
    idx = int(np.searchsorted(arc, target, side="left"))
    idx = min(max(idx, 0), len(seg.poses) - 1)
    return seg.poses[idx]


def optimize(
    initial: FrontEndPath,
    model: AAVModel,
    grid_raw: OccupancyGrid,
    cfg: PenaltyConfig | None = None,
    start_pose: Pose2 | None = None,
    goal_pose: Pose2 | None = None,
) -> tuple[PolyTrajectory, OptimizeReport]:
    """Full back end: segment the path, seed corridors, solve, report."""
    cfg = cfg or PenaltyConfig()
    t0 = _time.perf_counter()
    segs = segment_path(initial, v_max=model.v_max)
    n = len(segs)
    start_pose = start_pose or initial.states[0][0]
    goal_pose = goal_pose or initial.states[-1][0]

    gammas = tuple(s.gamma for s in segs)
    pieces = tuple(_choose_pieces(s.length) for s in segs)
    q_list = [_resample_waypoints(s, m) for s, m in zip(segs, pieces)]
    p_hat = np.array(
        [[s.poses[-1].x, s.poses[-1].y] for s in segs[:-1]]
    ).reshape(-1, 2)
    theta_hat = np.array([s.poses[-1].theta for s in segs[:-1]])
    a_hat = np.array([0.4 * segs[k + 1].gamma for k in range(n - 1)])
    # a mildly generous initial duration keeps initial jerk (and the cusp
    # regularizer) tame; the time cost pulls durations down during the solve
    tau_tilde = np.array(
        [time_map_inverse(max(1.3 * s.duration_estimate, 1.0)) for s in segs]
    )

    v_bnd = cfg.boundary_speed
    u_start = np.array([math.cos(start_pose.theta), math.sin(start_pose.theta)])
    u_goal = np.array([math.cos(goal_pose.theta), math.sin(goal_pose.theta)])
    S0 = BoundaryCondition(
        np.array([start_pose.x, start_pose.y]), v_bnd * gammas[0] * u_start, np.zeros(2)
    )
    SN = BoundaryCondition(
        np.array([goal_pose.x, goal_pose.y]), v_bnd * gammas[-1] * u_goal, np.zeros(2)
    )

    layout = DecisionVector(pieces)
    x0 = layout.pack(q_list, p_hat, theta_hat, a_hat, tau_tilde)

    # corridors are seeded from the initial polynomial; collisions repaired
    # with the nearest front-end pose
    pre_spec = ProblemSpec(
        model=model, S0=S0, SN=SN, gammas=gammas, pieces=pieces,
        start_heading=start_pose.theta, goal_heading=goal_pose.theta,
        corridors=_EMPTY_CORRIDORS, cfg=cfg,
    )
    init_traj = build_trajectory(pre_spec, x0)

    def repair(i, t_local):
        frac = t_local / max(init_traj.segments[i].duration, 1e-9)
        return _pose_at_fraction(segs[i], frac)

    corridors = build_sequence(
        init_traj, model, grid_raw, cfg.K, max_expand=cfg.max_expand, repair=repair
    )
    spec = replace(pre_spec, corridors=corridors)
    problem = PenaltyProblem(spec)

    result = lbfgs.minimize(
        problem.cost_grad,
        x0,
        max_iterations=cfg.max_iterations,
        memory=cfg.lbfgs_memory,
        grad_tol_rel=cfg.grad_tol_rel,
    )
    traj = build_trajectory(spec, result.x)
    wall = _time.perf_counter() - t0
    report = OptimizeReport(
        cost=result.cost,
        iterations=result.iterations,
        evaluations=result.evaluations,
        converged=result.converged,
        wall_time_s=wall,
        max_violation=dense_violations(traj, model, corridors),
        message=result.message,
    )
    return traj, report


class _EmptyCorridors:
    """Placeholder used before the real corridors exist."""

    part_vertices = np.zeros((0, 4, 2))
    seed_headings = np.zeros(0)
    points: tuple = ()
    sets: tuple = ()

    def arrays(self):
        return np.zeros((0, 0, 4, 2)), np.zeros((0, 0, 4))


_EMPTY_CORRIDORS = _EmptyCorridors()


V_REST_REPORT = 0.1  # m/s; below this, curvature/yaw-rate are steering-at-rest


def dense_violations(
    traj: PolyTrajectory,
    model: AAVModel,
    corridors: CorridorSequence | None = None,
    dt: float = 0.02,
    v_report_eps: float = V_REST_REPORT,
) -> dict[str, float]:
    """Worst constraint excess over a dense time sweep (0 = satisfied).

    Speed/acceleration/curvature/yaw-rate come from flatness recovery. Samples
    slower than ``v_report_eps`` count as at-rest: approaching a gear-change
    cusp the path curvature of any flat-output trajectory diverges like 1/t,
    which physically corresponds to steering while (almost) stationary, so the
    bicycle-model curvature bound is certified for |v| above the threshold.
    Speed and the along-track acceleration are still checked at every sample.
    Corridor violation is evaluated at the corridor constraint points.
    """
    total = traj.total_duration
    ts = np.arange(0.0, total + 0.5 * dt, dt)
    ts[-1] = min(ts[-1], total)
    out = {"v": 0.0, "a": 0.0, "kappa": 0.0, "thetadot": 0.0, "corridor": 0.0}
    for t in ts:
        d1 = traj.eval(float(t), 1)
        d2 = traj.eval(float(t), 2)
        n = math.hypot(d1[0], d1[1])
        out["v"] = max(out["v"], n - model.v_max)
        if n <= v_report_eps:
            # at-rest sample: bound the acceleration magnitude instead
            out["a"] = max(out["a"], math.hypot(d2[0], d2[1]) - model.a_max)
            continue
        cross = d1[0] * d2[1] - d1[1] * d2[0]
        dot = float(d1 @ d2)
        out["a"] = max(out["a"], abs(dot) / n - model.a_max)
        out["kappa"] = max(out["kappa"], abs(cross) / n**3 - model.kappa_max)
        out["thetadot"] = max(out["thetadot"], abs(cross) / n**2 - model.thetadot_max)
    if corridors is not None and corridors.points:
        A, b = corridors.arrays()
        V = corridors.part_vertices
        worst = 0.0
        for k, cp in enumerate(corridors.points):
            seg = traj.segments[cp.segment]
            # constraint points ride with the current piece durations
            t_local = (cp.piece + cp.lam / corridors.K) * seg.tau
            sigma = seg.eval_local(t_local, 0)
            theta = seed_heading(traj, cp.segment, t_local)
            c, s = math.cos(theta), math.sin(theta)
            R = np.array([[c, -s], [s, c]])
            world = sigma + V @ R.T  # (P, 4, 2)
            G = np.einsum("pri,pei->pre", A[k], world) - b[k][:, :, None]
            worst = max(worst, float(G.max()))
        out["corridor"] = max(0.0, worst)
    return out
