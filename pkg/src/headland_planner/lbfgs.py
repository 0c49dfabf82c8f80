"""Limited-memory BFGS with a strong Wolfe line search.

The objective callable returns (value, gradient). Evaluations that raise
``NonFiniteCostError`` or return non-finite values are treated as +inf so the
line search backs off instead of crashing; accepted steps therefore always
decrease the cost.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteCostError


@dataclass
class LBFGSResult:
    x: np.ndarray
    cost: float
    grad_norm: float
    iterations: int
    evaluations: int
    converged: bool
    message: str


def _two_loop(g, s_list, y_list, rho_list):
    q = g.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_list), reversed(y_list), reversed(rho_list)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if y_list:
        y = y_list[-1]
        s = s_list[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_list, y_list, rho_list), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def minimize(
    fun,
    x0: np.ndarray,
    max_iterations: int = 3000,
    memory: int = 16,
    grad_tol_rel: float = 1e-5,
    c1: float = 1e-4,
    c2: float = 0.9,
    max_line_search: int = 40,
) -> LBFGSResult:
    x = np.asarray(x0, dtype=float).copy()
    evals = 0

    def safe_eval(z):
        nonlocal evals
        evals += 1
        try:
            f, g = fun(z)
        except NonFiniteCostError:
            return math.inf, None
        if not math.isfinite(f) or not np.all(np.isfinite(g)):
            return math.inf, None
        return float(f), np.asarray(g, dtype=float)

    f, g = safe_eval(x)
    if g is None:
        raise NonFiniteCostError("objective is non-finite at the initial point")

    s_hist: deque = deque(maxlen=memory)
    y_hist: deque = deque(maxlen=memory)
    rho_hist: deque = deque(maxlen=memory)
    best_x, best_f = x.copy(), f
    message = "max iterations reached"
    converged = False
    it = 0

    for it in range(1, max_iterations + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= grad_tol_rel * max(1.0, abs(f)):
            converged = True
            message = "gradient tolerance reached"
            break

        d = -_two_loop(g, s_hist, y_hist, rho_hist)
        dg = float(d @ g)
        if not math.isfinite(dg) or dg >= -1e-14 * max(1.0, gnorm):
            d = -g
            dg = -gnorm**2
            s_hist.clear()
            y_hist.clear()
            rho_hist.clear()

        alpha0 = 1.0 if s_hist else min(1.0, 1.0 / max(1.0, gnorm))
        step = _wolfe_search(safe_eval, x, f, g, d, dg, alpha0, c1, c2, max_line_search)
        if step is None:
            if s_hist:
                # restart with steepest descent once before giving up
                s_hist.clear()
                y_hist.clear()
                rho_hist.clear()
                d = -g
                dg = -gnorm**2
                step = _wolfe_search(
                    safe_eval, x, f, g, d, dg, min(1.0, 1.0 / max(1.0, gnorm)), c1, c2,
                    max_line_search,
                )
            if step is None:
                message = "line search failed"
                break

        alpha, f_new, g_new = step
        x_new = x + alpha * d
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
        x, f, g = x_new, f_new, g_new
        if f < best_f:
            best_f, best_x = f, x.copy()

    if f > best_f:
        x, f = best_x, best_f
        _, g = safe_eval(x)
    return LBFGSResult(
        x=x,
        cost=f,
        grad_norm=float(np.linalg.norm(g)) if g is not None else math.nan,
        iterations=it,
        evaluations=evals,
        converged=converged,
        message=message,
    )


def _wolfe_search(safe_eval, x, f0, g0, d, dg0, alpha0, c1, c2, max_iter):
    """Strong Wolfe bracket + zoom; returns (alpha, f, g) or None."""

    def phi(a):
        f, g = safe_eval(x + a * d)
        dphi = float(g @ d) if g is not None else math.nan
        return f, dphi, g

    alpha_prev, f_prev, dphi_prev = 0.0, f0, dg0
    alpha = alpha0
    result = None
    for i in range(max_iter):
        f, dphi, g = phi(alpha)
        if f > f0 + c1 * alpha * dg0 or (i > 0 and f >= f_prev) or not math.isfinite(f):
            result = _zoom(phi, alpha_prev, f_prev, dphi_prev, alpha, f0, dg0, c1, c2, max_iter)
            break
        if abs(dphi) <= -c2 * dg0:
            result = (alpha, f, g)
            break
        if dphi >= 0:
            result = _zoom(phi, alpha, f, dphi, alpha_prev, f0, dg0, c1, c2, max_iter)
            break
        alpha_prev, f_prev, dphi_prev = alpha, f, dphi
        alpha *= 2.0
    return result


def _zoom(phi, lo, f_lo, dphi_lo, hi, f0, dg0, c1, c2, max_iter):
    for _ in range(max_iter):
        alpha = 0.5 * (lo + hi)
        f, dphi, g = phi(alpha)
        if f > f0 + c1 * alpha * dg0 or f >= f_lo or not math.isfinite(f):
            hi = alpha
        else:
            if abs(dphi) <= -c2 * dg0:
                return alpha, f, g
            if dphi * (hi - lo) >= 0:
                hi = lo
            lo, f_lo, dphi_lo = alpha, f, dphi
        if abs(hi - lo) < 1e-14:
            break
    # accept the best sufficient-decrease point even if curvature failed
    f, dphi, g = phi(lo)
    if math.isfinite(f) and f < f0 and lo > 0:
        return lo, f, g
    return None
