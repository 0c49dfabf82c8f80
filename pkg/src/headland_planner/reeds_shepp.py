"""Shortest bounded-curvature paths with cusps (Reeds-Shepp curves).

Used by the search front end both as an admissible distance heuristic and for
analytic goal connection. Words are built from the classic closed-form family
(CSC, CCC, CCCC, CCSC, CCSCC) with the timeflip/reflect/backwards transforms;
lengths are in units of the turning radius until scaled at the interface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Pose2, normalize_angle

_ZERO = 1e-10
_PI = math.pi


@dataclass(frozen=True)
class RSPath:
    """Sequence of (letter, signed length) segments in turning-radius units."""

    segments: tuple[tuple[str, float], ...]

    @property
    def length(self) -> float:
        return sum(abs(s) for _, s in self.segments)


def _mod2pi(x: float) -> float:
    v = math.fmod(x, 2.0 * _PI)
    if v < -_PI:
        v += 2.0 * _PI
    elif v > _PI:
        v -= 2.0 * _PI
    return v


def _polar(x: float, y: float) -> tuple[float, float]:
    return math.hypot(x, y), math.atan2(y, x)


def _tau_omega(u, v, xi, eta, phi):
    delta = _mod2pi(u - v)
    a = math.sin(u) - math.sin(delta)
    b = math.cos(u) - math.cos(delta) - 1.0
    t1 = math.atan2(eta * a - xi * b, xi * a + eta * b)
    t2 = 2.0 * (math.cos(delta) - math.cos(v) - math.cos(u)) + 3.0
    tau = _mod2pi(t1 + _PI) if t2 < 0 else _mod2pi(t1)
    omega = _mod2pi(tau - u + v - phi)
    return tau, omega


# base words; each returns (t, u, v) or None


def _lp_sp_lp(x, y, phi):
    u, t = _polar(x - math.sin(phi), y - 1.0 + math.cos(phi))
    if t >= -_ZERO:
        v = _mod2pi(phi - t)
        if v >= -_ZERO:
            return t, u, v
    return None


def _lp_sp_rp(x, y, phi):
    u1, t1 = _polar(x + math.sin(phi), y - 1.0 - math.cos(phi))
    if u1 * u1 >= 4.0:
        u = math.sqrt(u1 * u1 - 4.0)
        theta = math.atan2(2.0, u)
        t = _mod2pi(t1 + theta)
        v = _mod2pi(t - phi)
        if t >= -_ZERO and v >= -_ZERO:
            return t, u, v
    return None


def _lp_rm_l(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    u1, theta = _polar(xi, eta)
    if u1 <= 4.0:
        u = -2.0 * math.asin(0.25 * u1)
        t = _mod2pi(theta + 0.5 * u + _PI)
        v = _mod2pi(phi - t + u)
        if t >= -_ZERO and u <= _ZERO:
            return t, u, v
    return None


def _lp_rup_lum_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = 0.25 * (2.0 + math.hypot(xi, eta))
    if rho <= 1.0:
        u = math.acos(rho)
        t, v = _tau_omega(u, -u, xi, eta, phi)
        if t >= -_ZERO and v <= _ZERO:
            return t, u, v
    return None


def _lp_rum_lum_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = (20.0 - xi * xi - eta * eta) / 16.0
    if 0.0 <= rho <= 1.0:
        u = -math.acos(rho)
        if u >= -0.5 * _PI:
            t, v = _tau_omega(u, u, xi, eta, phi)
            if t >= -_ZERO and v >= -_ZERO:
                return t, u, v
    return None


def _lp_rm_sm_lm(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    rho, theta = _polar(xi, eta)
    if rho >= 2.0:
        r = math.sqrt(rho * rho - 4.0)
        u = 2.0 - r
        t = _mod2pi(theta + math.atan2(r, -2.0))
        v = _mod2pi(phi - 0.5 * _PI - t)
        if t >= -_ZERO and u <= _ZERO and v <= _ZERO:
            return t, u, v
    return None


def _lp_rm_sm_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, theta = _polar(-eta, xi)
    if rho >= 2.0:
        t = theta
        u = 2.0 - rho
        v = _mod2pi(t + 0.5 * _PI - phi)
        if t >= -_ZERO and u <= _ZERO and v <= _ZERO:
            return t, u, v
    return None


def _lp_rm_s_lm_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, _ = _polar(xi, eta)
    if rho >= 2.0:
        u = 4.0 - math.sqrt(rho * rho - 4.0)
        if u <= _ZERO:
            t = _mod2pi(math.atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta))
            v = _mod2pi(t - phi)
            if t >= -_ZERO and v >= -_ZERO:
                return t, u, v
    return None


def _flip(letters: str) -> str:
    return letters.translate(str.maketrans("LR", "RL"))


_QUARTER = 0.5 * _PI

# (word function, letters, expansion of (t, u, v) into per-letter lengths,
#  whether the direction-reversed variant is distinct)
_WORDS = (
    (_lp_sp_lp, "LSL", lambda t, u, v: [t, u, v], False),
    (_lp_sp_rp, "LSR", lambda t, u, v: [t, u, v], False),
    (_lp_rm_l, "LRL", lambda t, u, v: [t, u, v], True),
    (_lp_rup_lum_rm, "LRLR", lambda t, u, v: [t, u, -u, v], False),
    (_lp_rum_lum_rp, "LRLR", lambda t, u, v: [t, u, u, v], False),
    (_lp_rm_sm_lm, "LRSL", lambda t, u, v: [t, -_QUARTER, u, v], True),
    (_lp_rm_sm_rm, "LRSR", lambda t, u, v: [t, -_QUARTER, u, v], True),
    (_lp_rm_s_lm_rp, "LRSLR", lambda t, u, v: [t, -_QUARTER, u, -_QUARTER, v], False),
)


def _candidates(x: float, y: float, phi: float):
    """All applicable words as (letters, lengths) lists.

    Transform conventions: timeflip solves (-x, y, -phi) and negates lengths;
    reflect solves (x, -y, -phi) and swaps L/R; backwards solves the
    direction-reversed problem (xb, yb, phi) and reverses segment order.
    """
    out = []
    xb = x * math.cos(phi) + y * math.sin(phi)
    yb = x * math.sin(phi) - y * math.cos(phi)

    for word, letters, expand, has_backwards in _WORDS:
        problems = [(x, y, False)]
        if has_backwards:
            problems.append((xb, yb, True))
        for px, py, backwards in problems:
            for negate, reflect, args in (
                (False, False, (px, py, phi)),
                (True, False, (-px, py, -phi)),
                (False, True, (px, -py, -phi)),
                (True, True, (-px, -py, phi)),
            ):
                res = word(*args)
                if res is None:
                    continue
                lengths = expand(*res)
                if negate:
                    lengths = [-s for s in lengths]
                lets = _flip(letters) if reflect else letters
                if backwards:
                    lengths = lengths[::-1]
                    lets = lets[::-1]
                out.append((lets, lengths))
    return out


def shortest_path(start: Pose2, goal: Pose2, radius: float) -> RSPath:
    """Shortest Reeds-Shepp path between two poses for a given turning radius."""
    if radius <= 0:
        raise ValueError("turning radius must be positive")
    dx = goal.x - start.x
    dy = goal.y - start.y
    c, s = math.cos(start.theta), math.sin(start.theta)
    x = (c * dx + s * dy) / radius
    y = (-s * dx + c * dy) / radius
    phi = normalize_angle(goal.theta - start.theta)

    best = None
    best_len = math.inf
    for letters, lengths in _candidates(x, y, phi):
        total = sum(abs(v) for v in lengths)
        if total < best_len - _ZERO:
            best_len = total
            best = (letters, lengths)
    if best is None:  # pragma: no cover - family is complete
        raise RuntimeError("no Reeds-Shepp word applied")
    letters, lengths = best
    segs = tuple(
        (letter, seg_len) for letter, seg_len in zip(letters, lengths) if abs(seg_len) > _ZERO
    )
    if not segs:
        segs = (("S", 0.0),)
    return RSPath(segments=segs)


def path_length(start: Pose2, goal: Pose2, radius: float) -> float:
    """Length in meters of the shortest Reeds-Shepp connection."""
    return shortest_path(start, goal, radius).length * radius


def sample_path(path: RSPath, start: Pose2, radius: float, step: float):
    """Poses and motion directions along the path at roughly ``step`` spacing.

    Returns a list of (Pose2, direction) including the final pose; the start
    pose itself is omitted so the result can extend an existing state chain.
    """
    out = []
    x, y, theta = start.x, start.y, start.theta
    for letter, slen in path.segments:
        seg_m = slen * radius
        direction = 1 if seg_m >= 0 else -1
        remaining = abs(seg_m)
        if remaining < _ZERO:
            continue
        n = max(1, int(math.ceil(remaining / step)))
        ds = remaining / n
        kappa = 0.0 if letter == "S" else (1.0 / radius if letter == "L" else -1.0 / radius)
        for _ in range(n):
            sgn = direction
            if kappa == 0.0:
                x += sgn * ds * math.cos(theta)
                y += sgn * ds * math.sin(theta)
            else:
                dtheta = sgn * ds * kappa
                x += (math.sin(theta + dtheta) - math.sin(theta)) / kappa
                y += (-math.cos(theta + dtheta) + math.cos(theta)) / kappa
                theta = theta + dtheta
            out.append((Pose2(x, y, theta), direction))
    return out
