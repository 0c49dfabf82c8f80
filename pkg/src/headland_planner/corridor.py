"""Per-part rectangular safe corridors along an initial trajectory.

Each corridor is an oriented rectangle grown from one body part at one
constraint point: the four faces push outward step by step (round-robin) until
a face's swept band would contain an occupied cell center, the face reaches
its expansion budget, or the grid edge. Corridors are generated once and stay
fixed during optimization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .body_model import AAVModel
from .errors import InfeasibleSeedError
from .flatness import V_EPS, H
from .geometry import OccupancyGrid, OrientedRectangle, Pose2, body_to_world
from .minco import PolyTrajectory

_TINY = 1e-12


@dataclass(frozen=True)
class HalfplaneSet:
    """Convex region {x : normals @ x <= offsets}; four unit-normal faces."""

    normals: np.ndarray  # (4, 2)
    offsets: np.ndarray  # (4,)
    anchor_pose: Pose2

    def __post_init__(self):
        normals = np.asarray(self.normals, dtype=float)
        offsets = np.asarray(self.offsets, dtype=float)
        norms = np.linalg.norm(normals, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-12):
            raise ValueError("halfplane normals must be unit length")
        normals.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)

    def violations(self, points) -> np.ndarray:
        """Signed violations (positive = outside) for points of shape (..., 2)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.normals.T - self.offsets

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        v = self.violations(points)
        return np.all(v <= tol, axis=-1)


def _occupied_with_border(grid: OccupancyGrid) -> np.ndarray:
    """Occupied cell centers plus a ring just outside the grid (treated solid)."""
    cached = getattr(grid, "_occ_border_cache", None)
    if cached is not None:
        return cached
    res = grid.resolution
    ox, oy = grid.origin
    xs = ox + (np.arange(-1, grid.width + 1) + 0.5) * res
    ys = oy + (np.arange(grid.height) + 0.5) * res
    ring = [
        np.column_stack([xs, np.full_like(xs, oy - 0.5 * res)]),
        np.column_stack([xs, np.full_like(xs, oy + (grid.height + 0.5) * res)]),
        np.column_stack([np.full_like(ys, ox - 0.5 * res), ys]),
        np.column_stack([np.full_like(ys, ox + (grid.width + 0.5) * res), ys]),
    ]
    pts = np.vstack([grid.occupied_centers()] + ring)
    object.__setattr__(grid, "_occ_border_cache", pts)
    return pts


def generate(
    grid_raw: OccupancyGrid,
    pose: Pose2,
    part: OrientedRectangle,
    step: float | None = None,
    max_expand: float = 5.0,
) -> HalfplaneSet:
    """Grow a free oriented rectangle around one part at one pose.

    Faces advance in increments of ``step`` (default: grid resolution),
    round-robin left/right/front/back, each stopping when its next swept band
    would contain an occupied cell center or when it has grown by
    ``max_expand``. Raises when the part itself overlaps an occupied cell.
    """
    if step is None:
        step = grid_raw.resolution
    rect = part.in_world(pose)
    center = np.asarray(rect.center)
    ch, sh = math.cos(rect.heading), math.sin(rect.heading)
    u_hat = np.array([ch, sh])
    v_hat = np.array([-sh, ch])

    window = rect.half_length + rect.half_width + max_expand + 2.0 * step
    pts = _occupied_with_border(grid_raw)
    rel = pts - center
    near = (np.abs(rel[:, 0]) <= window) & (np.abs(rel[:, 1]) <= window)
    rel = rel[near]
    u = rel @ u_hat
    v = rel @ v_hat

    hl, hw = rect.half_length, rect.half_width
    if bool(((np.abs(u) <= hl + _TINY) & (np.abs(v) <= hw + _TINY)).any()):
        raise InfeasibleSeedError("corridor seed part overlaps an occupied cell")

    # coords per face: distance along the face's outward direction
    coords = {"left": v, "right": -v, "front": u, "back": -u}
    trans = {"left": u, "right": u, "front": v, "back": v}
    extents = {"left": hw, "right": hw, "front": hl, "back": hl}
    limits = {
        "left": hw + max_expand,
        "right": hw + max_expand,
        "front": hl + max_expand,
        "back": hl + max_expand,
    }
    order = ("left", "right", "front", "back")
    sorted_idx = {s: np.argsort(coords[s], kind="stable") for s in order}
    pointer = {s: 0 for s in order}
    # skip points already behind the initial face
    for s in order:
        c = coords[s][sorted_idx[s]]
        pointer[s] = int(np.searchsorted(c, extents[s] + _TINY, side="left"))
    frozen = {s: False for s in order}

    def trans_range(side):
        if side in ("left", "right"):
            return -extents["back"], extents["front"]
        return -extents["right"], extents["left"]

    while not all(frozen.values()):
        for side in order:
            if frozen[side]:
                continue
            new_extent = extents[side] + step
            if new_extent > limits[side] + _TINY:
                frozen[side] = True
                continue
            idx = sorted_idx[side]
            c = coords[side][idx]
            p = pointer[side]
            blocked = False
            lo, hi = trans_range(side)
            while p < len(idx) and c[p] <= new_extent + _TINY:
                t = trans[side][idx[p]]
                if lo - _TINY <= t <= hi + _TINY:
                    blocked = True
                    break
                p += 1
            if blocked:
                frozen[side] = True
            else:
                pointer[side] = p
                extents[side] = new_extent

    normals = np.vstack([u_hat, -u_hat, v_hat, -v_hat])
    offsets = np.array(
        [
            float(u_hat @ center) + extents["front"],
            float(-u_hat @ center) + extents["back"],
            float(v_hat @ center) + extents["left"],
            float(-v_hat @ center) + extents["right"],
        ]
    )
    return HalfplaneSet(normals=normals, offsets=offsets, anchor_pose=pose)


def containment_violation(sigma, d1, vertex, hp: HalfplaneSet, gamma: int = 1):
    """Face violations of one body-frame vertex plus gradients.

    Heading comes from the flat velocity (theta = atan2(gamma*d1_y,
    gamma*d1_x)); the returned ``grad_d1`` carries the rotation chain
    d theta / d sigma_dot = H sigma_dot / |sigma_dot|^2.

    Returns (values (4,), grad_sigma (4, 2), grad_d1 (4, 2)).
    """
    sigma = np.asarray(sigma, dtype=float)
    d1 = np.asarray(d1, dtype=float)
    vertex = np.asarray(vertex, dtype=float)
    n2 = float(d1 @ d1)
    if n2 <= V_EPS**2:
        raise ValueError("containment_violation needs a nonzero flat velocity")
    theta = math.atan2(gamma * d1[1], gamma * d1[0])
    values, grad_sigma, grad_theta = violation_with_heading(sigma, theta, vertex, hp)
    dtheta_dd1 = (H @ d1) / n2
    grad_d1 = np.outer(grad_theta, dtheta_dd1)
    return values, grad_sigma, grad_d1


def violation_with_heading(sigma, theta: float, vertex, hp: HalfplaneSet):
    """Violations and gradients for an explicitly given heading.

    Returns (values (4,), grad_sigma (4, 2), grad_theta (4,)).
    """
    sigma = np.asarray(sigma, dtype=float)
    vertex = np.asarray(vertex, dtype=float)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    world = sigma + rot @ vertex
    values = hp.normals @ world - hp.offsets
    grad_sigma = hp.normals.copy()
    drot = H @ rot  # dR/dtheta
    grad_theta = hp.normals @ (drot @ vertex)
    return values, grad_sigma, grad_theta


@dataclass(frozen=True)
class ConstraintPoint:
    """One penalty sample: segment, piece, quadrature index and segment-local time."""

    segment: int
    piece: int
    lam: int
    t_local: float  # within the segment


@dataclass(frozen=True)
class CorridorSequence:
    """Fixed corridors: one HalfplaneSet per (constraint point, body part)."""

    points: tuple[ConstraintPoint, ...]
    sets: tuple[tuple[HalfplaneSet, ...], ...]  # [point][part]
    part_vertices: np.ndarray  # (P, 4, 2) body frame
    seed_headings: np.ndarray  # (S,) heading used when generating
    K: int = 8  # quadrature points per piece at generation time

    def __post_init__(self):
        pv = np.asarray(self.part_vertices, dtype=float)
        sh = np.asarray(self.seed_headings, dtype=float)
        pv.setflags(write=False)
        sh.setflags(write=False)
        object.__setattr__(self, "part_vertices", pv)
        object.__setattr__(self, "seed_headings", sh)
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "sets", tuple(tuple(row) for row in self.sets))

    @property
    def n_parts(self) -> int:
        return self.part_vertices.shape[0]

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (S, P, 4, 2) normals and (S, P, 4) offsets."""
        a = np.stack([np.stack([hp.normals for hp in row]) for row in self.sets])
        b = np.stack([np.stack([hp.offsets for hp in row]) for row in self.sets])
        return a, b


def constraint_schedule(pieces: int, K: int) -> list[tuple[int, int]]:
    """(piece, lambda) pairs: K+1 uniformly spaced samples per piece, ends included."""
    return [(j, lam) for j in range(pieces) for lam in range(K + 1)]


def seed_heading(traj: PolyTrajectory, seg_idx: int, t_local: float) -> float:
    """Heading at a segment-local time, nudging off zero-velocity boundaries."""
    seg = traj.segments[seg_idx]
    base = sum(s.duration for s in traj.segments[:seg_idx])
    for t_try in (t_local, min(t_local + 1e-3 * seg.duration, seg.duration),
                  max(t_local - 1e-3 * seg.duration, 0.0)):
        d1 = seg.eval_local(t_try, 1)
        if float(d1 @ d1) > V_EPS**2:
            return math.atan2(seg.gamma * d1[1], seg.gamma * d1[0])
    d2 = seg.eval_local(t_local, 2)
    if float(d2 @ d2) > V_EPS**2:
        # acceleration at rest points is aligned with the heading by construction
        sign = seg.gamma
        return math.atan2(sign * d2[1], sign * d2[0])
    return 0.0


def build_sequence(
    init_traj: PolyTrajectory,
    model: AAVModel,
    grid_raw: OccupancyGrid,
    K: int,
    max_expand: float = 5.0,
    repair=None,
) -> CorridorSequence:
    """Corridors for every constraint point and every body part.

    ``repair`` may map (segment_index, t_local) to a substitute Pose2 used when
    the trajectory's own seed pose is in collision; without it the collision
    propagates as InfeasibleSeedError.
    """
    parts = model.parts
    part_vertices = np.stack([p.corners() for p in parts])
    points: list[ConstraintPoint] = []
    sets: list[tuple[HalfplaneSet, ...]] = []
    headings: list[float] = []
    for i, seg in enumerate(init_traj.segments):
        tau = seg.tau
        for j, lam in constraint_schedule(seg.pieces, K):
            t_local = (j + lam / K) * tau
            sigma = seg.eval_local(t_local, 0)
            theta = seed_heading(init_traj, i, t_local)
            pose = Pose2(float(sigma[0]), float(sigma[1]), theta)
            row = []
            for part in parts:
                try:
                    hp = generate(grid_raw, pose, part, max_expand=max_expand)
                except InfeasibleSeedError:
                    if repair is None:
                        raise
                    alt = repair(i, t_local)
                    hp = generate(grid_raw, alt, part, max_expand=max_expand)
                row.append(hp)
            points.append(ConstraintPoint(segment=i, piece=j, lam=lam, t_local=t_local))
            sets.append(tuple(row))
            headings.append(pose.theta)
    return CorridorSequence(
        points=tuple(points),
        sets=tuple(sets),
        part_vertices=part_vertices,
        seed_headings=np.array(headings),
        K=K,
    )
