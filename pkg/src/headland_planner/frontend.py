"""Hybrid A* front end with covering-circle and ray-casting collision checkers.

States live on a (x, y, theta, direction) lattice; motion primitives are
constant-curvature arcs. The covering-circle checker needs only a handful of
point lookups on the inflated grid per pose; the ray-casting baseline
rasterizes every part rectangle on the raw grid.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import reeds_shepp as rs
from .body_model import AAVModel, CircleDecomposition, CoveringCircleSet
from .errors import CollisionCheckMisuseError, InfeasibleStartError, NoPathError
from .geometry import OccupancyGrid, Pose2, normalize_angle

_RADIUS_TOL = 1e-9


@dataclass(frozen=True)
class SearchConfig:
    xy_resolution: float = 0.3
    theta_bins: int = 72
    step_length: float = 0.6
    steering_set: tuple[float, ...] | None = None  # curvatures; default from model
    reverse_penalty: float = 1.5
    gear_change_penalty: float = 2.0
    heuristic_weight: float = 1.5
    max_expansions: int = 200_000
    heuristic_grid_resolution: float = 0.2
    rs_shot_distance: float = 12.0
    rs_shot_interval: int = 8

    def __post_init__(self):
        if self.theta_bins < 8:
            raise ValueError("theta_bins must be >= 8")
        if self.step_length < self.xy_resolution:
            raise ValueError("step_length must be >= xy_resolution")
        if self.reverse_penalty < 1.0 or self.heuristic_weight < 1.0:
            raise ValueError("penalties/weights must be >= 1")

    def curvatures(self, kappa_max: float) -> tuple[float, ...]:
        if self.steering_set is not None:
            return self.steering_set
        return (-kappa_max, -0.5 * kappa_max, 0.0, 0.5 * kappa_max, kappa_max)


@dataclass(frozen=True)
class FrontEndPath:
    """Collision-free state chain; direction is constant between gear changes."""

    states: tuple[tuple[Pose2, int], ...]
    arc: np.ndarray  # cumulative arc length per state

    def __post_init__(self):
        arc = np.asarray(self.arc, dtype=float)
        arc.setflags(write=False)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "arc", arc)

    @property
    def total_length(self) -> float:
        return float(self.arc[-1]) if len(self.arc) else 0.0

    @property
    def gear_changes(self) -> int:
        dirs = [d for _, d in self.states]
        return sum(1 for a, b in zip(dirs, dirs[1:]) if a != b)


def check_circles(
    grid_inflated: OccupancyGrid,
    pose: Pose2,
    vehicle_circles: CoveringCircleSet,
    implement_circles: CoveringCircleSet | None = None,
) -> bool:
    """True when every checked circle center lands on a free in-bounds cell.

    Only the outermost vehicle circles are checked; implement circles are all
    checked (their lattices stay small). The grid must be inflated by exactly
    the vehicle set's radius.
    """
    if abs(grid_inflated.inflation_radius - vehicle_circles.radius) > _RADIUS_TOL:
        raise CollisionCheckMisuseError(
            f"grid inflated by {grid_inflated.inflation_radius}, expected"
            f" {vehicle_circles.radius}"
        )
    pts = vehicle_circles.outermost_centers
    if implement_circles is not None and len(implement_circles.centers):
        pts = np.vstack([pts, implement_circles.centers])
    world = pts @ pose.rotation().T + pose.xy
    return not bool(grid_inflated.occupied_at(world).any())


def _traverse_cells(grid: OccupancyGrid, p0, p1):
    """Amanatides-Woo grid traversal; yields (ix, iy), which may be off-grid."""
    res = grid.resolution
    x0 = (p0[0] - grid.origin[0]) / res
    y0 = (p0[1] - grid.origin[1]) / res
    x1 = (p1[0] - grid.origin[0]) / res
    y1 = (p1[1] - grid.origin[1]) / res
    ix, iy = int(math.floor(x0)), int(math.floor(y0))
    ix1, iy1 = int(math.floor(x1)), int(math.floor(y1))
    yield ix, iy
    dx, dy = x1 - x0, y1 - y0
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    tdx = abs(1.0 / dx) if dx != 0 else math.inf
    tdy = abs(1.0 / dy) if dy != 0 else math.inf
    if dx > 0:
        tmx = (ix + 1 - x0) * tdx
    elif dx < 0:
        tmx = (x0 - ix) * tdx
    else:
        tmx = math.inf
    if dy > 0:
        tmy = (iy + 1 - y0) * tdy
    elif dy < 0:
        tmy = (y0 - iy) * tdy
    else:
        tmy = math.inf
    guard = abs(ix1 - ix) + abs(iy1 - iy) + 4
    while (ix, iy) != (ix1, iy1) and guard > 0:
        if tmx < tmy:
            ix += step_x
            tmx += tdx
        else:
            iy += step_y
            tmy += tdy
        guard -= 1
        yield ix, iy


def check_raycast(grid_raw: OccupancyGrid, pose: Pose2, model: AAVModel) -> bool:
    """Full-footprint check on the raw grid: edge traversal plus interior cells."""
    res = grid_raw.resolution
    nx, ny = grid_raw.width, grid_raw.height
    cells = grid_raw.cells
    for part in model.parts:
        rect = part.in_world(pose)
        corners = rect.corners()
        for k in range(4):
            for ix, iy in _traverse_cells(grid_raw, corners[k], corners[(k + 1) % 4]):
                if ix < 0 or iy < 0 or ix >= nx or iy >= ny:
                    return False
                if cells[ix, iy]:
                    return False
        # interior: candidate cell centers from the bounding box
        lo = corners.min(axis=0)
        hi = corners.max(axis=0)
        i0 = max(0, int(math.floor((lo[0] - grid_raw.origin[0]) / res)))
        i1 = min(nx - 1, int(math.floor((hi[0] - grid_raw.origin[0]) / res)))
        j0 = max(0, int(math.floor((lo[1] - grid_raw.origin[1]) / res)))
        j1 = min(ny - 1, int(math.floor((hi[1] - grid_raw.origin[1]) / res)))
        if i0 > i1 or j0 > j1:
            continue
        xs = grid_raw.origin[0] + (np.arange(i0, i1 + 1) + 0.5) * res
        ys = grid_raw.origin[1] + (np.arange(j0, j1 + 1) + 0.5) * res
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        px = gx - rect.center[0]
        py = gy - rect.center[1]
        ch, sh = math.cos(rect.heading), math.sin(rect.heading)
        u = px * ch + py * sh
        v = -px * sh + py * ch
        inside = (np.abs(u) <= rect.half_length) & (np.abs(v) <= rect.half_width)
        if bool((cells[i0 : i1 + 1, j0 : j1 + 1] & inside).any()):
            return False
    return True


def _advance(pose: Pose2, curvature: float, direction: int, ds: float) -> Pose2:
    """Exact constant-curvature step of arc length ds."""
    if abs(curvature) < 1e-12:
        return Pose2(
            pose.x + direction * ds * math.cos(pose.theta),
            pose.y + direction * ds * math.sin(pose.theta),
            pose.theta,
        )
    dtheta = direction * ds * curvature
    return Pose2(
        pose.x + (math.sin(pose.theta + dtheta) - math.sin(pose.theta)) / curvature,
        pose.y + (-math.cos(pose.theta + dtheta) + math.cos(pose.theta)) / curvature,
        normalize_angle(pose.theta + dtheta),
    )


class _DistanceField:
    """Coarse obstacle-aware 2-D shortest distances to the goal (Dijkstra)."""

    def __init__(self, grid: OccupancyGrid, goal_xy, resolution: float):
        factor = max(1, int(round(resolution / grid.resolution)))
        self.res = grid.resolution * factor
        self.origin = grid.origin
        nx = (grid.width + factor - 1) // factor
        ny = (grid.height + factor - 1) // factor
        occ = np.zeros((nx, ny), dtype=bool)
        gw, gh = grid.width, grid.height
        for bx in range(nx):
            for by in range(ny):
                block = grid.cells[
                    bx * factor : min((bx + 1) * factor, gw),
                    by * factor : min((by + 1) * factor, gh),
                ]
                occ[bx, by] = bool(block.any())
        self.dist = np.full((nx, ny), np.inf)
        gi = int((goal_xy[0] - self.origin[0]) / self.res)
        gj = int((goal_xy[1] - self.origin[1]) / self.res)
        if not (0 <= gi < nx and 0 <= gj < ny):
            return
        diag = self.res * math.sqrt(2.0)
        heap = [(0.0, gi, gj)]
        self.dist[gi, gj] = 0.0
        moves = [
            (1, 0, self.res), (-1, 0, self.res), (0, 1, self.res), (0, -1, self.res),
            (1, 1, diag), (1, -1, diag), (-1, 1, diag), (-1, -1, diag),
        ]
        while heap:
            d, i, j = heapq.heappop(heap)
            if d > self.dist[i, j]:
                continue
            for di, dj, cost in moves:
                ni, nj = i + di, j + dj
                if 0 <= ni < nx and 0 <= nj < ny and not occ[ni, nj]:
                    nd = d + cost
                    if nd < self.dist[ni, nj]:
                        self.dist[ni, nj] = nd
                        heapq.heappush(heap, (nd, ni, nj))

    def query(self, x: float, y: float) -> float:
        i = int((x - self.origin[0]) / self.res)
        j = int((y - self.origin[1]) / self.res)
        if 0 <= i < self.dist.shape[0] and 0 <= j < self.dist.shape[1]:
            d = self.dist[i, j]
            if math.isfinite(d):
                return float(d)
        return 0.0


class HybridAStarPlanner:
    """Search instance bound to one map + vehicle; serves repeated queries."""

    def __init__(
        self,
        grid_raw: OccupancyGrid,
        grid_inflated: OccupancyGrid,
        model: AAVModel,
        circles: CircleDecomposition,
        config: SearchConfig | None = None,
        checker: str = "circles",
    ):
        if checker not in ("circles", "raycast"):
            raise ValueError("checker must be 'circles' or 'raycast'")
        self.grid_raw = grid_raw
        self.grid_inflated = grid_inflated
        self.model = model
        self.circles = circles
        self.config = config or SearchConfig()
        self.checker = checker
        self._implement_union = circles.implement_union()
        self.min_turn_radius = 1.0 / model.kappa_max
        self.stats: dict[str, int] = {}
        if checker == "circles":
            if abs(grid_inflated.inflation_radius - circles.vehicle.radius) > _RADIUS_TOL:
                raise CollisionCheckMisuseError(
                    f"grid inflated by {grid_inflated.inflation_radius}, expected"
                    f" {circles.vehicle.radius}"
                )
        pts = circles.vehicle.outermost_centers
        if self._implement_union is not None and len(self._implement_union.centers):
            pts = np.vstack([pts, self._implement_union.centers])
        self._check_pts = [(float(p[0]), float(p[1])) for p in pts]

    def collision_free(self, pose: Pose2) -> bool:
        if self.checker == "circles":
            # same semantics as check_circles, without array overhead
            grid = self.grid_inflated
            ox, oy = grid.origin
            res = grid.resolution
            nx, ny = grid.width, grid.height
            cells = grid.cells
            c = math.cos(pose.theta)
            s = math.sin(pose.theta)
            for px, py in self._check_pts:
                wx = c * px - s * py + pose.x
                wy = s * px + c * py + pose.y
                ix = math.floor((wx - ox) / res)
                iy = math.floor((wy - oy) / res)
                if ix < 0 or iy < 0 or ix >= nx or iy >= ny or cells[ix, iy]:
                    return False
            return True
        return check_raycast(self.grid_raw, pose, self.model)

    def plan(self, start: Pose2, goal: Pose2) -> FrontEndPath:
        cfg = self.config
        if not self.collision_free(start):
            raise InfeasibleStartError("start pose is in collision")
        if not self.collision_free(goal):
            raise InfeasibleStartError("goal pose is in collision")

        self.stats = {"expansions": 0, "checks": 0, "rs_shots": 0}
        theta_res = 2.0 * math.pi / cfg.theta_bins
        if self._same_cell(start, goal, theta_res):
            return FrontEndPath(states=((start, 1),), arc=np.array([0.0]))

        field = _DistanceField(self.grid_inflated, (goal.x, goal.y), cfg.heuristic_grid_resolution)
        curvatures = cfg.curvatures(self.model.kappa_max)
        nsub = 2  # collision checks per primitive, spaced step_length/2
        ds = cfg.step_length / nsub

        def key_of(pose: Pose2, direction: int):
            return (
                int(math.floor(pose.x / cfg.xy_resolution)),
                int(math.floor(pose.y / cfg.xy_resolution)),
                int(math.floor((pose.theta + math.pi) / theta_res)) % cfg.theta_bins,
                direction,
            )

        h_cache: dict[tuple, tuple[float, float]] = {}
        rs_gate = cfg.rs_shot_distance

        def heuristic(pose: Pose2, cell) -> tuple[float, float]:
            hit = h_cache.get(cell)
            if hit is not None:
                return hit
            euclid = math.hypot(pose.x - goal.x, pose.y - goal.y)
            if euclid <= rs_gate:
                h_rs = rs.path_length(pose, goal, self.min_turn_radius)
            else:
                # far away the curvature detour is negligible; the Euclidean
                # bound keeps the heuristic admissible without the RS solve
                h_rs = euclid
            h_2d = field.query(pose.x, pose.y)
            val = (cfg.heuristic_weight * max(h_rs, h_2d), h_rs)
            h_cache[cell] = val
            return val

        start_key = key_of(start, 0)
        g_cost = {start_key: 0.0}
        parents: dict = {start_key: None}
        node_pose = {start_key: start}
        h0, _ = heuristic(start, start_key[:3])
        counter = 0
        heap = [(h0, counter, start_key, 0.0)]
        closed: set = set()
        goal_states = None

        while heap:
            f, _, key, g_at_push = heapq.heappop(heap)
            if key in closed or g_at_push > g_cost.get(key, math.inf) + 1e-12:
                continue
            closed.add(key)
            g = g_cost[key]
            pose = node_pose[key]
            self.stats["expansions"] += 1
            if self.stats["expansions"] > cfg.max_expansions:
                raise NoPathError(f"expansion budget {cfg.max_expansions} exhausted")

            # analytic goal connection
            _, h_rs = heuristic(pose, key[:3])
            if h_rs <= cfg.rs_shot_distance and (
                self.stats["expansions"] % cfg.rs_shot_interval == 1 or h_rs < 3.0
            ):
                self.stats["rs_shots"] += 1
                shot = self._try_rs_shot(pose, goal, ds)
                if shot is not None:
                    goal_states = (key, shot)
                    break

            if self._near_goal(pose, goal, theta_res):
                goal_states = (key, [])
                break

            direction_in = key[3]
            for direction in (1, -1):
                for curv in curvatures:
                    samples = []
                    p = pose
                    ok = True
                    for _ in range(nsub):
                        p = _advance(p, curv, direction, ds)
                        self.stats["checks"] += 1
                        if not self.collision_free(p):
                            ok = False
                            break
                        samples.append((p, direction))
                    if not ok:
                        continue
                    child_key = key_of(p, direction)
                    if child_key in closed:
                        continue
                    step_cost = cfg.step_length * (
                        1.0 if direction == 1 else cfg.reverse_penalty
                    )
                    if direction_in != 0 and direction != direction_in:
                        step_cost += cfg.gear_change_penalty
                    child_g = g + step_cost
                    if child_g < g_cost.get(child_key, math.inf) - 1e-12:
                        g_cost[child_key] = child_g
                        parents[child_key] = (key, samples)
                        node_pose[child_key] = p
                        counter += 1
                        ch, _ = heuristic(p, child_key[:3])
                        heapq.heappush(heap, (child_g + ch, counter, child_key, child_g))
        if goal_states is None:
            raise NoPathError("open set exhausted without reaching the goal")
        return self._extract(parents, node_pose, goal_states, start)

    def _same_cell(self, a: Pose2, b: Pose2, theta_res: float) -> bool:
        return (
            abs(a.x - b.x) < 1e-9
            and abs(a.y - b.y) < 1e-9
            and abs(normalize_angle(a.theta - b.theta)) < 1e-9
        )

    def _near_goal(self, pose: Pose2, goal: Pose2, theta_res: float) -> bool:
        cfg = self.config
        return (
            abs(pose.x - goal.x) <= cfg.xy_resolution
            and abs(pose.y - goal.y) <= cfg.xy_resolution
            and abs(normalize_angle(pose.theta - goal.theta)) <= theta_res
        )

    def _try_rs_shot(self, pose: Pose2, goal: Pose2, ds: float):
        path = rs.shortest_path(pose, goal, self.min_turn_radius)
        samples = rs.sample_path(path, pose, self.min_turn_radius, ds)
        for p, _ in samples:
            self.stats["checks"] += 1
            if not self.collision_free(p):
                return None
        return samples

    def _extract(self, parents, node_pose, goal_states, start: Pose2) -> FrontEndPath:
        key, tail = goal_states
        chain = []
        while parents[key] is not None:
            pkey, samples = parents[key]
            chain.append(samples)
            key = pkey
        states: list[tuple[Pose2, int]] = [(start, 0)]
        for samples in reversed(chain):
            states.extend(samples)
        states.extend(tail)
        if len(states) == 1:
            states = [(start, 1)]
        else:
            states[0] = (start, states[1][1])
        arc = np.zeros(len(states))
        for i in range(1, len(states)):
            a, b = states[i - 1][0], states[i][0]
            arc[i] = arc[i - 1] + math.hypot(b.x - a.x, b.y - a.y)
        return FrontEndPath(states=tuple(states), arc=arc)


def plan(
    grid_raw: OccupancyGrid,
    grid_inflated: OccupancyGrid,
    model: AAVModel,
    circles: CircleDecomposition,
    start: Pose2,
    goal: Pose2,
    config: SearchConfig | None = None,
    checker: str = "circles",
) -> FrontEndPath:
    """One-shot hybrid A* query."""
    planner = HybridAStarPlanner(grid_raw, grid_inflated, model, circles, config, checker)
    return planner.plan(start, goal)


@dataclass(frozen=True)
class PathSegment:
    poses: tuple[Pose2, ...]
    gamma: int
    length: float
    duration_estimate: float
    arc: np.ndarray  # cumulative arc length within the segment

    def __post_init__(self):
        arc = np.asarray(self.arc, dtype=float)
        arc.setflags(write=False)
        object.__setattr__(self, "arc", arc)
        object.__setattr__(self, "poses", tuple(self.poses))


def segment(path: FrontEndPath, v_ref_fraction: float = 0.5, v_max: float = 1.5):
    """Split a front-end path at gear changes.

    Each segment keeps the shared junction pose at both ends; the duration
    estimate assumes travel at ``v_ref_fraction * v_max``.
    """
    if not path.states:
        raise ValueError("cannot segment an empty path")
    segments: list[PathSegment] = []
    states = path.states
    arc = path.arc
    start_idx = 0
    current_dir = states[1][1] if len(states) > 1 else states[0][1]
    for i in range(1, len(states) + 1):
        end_of_run = i == len(states) or states[i][1] != current_dir
        if not end_of_run:
            continue
        poses = [s[0] for s in states[start_idx:i]]
        seg_arc = arc[start_idx:i] - arc[start_idx]
        length = float(seg_arc[-1]) if len(seg_arc) else 0.0
        v_ref = max(v_ref_fraction * v_max, 1e-6)
        segments.append(
            PathSegment(
                poses=tuple(poses),
                gamma=current_dir,
                length=length,
                duration_estimate=max(length / v_ref, 0.5),
                arc=seg_arc,
            )
        )
        if i < len(states):
            # gear change: the junction pose starts the next run
            start_idx = i - 1
            current_dir = states[i][1]
    return segments
