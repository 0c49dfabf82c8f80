"""End-to-end pipeline: maps, search, optimization, records, benchmarks.

``run`` executes rasterize -> covering circles -> inflate -> hybrid A* ->
corridors -> optimize -> sample, verifies the result against the exact polygon
oracle and only then writes artifacts. Grids are built from obstacles dilated
by the model's safety margin, which also absorbs rasterization error; the
oracle always checks the true polygons.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
import time as _time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .body_model import CircleDecomposition, compute_circles
from .corridor import seed_heading
from .errors import PlanningError
from .flatness import V_EPS
from .frontend import (
    FrontEndPath,
    HybridAStarPlanner,
    SearchConfig,
)
from .geometry import (
    OccupancyGrid,
    Pose2,
    PolygonObstacle,
    dilate_obstacles,
    inflate,
    rasterize,
    rect_intersects_polygon,
)
from .minco import PolyTrajectory
from .optimizer import OptimizeReport, PenaltyConfig, optimize
from .scenario import Scenario

log = logging.getLogger("headland_planner")

SAMPLE_DT = 0.02
V_REPORT_EPS = 1e-3
CSV_HEADER = ["t", "x", "y", "theta", "v", "a", "kappa", "gamma"]


@dataclass(frozen=True)
class World:
    grid_raw: OccupancyGrid
    grid_inflated: OccupancyGrid
    circles: CircleDecomposition


def build_world(scenario: Scenario) -> World:
    dilated = dilate_obstacles(scenario.obstacles, scenario.model.safety_margin)
    grid_raw = rasterize(dilated, scenario.bounds, scenario.grid_resolution)
    circles = compute_circles(scenario.model)
    grid_inflated = inflate(grid_raw, circles.inflation_radius)
    return World(grid_raw=grid_raw, grid_inflated=grid_inflated, circles=circles)


def trajectory_state(traj: PolyTrajectory, t: float):
    """(x, y, theta, v, a, kappa, gamma) with rest-sample conventions.

    Below V_REPORT_EPS the bicycle-model quantities are undefined: heading
    falls back to the segment's boundary heading, curvature to 0 and the
    acceleration to the heading-projected flat acceleration (which equals the
    flatness value whenever speed is nonzero).
    """
    i, t_local = traj.locate(t)
    seg = traj.segments[i]
    gamma = seg.gamma
    d0 = seg.eval_local(t_local, 0)
    d1 = seg.eval_local(t_local, 1)
    d2 = seg.eval_local(t_local, 2)
    n = math.hypot(d1[0], d1[1])
    if n > V_REPORT_EPS:
        theta = math.atan2(gamma * d1[1], gamma * d1[0])
        kappa = gamma * (d1[0] * d2[1] - d1[1] * d2[0]) / n**3
    else:
        theta = seed_heading(traj, i, t_local)
        kappa = 0.0
    u = (math.cos(theta), math.sin(theta))
    a = d2[0] * u[0] + d2[1] * u[1]
    return float(d0[0]), float(d0[1]), theta, gamma * n, float(a), float(kappa), gamma


def sample_record(traj: PolyTrajectory, dt: float = SAMPLE_DT) -> np.ndarray:
    """(n, 8) array of rows t, x, y, theta, v, a, kappa, gamma."""
    total = traj.total_duration
    n_steps = int(math.floor(total / dt + 1e-9))
    ts = [k * dt for k in range(n_steps + 1)]
    if ts[-1] < total - 1e-9:
        ts.append(total)
    rows = []
    for t in ts:
        x, y, theta, v, a, kappa, gamma = trajectory_state(traj, t)
        rows.append((t, x, y, theta, v, a, kappa, gamma))
    return np.array(rows)


def record_to_csv(record: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in record:
        writer.writerow([f"{v:.9f}" for v in row[:7]] + [str(int(row[7]))])
    return buf.getvalue()


def exact_collision_sweep(
    traj: PolyTrajectory, model, obstacles, dt: float = SAMPLE_DT
):
    """First (t, part index, obstacle index) where the true footprint hits a
    true polygon, or None when the sweep is clean."""
    total = traj.total_duration
    n_steps = int(math.floor(total / dt + 1e-9))
    ts = [k * dt for k in range(n_steps + 1)] + [total]
    for t in ts:
        x, y, theta, *_ = trajectory_state(traj, t)
        pose = Pose2(x, y, theta)
        for pi, part in enumerate(model.parts):
            rect = part.in_world(pose)
            for oi, poly in enumerate(obstacles):
                if rect_intersects_polygon(rect, poly):
                    return (t, pi, oi)
    return None


@dataclass
class RunResult:
    scenario: Scenario
    frontend_path: FrontEndPath
    trajectory: PolyTrajectory
    report: OptimizeReport
    record: np.ndarray
    timings: dict[str, float]
    seed: int = 0
    csv_path: Path | None = None
    svg_path: Path | None = None

    @property
    def duration(self) -> float:
        return self.trajectory.total_duration

    @property
    def total_wall_time(self) -> float:
        return sum(self.timings.values())


def _stage(timings: dict, name: str):
    class _Timer:
        def __enter__(self):
            self.t0 = _time.perf_counter()
            return self

        def __exit__(self, exc_type, exc, tb):
            timings[name] = timings.get(name, 0.0) + _time.perf_counter() - self.t0
            if exc is not None and isinstance(exc, PlanningError):
                exc.args = (f"[stage {name}] {exc.args[0]}",) + exc.args[1:]
            return False

    return _Timer()


def run(
    scenario: Scenario,
    out_dir=None,
    svg: bool = False,
    seed: int = 0,
    penalty: PenaltyConfig | None = None,
    search: SearchConfig | None = None,
    checker: str = "circles",
    world: World | None = None,
) -> RunResult:
    """Full pipeline on one scenario; artifacts written only after the exact
    oracle clears the trajectory."""
    timings: dict[str, float] = {}
    log.info("run %s (seed %d, checker %s)", scenario.name, seed, checker)
    if world is None:
        with _stage(timings, "map"):
            world = build_world(scenario)
    with _stage(timings, "frontend"):
        planner = HybridAStarPlanner(
            world.grid_raw, world.grid_inflated, scenario.model, world.circles,
            search, checker,
        )
        path = planner.plan(scenario.start, scenario.goal)
    with _stage(timings, "backend"):
        traj, report = optimize(
            path,
            scenario.model,
            world.grid_raw,
            penalty,
            start_pose=scenario.start,
            goal_pose=scenario.goal,
        )
    with _stage(timings, "sample"):
        record = sample_record(traj)
    with _stage(timings, "oracle"):
        hit = exact_collision_sweep(traj, scenario.model, scenario.obstacles)
        if hit is not None:
            raise PlanningError(
                f"optimized trajectory intersects obstacle {hit[2]} with part"
                f" {hit[1]} at t={hit[0]:.2f} s"
            )
    result = RunResult(
        scenario=scenario,
        frontend_path=path,
        trajectory=traj,
        report=report,
        record=record,
        timings=timings,
        seed=seed,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{scenario.name}.csv"
        csv_path.write_text(record_to_csv(record))
        result.csv_path = csv_path
        report_path = out / f"{scenario.name}.report.json"
        report_path.write_text(
            json.dumps(
                {
                    "scenario": scenario.name,
                    "seed": seed,
                    "cost": report.cost,
                    "iterations": report.iterations,
                    "converged": report.converged,
                    "duration_s": traj.total_duration,
                    "max_violation": report.max_violation,
                    "timings_s": timings,
                },
                indent=2,
            )
            + "\n"
        )
        if svg:
            from .svg_render import render_svg

            svg_path = out / f"{scenario.name}.svg"
            render_svg(scenario, result, svg_path)
            result.svg_path = svg_path
    return result


@dataclass
class BenchmarkRow:
    scenario: str
    frontend_circles_ms: float
    frontend_raycast_ms: float
    backend_ms: float
    duration_s: float
    reduction_pct: float
    status: str = "ok"


def benchmark(scenarios, repetitions: int = 5, penalty: PenaltyConfig | None = None,
              search: SearchConfig | None = None) -> list[BenchmarkRow]:
    """Median front-end times for both collision checkers plus back-end time.

    Everything except the collision checker is identical between the two
    front-end lanes.
    """
    rows = []
    for sc in scenarios:
        world = build_world(sc)
        t_circ, t_ray, t_back = [], [], []
        duration = math.nan
        status = "ok"
        try:
            for _ in range(repetitions):
                planner = HybridAStarPlanner(
                    world.grid_raw, world.grid_inflated, sc.model, world.circles,
                    search, "circles",
                )
                t0 = _time.perf_counter()
                path = planner.plan(sc.start, sc.goal)
                t_circ.append((_time.perf_counter() - t0) * 1e3)

                planner_rc = HybridAStarPlanner(
                    world.grid_raw, world.grid_inflated, sc.model, world.circles,
                    search, "raycast",
                )
                t0 = _time.perf_counter()
                planner_rc.plan(sc.start, sc.goal)
                t_ray.append((_time.perf_counter() - t0) * 1e3)

                t0 = _time.perf_counter()
                traj, _ = optimize(
                    path, sc.model, world.grid_raw, penalty,
                    start_pose=sc.start, goal_pose=sc.goal,
                )
                t_back.append((_time.perf_counter() - t0) * 1e3)
                duration = traj.total_duration
        except PlanningError as exc:
            status = f"fail: {exc}"
            rows.append(BenchmarkRow(sc.name, math.nan, math.nan, math.nan,
                                     math.nan, math.nan, status))
            continue
        mc = statistics.median(t_circ)
        mr = statistics.median(t_ray)
        rows.append(
            BenchmarkRow(
                scenario=sc.name,
                frontend_circles_ms=mc,
                frontend_raycast_ms=mr,
                backend_ms=statistics.median(t_back),
                duration_s=duration,
                reduction_pct=100.0 * (1.0 - mc / mr) if mr > 0 else math.nan,
            )
        )
    return rows


def format_benchmark(rows: list[BenchmarkRow], fmt: str = "table") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["scenario", "frontend_circles_ms", "frontend_raycast_ms",
             "backend_ms", "trajectory_duration_s", "reduction_pct", "status"]
        )
        for r in rows:
            w.writerow(
                [r.scenario, f"{r.frontend_circles_ms:.2f}", f"{r.frontend_raycast_ms:.2f}",
                 f"{r.backend_ms:.2f}", f"{r.duration_s:.2f}", f"{r.reduction_pct:.1f}",
                 r.status]
            )
        return buf.getvalue()
    header = (
        f"{'scenario':38s} {'circles[ms]':>12s} {'raycast[ms]':>12s}"
        f" {'backend[ms]':>12s} {'traj[s]':>8s} {'reduct':>7s}  status"
    )
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.scenario:38s} {r.frontend_circles_ms:12.1f} {r.frontend_raycast_ms:12.1f}"
            f" {r.backend_ms:12.1f} {r.duration_s:8.2f} {r.reduction_pct:6.1f}%  {r.status}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class ReplanResult:
    initial: RunResult
    replanned: RunResult
    perturbed_start: Pose2
    injected_obstacle: PolygonObstacle


def _square_obstacle(cx: float, cy: float, half: float) -> PolygonObstacle:
    return PolygonObstacle(
        [[cx - half, cy - half], [cx + half, cy - half],
         [cx + half, cy + half], [cx - half, cy + half]]
    )


def replan_demo(
    scenario: Scenario,
    pose_fraction: float = 0.5,
    lateral_offset: float = 0.35,
    obstacle_fraction: float = 0.78,
    obstacle_half: float = 0.4,
    penalty: PenaltyConfig | None = None,
    search: SearchConfig | None = None,
) -> ReplanResult:
    """Plan, then replan after a tracking deviation plus a new obstacle.

    The vehicle is displaced laterally at ``pose_fraction`` of the original
    trajectory and a square obstacle appears on the not-yet-driven part.
    """
    initial = run(scenario, penalty=penalty, search=search)
    traj = initial.trajectory
    total = traj.total_duration
    x, y, theta, *_ = trajectory_state(traj, pose_fraction * total)
    ox, oy, *_ = trajectory_state(traj, obstacle_fraction * total)
    obstacle = _square_obstacle(ox, oy, obstacle_half)

    nx, ny = -math.sin(theta), math.cos(theta)
    candidates = [
        Pose2(x + s * lateral_offset * nx, y + s * lateral_offset * ny, theta)
        for s in (1.0, -1.0, 0.5, -0.5, 0.0)
    ]
    new_scenario = replace(
        scenario,
        name=f"{scenario.name}_replan",
        obstacles=scenario.obstacles + (obstacle,),
        start=candidates[0],
    )
    world = build_world(new_scenario)
    planner = HybridAStarPlanner(
        world.grid_raw, world.grid_inflated, scenario.model, world.circles, search
    )
    start = next((p for p in candidates if planner.collision_free(p)), None)
    if start is None:
        raise PlanningError("no collision-free perturbed start pose found")
    if not planner.collision_free(new_scenario.goal):
        raise PlanningError("injected obstacle blocks the goal pose")
    new_scenario = replace(new_scenario, start=start)
    replanned = run(new_scenario, penalty=penalty, search=search, world=world)
    return ReplanResult(
        initial=initial,
        replanned=replanned,
        perturbed_start=start,
        injected_obstacle=obstacle,
    )
