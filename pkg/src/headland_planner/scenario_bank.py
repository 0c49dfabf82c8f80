"""Programmatic construction of the bundled orchard scenarios.

Standard scenarios: straight tree rows 3 m apart with headland widths 6.5 to
8.0 m; non-standard cases add slanted boundaries, poles in the headland and
stepped row ends. Four implement geometries (front gantry pruner, offset
single-side pruner, towed mower, wide over-row sprayer) are combined with
every field, the vehicle itself matching a compact orchard tractor.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .geometry import OrientedRectangle, PolygonObstacle, Pose2
from .body_model import AAVModel
from .scenario import Scenario, scenario_to_dict

GRID_RESOLUTION = 0.05
SAFETY_MARGIN = 0.12
ROW_SPACING = 3.0
TREE_HALF_WIDTH = 0.05
ROW_LENGTH = 8.0
ROW_YS = (-3.0, 0.0, 3.0, 6.0, 9.0, 12.0)

VEHICLE_PART = OrientedRectangle(center=(1.075, 0.0), half_length=1.675, half_width=0.74)

IMPLEMENTS = {
    "double_pruner": OrientedRectangle(center=(2.5, 0.0), half_length=0.6, half_width=0.95),
    "single_pruner": OrientedRectangle(center=(2.3, 0.55), half_length=0.7, half_width=0.45),
    "mower": OrientedRectangle(center=(-1.55, 0.0), half_length=0.9, half_width=0.9),
    "kms_sprayer": OrientedRectangle(center=(2.9, 0.0), half_length=1.0, half_width=1.2),
}

# rear-axle start/goal poses per implement; start exits the row at y=1.5,
# goal enters (or waits at the mouth of) the row at y=7.5
START_ROW_Y = 1.5
GOAL_ROW_Y = 7.5
POSES = {
    "double_pruner": ((-2.0, 0.0), (-1.0, math.pi)),
    "single_pruner": ((-1.2, 0.0), (3.4, math.pi)),
    "mower": ((-0.8, 0.0), (-0.8, math.pi)),
    "kms_sprayer": ((-0.9, 0.0), (5.0, math.pi)),
}

# stepped row ends in case 3 push the wide hover poses further out
CASE_GOAL_X = {
    (3, "kms_sprayer"): 5.4,
    (3, "single_pruner"): 4.2,
}


def _rect_poly(x0, y0, x1, y1) -> PolygonObstacle:
    return PolygonObstacle([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def _octagon(cx, cy, r) -> PolygonObstacle:
    ang = np.arange(8) * (math.pi / 4.0) + math.pi / 8.0
    return PolygonObstacle(np.column_stack([cx + r * np.cos(ang), cy + r * np.sin(ang)]))


def _model(implement: str) -> AAVModel:
    return AAVModel(
        wheelbase=1.9,
        vehicle_parts=(VEHICLE_PART,),
        implement_parts=(IMPLEMENTS[implement],),
        v_max=1.5,
        a_max=1.0,
        kappa_max=0.323,
        thetadot_max=0.5,
        row_width=ROW_SPACING,
        safety_margin=SAFETY_MARGIN,
    )


def _field(
    wall_inner,
    extra_obstacles=(),
    row_extensions=None,
    x_max=None,
):
    """Common field skeleton.

    ``wall_inner`` is either a float (straight far wall at that x) or a pair
    (x_bottom, x_top) for a slanted wall. ``row_extensions`` maps row y to an
    extended row-end x.
    """
    obstacles = []
    ext = row_extensions or {}
    for y in ROW_YS:
        end = ext.get(y, 0.0)
        obstacles.append(
            _rect_poly(-ROW_LENGTH, y - TREE_HALF_WIDTH, end, y + TREE_HALF_WIDTH)
        )
    if isinstance(wall_inner, tuple):
        xb, xt = wall_inner
        wall_far = max(xb, xt) + 0.5
        obstacles.append(
            PolygonObstacle([[xb, -4.5], [wall_far, -4.5], [wall_far, 13.5], [xt, 13.5]])
        )
        x_hi = wall_far
    else:
        obstacles.append(_rect_poly(wall_inner, -4.5, wall_inner + 0.5, 13.5))
        x_hi = wall_inner + 0.5
    if x_max is not None:
        x_hi = max(x_hi, x_max)
    obstacles.append(_rect_poly(-8.5, -4.5, -8.0, 13.5))  # back wall
    obstacles.append(_rect_poly(-8.5, -4.5, x_hi, -4.0))  # bottom fence
    obstacles.append(_rect_poly(-8.5, 13.0, x_hi, 13.5))  # top fence
    obstacles.extend(extra_obstacles)
    bounds = ((-8.5, -4.5), (x_hi, 13.5))
    return obstacles, bounds


def _scenario(name: str, implement: str, obstacles, bounds, case: int | None = None) -> Scenario:
    (sx, sth), (gx, gth) = POSES[implement]
    if case is not None:
        gx = CASE_GOAL_X.get((case, implement), gx)
    return Scenario(
        name=name,
        obstacles=tuple(obstacles),
        model=_model(implement),
        start=Pose2(sx, START_ROW_Y, sth),
        goal=Pose2(gx, GOAL_ROW_Y, gth),
        bounds=bounds,
        grid_resolution=GRID_RESOLUTION,
    )


def standard_scenario(width: float, implement: str) -> Scenario:
    obstacles, bounds = _field(wall_inner=width)
    return _scenario(f"standard_w{width:.1f}_{implement}", implement, obstacles, bounds)


def nonstandard_scenario(case: int, implement: str) -> Scenario:
    if case == 1:
        obstacles, bounds = _field(wall_inner=(6.0, 7.0))
    elif case == 2:
        obstacles, bounds = _field(
            wall_inner=6.5, extra_obstacles=[_octagon(4.0, 4.5, 0.35)]
        )
    elif case == 3:
        obstacles, bounds = _field(
            wall_inner=6.5, row_extensions={6.0: 0.6, -3.0: 1.5}
        )
    elif case == 4:
        obstacles, bounds = _field(
            wall_inner=(6.8, 6.0), extra_obstacles=[_octagon(2.8, 4.9, 0.3)]
        )
    else:
        raise ValueError("case must be 1..4")
    return _scenario(
        f"nonstandard_case{case}_{implement}", implement, obstacles, bounds, case=case
    )


STANDARD_WIDTHS = (6.5, 7.0, 7.5, 8.0)
NONSTANDARD_CASES = (1, 2, 3, 4)


def build_all() -> dict[str, Scenario]:
    out = {}
    for width in STANDARD_WIDTHS:
        for implement in IMPLEMENTS:
            sc = standard_scenario(width, implement)
            out[sc.name] = sc
    for case in NONSTANDARD_CASES:
        for implement in IMPLEMENTS:
            sc = nonstandard_scenario(case, implement)
            out[sc.name] = sc
    return out


def standard_names() -> list[str]:
    return [
        f"standard_w{w:.1f}_{imp}" for w in STANDARD_WIDTHS for imp in IMPLEMENTS
    ]


def write_bundle(directory) -> list[Path]:
    """Serialize every bundled scenario as pretty JSON into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, sc in sorted(build_all().items()):
        path = directory / f"{name}.json"
        path.write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")
        written.append(path)
    return written


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "src/headland_planner/scenarios"
    for p in write_bundle(target):
        print(p)
