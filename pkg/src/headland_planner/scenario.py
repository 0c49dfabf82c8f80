"""Scenario files: world geometry + vehicle model + start/goal in explicit units.

The JSON schema uses unit-suffixed field names (wheelbase_m, v_max_mps, ...)
so files stay self-describing and diffable. Validation reports the path of the
offending field.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .body_model import AAVModel
from .errors import ScenarioError
from .geometry import OrientedRectangle, PolygonObstacle, Pose2

DEFAULT_RESOLUTION = 0.1


@dataclass(frozen=True)
class Scenario:
    name: str
    obstacles: tuple[PolygonObstacle, ...]
    model: AAVModel
    start: Pose2
    goal: Pose2
    bounds: tuple[tuple[float, float], tuple[float, float]]
    grid_resolution: float = DEFAULT_RESOLUTION

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        (xmin, ymin), (xmax, ymax) = self.bounds
        for pose, label in ((self.start, "start"), (self.goal, "goal")):
            if not (xmin <= pose.x <= xmax and ymin <= pose.y <= ymax):
                raise ScenarioError(f"{label} pose lies outside the scenario bounds")


def _need(obj: dict, key: str, path: str):
    if key not in obj:
        raise ScenarioError(f"{path}.{key}: missing required field")
    return obj[key]


def _num(obj: dict, key: str, path: str, default=None, positive=False):
    if key not in obj:
        if default is None:
            raise ScenarioError(f"{path}.{key}: missing required field")
        return default
    val = obj[key]
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise ScenarioError(f"{path}.{key}: expected a number, got {type(val).__name__}")
    if positive and val <= 0:
        raise ScenarioError(f"{path}.{key}: must be positive")
    return float(val)


def _parse_pose(obj, path: str) -> Pose2:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{path}: expected an object")
    return Pose2(
        _num(obj, "x_m", path),
        _num(obj, "y_m", path),
        _num(obj, "theta_rad", path),
    )


def _parse_rect(obj, path: str) -> OrientedRectangle:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{path}: expected an object")
    center = _need(obj, "center_m", path)
    if not (isinstance(center, (list, tuple)) and len(center) == 2):
        raise ScenarioError(f"{path}.center_m: expected [x, y]")
    try:
        return OrientedRectangle(
            center=(float(center[0]), float(center[1])),
            half_length=_num(obj, "half_length_m", path, positive=True),
            half_width=_num(obj, "half_width_m", path, positive=True),
            heading=_num(obj, "heading_rad", path, default=0.0),
        )
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def parse_scenario(data: dict, name_hint: str = "scenario") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario: expected a JSON object at top level")
    name = data.get("name", name_hint)
    bounds_obj = _need(data, "bounds_m", "scenario")
    try:
        bmin = tuple(float(v) for v in bounds_obj["min"])
        bmax = tuple(float(v) for v in bounds_obj["max"])
        assert len(bmin) == 2 and len(bmax) == 2
    except (KeyError, TypeError, ValueError, AssertionError) as exc:
        raise ScenarioError("scenario.bounds_m: expected {min: [x,y], max: [x,y]}") from exc
    if not (bmax[0] > bmin[0] and bmax[1] > bmin[1]):
        raise ScenarioError("scenario.bounds_m: empty bounds")

    veh = _need(data, "vehicle", "scenario")
    if not isinstance(veh, dict):
        raise ScenarioError("scenario.vehicle: expected an object")
    parts_obj = _need(veh, "vehicle_parts", "scenario.vehicle")
    if not isinstance(parts_obj, list) or not parts_obj:
        raise ScenarioError("scenario.vehicle.vehicle_parts: expected a non-empty list")
    vehicle_parts = tuple(
        _parse_rect(p, f"scenario.vehicle.vehicle_parts[{i}]") for i, p in enumerate(parts_obj)
    )
    imp_obj = veh.get("implement_parts", [])
    if not isinstance(imp_obj, list):
        raise ScenarioError("scenario.vehicle.implement_parts: expected a list")
    implement_parts = tuple(
        _parse_rect(p, f"scenario.vehicle.implement_parts[{i}]") for i, p in enumerate(imp_obj)
    )
    try:
        model = AAVModel(
            wheelbase=_num(veh, "wheelbase_m", "scenario.vehicle", positive=True),
            vehicle_parts=vehicle_parts,
            implement_parts=implement_parts,
            v_max=_num(veh, "v_max_mps", "scenario.vehicle", default=1.5, positive=True),
            a_max=_num(veh, "a_max_mps2", "scenario.vehicle", default=1.0, positive=True),
            kappa_max=_num(veh, "kappa_max_per_m", "scenario.vehicle", default=0.323, positive=True),
            thetadot_max=_num(veh, "thetadot_max_radps", "scenario.vehicle", default=0.5, positive=True),
            row_width=_num(veh, "row_width_m", "scenario.vehicle", default=3.0, positive=True),
            safety_margin=_num(veh, "safety_margin_m", "scenario.vehicle", default=0.1),
        )
    except ValueError as exc:
        raise ScenarioError(f"scenario.vehicle: {exc}") from exc

    obstacles = []
    for i, obs in enumerate(data.get("obstacles", [])):
        path = f"scenario.obstacles[{i}]"
        if not isinstance(obs, dict):
            raise ScenarioError(f"{path}: expected an object")
        verts = _need(obs, "vertices_m", path)
        try:
            obstacles.append(PolygonObstacle(np.asarray(verts, dtype=float)))
        except (ValueError, TypeError) as exc:
            raise ScenarioError(f"{path}.vertices_m: {exc}") from exc

    try:
        return Scenario(
            name=name,
            obstacles=tuple(obstacles),
            model=model,
            start=_parse_pose(_need(data, "start_pose", "scenario"), "scenario.start_pose"),
            goal=_parse_pose(_need(data, "goal_pose", "scenario"), "scenario.goal_pose"),
            bounds=(bmin, bmax),
            grid_resolution=_num(data, "grid_resolution_m", "scenario",
                                 default=DEFAULT_RESOLUTION, positive=True),
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"scenario: {exc}") from exc


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        data = json.loads(p.read_text())
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{p}: malformed JSON ({exc})") from exc
    return parse_scenario(data, name_hint=p.stem)


def scenario_to_dict(sc: Scenario) -> dict:
    def rect_dict(r: OrientedRectangle) -> dict:
        out = {
            "center_m": [r.center[0], r.center[1]],
            "half_length_m": r.half_length,
            "half_width_m": r.half_width,
        }
        if r.heading != 0.0:
            out["heading_rad"] = r.heading
        return out

    m = sc.model
    return {
        "name": sc.name,
        "bounds_m": {"min": list(sc.bounds[0]), "max": list(sc.bounds[1])},
        "grid_resolution_m": sc.grid_resolution,
        "start_pose": {"x_m": sc.start.x, "y_m": sc.start.y, "theta_rad": sc.start.theta},
        "goal_pose": {"x_m": sc.goal.x, "y_m": sc.goal.y, "theta_rad": sc.goal.theta},
        "vehicle": {
            "wheelbase_m": m.wheelbase,
            "v_max_mps": m.v_max,
            "a_max_mps2": m.a_max,
            "kappa_max_per_m": m.kappa_max,
            "thetadot_max_radps": m.thetadot_max,
            "row_width_m": m.row_width,
            "safety_margin_m": m.safety_margin,
            "vehicle_parts": [rect_dict(r) for r in m.vehicle_parts],
            "implement_parts": [rect_dict(r) for r in m.implement_parts],
        },
        "obstacles": [
            {"vertices_m": [[float(x), float(y)] for x, y in o.vertices]}
            for o in sc.obstacles
        ],
    }


def bundled_dir() -> Path:
    return Path(resources.files("headland_planner.scenarios"))  # type: ignore[arg-type]


def list_bundled() -> list[str]:
    return sorted(p.stem for p in bundled_dir().glob("*.json"))


def load_bundled(name: str) -> Scenario:
    path = bundled_dir() / f"{name}.json"
    if not path.exists():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return load_scenario(path)
