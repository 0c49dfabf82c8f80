"""Headland-turning trajectory planner for car-like vehicles with implements."""

from .geometry import (
    OccupancyGrid,
    OrientedRectangle,
    PolygonObstacle,
    Pose2,
    body_to_world,
    inflate,
    rasterize,
    rect_intersects_polygon,
)
from .body_model import (
    AAVModel,
    CircleDecomposition,
    CoveringCircleSet,
    compute_circles,
    compute_implement_circles,
    compute_vehicle_circles,
    max_overhang,
    overhang,
    split_radius,
)
from .minco import BoundaryCondition, PolyTrajectory, TrajSegment, construct_segment
from .flatness import FlatPoint, VehicleState, recover_state

__all__ = [
    "AAVModel",
    "BoundaryCondition",
    "CircleDecomposition",
    "CoveringCircleSet",
    "FlatPoint",
    "OccupancyGrid",
    "OrientedRectangle",
    "PolyTrajectory",
    "PolygonObstacle",
    "Pose2",
    "TrajSegment",
    "VehicleState",
    "body_to_world",
    "compute_circles",
    "compute_implement_circles",
    "compute_vehicle_circles",
    "construct_segment",
    "inflate",
    "max_overhang",
    "overhang",
    "rasterize",
    "recover_state",
    "rect_intersects_polygon",
    "split_radius",
]

__version__ = "0.1.0"
