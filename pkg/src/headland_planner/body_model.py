"""Vehicle + implement body model and the iterative covering-circle decomposition.

The decomposition splits a rectangle into 2^(i-1) columns x 2^(max(0,i-2)) rows
of equal covering circles. Iterating i shrinks the circles until their overhang
beyond the rectangle fits the in-row clearance budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleGeometryError
from .geometry import OrientedRectangle

MAX_SPLIT_ITERATIONS = 12


@dataclass(frozen=True)
class AAVModel:
    """Kinematic limits plus body-frame rectangles for vehicle and implement parts.

    The body frame sits at the rear-axle center, x forward. ``row_width`` is the
    center-to-center crop row spacing the vehicle operates in and
    ``safety_margin`` the user clearance kept from obstacles.
    """

    wheelbase: float
    vehicle_parts: tuple[OrientedRectangle, ...]
    implement_parts: tuple[OrientedRectangle, ...] = ()
    v_max: float = 1.5
    a_max: float = 1.0
    kappa_max: float = 0.323
    thetadot_max: float = 0.5
    row_width: float = 3.0
    safety_margin: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "vehicle_parts", tuple(self.vehicle_parts))
        object.__setattr__(self, "implement_parts", tuple(self.implement_parts))
        for name in ("wheelbase", "v_max", "a_max", "kappa_max", "thetadot_max", "row_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.safety_margin < 0:
            raise ValueError("safety_margin must be non-negative")
        if not self.vehicle_parts:
            raise ValueError("at least one vehicle part is required")

    @property
    def parts(self) -> tuple[OrientedRectangle, ...]:
        return self.vehicle_parts + self.implement_parts

    def widest_vehicle_width(self) -> float:
        return max(p.width for p in self.vehicle_parts)


@dataclass(frozen=True)
class CoveringCircleSet:
    """Equal-radius circles whose union covers one or more body rectangles.

    ``outermost_mask`` marks centers on the boundary rows/columns of each
    rectangle's center lattice; those are the ones collision checking uses
    for the vehicle.
    """

    iteration: int
    radius: float
    centers: np.ndarray
    overhang: float
    outermost_mask: np.ndarray

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        mask = np.asarray(self.outermost_mask, dtype=bool)
        if centers.shape[0] != mask.shape[0]:
            raise ValueError("mask length must match center count")
        centers.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "outermost_mask", mask)

    @property
    def outermost_centers(self) -> np.ndarray:
        return self.centers[self.outermost_mask]


def split_radius(length: float, width: float, i: int) -> float:
    """Covering-circle radius at iteration i: sqrt((l/2^i)^2 + (w/2^max(1,i-1))^2)."""
    if length <= 0 or width <= 0:
        raise ValueError("rectangle dimensions must be positive")
    if i < 1:
        raise ValueError("iteration index must be >= 1")
    return math.hypot(length / 2.0**i, width / 2.0 ** max(1, i - 1))


def _lattice_shape(i: int) -> tuple[int, int]:
    return 2 ** (i - 1), 2 ** max(0, i - 2)


def circle_centers(rect: OrientedRectangle, i: int) -> np.ndarray:
    """Covering-circle centers at iteration i, in the rectangle's parent frame.

    The bottom-left center sits at (x_bl + l/2^i, y_bl + w/2^max(1,i-1)) in the
    rectangle frame; the rest tile at offsets (l/2^(i-1), w/2^(i-2)) until
    2^(i-1) columns and 2^max(0,i-2) rows exist.
    """
    if i < 1:
        raise ValueError("iteration index must be >= 1")
    l, w = rect.length, rect.width
    ncols, nrows = _lattice_shape(i)
    x0 = -rect.half_length + l / 2.0**i
    y0 = -rect.half_width + w / 2.0 ** max(1, i - 1)
    dx = l / 2.0 ** (i - 1)
    dy = w / 2.0 ** (i - 2) if i >= 2 else 0.0
    cols = x0 + dx * np.arange(ncols)
    rows = y0 + dy * np.arange(nrows)
    gx, gy = np.meshgrid(cols, rows, indexing="ij")
    local = np.column_stack([gx.ravel(), gy.ravel()])
    c, s = math.cos(rect.heading), math.sin(rect.heading)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(rect.center)


def _boundary_mask(i: int) -> np.ndarray:
    ncols, nrows = _lattice_shape(i)
    col = np.repeat(np.arange(ncols), nrows)
    row = np.tile(np.arange(nrows), ncols)
    return (col == 0) | (col == ncols - 1) | (row == 0) | (row == nrows - 1)


def overhang(length: float, width: float, i: int) -> float:
    """How far an iteration-i circle extends beyond the rectangle side."""
    return split_radius(length, width, i) - min(length / 2.0**i, width / 2.0 ** max(1, i - 1))


def max_overhang(model: AAVModel) -> float:
    """Clearance budget (D - w)/2 - d_e based on the widest vehicle part."""
    w = model.widest_vehicle_width()
    if model.row_width <= w:
        raise InfeasibleGeometryError(
            f"row width {model.row_width} must exceed vehicle width {w}"
        )
    return (model.row_width - w) / 2.0 - model.safety_margin


def decompose_rect(rect: OrientedRectangle, i: int) -> CoveringCircleSet:
    """Covering-circle set of a single rectangle at a fixed iteration."""
    return CoveringCircleSet(
        iteration=i,
        radius=split_radius(rect.length, rect.width, i),
        centers=circle_centers(rect, i),
        overhang=overhang(rect.length, rect.width, i),
        outermost_mask=_boundary_mask(i),
    )


def compute_vehicle_circles(model: AAVModel) -> CoveringCircleSet:
    """Smallest-iteration decomposition whose overhang fits the row budget.

    Multi-part vehicles decompose each part at its own minimal iteration and
    concatenate the centers; the set radius is the largest per-part radius,
    which is the radius obstacle maps must be inflated by.
    """
    budget = max_overhang(model)
    if budget <= 0:
        raise InfeasibleGeometryError(
            f"clearance budget {budget:.3f} m is not positive; widen rows or"
            " shrink the safety margin"
        )
    sets = []
    for part in model.vehicle_parts:
        sets.append(_decompose_until(part, lambda i, p=part: overhang(p.length, p.width, i) <= budget))
    return _merge_sets(sets)


def compute_implement_circles(rect: OrientedRectangle, r_c_star: float) -> CoveringCircleSet:
    """Smallest-iteration decomposition with radius <= the vehicle's r_c_star."""
    if r_c_star <= 0:
        raise ValueError("reference radius must be positive")
    return _decompose_until(
        rect, lambda j: split_radius(rect.length, rect.width, j) <= r_c_star
    )


def _decompose_until(rect: OrientedRectangle, accept) -> CoveringCircleSet:
    for i in range(1, MAX_SPLIT_ITERATIONS + 1):
        if accept(i):
            return decompose_rect(rect, i)
    raise InfeasibleGeometryError(
        f"no covering-circle iteration <= {MAX_SPLIT_ITERATIONS} satisfies the bound"
        f" for a {rect.length:.2f} x {rect.width:.2f} rectangle"
    )


def _merge_sets(sets: list[CoveringCircleSet]) -> CoveringCircleSet:
    if len(sets) == 1:
        return sets[0]
    radius = max(s.radius for s in sets)
    governing = max(sets, key=lambda s: s.radius)
    return CoveringCircleSet(
        iteration=governing.iteration,
        radius=radius,
        centers=np.vstack([s.centers for s in sets]),
        overhang=max(s.overhang for s in sets),
        outermost_mask=np.concatenate([s.outermost_mask for s in sets]),
    )


@dataclass(frozen=True)
class CircleDecomposition:
    """Bundle of vehicle and per-implement covering circles for one model."""

    vehicle: CoveringCircleSet
    implements: tuple[CoveringCircleSet, ...]

    @property
    def inflation_radius(self) -> float:
        return self.vehicle.radius

    def implement_union(self) -> CoveringCircleSet | None:
        if not self.implements:
            return None
        return _merge_sets(list(self.implements))


def compute_circles(model: AAVModel) -> CircleDecomposition:
    """Covering circles for the whole AAV: vehicle first, implements against r_c_star."""
    vehicle = compute_vehicle_circles(model)
    implements = tuple(
        compute_implement_circles(rect, vehicle.radius) for rect in model.implement_parts
    )
    return CircleDecomposition(vehicle=vehicle, implements=implements)
