"""2-D primitives: poses, polygon obstacles, occupancy grids, exact intersection tests.

All lengths are in meters, angles in radians. Types are immutable after
construction and every operation here is a pure function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

_EPS = 1e-9


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(theta, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2:
    """Planar pose (x, y, theta); theta is normalized to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])


def body_to_world(pose: Pose2, local_point) -> np.ndarray:
    """Rigid transform of a body-frame point: rotate by theta, then translate."""
    p = np.asarray(local_point, dtype=float)
    return pose.rotation() @ p + pose.xy


@dataclass(frozen=True)
class PolygonObstacle:
    """Simple polygon with counter-clockwise vertices, implicitly closed."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ValueError("polygon needs >= 3 two-dimensional vertices")
        if _signed_area(verts) < 0:
            verts = verts[::-1].copy()
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)

    @property
    def is_convex(self) -> bool:
        v = self.vertices
        n = len(v)
        e = np.roll(v, -1, axis=0) - v
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        return bool(np.all(cross >= -_EPS))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _signed_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class OrientedRectangle:
    """Rectangle given by center, half extents and heading in some parent frame."""

    center: tuple[float, float]
    half_length: float
    half_width: float
    heading: float = 0.0

    def __post_init__(self):
        if self.half_length <= 0 or self.half_width <= 0:
            raise ValueError("rectangle half extents must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def length(self) -> float:
        return 2.0 * self.half_length

    @property
    def width(self) -> float:
        return 2.0 * self.half_width

    def corners(self) -> np.ndarray:
        """Corner points, counter-clockwise starting bottom-left (in parent frame)."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        rot = np.array([[c, -s], [s, c]])
        local = np.array(
            [
                [-self.half_length, -self.half_width],
                [self.half_length, -self.half_width],
                [self.half_length, self.half_width],
                [-self.half_length, self.half_width],
            ]
        )
        return local @ rot.T + np.asarray(self.center)

    def in_world(self, pose: Pose2) -> "OrientedRectangle":
        """This rectangle (body frame) placed at a world pose."""
        center = body_to_world(pose, self.center)
        return OrientedRectangle(
            center=(center[0], center[1]),
            half_length=self.half_length,
            half_width=self.half_width,
            heading=normalize_angle(self.heading + pose.theta),
        )


@dataclass(frozen=True)
class OccupancyGrid:
    """Rasterized obstacle map; cells[ix, iy] is True when occupied.

    Cell (ix, iy) covers [origin + (ix, iy) * resolution, origin + (ix+1, iy+1) * resolution)
    and its center sits at origin + (ix + 0.5, iy + 0.5) * resolution.
    """

    origin: tuple[float, float]
    resolution: float
    cells: np.ndarray
    inflation_radius: float = 0.0

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("grid resolution must be positive")
        cells = np.asarray(self.cells, dtype=bool)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def width(self) -> int:
        return self.cells.shape[0]

    @property
    def height(self) -> int:
        return self.cells.shape[1]

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        return xs, ys

    def occupied_centers(self) -> np.ndarray:
        """(n, 2) world coordinates of occupied cell centers."""
        ix, iy = np.nonzero(self.cells)
        xs = self.origin[0] + (ix + 0.5) * self.resolution
        ys = self.origin[1] + (iy + 0.5) * self.resolution
        return np.column_stack([xs, ys])

    def index_of(self, points) -> np.ndarray:
        """Integer cell indices containing the given points, shape (n, 2)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.floor((pts - np.asarray(self.origin)) / self.resolution).astype(int)

    def occupied_at(self, points) -> np.ndarray:
        """Boolean per point: True when the containing cell is occupied or off-grid."""
        idx = self.index_of(points)
        inside = (
            (idx[:, 0] >= 0)
            & (idx[:, 0] < self.width)
            & (idx[:, 1] >= 0)
            & (idx[:, 1] < self.height)
        )
        out = np.ones(len(idx), dtype=bool)
        ii = idx[inside]
        out[inside] = self.cells[ii[:, 0], ii[:, 1]]
        return out


def points_in_polygon(points: np.ndarray, poly: PolygonObstacle) -> np.ndarray:
    """Vectorized closed-set containment test (boundary counts as inside)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    verts = poly.vertices
    n = len(verts)
    inside = np.zeros(len(pts), dtype=bool)
    x, y = pts[:, 0], pts[:, 1]
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        crosses = ((y1 > y) != (y2 > y)) & (
            x < (x2 - x1) * (y - y1) / (y2 - y1 + 1e-300) + x1
        )
        inside ^= crosses
    # boundary pass: points within _EPS of an edge count as inside
    on_edge = np.zeros(len(pts), dtype=bool)
    for i in range(n):
        a = verts[i]
        b = verts[(i + 1) % n]
        ab = b - a
        denom = float(ab @ ab)
        if denom < 1e-300:
            continue
        t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
        closest = a + t[:, None] * ab
        d2 = np.sum((pts - closest) ** 2, axis=1)
        on_edge |= d2 <= _EPS**2
    return inside | on_edge


def rasterize(obstacles, bounds, resolution: float) -> OccupancyGrid:
    """Build an occupancy grid: a cell is occupied iff its center lies in an obstacle.

    ``bounds`` is ((xmin, ymin), (xmax, ymax)).
    """
    (xmin, ymin), (xmax, ymax) = bounds
    if not (xmax > xmin and ymax > ymin):
        raise ValueError("rasterize bounds are empty")
    if resolution <= 0:
        raise ValueError("grid resolution must be positive")
    nx = max(1, int(math.ceil((xmax - xmin) / resolution - 1e-12)))
    ny = max(1, int(math.ceil((ymax - ymin) / resolution - 1e-12)))
    cells = np.zeros((nx, ny), dtype=bool)
    xs = xmin + (np.arange(nx) + 0.5) * resolution
    ys = ymin + (np.arange(ny) + 0.5) * resolution
    for poly in obstacles:
        lo, hi = poly.bounds()
        i0 = max(0, int(math.floor((lo[0] - xmin) / resolution)) - 1)
        i1 = min(nx, int(math.ceil((hi[0] - xmin) / resolution)) + 1)
        j0 = max(0, int(math.floor((lo[1] - ymin) / resolution)) - 1)
        j1 = min(ny, int(math.ceil((hi[1] - ymin) / resolution)) + 1)
        if i0 >= i1 or j0 >= j1:
            continue
        gx, gy = np.meshgrid(xs[i0:i1], ys[j0:j1], indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        hit = points_in_polygon(pts, poly).reshape(i1 - i0, j1 - j0)
        cells[i0:i1, j0:j1] |= hit
    return OccupancyGrid(origin=(xmin, ymin), resolution=resolution, cells=cells)


def inflate(grid: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Grow occupancy: cell occupied iff its center is within ``radius`` of a raw
    occupied cell center (exact Euclidean distance-transform semantics)."""
    if radius < 0:
        raise ValueError("inflation radius must be non-negative")
    if radius == 0 or not grid.cells.any():
        return OccupancyGrid(grid.origin, grid.resolution, grid.cells.copy(), radius)
    dist = distance_transform_edt(~grid.cells, sampling=grid.resolution)
    cells = dist <= radius + _EPS
    return OccupancyGrid(grid.origin, grid.resolution, cells, radius)


def _project(axis: np.ndarray, pts: np.ndarray) -> tuple[float, float]:
    proj = pts @ axis
    return float(proj.min()), float(proj.max())


def _convex_separated(pa: np.ndarray, pb: np.ndarray) -> bool:
    """Separating-axis test for two convex point sets given by CCW vertices."""
    for pts in (pa, pb):
        n = len(pts)
        for i in range(n):
            edge = pts[(i + 1) % n] - pts[i]
            norm = math.hypot(edge[0], edge[1])
            if norm < 1e-300:
                continue
            axis = np.array([-edge[1], edge[0]]) / norm
            a0, a1 = _project(axis, pa)
            b0, b1 = _project(axis, pb)
            if a1 < b0 - _EPS or b1 < a0 - _EPS:
                return True
    return False


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if v > _EPS:
            return 1
        if v < -_EPS:
            return -1
        return 0

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) - _EPS <= c[0] <= max(a[0], b[0]) + _EPS
            and min(a[1], b[1]) - _EPS <= c[1] <= max(a[1], b[1]) + _EPS
        )

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    if d1 != d2 and d3 != d4:
        return True
    if d1 == 0 and on_seg(p3, p4, p1):
        return True
    if d2 == 0 and on_seg(p3, p4, p2):
        return True
    if d3 == 0 and on_seg(p1, p2, p3):
        return True
    if d4 == 0 and on_seg(p1, p2, p4):
        return True
    return False


def rect_intersects_polygon(rect: OrientedRectangle, poly: PolygonObstacle) -> bool:
    """Exact closed-set intersection test (touching counts as intersecting).

    Convex obstacles use a separating-axis test plus containment; non-convex
    ones fall back to edge-crossing plus mutual containment, which is exact
    for simple polygons.
    """
    rect_pts = rect.corners()
    poly_pts = poly.vertices
    if poly.is_convex:
        return not _convex_separated(rect_pts, poly_pts)
    nr, npl = len(rect_pts), len(poly_pts)
    for i in range(nr):
        for j in range(npl):
            if _segments_intersect(
                rect_pts[i], rect_pts[(i + 1) % nr], poly_pts[j], poly_pts[(j + 1) % npl]
            ):
                return True
    if points_in_polygon(rect_pts[:1], poly)[0]:
        return True
    rect_poly = PolygonObstacle(rect_pts)
    return bool(points_in_polygon(poly_pts[:1], rect_poly)[0])


def dilate_obstacles(obstacles, margin: float):
    """Outward-offset each polygon by ``margin`` (rounded corners).

    Used when building grids so the rasterized map carries the user safety
    margin; the offset polygons slightly under-approximate the true Minkowski
    sum (chord error of the arc sampling), which keeps the result inside the
    exact dilation.
    """
    if margin < 0:
        raise ValueError("dilation margin must be non-negative")
    if margin == 0:
        return list(obstacles)
    from shapely.geometry import Polygon as ShapelyPolygon

    out = []
    for poly in obstacles:
        grown = ShapelyPolygon(poly.vertices).buffer(margin, quad_segs=16)
        out.append(PolygonObstacle(np.asarray(grown.exterior.coords)[:-1]))
    return out
