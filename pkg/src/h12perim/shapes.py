"""Exact geometric sets with perimeter, normals and rasterization.

All variants are immutable.  Rasterization uses pixel centres: a pixel
belongs to the set iff its centre does (half-open on the right for
intervals and boxes so that dyadic sets tile exactly).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from .field import Grid, SampledField, read_raw, write_raw

__all__ = [
    "Intervals",
    "Ball",
    "Box",
    "Polygon",
    "SineProfile",
    "Subgraph",
    "Bitmap",
    "PerimeterEstimate",
    "BoundaryElement",
    "perimeter",
    "measure",
    "rasterize",
    "boundary_normals",
    "cartesian_square",
    "shape_to_dict",
    "shape_from_dict",
    "load_shape",
    "save_shape",
]


def _frozen_array(a, shape_tail=None) -> np.ndarray:
    a = np.array(a, dtype=float)
    if shape_tail is not None:
        a = a.reshape((-1,) + shape_tail)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Intervals:
    """Finite union of disjoint intervals ``[a, b)`` on the circle ``[0, L)``."""

    intervals: np.ndarray

    def __post_init__(self):
        iv = _frozen_array(self.intervals, (2,)) if np.size(self.intervals) else np.zeros((0, 2))
        if np.any(iv[:, 1] <= iv[:, 0]):
            raise ValueError("each interval needs a < b")
        if np.any(iv[1:, 0] <= iv[:-1, 1]):
            raise ValueError("intervals must be sorted and disjoint (and not touching)")
        iv.setflags(write=False)
        object.__setattr__(self, "intervals", iv)

    dimension = 1

    def bounds(self):
        if len(self.intervals) == 0:
            return None
        return (self.intervals[0, 0],), (self.intervals[-1, 1],)


@dataclass(frozen=True, eq=False)
class Ball:
    center: tuple
    radius: float

    dimension = 2

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def bounds(self):
        c, r = np.array(self.center), self.radius
        return tuple(c - r), tuple(c + r)


@dataclass(frozen=True, eq=False)
class Box:
    corner: tuple
    widths: tuple

    dimension = 2

    def __post_init__(self):
        if len(self.corner) != 2 or len(self.widths) != 2 or min(self.widths) <= 0:
            raise ValueError("a box needs a 2-D corner and two positive widths")
        object.__setattr__(self, "corner", tuple(float(c) for c in self.corner))
        object.__setattr__(self, "widths", tuple(float(w) for w in self.widths))

    def bounds(self):
        lo = np.array(self.corner)
        return tuple(lo), tuple(lo + np.array(self.widths))

    def as_polygon(self) -> "Polygon":
        (x0, y0), (w, h) = self.corner, self.widths
        return Polygon([(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)])


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _segments_cross(p, q, r, s) -> bool:
    d1 = _cross(q - p, r - p)
    d2 = _cross(q - p, s - p)
    d3 = _cross(s - r, p - r)
    d4 = _cross(s - r, q - r)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple polygon with counterclockwise vertices."""

    vertices: np.ndarray

    dimension = 2

    def __post_init__(self):
        v = _frozen_array(self.vertices, (2,))
        if len(v) < 3:
            raise ValueError("a polygon needs at least 3 vertices")
        x, y = v[:, 0], v[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if area <= 0:
            raise ValueError("polygon vertices must be counterclockwise")
        n = len(v)
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise ValueError("polygon is not simple")
        object.__setattr__(self, "vertices", v)

    def bounds(self):
        return tuple(self.vertices.min(axis=0)), tuple(self.vertices.max(axis=0))

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class SineProfile:
    """Graph profile ``g(x) = amplitude * sin(2 pi k x / period)``."""

    amplitude: float
    wavenumber: int = 1
    period: float = 1.0

    def value(self, x):
        return self.amplitude * np.sin(2 * np.pi * self.wavenumber * np.asarray(x) / self.period)

    def slope(self, x):
        w = 2 * np.pi * self.wavenumber / self.period
        return self.amplitude * w * np.cos(w * np.asarray(x))

    @property
    def sup_norm(self) -> float:
        return abs(self.amplitude)

    @property
    def slope_sup_norm(self) -> float:
        return abs(self.amplitude) * 2 * np.pi * self.wavenumber / self.period


def _rotation_to(nu0) -> np.ndarray:
    """Rotation taking ``(0, 1)`` to ``nu0``."""
    nx, ny = nu0
    return np.array([[ny, nx], [-nx, ny]])


@dataclass(frozen=True, eq=False)
class Subgraph:
    """Region below the graph ``s = level + g(t)`` in a frame with normal ``nu0``.

    The tangential coordinate ``t`` runs over ``[0, period)`` of the
    profile, so the graph is periodic.  ``depth`` sets the thickness of the
    band used for rasterization; its flat lower edge is not part of the
    interface described by :func:`boundary_normals`.
    """

    profile: SineProfile
    level: float
    nu0: tuple = (0.0, 1.0)
    depth: float | None = None

    dimension = 2

    def __post_init__(self):
        nu = np.asarray(self.nu0, dtype=float)
        if nu.shape != (2,) or abs(np.linalg.norm(nu) - 1) > 1e-12:
            raise ValueError("nu0 must be a 2-D unit vector")
        object.__setattr__(self, "nu0", tuple(nu))

    @property
    def window(self) -> float:
        return self.profile.period

    def bounds(self):
        if self.nu0 != (0.0, 1.0):
            return None
        depth = self.depth if self.depth is not None else self.level
        a = self.profile.sup_norm
        return (0.0, self.level - depth), (self.profile.period, self.level + a)


@dataclass(frozen=True, eq=False)
class Bitmap:
    """Binary raster; only estimates are available for its perimeter."""

    field: SampledField

    def __post_init__(self):
        s = self.field.samples
        if not np.all((s == 0) | (s == 1)):
            raise ValueError("bitmap values must be 0 or 1")

    @property
    def dimension(self) -> int:
        return self.field.grid.dimension

    def bounds(self):
        return None


ShapeSet = Union[Intervals, Ball, Box, Polygon, Subgraph, Bitmap]


class PerimeterEstimate(NamedTuple):
    value: float
    estimate: bool


class BoundaryElement(NamedTuple):
    weight: float
    normal: tuple


def perimeter(shape: ShapeSet):
    """Exact perimeter; for bitmaps an edge-count estimate flagged as such."""
    if isinstance(shape, Intervals):
        return 2.0 * len(shape.intervals)
    if isinstance(shape, Ball):
        return 2.0 * np.pi * shape.radius
    if isinstance(shape, Box):
        return 2.0 * sum(shape.widths)
    if isinstance(shape, Polygon):
        v = shape.vertices
        return float(np.sum(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)))
    if isinstance(shape, Subgraph):
        w = sum(b.weight for b in boundary_normals(shape))
        return float(w)
    if isinstance(shape, Bitmap):
        s = shape.field.samples
        h = shape.field.grid.spacing
        edges = sum(np.count_nonzero(s != np.roll(s, 1, axis=a)) for a in range(s.ndim))
        scale = 1.0 if s.ndim == 1 else h
        return PerimeterEstimate(float(edges * scale), True)
    raise TypeError(f"unsupported shape {type(shape).__name__}")


def measure(shape: ShapeSet) -> float:
    if isinstance(shape, Intervals):
        iv = shape.intervals
        return float(np.sum(iv[:, 1] - iv[:, 0])) if len(iv) else 0.0
    if isinstance(shape, Ball):
        return float(np.pi * shape.radius**2)
    if isinstance(shape, Box):
        return float(np.prod(shape.widths))
    if isinstance(shape, Polygon):
        return shape.area
    if isinstance(shape, Subgraph):
        depth = shape.depth if shape.depth is not None else shape.level
        # the sine profile has zero mean over its period
        return float(depth * shape.profile.period)
    if isinstance(shape, Bitmap):
        g = shape.field.grid
        return float(shape.field.samples.sum() * g.spacing**g.dimension)
    raise TypeError(f"unsupported shape {type(shape).__name__}")


def _check_fits(shape, grid: Grid, margin: float) -> None:
    if shape.dimension != grid.dimension:
        raise ValueError(f"{shape.dimension}-D shape on a {grid.dimension}-D grid")
    b = shape.bounds()
    if b is None:
        return
    lo, hi = np.array(b[0]), np.array(b[1])
    if np.any(lo < margin - 1e-12) or np.any(hi > grid.period - margin + 1e-12):
        raise ValueError(f"shape with bounds {tuple(lo)}..{tuple(hi)} does not fit in [{margin}, L - {margin}]")


def _interval_mask(x: np.ndarray, intervals: np.ndarray) -> np.ndarray:
    """Membership of sorted points ``x`` in a union of half-open intervals."""
    if len(intervals) == 0:
        return np.zeros(x.shape, bool)
    start = np.searchsorted(x, intervals[:, 0], side="left")
    stop = np.searchsorted(x, intervals[:, 1], side="left")
    marks = np.zeros(x.size + 1, dtype=np.int64)
    np.add.at(marks, start, 1)
    np.add.at(marks, stop, -1)
    return np.cumsum(marks[:-1]) > 0


def _polygon_mask(vertices: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    inside = np.zeros(np.broadcast_shapes(X.shape, Y.shape), bool)
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if y1 == y2:
            continue
        rows = (Y >= min(y1, y2)) & (Y < max(y1, y2))
        xcross = x1 + (Y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= rows & (X < xcross)
    return inside


def rasterize(shape: ShapeSet, grid: Grid, margin: float = 0.0) -> SampledField:
    """Pixel-centre indicator of ``shape`` on ``grid``."""
    if isinstance(shape, Bitmap):
        if shape.field.grid != grid:
            raise ValueError("bitmap lives on a different grid")
        return shape.field
    _check_fits(shape, grid, margin)
    x = grid.coordinates(centered=True)
    if isinstance(shape, Intervals):
        return SampledField(grid, _interval_mask(x, shape.intervals).astype(float))
    X, Y = x[:, None], x[None, :]
    if isinstance(shape, Ball):
        cx, cy = shape.center
        mask = (X - cx) ** 2 + (Y - cy) ** 2 <= shape.radius**2
    elif isinstance(shape, Box):
        mx = _interval_mask(x, np.array([[shape.corner[0], shape.corner[0] + shape.widths[0]]]))
        my = _interval_mask(x, np.array([[shape.corner[1], shape.corner[1] + shape.widths[1]]]))
        mask = mx[:, None] & my[None, :]
    elif isinstance(shape, Polygon):
        mask = _polygon_mask(shape.vertices, X, Y)
    elif isinstance(shape, Subgraph):
        if shape.nu0 != (0.0, 1.0):
            raise NotImplementedError("subgraphs are rasterized only for nu0 = (0, 1)")
        depth = shape.depth if shape.depth is not None else shape.level
        mask = (Y <= shape.level + shape.profile.value(X)) & (Y >= shape.level - depth)
    else:
        raise TypeError(f"unsupported shape {type(shape).__name__}")
    return SampledField(grid, np.broadcast_to(mask, grid.shape).astype(float))


def boundary_normals(shape: ShapeSet, h: float | None = None, nodes: int | None = None) -> list[BoundaryElement]:
    """Boundary elements ``(weight, outward unit normal)``.

    Balls use a uniform-angle rule with ``max(64, ceil(2 pi R / h))``
    nodes (``h`` defaults to ``R / 64``); subgraphs use the midpoint rule
    in the tangential variable.
    """
    if isinstance(shape, Box):
        shape = shape.as_polygon()
    if isinstance(shape, Polygon):
        v = shape.vertices
        e = np.roll(v, -1, axis=0) - v
        length = np.linalg.norm(e, axis=1)
        # outward normal of a counterclockwise edge is the tangent turned clockwise
        normals = np.stack([e[:, 1], -e[:, 0]], axis=1) / length[:, None]
        return [BoundaryElement(float(w), tuple(n)) for w, n in zip(length, normals)]
    if isinstance(shape, Ball):
        R = shape.radius
        h = R / 64 if h is None else h
        m = nodes or max(64, int(np.ceil(2 * np.pi * R / h)))
        theta = 2 * np.pi * (np.arange(m) + 0.5) / m
        w = 2 * np.pi * R / m
        return [BoundaryElement(w, (float(np.cos(t)), float(np.sin(t)))) for t in theta]
    if isinstance(shape, Subgraph):
        p = shape.profile
        rot = _rotation_to(shape.nu0)
        if p.amplitude == 0:
            return [BoundaryElement(p.period, tuple(shape.nu0))]
        m = nodes or 256
        t = p.period * (np.arange(m) + 0.5) / m
        g1 = p.slope(t)
        jac = np.sqrt(1 + g1**2)
        local = np.stack([-g1, np.ones_like(g1)], axis=1) / jac[:, None]
        normals = local @ rot.T
        w = jac * p.period / m
        return [BoundaryElement(float(a), tuple(n)) for a, n in zip(w, normals)]
    raise NotImplementedError(f"boundary normals are not available for {type(shape).__name__}")


def cartesian_square(shape: Intervals, grid: Grid) -> SampledField:
    """Raster of ``E x E`` on a 2-D grid, as the outer product of 1-D rasters."""
    if not isinstance(shape, Intervals):
        raise TypeError("cartesian_square needs a 1-D Intervals shape")
    if grid.dimension != 2:
        raise ValueError("cartesian_square needs a 2-D grid")
    line = Grid(1, grid.period, grid.resolution)
    u = rasterize(shape, line).samples
    return SampledField(grid, np.outer(u, u))


def shape_to_dict(shape: ShapeSet, bitmap_path: str | None = None) -> dict:
    if isinstance(shape, Intervals):
        return {"variant": "Intervals", "intervals": shape.intervals.tolist()}
    if isinstance(shape, Ball):
        return {"variant": "Ball", "center": list(shape.center), "radius": shape.radius}
    if isinstance(shape, Box):
        return {"variant": "Box", "corner": list(shape.corner), "widths": list(shape.widths)}
    if isinstance(shape, Polygon):
        return {"variant": "Polygon", "vertices": shape.vertices.tolist()}
    if isinstance(shape, Subgraph):
        p = shape.profile
        return {
            "variant": "Subgraph",
            "amplitude": p.amplitude,
            "wavenumber": p.wavenumber,
            "period": p.period,
            "level": shape.level,
            "nu0": list(shape.nu0),
            "depth": shape.depth,
        }
    if isinstance(shape, Bitmap):
        if bitmap_path is None:
            raise ValueError("bitmaps are stored by reference to a raw field file")
        write_raw(bitmap_path, shape.field)
        return {"variant": "Bitmap", "file": str(bitmap_path)}
    raise TypeError(f"unsupported shape {type(shape).__name__}")


def shape_from_dict(d: dict, base: Path | None = None) -> ShapeSet:
    v = d.get("variant")
    if v == "Intervals":
        return Intervals(np.asarray(d["intervals"], dtype=float).reshape(-1, 2))
    if v == "Ball":
        return Ball(tuple(d["center"]), float(d["radius"]))
    if v == "Box":
        return Box(tuple(d["corner"]), tuple(d["widths"]))
    if v == "Polygon":
        return Polygon(d["vertices"])
    if v == "Subgraph":
        prof = SineProfile(d["amplitude"], int(d.get("wavenumber", 1)), float(d.get("period", 1.0)))
        return Subgraph(prof, float(d["level"]), tuple(d.get("nu0", (0.0, 1.0))), d.get("depth"))
    if v == "Bitmap":
        path = Path(d["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        return Bitmap(read_raw(path))
    raise ValueError(f"unknown shape variant {v!r}")


def save_shape(path: str | Path, shape: ShapeSet, bitmap_path: str | None = None) -> None:
    Path(path).write_text(json.dumps(shape_to_dict(shape, bitmap_path), indent=2) + "\n", encoding="utf-8")


def load_shape(path: str | Path) -> ShapeSet:
    path = Path(path)
    return shape_from_dict(json.loads(path.read_text(encoding="utf-8")), base=path.parent)
