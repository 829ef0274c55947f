"""Rectangular grids over convex rings, node masks and scalar fields."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .domain import ConvexRing
from .errors import ArgError, DomainError, OutOfBounds


NODE_TOL = 1e-9


class NodeKind(IntEnum):
    INTERIOR = 0
    OUTER_BOUNDARY = 1
    INNER_BOUNDARY = 2
    EXTERIOR = 3


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid; ``counts`` are cells per axis, nodes are ``counts + 1``."""

    origin: np.ndarray
    spacing: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        for name in ("origin", "spacing"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=int))
        if self.dim not in (2, 3):
            raise ArgError("grid dimension must be 2 or 3")
        if np.any(self.spacing <= 0):
            raise ArgError("grid spacing must be positive")
        if np.any(self.counts < 8):
            raise ArgError("grid needs at least 8 cells per axis")

    @property
    def dim(self) -> int:
        return self.origin.size

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(c) + 1 for c in self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> float:
        return float(self.spacing.max())

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.spacing * self.counts

    def axes(self) -> list[np.ndarray]:
        return [self.origin[a] + self.spacing[a] * np.arange(self.shape[a]) for a in range(self.dim)]

    def node_points(self) -> np.ndarray:
        """All node coordinates, row-major (last axis fastest)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def point(self, index) -> np.ndarray:
        return self.origin + self.spacing * np.asarray(index, dtype=float)

    def same_as(self, other: "Grid") -> bool:
        return (
            np.array_equal(self.origin, other.origin)
            and np.array_equal(self.spacing, other.spacing)
            and np.array_equal(self.counts, other.counts)
        )


@dataclass(frozen=True, eq=False)
class Mask:
    """Per-node classification plus boundary foot points and inward normals."""

    grid: Grid
    ring: ConvexRing
    kind: np.ndarray
    boundary_nodes: np.ndarray = field(repr=False)
    foot: np.ndarray = field(repr=False)
    normal: np.ndarray = field(repr=False)
    boundary_value: np.ndarray = field(repr=False)

    @property
    def interior(self) -> np.ndarray:
        return self.kind == NodeKind.INTERIOR

    @property
    def exterior(self) -> np.ndarray:
        return self.kind == NodeKind.EXTERIOR

    def counts(self) -> dict[str, int]:
        return {k.name: int(np.count_nonzero(self.kind == k)) for k in NodeKind}


def build_mask(grid: Grid, ring: ConvexRing) -> Mask:
    if grid.dim != ring.dim:
        raise ArgError("grid and ring dimensions differ")
    pts = grid.node_points()
    outer_g = ring.outer.gauge(pts)
    inner_g = ring.inner.gauge(pts)
    # nodes within NODE_TOL (in gauge units) of a boundary are boundary nodes
    interior = ((outer_g < 1.0 - NODE_TOL) & (inner_g > 1.0 + NODE_TOL)).reshape(grid.shape)
    near = ndimage.binary_dilation(interior, structure=np.ones((3,) * grid.dim, dtype=bool))
    boundary = near & ~interior
    kind = np.full(grid.shape, NodeKind.EXTERIOR, dtype=np.int8)
    kind[interior] = NodeKind.INTERIOR
    is_outer = (outer_g >= 1.0 - NODE_TOL).reshape(grid.shape)
    kind[boundary & is_outer] = NodeKind.OUTER_BOUNDARY
    kind[boundary & ~is_outer] = NodeKind.INNER_BOUNDARY
    if not np.any(kind == NodeKind.OUTER_BOUNDARY) or not np.any(kind == NodeKind.INNER_BOUNDARY):
        raise DomainError("grid too coarse: a boundary component has no nodes")

    bidx = np.flatnonzero(boundary.ravel())
    bpts = pts[bidx]
    outer_sel = is_outer.ravel()[bidx]
    foot = np.empty_like(bpts)
    normal = np.empty_like(bpts)
    if outer_sel.any():
        f = ring.outer.foot_point(bpts[outer_sel])
        foot[outer_sel] = f
        normal[outer_sel] = -ring.outer.outward_normal(f)
    if (~outer_sel).any():
        f = ring.inner.foot_point(bpts[~outer_sel])
        foot[~outer_sel] = f
        normal[~outer_sel] = ring.inner.outward_normal(f)
    bval = np.where(outer_sel, 0.0, 1.0)
    for arr in (kind, bidx, foot, normal, bval):
        arr.flags.writeable = False
    return Mask(grid, ring, kind, bidx, foot, normal, bval)


def build_grid(ring: ConvexRing, resolution: int) -> tuple[Grid, Mask]:
    """Bounding-box grid of the outer body, padded by one spacing on each side."""
    if int(resolution) != resolution or resolution < 8:
        raise ArgError("resolution must be an integer >= 8")
    lo, hi = ring.outer.bounding_box()
    spacing = (hi - lo) / resolution
    grid = Grid(lo - spacing, spacing, np.full(ring.dim, int(resolution) + 2))
    margin = ring.inclusion_margin()
    if margin < 2.0 * grid.h:
        raise DomainError(f"inclusion margin {margin:.3g} is below 2h = {2 * grid.h:.3g}")
    return grid, build_mask(grid, ring)


def classify_points(mask: Mask, points, tol: float = 1e-12) -> np.ndarray:
    grid = mask.grid
    pts = np.asarray(points, dtype=float).reshape(-1, grid.dim)
    if np.any(pts < grid.origin - tol) or np.any(pts > grid.upper + tol):
        raise OutOfBounds("point outside the grid bounding box")
    og = mask.ring.outer.gauge(pts)
    ig = mask.ring.inner.gauge(pts)
    out = np.full(len(pts), NodeKind.EXTERIOR, dtype=np.int8)
    out[(og < 1.0) & (ig > 1.0)] = NodeKind.INTERIOR
    out[np.abs(ig - 1.0) <= tol] = NodeKind.INNER_BOUNDARY
    out[np.abs(og - 1.0) <= tol] = NodeKind.OUTER_BOUNDARY
    return out


def classify_point(mask: Mask, x) -> NodeKind:
    """Continuous-space classification against the analytic bodies."""
    return NodeKind(int(classify_points(mask, x)[0]))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Time-stamped nodal samples of u; Exterior nodes hold NaN."""

    grid: Grid
    mask: Mask
    values: np.ndarray
    time: float = 0.0
    # Optional exact boundary data for analytic test fields; default is 0 / 1.
    boundary_data: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(self.grid.shape)
        ext = self.mask.exterior
        vals[ext] = np.nan
        if not np.all(np.isfinite(vals[~ext])):
            raise ArgError("non-finite value at a non-exterior node")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def from_function(cls, grid: Grid, mask: Mask, func, time: float = 0.0) -> "ScalarField":
        """Sample ``func(points) -> values`` at every non-exterior node."""
        vals = np.full(grid.size, np.nan)
        keep = ~mask.exterior.ravel()
        vals[keep] = func(grid.node_points()[keep])
        return cls(grid, mask, vals.reshape(grid.shape), time, boundary_data=func)

    def with_values(self, values, time: float | None = None) -> "ScalarField":
        t = self.time if time is None else time
        return ScalarField(self.grid, self.mask, values, t, self.boundary_data)

    def foot_values(self) -> np.ndarray:
        """Dirichlet values at the boundary-node foot points."""
        if self.boundary_data is not None:
            return np.asarray(self.boundary_data(self.mask.foot), dtype=float)
        return np.asarray(self.mask.boundary_value, dtype=float)

    def interior_range(self) -> tuple[float, float]:
        v = self.values[self.mask.interior]
        return float(v.min()), float(v.max())
