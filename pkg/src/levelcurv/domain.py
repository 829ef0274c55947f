"""Convex bodies and convex rings.

Each body exposes its gauge (Minkowski functional about its center), support
function, boundary projection and boundary sampling.  A ring is the open
region between an outer body and the closure of an inner body.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ArgError, DomainError


def _as_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] != dim:
        raise ArgError(f"expected points of dimension {dim}, got shape {pts.shape}")
    return pts


def sphere_directions(count: int, dim: int) -> np.ndarray:
    """Deterministic, nearly uniform unit directions (circle or Fibonacci sphere)."""
    if dim == 2:
        ang = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


class ConvexBody:
    """Abstract convex body with a distinguished interior center."""

    kind: str = "body"
    dim: int
    center: np.ndarray

    def gauge(self, points) -> np.ndarray:
        raise NotImplementedError

    def gauge_gradient(self, points) -> np.ndarray:
        raise NotImplementedError

    def support(self, directions) -> np.ndarray:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError

    @property
    def corners(self) -> np.ndarray:
        return np.zeros((0, self.dim))

    def contains(self, points) -> np.ndarray:
        """Open-body membership."""
        return self.gauge(points) < 1.0

    def radial_foot(self, points) -> np.ndarray:
        pts = _as_points(points, self.dim)
        g = self.gauge(pts)
        g = np.where(g > 0, g, 1.0)
        return self.center + (pts - self.center) / g[:, None]

    def foot_point(self, points) -> np.ndarray:
        """A point of the boundary near each query point."""
        return self.radial_foot(points)

    def outward_normal(self, boundary_points) -> np.ndarray:
        g = self.gauge_gradient(boundary_points)
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def boundary_samples(self, count: int) -> np.ndarray:
        return self.radial_foot(self.center + sphere_directions(count, self.dim))

    def distance_to_boundary(self, points) -> np.ndarray:
        """Unsigned distance to the boundary (dense-sample approximation)."""
        pts = _as_points(points, self.dim)
        count = 4096 if self.dim == 2 else 40000
        tree = cKDTree(self.boundary_samples(count))
        d, _ = tree.query(pts)
        return d


class Ball(ConvexBody):
    kind = "ball"

    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.dim = self.center.size
        self.radius = float(radius)
        if self.dim not in (2, 3):
            raise DomainError("balls must be 2D or 3D")
        if not self.radius > 0:
            raise DomainError("ball radius must be positive")

    def gauge(self, points):
        pts = _as_points(points, self.dim)
        return np.linalg.norm(pts - self.center, axis=1) / self.radius

    def gauge_gradient(self, points):
        pts = _as_points(points, self.dim)
        d = pts - self.center
        r = np.linalg.norm(d, axis=1, keepdims=True)
        return d / (self.radius * np.where(r > 0, r, 1.0))

    def support(self, directions):
        xi = _as_points(directions, self.dim)
        return xi @ self.center + self.radius * np.linalg.norm(xi, axis=1)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def distance_to_boundary(self, points):
        pts = _as_points(points, self.dim)
        return np.abs(np.linalg.norm(pts - self.center, axis=1) - self.radius)

    def describe(self):
        nums = [*self.center, self.radius]
        return "ball " + " ".join(f"{v:.17g}" for v in nums)


class Ellipsoid(ConvexBody):
    """Axis-aligned ellipse (2D) or ellipsoid (3D)."""

    def __init__(self, center, semi_axes):
        self.center = np.asarray(center, dtype=float)
        self.semi_axes = np.asarray(semi_axes, dtype=float)
        self.dim = self.center.size
        if self.dim not in (2, 3) or self.semi_axes.shape != self.center.shape:
            raise DomainError("ellipsoid needs matching center and semi-axes in 2D or 3D")
        if not np.all(self.semi_axes > 0):
            raise DomainError("semi-axes must be positive")
        self.kind = "ellipse" if self.dim == 2 else "ellipsoid"

    def gauge(self, points):
        pts = _as_points(points, self.dim)
        return np.linalg.norm((pts - self.center) / self.semi_axes, axis=1)

    def gauge_gradient(self, points):
        pts = _as_points(points, self.dim)
        q = (pts - self.center) / self.semi_axes
        g = np.linalg.norm(q, axis=1, keepdims=True)
        return q / self.semi_axes / np.where(g > 0, g, 1.0)

    def support(self, directions):
        xi = _as_points(directions, self.dim)
        return xi @ self.center + np.linalg.norm(xi * self.semi_axes, axis=1)

    def bounding_box(self):
        return self.center - self.semi_axes, self.center + self.semi_axes

    def describe(self):
        nums = [*self.center, *self.semi_axes]
        return f"{self.kind} " + " ".join(f"{v:.17g}" for v in nums)


class Polygon(ConvexBody):
    """Convex polygon with counterclockwise vertices."""

    kind = "polygon"

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise DomainError("polygon needs at least three 2D vertices")
        edges = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(edges, axis=1)
        if lengths.sum() <= 0 or np.any(lengths == 0):
            raise DomainError("polygon has repeated vertices or zero perimeter")
        nxt = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        if np.any(cross < 0) or not np.any(cross > 0):
            raise DomainError("polygon vertices must be convex and counterclockwise")
        self.vertices = v
        self.dim = 2
        self.center = v.mean(axis=0)
        self._normals = np.column_stack([edges[:, 1], -edges[:, 0]]) / lengths[:, None]
        self._offsets = np.einsum("ij,ij->i", v - self.center, self._normals)
        if np.any(self._offsets <= 0):
            raise DomainError("degenerate polygon")

    @property
    def corners(self):
        return self.vertices

    def _edge_values(self, pts):
        return ((pts - self.center) @ self._normals.T) / self._offsets

    def gauge(self, points):
        pts = _as_points(points, 2)
        return self._edge_values(pts).max(axis=1)

    def gauge_gradient(self, points):
        pts = _as_points(points, 2)
        k = self._edge_values(pts).argmax(axis=1)
        return self._normals[k] / self._offsets[k, None]

    def support(self, directions):
        xi = _as_points(directions, 2)
        return (xi @ self.vertices.T).max(axis=1)

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def _closest_on_edges(self, pts):
        a = self.vertices
        e = np.roll(a, -1, axis=0) - a
        rel = pts[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pek,ek->pe", rel, e) / np.einsum("ek,ek->e", e, e), 0.0, 1.0)
        cand = a[None] + t[..., None] * e[None]
        d = np.linalg.norm(pts[:, None, :] - cand, axis=2)
        k = d.argmin(axis=1)
        idx = np.arange(len(pts))
        return cand[idx, k], d[idx, k]

    def foot_point(self, points):
        pts = _as_points(points, 2)
        return self._closest_on_edges(pts)[0]

    def distance_to_boundary(self, points):
        pts = _as_points(points, 2)
        return self._closest_on_edges(pts)[1]

    def boundary_samples(self, count):
        e = np.roll(self.vertices, -1, axis=0) - self.vertices
        lengths = np.linalg.norm(e, axis=1)
        s = (np.arange(count) + 0.5) / count * lengths.sum()
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(e) - 1)
        t = (s - cum[k]) / lengths[k]
        return self.vertices[k] + t[:, None] * e[k]

    def describe(self):
        return "polygon " + " ".join(f"{v:.17g}" for v in self.vertices.ravel())


def parse_body(text: str) -> ConvexBody:
    """Parse ``"ball cx cy r"``, ``"ellipse cx cy a b"``, ``"polygon x1 y1 ..."`` etc."""
    tokens = text.replace(",", " ").split()
    if not tokens:
        raise ArgError("empty body description")
    kind, rest = tokens[0].lower(), tokens[1:]
    try:
        nums = [float(t) for t in rest]
    except ValueError as exc:
        raise ArgError(f"non-numeric body parameter in {text!r}") from exc
    if kind == "ball":
        if len(nums) not in (3, 4):
            raise ArgError("ball expects center coordinates and a radius")
        return Ball(nums[:-1], nums[-1])
    if kind == "ellipse":
        if len(nums) != 4:
            raise ArgError("ellipse expects cx cy a b")
        return Ellipsoid(nums[:2], nums[2:])
    if kind == "ellipsoid":
        if len(nums) != 6:
            raise ArgError("ellipsoid expects cx cy cz a b c")
        return Ellipsoid(nums[:3], nums[3:])
    if kind == "polygon":
        if len(nums) < 6 or len(nums) % 2:
            raise ArgError("polygon expects at least three x y pairs")
        return Polygon(np.reshape(nums, (-1, 2)))
    raise ArgError(f"unknown body kind {kind!r}")


@dataclass(frozen=True)
class ConvexRing:
    """Open region ``outer \\ closure(inner)``."""

    outer: ConvexBody
    inner: ConvexBody

    def __post_init__(self):
        if self.outer.dim != self.inner.dim:
            raise DomainError("outer and inner bodies have different dimensions")
        if self.inclusion_margin() <= 0:
            raise DomainError("inner body is not strictly inside the outer body")

    @property
    def dim(self) -> int:
        return self.outer.dim

    def inclusion_margin(self, count: int | None = None) -> float:
        """Sampled minimum distance from the inner boundary to the outer boundary."""
        if count is None:
            count = 2048 if self.dim == 2 else 6000
        pts = self.inner.boundary_samples(count)
        if np.any(self.outer.gauge(pts) >= 1.0):
            return -1.0
        return float(self.outer.distance_to_boundary(pts).min())

    def inside(self, points) -> np.ndarray:
        """Open-ring membership."""
        return (self.outer.gauge(points) < 1.0) & (self.inner.gauge(points) > 1.0)

    @property
    def corners(self) -> np.ndarray:
        return np.vstack([self.outer.corners, self.inner.corners])

    def is_concentric_balls(self) -> bool:
        return (
            isinstance(self.outer, Ball)
            and isinstance(self.inner, Ball)
            and np.allclose(self.outer.center, self.inner.center, rtol=0, atol=1e-14)
        )

    def describe(self) -> dict:
        return {"outer": self.outer.describe(), "inner": self.inner.describe()}
