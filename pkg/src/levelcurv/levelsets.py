"""Level-set extraction and per-sample curvature annotation."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgError, LevelError
from .geometry import DEFAULT_GRADIENT_FLOOR, WeingartenTensor, weingarten_batch
from .grid import NodeKind, ScalarField
from .jets import jets_at_points
from .stencil import stencil_for

DEFAULT_CORNER_EXCLUSION = 3.0
MERGE_TOL = 0.1


@dataclass(frozen=True)
class LevelSample:
    location: np.ndarray
    level: float
    normal: np.ndarray
    weingarten: WeingartenTensor
    h: np.ndarray
    b: np.ndarray
    gradient_norm: float


@dataclass(eq=False)
class LevelCurve:
    """Samples of one level set ``{u = c}`` with their curvature data.

    In 2D ``polylines`` hold the oriented contour components ({u >= c} on
    the left); in 3D the samples are an unstructured cloud of edge crossings.
    Per-sample arrays are aligned with ``points``; ``valid`` marks samples
    that were annotated (not skipped).
    """

    level: float
    time: float
    spacing: float
    points: np.ndarray
    valid: np.ndarray
    normals: np.ndarray
    weingarten: np.ndarray
    curvatures: np.ndarray
    grad_norm: np.ndarray
    polylines: list[np.ndarray] = field(default_factory=list)
    closed: list[bool] = field(default_factory=list)
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def kappa_min(self) -> np.ndarray:
        """Smallest principal curvature at each valid sample."""
        return self.curvatures[self.valid, 0]

    def samples(self) -> list[LevelSample]:
        out = []
        for k in np.flatnonzero(self.valid):
            a = self.weingarten[k]
            gn = self.grad_norm[k]
            # adapted frame: h = u_n^2 u_ij = -u_n^3 a, b = a
            out.append(
                LevelSample(
                    self.points[k], self.level, self.normals[k],
                    WeingartenTensor(a, self.curvatures[k]), -gn**3 * a, a.copy(), gn,
                )
            )
        return out

    def to_csv(self) -> str:
        n = self.dim
        axes = "xyz"[:n]
        head = ["c", *axes, *(f"n{a}" for a in axes), *(f"kappa_{k + 1}" for k in range(n - 1)), "grad_norm"]
        buf = io.StringIO()
        buf.write(", ".join(head) + "\n")
        for k in np.flatnonzero(self.valid):
            row = [self.level, *self.points[k], *self.normals[k], *self.curvatures[k], self.grad_norm[k]]
            buf.write(", ".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()


def contour_values(field: ScalarField) -> np.ndarray:
    """Interior values plus extrapolated ghosts at boundary nodes; NaN elsewhere."""
    st = stencil_for(field.mask)
    grid = field.grid
    vals = np.full(grid.size, np.nan)
    vals[st.nodes] = field.values.ravel()[st.nodes]
    gv = st.crossing_values(field)
    ext = st.extended(field.values, gv)
    acc = np.zeros(grid.size)
    cnt = np.zeros(grid.size)
    idx = np.stack(np.unravel_index(st.nodes, grid.shape), axis=1)
    for line in st.lines[: grid.dim]:
        for sign, near, far, near_t, far_t in (
            (1, line.right, line.left, line.right_target, line.left_target),
            (-1, line.left, line.right, line.left_target, line.right_target),
        ):
            cut = near_t >= st.n_nodes
            if not cut.any():
                continue
            g = gv[near_t[cut] - st.n_nodes]
            f_far = ext[far_t[cut]]
            r, l = near[cut], far[cut]
            ghost = g + (g - f_far) * (1.0 - r) / (r + l)
            nb = np.ravel_multi_index((idx[cut] + sign * line.offset).T, grid.shape)
            np.add.at(acc, nb, ghost)
            np.add.at(cnt, nb, 1.0)
    bnd = cnt > 0
    vals[bnd] = acc[bnd] / cnt[bnd]
    # boundary nodes without an Interior axis neighbor take their Dirichlet value
    lone = cnt[field.mask.boundary_nodes] == 0
    vals[field.mask.boundary_nodes[lone]] = field.foot_values()[lone]
    return vals.reshape(grid.shape)


def marching_squares(values: np.ndarray, level: float, origin, spacing, merge_tol: float = MERGE_TOL):
    """Oriented contour polylines of a 2D nodal array; NaN cells are skipped.

    Returns ``(polylines, closed)``.  Saddle cells are resolved by the cell
    average: an average at or above the level joins the high corners.
    """
    v = np.asarray(values, dtype=float)
    nx, ny = v.shape
    origin = np.asarray(origin, dtype=float)
    spacing = np.asarray(spacing, dtype=float)
    n_h = (nx - 1) * ny

    def hid(i, j):
        return i * ny + j

    def vid(i, j):
        return n_h + i * (ny - 1) + j

    c0, c1, c2, c3 = v[:-1, :-1], v[1:, :-1], v[1:, 1:], v[:-1, 1:]
    corners = np.stack([c0, c1, c2, c3], axis=-1)
    finite = np.all(np.isfinite(corners), axis=-1)
    high = corners >= level
    ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    edge_ids = np.stack([hid(ii, jj), vid(ii + 1, jj), hid(ii, jj + 1), vid(ii, jj)], axis=-1)
    starts_mask = high & ~np.roll(high, -1, axis=-1) & finite[..., None]
    n_start = starts_mask.sum(axis=-1)
    avg_high = corners.mean(axis=-1) >= level

    src, dst = [], []
    for k in range(4):
        sel = starts_mask[..., k]
        two = sel & (n_start == 1)
        if two.any():
            ends = (~high & np.roll(high, -1, axis=-1))[two]
            src.append(edge_ids[..., k][two])
            dst.append(edge_ids[two][np.arange(ends.shape[0]), ends.argmax(axis=1)])
        four = sel & (n_start == 2)
        if four.any():
            step = np.where(avg_high[four], 1, -1)
            src.append(edge_ids[..., k][four])
            dst.append(edge_ids[four][np.arange(step.size), (k + step) % 4])
    if not src:
        return [], []
    src = np.concatenate(src)
    dst = np.concatenate(dst)

    n_edges = n_h + nx * (ny - 1)
    nxt = np.full(n_edges, -1)
    prv = np.full(n_edges, -1)
    nxt[src] = dst
    prv[dst] = src

    def edge_point(e):
        if e < n_h:
            i, j = divmod(e, ny)
            a, b = (i, j), (i + 1, j)
        else:
            i, j = divmod(e - n_h, ny - 1)
            a, b = (i, j), (i, j + 1)
        va, vb = v[a], v[b]
        t = (level - va) / (vb - va)
        pa = origin + spacing * np.array(a)
        pb = origin + spacing * np.array(b)
        return pa + t * (pb - pa)

    used = np.zeros(n_edges, dtype=bool)
    chains = []
    open_starts = [e for e in src if prv[e] == -1]
    for e0 in sorted(open_starts) + sorted(src.tolist()):
        if used[e0]:
            continue
        chain = [e0]
        used[e0] = True
        e = nxt[e0]
        closed = False
        while e != -1:
            if e == e0:
                closed = True
                break
            if used[e]:
                break
            chain.append(e)
            used[e] = True
            e = nxt[e]
        chains.append((chain, closed))

    tol = merge_tol * float(spacing.max())
    polylines, flags = [], []
    for chain, closed in chains:
        pts = [edge_point(e) for e in chain]
        kept = [pts[0]]
        for p in pts[1:]:
            if np.linalg.norm(p - kept[-1]) > tol:
                kept.append(p)
        if closed and len(kept) > 1 and np.linalg.norm(kept[-1] - kept[0]) <= tol:
            kept.pop()
        polylines.append(np.array(kept))
        flags.append(closed)
    return polylines, flags


def edge_crossings(values: np.ndarray, level: float, origin, spacing) -> np.ndarray:
    """All grid-edge crossings of ``level`` (any dimension), as a point cloud."""
    v = np.asarray(values, dtype=float)
    origin = np.asarray(origin, dtype=float)
    spacing = np.asarray(spacing, dtype=float)
    out = []
    for a in range(v.ndim):
        lo = np.take(v, np.arange(v.shape[a] - 1), axis=a)
        hi = np.take(v, np.arange(1, v.shape[a]), axis=a)
        with np.errstate(invalid="ignore"):
            hit = np.isfinite(lo) & np.isfinite(hi) & ((lo >= level) != (hi >= level))
        idx = np.argwhere(hit)
        t = (level - lo[hit]) / (hi[hit] - lo[hit])
        pts = origin + spacing * idx
        pts[:, a] += t * spacing[a]
        out.append(pts)
    return np.vstack(out)


def gradient_floor_for(field: ScalarField, rel_floor: float = DEFAULT_GRADIENT_FLOOR) -> float:
    lo, hi = field.interior_range()
    extent = float(np.max(field.grid.upper - field.grid.origin))
    return rel_floor * max(hi - lo, 1e-300) / extent


def annotate(field: ScalarField, points: np.ndarray, corner_exclusion: float = DEFAULT_CORNER_EXCLUSION,
             gradient_floor: float = DEFAULT_GRADIENT_FLOOR):
    """Jets and Weingarten data at sample points, skipping unusable ones."""
    n = field.grid.dim
    npts = len(points)
    skipped = {"corner": 0, "critical": 0, "stencil": 0}
    keep = np.ones(npts, dtype=bool)
    corners = field.mask.ring.corners
    if len(corners) and npts:
        d = np.linalg.norm(points[:, None, :] - corners[None], axis=2).min(axis=1)
        near = d < corner_exclusion * field.grid.h
        skipped["corner"] = int(near.sum())
        keep &= ~near
    normals = np.full((npts, n), np.nan)
    amat = np.full((npts, n - 1, n - 1), np.nan)
    curv = np.full((npts, n - 1), np.nan)
    gnorm = np.full(npts, np.nan)
    idx = np.flatnonzero(keep)
    ok, _, grads, hess = jets_at_points(field, points[idx])
    skipped["stencil"] = int((~ok).sum())
    idx, grads, hess = idx[ok], grads[ok], hess[ok]
    floor = gradient_floor_for(field, gradient_floor)
    good, nrm, a, c = weingarten_batch(grads, hess, floor)
    skipped["critical"] = int((~good).sum())
    idx = idx[good]
    normals[idx], amat[idx], curv[idx] = nrm[good], a[good], c[good]
    gnorm[idx] = np.linalg.norm(grads[good], axis=1)
    valid = np.zeros(npts, dtype=bool)
    valid[idx] = True
    return valid, normals, amat, curv, gnorm, skipped


def extract_level_set(field: ScalarField, c: float, corner_exclusion: float = DEFAULT_CORNER_EXCLUSION,
                      gradient_floor: float = DEFAULT_GRADIENT_FLOOR) -> LevelCurve:
    lo, hi = field.interior_range()
    if not lo < c < hi:
        raise LevelError(f"level {c} outside the interior range ({lo:.6g}, {hi:.6g})")
    grid = field.grid
    vals = contour_values(field)
    polylines, closed = [], []
    if grid.dim == 2:
        polylines, closed = marching_squares(vals, c, grid.origin, grid.spacing)
        pts = np.vstack(polylines) if polylines else np.zeros((0, 2))
    else:
        pts = edge_crossings(vals, c, grid.origin, grid.spacing)
    if len(pts) == 0:
        raise LevelError(f"level {c} has an empty contour")
    valid, normals, a, curv, gnorm, skipped = annotate(field, pts, corner_exclusion, gradient_floor)
    return LevelCurve(c, field.time, grid.h, pts, valid, normals, a, curv, gnorm, polylines, closed, skipped)


def turn_cross_products(polyline: np.ndarray) -> np.ndarray:
    p = np.asarray(polyline, dtype=float)
    e = np.roll(p, -1, axis=0) - p
    e = e / np.linalg.norm(e, axis=1, keepdims=True)
    prev = np.roll(e, 1, axis=0)
    return prev[:, 0] * e[:, 1] - prev[:, 1] * e[:, 0]


def convexity_defect(curve, h: float | None = None, closed: bool = True) -> float:
    """Largest reflex turn ``max(0, -z_i) / h`` over the vertices of closed polylines.

    ``curve`` is a :class:`LevelCurve` or an (K, 2) array of vertices.
    """
    if isinstance(curve, LevelCurve):
        if not curve.polylines:
            raise ArgError("convexity defect needs 2D polylines")
        if not all(curve.closed):
            raise ArgError("level curve has an open component")
        h = curve.spacing if h is None else h
        lines = curve.polylines
    else:
        if not closed:
            raise ArgError("convexity defect needs a closed polyline")
        if h is None:
            raise ArgError("spacing h is required for a bare polyline")
        lines = [np.asarray(curve, dtype=float)]
    worst = 0.0
    for p in lines:
        if len(p) < 3:
            continue
        z = turn_cross_products(p)
        worst = max(worst, float(np.max(np.maximum(0.0, -z))) / h)
    return worst


def polyline_length(p: np.ndarray) -> float:
    return float(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1).sum())


def is_inside_polygon(points, polygon) -> np.ndarray:
    """Even-odd point-in-polygon test."""
    pts = np.atleast_2d(points)
    poly = np.asarray(polygon)
    x, y = pts[:, 0:1], pts[:, 1:2]
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    cond = (y0 > y) != (y1 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    return np.count_nonzero(cond & (x < xint), axis=1) % 2 == 1


__all__ = [
    "LevelCurve", "LevelSample", "extract_level_set", "convexity_defect", "marching_squares",
    "edge_crossings", "contour_values", "annotate", "NodeKind",
]
