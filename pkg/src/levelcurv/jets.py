"""Second-order jets (u, grad u, Hess u) from nodal fields."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import StencilError
from .grid import NodeKind, ScalarField, classify_points
from .stencil import stencil_for


@dataclass(frozen=True)
class Jet2:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    location: np.ndarray
    time: float = 0.0

    @property
    def dim(self) -> int:
        return self.gradient.size

    def scaled(self, factor: float) -> "Jet2":
        return Jet2(factor * self.value, factor * self.gradient, factor * self.hessian, self.location, self.time)


def fd_jets(field: ScalarField):
    """Jets at every Interior node: (flat node indices, values, gradients, Hessians)."""
    st = stencil_for(field.mask)
    ext = st.extended(field.values, st.crossing_values(field))
    grads, hess = st.derivatives(ext)
    return st.nodes, field.values.ravel()[st.nodes], grads, hess


def fd_jet(field: ScalarField, node) -> Jet2:
    """Central-difference jet at one Interior node (multi-index or flat index)."""
    grid = field.grid
    flat = int(np.ravel_multi_index(tuple(node), grid.shape)) if np.ndim(node) else int(node)
    if field.mask.kind.ravel()[flat] != NodeKind.INTERIOR:
        raise StencilError("fd_jet requires an Interior node")
    st = stencil_for(field.mask)
    row = st.row_of[flat]
    ext = st.extended(field.values, st.crossing_values(field))
    g, hs = st.derivatives(ext, rows=[row])
    loc = grid.point(np.unravel_index(flat, grid.shape))
    return Jet2(float(field.values.ravel()[flat]), g[0], hs[0], loc, field.time)


def _monomials(dim: int, degree: int) -> list[tuple[int, ...]]:
    out = []
    for total in range(degree + 1):
        for powers in itertools.product(range(total + 1), repeat=dim):
            if sum(powers) == total:
                out.append(powers)
    return sorted(out, key=lambda p: (sum(p), [-q for q in p]))


def _window_data(field: ScalarField, points: np.ndarray, radius: int = 2):
    """Sample positions, values and usability over the (2r+1)^n node window."""
    grid = field.grid
    mask = field.mask
    n = grid.dim
    center = np.rint((points - grid.origin) / grid.spacing).astype(int)
    offs = np.array(list(itertools.product(range(-radius, radius + 1), repeat=n)))
    idx = center[:, None, :] + offs[None, :, :]
    shape = np.array(grid.shape)
    inside = np.all((idx >= 0) & (idx < shape), axis=2)
    idx_c = np.clip(idx, 0, shape - 1)
    flat = np.ravel_multi_index(tuple(np.moveaxis(idx_c, 2, 0)), grid.shape)
    kind = mask.kind.ravel()[flat]
    pos = grid.origin + grid.spacing * idx_c
    vals = np.nan_to_num(field.values.ravel()[flat], nan=0.0)
    usable = inside & (kind == NodeKind.INTERIOR)

    bnd = inside & ((kind == NodeKind.OUTER_BOUNDARY) | (kind == NodeKind.INNER_BOUNDARY))
    if bnd.any():
        lookup = np.full(grid.size, -1)
        lookup[mask.boundary_nodes] = np.arange(len(mask.boundary_nodes))
        k = lookup[flat[bnd]]
        pos[bnd] = mask.foot[k]
        vals[bnd] = field.foot_values()[k]
        usable = usable | bnd
    return pos, vals, usable


def _fit(rel: np.ndarray, vals: np.ndarray, usable: np.ndarray, degree: int, spacing: np.ndarray):
    n = rel.shape[-1]
    mons = _monomials(n, degree)
    z = rel / spacing
    design = np.stack([np.prod(z ** np.array(p), axis=-1) for p in mons], axis=-1)
    w = usable.astype(float)
    q, r = np.linalg.qr(design * w[..., None])
    diag = np.abs(np.diagonal(r, axis1=1, axis2=2))
    ok = diag.min(axis=1) > 1e-9 * np.maximum(diag.max(axis=1), 1e-300)
    rhs = np.einsum("pwk,pw->pk", q, vals * w)
    r_safe = r.copy()
    r_safe[~ok] = np.eye(len(mons))
    coef = np.linalg.solve(r_safe, rhs[..., None])[..., 0]
    pos = {p: i for i, p in enumerate(mons)}
    value = coef[:, pos[(0,) * n]]
    grad = np.empty((len(vals), n))
    hess = np.empty((len(vals), n, n))
    for a in range(n):
        e = [0] * n
        e[a] = 1
        grad[:, a] = coef[:, pos[tuple(e)]] / spacing[a]
        for b in range(a, n):
            e2 = [0] * n
            e2[a] += 1
            e2[b] += 1
            c = coef[:, pos[tuple(e2)]]
            hab = (2.0 * c if a == b else c) / (spacing[a] * spacing[b])
            hess[:, a, b] = hab
            hess[:, b, a] = hab
    return ok, value, grad, hess


def jets_at_points(field: ScalarField, points, min_cubic: int | None = None):
    """Least-squares polynomial jets at arbitrary Interior points.

    Fits a cubic over the 5^n window around the nearest node when it holds
    enough usable samples (Interior nodes plus boundary foot points carrying
    Dirichlet data), otherwise a quadratic.

    Returns
    -------
    valid : (N,) bool
    value : (N,)
    grad : (N, n)
    hess : (N, n, n)
    """
    grid = field.grid
    n = grid.dim
    pts = np.asarray(points, dtype=float).reshape(-1, n)
    npts = len(pts)
    value = np.full(npts, np.nan)
    grad = np.full((npts, n), np.nan)
    hess = np.full((npts, n, n), np.nan)
    valid = np.zeros(npts, dtype=bool)
    if npts == 0:
        return valid, value, grad, hess
    kind = classify_points(field.mask, pts)
    interior = kind == NodeKind.INTERIOR
    if not interior.any():
        return valid, value, grad, hess
    sel = np.flatnonzero(interior)
    pos, vals, usable = _window_data(field, pts[sel])
    rel = pos - pts[sel][:, None, :]
    count = usable.sum(axis=1)
    quad_min = (n + 1) * (n + 2) // 2
    if min_cubic is None:
        min_cubic = 15 if n == 2 else 30
    todo = np.ones(len(sel), dtype=bool)
    for degree, need in ((3, min_cubic), (2, quad_min)):
        pick = np.flatnonzero(todo & (count >= need))
        if pick.size == 0:
            continue
        ok, v, g, hs = _fit(rel[pick], vals[pick], usable[pick], degree, grid.spacing)
        good = pick[ok]
        tgt = sel[good]
        value[tgt], grad[tgt], hess[tgt] = v[ok], g[ok], hs[ok]
        valid[tgt] = True
        todo[good] = False
    return valid, value, grad, hess


def jet_at_point(field: ScalarField, x) -> Jet2:
    x = np.asarray(x, dtype=float).reshape(field.grid.dim)
    valid, v, g, hs = jets_at_points(field, x[None])
    if not valid[0]:
        raise StencilError("point is not Interior or has too few usable neighbors")
    return Jet2(float(v[0]), g[0], hs[0], x, field.time)
