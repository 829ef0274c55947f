"""Affine finite-difference operators on masked grids.

Every Interior node gets, along each stencil line (the coordinate axes and,
for mixed derivatives, the two diagonals of each coordinate plane), a
three-point stencil.  An arm whose neighbor is not Interior is cut at the
analytic boundary crossing, where the Dirichlet value is used; the quadratic
through the three points gives the derivatives.  This equals central
differences with a quadratically extrapolated ghost value, so polynomials of
degree <= 2 are differentiated exactly.

The operators act on the extended vector ``[node values, crossing values]``.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import Mask, NodeKind

_CACHE: "weakref.WeakKeyDictionary[Mask, Stencil]" = weakref.WeakKeyDictionary()


def three_point_weights(left: np.ndarray, right: np.ndarray):
    """Weights of p'(0) and p''(0) for samples at ``-left``, ``0``, ``+right``."""
    s = left + right
    d1 = (-right / (left * s), (right - left) / (left * right), left / (right * s))
    d2 = (2.0 / (left * s), -2.0 / (left * right), 2.0 / (right * s))
    return d1, d2


def _bisect_crossing(body, x0, x1, inside_is_low: bool, iters: int = 64) -> np.ndarray:
    lo = np.zeros(len(x0))
    hi = np.ones(len(x0))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        g = body.gauge(x0 + mid[:, None] * (x1 - x0))
        inside = g < 1.0 if inside_is_low else g > 1.0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


@dataclass(eq=False)
class Line:
    """One stencil direction with per-node arm fractions."""

    offset: np.ndarray  # integer index offset of the + neighbor
    left: np.ndarray    # arm fraction in (0, 1]
    right: np.ndarray
    d1: sp.csr_matrix   # d/dtau along the line
    d2: sp.csr_matrix   # d2/dtau2 along the line
    left_target: np.ndarray   # extended-vector column of the - sample
    right_target: np.ndarray  # extended-vector column of the + sample


class Stencil:
    """Derivative operators for one mask; build with :func:`stencil_for`."""

    def __init__(self, mask: Mask, with_diagonals: bool = True):
        grid = mask.grid
        self.mask = mask
        self.grid = grid
        n = grid.dim
        self.dim = n
        shape = np.array(grid.shape)
        self.nodes = np.flatnonzero(mask.interior.ravel())
        self.n_nodes = grid.size
        idx = np.stack(np.unravel_index(self.nodes, grid.shape), axis=1)
        pts = grid.node_points()[self.nodes]
        kind = mask.kind.ravel()

        offsets = [np.eye(n, dtype=int)[a] for a in range(n)]
        self.diag_pairs = []
        if with_diagonals:
            for a in range(n):
                for b in range(a + 1, n):
                    plus = np.zeros(n, dtype=int)
                    plus[a] = plus[b] = 1
                    minus = plus.copy()
                    minus[b] = -1
                    self.diag_pairs.append((a, b, len(offsets), len(offsets) + 1))
                    offsets += [plus, minus]

        cross_pts: list[np.ndarray] = []
        cross_body: list[np.ndarray] = []
        n_cross = 0
        raw = []
        for off in offsets:
            arms = []
            for sign in (-1, 1):
                nb = idx + sign * off
                nb_flat = np.ravel_multi_index(nb.T, grid.shape)
                ok = kind[nb_flat] == NodeKind.INTERIOR
                frac = np.ones(len(self.nodes))
                target = nb_flat.copy()
                cut = np.flatnonzero(~ok)
                if cut.size:
                    x0 = pts[cut]
                    x1 = grid.point(nb[cut])
                    outer = kind[nb_flat[cut]] == NodeKind.OUTER_BOUNDARY
                    t = np.empty(cut.size)
                    if outer.any():
                        t[outer] = _bisect_crossing(mask.ring.outer, x0[outer], x1[outer], True)
                    if (~outer).any():
                        t[~outer] = _bisect_crossing(mask.ring.inner, x0[~outer], x1[~outer], False)
                    frac[cut] = t
                    cross_pts.append(x0 + t[:, None] * (x1 - x0))
                    cross_body.append(np.where(outer, 0, 1))
                    target[cut] = self.n_nodes + n_cross + np.arange(cut.size)
                    n_cross += cut.size
                arms.append((frac, target))
            raw.append((off, arms))
        self.crossings = np.vstack(cross_pts) if cross_pts else np.zeros((0, n))
        self.crossing_body = np.concatenate(cross_body) if cross_body else np.zeros(0, int)
        self.n_ext = self.n_nodes + len(self.crossings)
        assert np.all(idx.min(axis=0) >= 1) and np.all(idx.max(axis=0) <= shape - 2)

        rows = np.arange(len(self.nodes))
        self.lines: list[Line] = []
        for off, ((lf, lt), (rf, rt)) in raw:
            w1, w2 = three_point_weights(lf, rf)
            cols = (lt, self.nodes, rt)
            mats = []
            for w in (w1, w2):
                m = sp.csr_matrix(
                    (np.concatenate(w), (np.tile(rows, 3), np.concatenate(cols))),
                    shape=(len(self.nodes), self.n_ext),
                )
                mats.append(m)
            self.lines.append(Line(off, lf, rf, mats[0], mats[1], lt, rt))

        h = grid.spacing
        self.grad_ops = [self.lines[a].d1 / h[a] for a in range(n)]
        self.hess_ops: dict[tuple[int, int], sp.csr_matrix] = {}
        for a in range(n):
            self.hess_ops[(a, a)] = (self.lines[a].d2 / h[a] ** 2).tocsr()
        for a, b, kp, km in self.diag_pairs:
            self.hess_ops[(a, b)] = ((self.lines[kp].d2 - self.lines[km].d2) / (4.0 * h[a] * h[b])).tocsr()
        self.row_of = np.full(self.n_nodes, -1)
        self.row_of[self.nodes] = rows

    # ------------------------------------------------------------------
    def crossing_values(self, field) -> np.ndarray:
        """Dirichlet data at the crossings (field override or ring data 0/1)."""
        data = getattr(field, "boundary_data", None)
        if data is not None:
            return np.asarray(data(self.crossings), dtype=float)
        return self.crossing_body.astype(float)

    def extended(self, values: np.ndarray, gvals: np.ndarray) -> np.ndarray:
        v = np.nan_to_num(np.asarray(values, dtype=float).ravel(), nan=0.0)
        return np.concatenate([v, gvals])

    def derivatives(self, ext: np.ndarray, rows=None):
        """Gradient (N, n) and symmetric Hessian (N, n, n) at Interior rows."""
        n = self.dim
        sel = slice(None) if rows is None else rows
        grads = np.stack([op[sel] @ ext for op in self.grad_ops], axis=1)
        hess = np.empty(grads.shape + (n,))
        for (a, b), op in self.hess_ops.items():
            val = op[sel] @ ext
            hess[:, a, b] = val
            hess[:, b, a] = val
        return grads, hess

    def min_fraction(self, axes_only: bool = False) -> np.ndarray:
        lines = self.lines[: self.dim] if axes_only else self.lines
        return np.min([np.minimum(l.left, l.right) for l in lines], axis=0)


def stencil_for(mask: Mask) -> Stencil:
    st = _CACHE.get(mask)
    if st is None:
        st = Stencil(mask)
        _CACHE[mask] = st
    return st
