"""Explicit time stepping of ``u_t = F(Hess u, grad u)`` on convex rings.

Nodes whose stencil has an arm shorter than ``THETA_FLOOR`` spacings are
slaved: after each step their value is interpolated along the short arm
from the Dirichlet crossing and the two Interior nodes behind them.  This
keeps the explicit step at the order of ``h^2`` instead of ``theta * h^2``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .domain import Ball, ConvexRing, sphere_directions
from .errors import ArgError, BlowupError, StabilityError
from .grid import Grid, Mask, NodeKind, ScalarField, build_grid
from .operators import OperatorSpec
from .stencil import Stencil, stencil_for

log = logging.getLogger(__name__)

THETA_FLOOR = 0.5
SLAVE_SWEEPS = 3
INITIAL_KINDS = ("radial", "gauge", "presolve")


@dataclass(frozen=True)
class Scenario:
    ring: ConvexRing
    resolution: int
    operator: OperatorSpec
    initial: str = "gauge"
    t_end: float = 1.0
    cfl_factor: float = 0.9
    snapshot_every: float = 0.1
    steady_tol: float = 1e-8

    def __post_init__(self):
        if self.initial not in INITIAL_KINDS:
            raise ArgError(f"unknown initial kind {self.initial!r}")
        if not self.t_end >= 0:
            raise ArgError("t_end must be nonnegative")
        if not 0 < self.cfl_factor <= 1:
            raise ArgError("cfl_factor must lie in (0, 1]")
        if not self.snapshot_every > 0:
            raise ArgError("snapshot_every must be positive")
        if not self.steady_tol > 0:
            raise ArgError("steady_tol must be positive")


@dataclass(frozen=True)
class Snapshot:
    field: ScalarField
    max_residual: float
    index: int = 0
    steady: bool = False

    @property
    def time(self) -> float:
        return self.field.time


@dataclass
class SolveResult:
    snapshots: list[Snapshot]
    dt: float
    steps: int
    min_initial_rate: float
    steady_time: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.snapshots)

    def __len__(self):
        return len(self.snapshots)

    def __getitem__(self, k):
        return self.snapshots[k]

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]


# ----------------------------------------------------------------------------
# initial data


def radial_profile(ring: ConvexRing):
    """Harmonic radial profile of a concentric-ball ring, as a point function."""
    if not ring.is_concentric_balls():
        raise ArgError("radial initial data needs a ring of concentric balls")
    c = ring.outer.center
    r0, r1 = ring.outer.radius, ring.inner.radius
    n = ring.dim

    def u(points):
        r = np.linalg.norm(np.atleast_2d(points) - c, axis=1)
        # the centre lies in the hole; its infinite value is never used
        with np.errstate(divide="ignore"):
            if n == 2:
                return np.log(r0 / r) / math.log(r0 / r1)
            return (r ** (2 - n) - r0 ** (2 - n)) / (r1 ** (2 - n) - r0 ** (2 - n))

    return u


def gauge_values(ring: ConvexRing, points: np.ndarray, directions: int | None = None,
                 refine: int = 48, chunk: int = 4096) -> np.ndarray:
    """Minkowski-interpolation data: ``{u >= c} = (1 - c) outer + c inner``.

    ``u(x) = min_xi (h0(xi) - <x, xi>) / (h0(xi) - h1(xi))`` over unit
    directions, clipped to [0, 1].
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = ring.dim
    if directions is None:
        directions = 1024 if n == 2 else 3000
    dirs = sphere_directions(directions, n)
    h0 = ring.outer.support(dirs)
    h1 = ring.inner.support(dirs)
    width = h0 - h1
    out = np.empty(len(pts))
    best = np.empty(len(pts), dtype=int)
    for s in range(0, len(pts), chunk):
        ratio = (h0[None, :] - pts[s : s + chunk] @ dirs.T) / width[None, :]
        best[s : s + chunk] = ratio.argmin(axis=1)
        out[s : s + chunk] = ratio[np.arange(ratio.shape[0]), best[s : s + chunk]]
    if n == 2 and refine:
        out = np.minimum(out, _golden_refine(ring, pts, best, directions, refine))
    return np.clip(out, 0.0, 1.0)


def _golden_refine(ring, pts, best, count, iters):
    step = 2.0 * np.pi / count
    center = 2.0 * np.pi * (best + 0.5) / count
    a, b = center - step, center + step

    def f(ang):
        xi = np.column_stack([np.cos(ang), np.sin(ang)])
        h0 = _support_rows(ring.outer, xi)
        h1 = _support_rows(ring.inner, xi)
        return (h0 - np.sum(pts * xi, axis=1)) / (h0 - h1)

    g = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(iters):
        c = b - g * (b - a)
        d = a + g * (b - a)
        left = f(c) < f(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return f(0.5 * (a + b))


def _support_rows(body, xi):
    """Support value of ``body`` for one direction per row."""
    if isinstance(body, Ball):
        return xi @ body.center + body.radius * np.linalg.norm(xi, axis=1)
    verts = getattr(body, "vertices", None)
    if verts is not None:
        return (xi @ verts.T).max(axis=1)
    return xi @ body.center + np.linalg.norm(xi * body.semi_axes, axis=1)


def _impose_boundary(values: np.ndarray, mask: Mask) -> np.ndarray:
    flat = values.reshape(-1)
    flat[mask.boundary_nodes] = mask.boundary_value
    return values


def initial_data(ring: ConvexRing, kind: str, grid: Grid | None = None, mask: Mask | None = None,
                 resolution: int | None = None, spec: OperatorSpec | None = None,
                 cfl_factor: float = 0.9, steady_tol: float = 1e-8, max_time: float = 50.0) -> ScalarField:
    """Quasiconcave initial data with boundary values exactly 0 (outer) and 1 (inner)."""
    if kind not in INITIAL_KINDS:
        raise ArgError(f"unknown initial kind {kind!r}")
    if grid is None or mask is None:
        if resolution is None:
            raise ArgError("initial_data needs a grid or a resolution")
        grid, mask = build_grid(ring, resolution)
    pts = grid.node_points()
    keep = ~mask.exterior.ravel()
    vals = np.full(grid.size, np.nan)
    if kind == "radial":
        vals[keep] = radial_profile(ring)(pts[keep])
    else:
        vals[keep] = gauge_values(ring, pts[keep])
    vals = _impose_boundary(vals.reshape(grid.shape), mask)
    fld = ScalarField(grid, mask, vals, 0.0)
    if kind == "presolve":
        stepper = Stepper(mask, spec or OperatorSpec.heat(), cfl_factor)
        u, _, _, _ = stepper.run_to_steady(stepper.interior_of(fld), steady_tol, max_time)
        fld = ScalarField(grid, mask, stepper.full_values(u), 0.0)
    return fld


# ----------------------------------------------------------------------------
# stepping


def _slave_rules(st: Stencil, lines: list[int]):
    """Per slaved node: (row, crossing column, weights over [crossing, opp1, opp2])."""
    grid = st.grid
    nodes = st.nodes
    rows_of = st.row_of
    idx = np.stack(np.unravel_index(nodes, grid.shape), axis=1)
    kind = st.mask.kind
    frac = np.stack([np.minimum(st.lines[k].left, st.lines[k].right) for k in lines], axis=1)
    slaved = np.flatnonzero(frac.min(axis=1) < THETA_FLOOR)
    out_rows, out_cross, opp1, opp2, w = [], [], [], [], []
    for r in slaved:
        k = lines[int(frac[r].argmin())]
        line = st.lines[k]
        if line.left[r] <= line.right[r]:
            theta, tgt, other_frac, other_tgt, sign = line.left[r], line.left_target[r], line.right[r], line.right_target[r], 1
        else:
            theta, tgt, other_frac, other_tgt, sign = line.right[r], line.right_target[r], line.left[r], line.left_target[r], -1
        cross = tgt - st.n_nodes
        far = idx[r] + 2 * sign * line.offset
        far_ok = (
            other_frac == 1.0
            and np.all(far >= 0)
            and np.all(far < np.array(grid.shape))
            and kind[tuple(far)] == NodeKind.INTERIOR
        )
        if far_ok:
            # quadratic through the crossing (at -theta), the node at +1 and +2
            wg = 2.0 / ((theta + 1.0) * (theta + 2.0))
            w1 = 2.0 * theta / (1.0 + theta)
            w2 = -theta / (2.0 + theta)
            o1 = rows_of[other_tgt]
            o2 = rows_of[np.ravel_multi_index(tuple(far), grid.shape)]
        else:
            l = other_frac
            wg, w1, w2 = l / (l + theta), theta / (l + theta), 0.0
            o1 = rows_of[other_tgt] if other_tgt < st.n_nodes else -1
            o2 = -1
        out_rows.append(r)
        out_cross.append(cross if other_tgt < st.n_nodes else (cross, other_tgt - st.n_nodes))
        opp1.append(o1)
        opp2.append(o2)
        w.append((wg, w1, w2))
    return slaved, out_cross, np.array(opp1, dtype=int), np.array(opp2, dtype=int), np.array(w).reshape(-1, 3)


class Stepper:
    """Precomputed affine update for one (mask, operator) pair."""

    def __init__(self, mask: Mask, spec: OperatorSpec, cfl_factor: float = 0.9, boundary_data=None):
        self.mask = mask
        self.spec = spec
        self.st = st = stencil_for(mask)
        n = st.dim
        m = spec.coefficients(n)
        self.coef = m
        off_diag = bool(np.any(np.abs(m - np.diag(np.diag(m))) > 0))
        lines = list(range(n)) + (list(range(n, len(st.lines))) if off_diag else [])
        if off_diag and len(st.lines) == n:
            raise ArgError("operator needs mixed derivatives")
        self.gvals = np.asarray(boundary_data(st.crossings), dtype=float) if boundary_data else st.crossing_values(None)

        op = sp.csr_matrix((len(st.nodes), st.n_ext))
        for (a, b), h_op in st.hess_ops.items():
            weight = m[a, b] if a == b else 2.0 * m[a, b]
            if weight != 0.0:
                op = op + weight * h_op
        op = op.tocsc()
        # columns: Interior nodes -> unknown vector, crossings -> constant
        col_row = np.full(st.n_ext, -1)
        col_row[st.nodes] = np.arange(len(st.nodes))
        self._col_row = col_row
        self.lin, self.lin_const = self._split(op)
        self.grad = [self._split(g.tocsc()) for g in st.grad_ops] if spec.beta else []

        slaved, cross, o1, o2, w = _slave_rules(st, lines)
        self.slaved = slaved
        self.free = np.ones(len(st.nodes), dtype=bool)
        self.free[slaved] = False
        self._slave_o1, self._slave_o2, self._slave_w = o1, o2, w
        self._slave_g = np.array(
            [self.gvals[c] if np.ndim(c) == 0 else self.gvals[c[0]] for c in cross], dtype=float
        )
        # linear fallback whose opposite sample is itself a crossing
        self._slave_g2 = np.array(
            [0.0 if np.ndim(c) == 0 else self.gvals[c[1]] for c in cross], dtype=float
        )

        fr = [np.minimum(st.lines[k].left, st.lines[k].right) for k in range(n)]
        lr = np.stack([st.lines[k].left * st.lines[k].right for k in range(n)], axis=1)[self.free]
        h2 = lr * st.grid.spacing[None, :] ** 2
        self.h2_min = float(h2.min()) if h2.size else float(st.grid.spacing.min() ** 2)
        self.lam_max = spec.max_eigenvalue(n)
        self.cfl_factor = cfl_factor
        self.dt_max = cfl_factor * self.h2_min / (2.0 * n * self.lam_max)
        self.fraction_min = float(np.min(fr)) if fr else 1.0

    def _split(self, op: sp.csc_matrix):
        st = self.st
        node_cols = op[:, st.nodes]
        cross_cols = op[:, st.n_nodes :]
        return node_cols.tocsr(), np.asarray(cross_cols @ self.gvals).ravel()

    def stability_bound(self, cfl_factor: float = 1.0) -> float:
        return cfl_factor * self.h2_min / (2.0 * self.st.dim * self.lam_max)

    # --------------------------------------------------------------
    def interior_of(self, field: ScalarField) -> np.ndarray:
        return np.array(field.values.ravel()[self.st.nodes], dtype=float)

    def full_values(self, u: np.ndarray) -> np.ndarray:
        grid = self.st.grid
        vals = np.full(grid.size, np.nan)
        vals[self.mask.boundary_nodes] = self.mask.boundary_value
        vals[self.st.nodes] = u
        return vals.reshape(grid.shape)

    def rate(self, u: np.ndarray) -> np.ndarray:
        f = self.lin @ u + self.lin_const
        if self.spec.beta:
            for g_op, g_const in self.grad:
                g = g_op @ u + g_const
                f += self.spec.beta * g * g
        return f

    def enslave(self, u: np.ndarray) -> np.ndarray:
        if self.slaved.size == 0:
            return u
        o1, o2, w = self._slave_o1, self._slave_o2, self._slave_w
        for _ in range(SLAVE_SWEEPS):
            v1 = np.where(o1 >= 0, u[np.maximum(o1, 0)], self._slave_g2)
            v2 = np.where(o2 >= 0, u[np.maximum(o2, 0)], 0.0)
            val = w[:, 0] * self._slave_g + w[:, 1] * v1 + w[:, 2] * v2
            lo = np.minimum(self._slave_g, v1)
            hi = np.maximum(self._slave_g, v1)
            u[self.slaved] = np.clip(val, lo, hi)
        return u

    def residual(self, f: np.ndarray) -> float:
        return float(np.max(np.abs(f[self.free]))) if self.free.any() else 0.0

    def step(self, u: np.ndarray, dt: float, f: np.ndarray | None = None) -> np.ndarray:
        if f is None:
            f = self.rate(u)
        new = u + dt * np.where(self.free, f, 0.0)
        if not np.all(np.isfinite(new)):
            raise BlowupError("non-finite values after a time step")
        return self.enslave(new)

    def run_to_steady(self, u: np.ndarray, tol: float, max_time: float, dt: float | None = None):
        dt = self.dt_max if dt is None else dt
        u = self.enslave(u.copy())
        t = 0.0
        steps = 0
        while True:
            f = self.rate(u)
            res = self.residual(f)
            if res < tol or t >= max_time:
                return u, t, res, steps
            u = self.step(u, dt, f)
            steps += 1
            t = steps * dt


def advance(field: ScalarField, spec: OperatorSpec, dt: float, cfl_factor: float = 1.0) -> ScalarField:
    """One forward-Euler step with boundary values reimposed."""
    stepper = Stepper(field.mask, spec, cfl_factor, field.boundary_data)
    bound = stepper.stability_bound(cfl_factor)
    if not 0 < dt <= bound * (1.0 + 1e-12):
        raise StabilityError(f"dt = {dt:.6g} exceeds the stability bound {bound:.6g}")
    u = stepper.step(stepper.interior_of(field), dt)
    vals = np.array(field.values, dtype=float)
    vals.reshape(-1)[stepper.st.nodes] = u
    return field.with_values(vals, field.time + dt)


def _snapshot(stepper: Stepper, u: np.ndarray, t: float, index: int, res: float, steady: bool = False) -> Snapshot:
    fld = ScalarField(stepper.st.grid, stepper.mask, stepper.full_values(u), t)
    return Snapshot(fld, res, index, steady)


def solve_scenario(scenario: Scenario, initial: ScalarField | None = None, max_steps: int | None = None) -> SolveResult:
    """Integrate from the initial data, emitting snapshots at the cadence.

    The run ends at ``t_end`` or as soon as the residual ``max |u_t|`` over
    free Interior nodes drops below ``steady_tol`` (the last snapshot is then
    marked steady).
    """
    sc = scenario
    if initial is None:
        grid, mask = build_grid(sc.ring, sc.resolution)
        initial = initial_data(sc.ring, sc.initial, grid, mask, spec=sc.operator,
                               cfl_factor=sc.cfl_factor, steady_tol=sc.steady_tol)
    stepper = Stepper(initial.mask, sc.operator, sc.cfl_factor)
    u0 = stepper.interior_of(initial)
    f0 = stepper.rate(u0)
    min_rate = float(f0[stepper.free].min()) if stepper.free.any() else 0.0
    if min_rate <= 0:
        log.warning("initial data has min F = %.3g <= 0", min_rate)
    res = stepper.residual(f0)
    snaps = [_snapshot(stepper, u0, 0.0, 0, res, res < sc.steady_tol)]
    # slaved nodes follow their interpolation rule from the first step on
    u = stepper.enslave(u0.copy())
    f = stepper.rate(u)
    every = min(sc.snapshot_every, sc.t_end) if sc.t_end > 0 else sc.snapshot_every
    per = max(1, math.ceil(every / stepper.dt_max * (1.0 - 1e-12)))
    dt = every / per
    result = SolveResult(snaps, dt, 0, min_rate)
    result.diagnostics = {
        "dt": dt,
        "dt_max": stepper.dt_max,
        "slaved_nodes": int(stepper.slaved.size),
        "interior_nodes": int(len(stepper.st.nodes)),
        "h2_min": stepper.h2_min,
    }
    if sc.t_end == 0 or res < sc.steady_tol:
        result.steady_time = 0.0 if res < sc.steady_tol else None
        return result

    n_full = math.floor(sc.t_end / dt + 1e-9)
    tail = sc.t_end - n_full * dt
    if tail <= 1e-9 * dt:
        tail = 0.0
    n_total = n_full + (1 if tail > 0 else 0)
    steps = 0
    index = 1
    while steps < n_total:
        h = dt if steps < n_full else tail
        u = stepper.step(u, h, f)
        steps += 1
        if steps == n_total:
            t = sc.t_end
        else:
            t = steps * dt
        f = stepper.rate(u)
        res = stepper.residual(f)
        steady = res < sc.steady_tol
        done = steady or steps == n_total or (max_steps is not None and steps >= max_steps)
        if steps % per == 0 or done:
            snaps.append(_snapshot(stepper, u, t, index, res, steady))
            index += 1
        if done:
            break
    result.steps = steps
    result.steady_time = t if snaps[-1].steady else None
    return result
