"""Rank, curvature-bound, convexity and degeneracy checks on computed solutions.

Level curves are extracted once per (snapshot, level) and shared by the
rank, curvature-bound, quasiconcavity and degeneracy analyses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgError, FitError, LevelError
from .geometry import DEFAULT_GRADIENT_FLOOR
from .levelsets import DEFAULT_CORNER_EXCLUSION, LevelCurve, convexity_defect, extract_level_set
from .symfun import DEFAULT_RANK_TOL, rank_counts

DEFAULT_LEVEL_COUNT = 25
DEFAULT_LEVEL_LO = 0.02
DEFAULT_LEVEL_HI = 0.98


def default_levels(lo: float = DEFAULT_LEVEL_LO, hi: float = DEFAULT_LEVEL_HI,
                   count: int = DEFAULT_LEVEL_COUNT) -> list[float]:
    return [float(c) for c in np.linspace(lo, hi, count)]


@dataclass
class AnalysisOptions:
    levels: list[float] = field(default_factory=default_levels)
    rank_tol: float = DEFAULT_RANK_TOL
    gradient_floor: float = DEFAULT_GRADIENT_FLOOR
    corner_exclusion: float = DEFAULT_CORNER_EXCLUSION
    min_samples: int = 64
    defect_tol: float = 5.0
    psd_tol: float = 1e-6
    level_lo: float = DEFAULT_LEVEL_LO
    level_hi: float = DEFAULT_LEVEL_HI
    a_max: float = 10.0
    fit_tol: float = 1e-3
    eq_tol: float = 0.03
    eta_grid: list[float] | None = None
    sampling: int = 32


def _field(snap):
    return getattr(snap, "field", snap)


class CurveCache:
    """Memo of extracted level curves keyed by snapshot identity and level."""

    def __init__(self, opts: AnalysisOptions | None = None):
        self.opts = opts or AnalysisOptions()
        self._store: dict[tuple[int, float], LevelCurve] = {}
        self._keep: list = []

    def get(self, snap, c: float) -> LevelCurve:
        fld = _field(snap)
        key = (id(fld), float(c))
        if key not in self._store:
            self._keep.append(fld)
            self._store[key] = extract_level_set(
                fld, float(c), self.opts.corner_exclusion, self.opts.gradient_floor
            )
        return self._store[key]


# ----------------------------------------------------------------------------
# rank


def _sigma_rows(c: np.ndarray) -> np.ndarray:
    """Elementary symmetric polynomials of each row, shape (N, m+1)."""
    n, m = c.shape
    e = np.zeros((n, m + 1))
    e[:, 0] = 1.0
    for k in range(m):
        e[:, 1 : k + 2] = e[:, 1 : k + 2] + c[:, k : k + 1] * e[:, : k + 1]
    return e


def phi_rows(curvatures: np.ndarray, l: int) -> np.ndarray | None:
    m = curvatures.shape[1]
    if l > m - 1:
        return None
    e = _sigma_rows(curvatures)
    p = e[:, l + 1]
    nxt = e[:, l + 2] if l + 2 <= m else np.zeros(len(p))
    q = np.where(p > 0, nxt / np.where(p > 0, p, 1.0), 0.0)
    return p + q


@dataclass
class LevelRank:
    time: float
    level: float
    ranks: np.ndarray
    min_rank: int
    phi_min: float | None
    phi_max: float | None


@dataclass
class RankProfile:
    dim: int
    times: list[float]
    entries: list[list[LevelRank]]
    tol: float

    @property
    def l_of_t(self) -> list[int]:
        return [min(e.min_rank for e in row) for row in self.entries]

    def mixed(self, k: int) -> int:
        """Samples at time index k whose rank differs from l(t)."""
        l = self.l_of_t[k]
        return int(sum(np.count_nonzero(e.ranks != l) for e in self.entries[k]))

    def constant_rank(self, from_index: int = 0) -> bool:
        return all(self.mixed(k) == 0 for k in range(from_index, len(self.times)))

    def to_dict(self) -> dict:
        return {
            "tol": self.tol,
            "times": self.times,
            "l_of_t": self.l_of_t,
            "mixed_samples": [self.mixed(k) for k in range(len(self.times))],
            "levels": [
                [
                    {
                        "c": e.level,
                        "min_rank": e.min_rank,
                        "max_rank": int(e.ranks.max()),
                        "samples": int(e.ranks.size),
                        "phi_min": e.phi_min,
                        "phi_max": e.phi_max,
                    }
                    for e in row
                ]
                for row in self.entries
            ],
        }


def rank_profile(snapshots, levels, tol: float = DEFAULT_RANK_TOL, cache: CurveCache | None = None) -> RankProfile:
    snaps = list(snapshots)
    if not snaps:
        raise ArgError("rank profile needs snapshots")
    cache = cache or CurveCache()
    entries = []
    times = []
    dim = _field(snaps[0]).grid.dim
    for snap in snaps:
        row = []
        for c in levels:
            curve = cache.get(snap, c)
            curv = curve.curvatures[curve.valid]
            if len(curv) == 0:
                raise LevelError(f"no usable samples on level {c}")
            # curvature scale: relative threshold against max(1, top eigenvalue)
            ranks = rank_counts(curv, tol)
            l = int(ranks.min())
            ph = phi_rows(np.sort(curv, axis=1)[:, ::-1], l)
            row.append(
                LevelRank(
                    _field(snap).time, float(c), ranks, l,
                    None if ph is None else float(ph.min()),
                    None if ph is None else float(ph.max()),
                )
            )
        entries.append(row)
        times.append(_field(snap).time)
    return RankProfile(dim, times, entries, tol)


def check_rank_monotonicity(profile) -> tuple[bool, tuple[float, float] | None]:
    """``l(s) <= l(t)`` for all ``s <= t``; returns (passed, first violating pair)."""
    if isinstance(profile, RankProfile):
        times, ls = profile.times, profile.l_of_t
    else:
        times, ls = [p[0] for p in profile], [p[1] for p in profile]
    if len(times) < 2:
        raise ArgError("monotonicity needs at least two times")
    running_max = ls[0]
    arg = 0
    for k in range(1, len(ls)):
        if ls[k] < running_max:
            return False, (times[arg], times[k])
        if ls[k] > running_max:
            running_max, arg = ls[k], k
    return True, None


# ----------------------------------------------------------------------------
# curvature curve and bound


@dataclass
class KappaCurve:
    time: float
    levels: np.ndarray
    kappa: np.ndarray
    samples: list[int]
    skipped: list[dict]
    argmin: list[np.ndarray]

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.levels.tolist(), self.kappa.tolist()))


def kappa_curve(snapshot, levels, min_samples: int = 64, cache: CurveCache | None = None) -> KappaCurve:
    """Infimum of the smallest principal curvature over each level set."""
    cache = cache or CurveCache()
    ks, counts, skipped, where = [], [], [], []
    for c in levels:
        curve = cache.get(snapshot, c)
        n_ok = int(curve.valid.sum())
        if n_ok == 0:
            raise LevelError(f"all samples skipped on level {c}")
        if n_ok < min_samples:
            raise LevelError(f"level {c} has {n_ok} usable samples, fewer than {min_samples}")
        kmin = curve.curvatures[curve.valid, 0]
        j = int(np.argmin(kmin))
        ks.append(float(kmin[j]))
        where.append(curve.points[curve.valid][j])
        counts.append(n_ok)
        skipped.append(dict(curve.skipped))
    return KappaCurve(_field(snapshot).time, np.asarray(levels, dtype=float), np.array(ks), counts, skipped, where)


def bound_value(c, A: float, kappa0: float, kappa1: float):
    return min(kappa0, kappa1 * math.exp(-A)) * np.exp(A * np.asarray(c, dtype=float))


@dataclass
class BoundReport:
    time: float
    A: float
    kappa0: float
    kappa1: float
    levels: np.ndarray
    kappa: np.ndarray
    bound: np.ndarray
    margins: np.ndarray
    equality: np.ndarray
    fit_tol: float
    eq_tol: float
    monotone_path: bool
    search_lo: float

    @property
    def rel_margins(self) -> np.ndarray:
        return self.margins / self.kappa

    @property
    def min_rel_margin(self) -> float:
        return float(self.rel_margins.min())

    @property
    def interior_equality(self) -> bool:
        return bool(self.equality[1:-1].any())

    @property
    def all_equality(self) -> bool:
        return bool(self.equality.all())

    @property
    def equality_propagates(self) -> bool:
        """Equality at one interior level implies equality at every level."""
        return (not self.interior_equality) or self.all_equality

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "A": self.A,
            "kappa0": self.kappa0,
            "kappa1": self.kappa1,
            "search_lo": self.search_lo,
            "min_rel_margin": self.min_rel_margin,
            "fit_tol": self.fit_tol,
            "eq_tol": self.eq_tol,
            "interior_equality": self.interior_equality,
            "all_equality": self.all_equality,
            "equality_propagates": self.equality_propagates,
            "monotone_path": self.monotone_path,
            "levels": [
                {"c": float(c), "kappa_u": float(k), "bound": float(b), "margin": float(m), "equality": bool(e)}
                for c, k, b, m, e in zip(self.levels, self.kappa, self.bound, self.margins, self.equality)
            ],
        }


def fit_A_and_check_bound(curve, kappa0: float, kappa1: float, a_max: float = 10.0,
                          fit_tol: float = 1e-3, eq_tol: float = 0.03, time: float = 0.0,
                          iters: int = 200) -> BoundReport:
    """Smallest A on ``[max(0, ln(kappa1/kappa0)), a_max]`` making the bound hold.

    On that interval the bound is ``kappa1 exp(A (c - 1))``, nonincreasing in
    A, so feasibility is monotone and bisection applies.  Feasibility allows a
    relative slack ``fit_tol``; equality levels have ``|margin| <= eq_tol kappa``.
    """
    if isinstance(curve, KappaCurve):
        levels, kappa, time = curve.levels, curve.kappa, curve.time
    else:
        pts = list(curve)
        if not pts:
            raise ArgError("empty curvature curve")
        levels = np.array([p[0] for p in pts], dtype=float)
        kappa = np.array([p[1] for p in pts], dtype=float)
    if levels.size == 0:
        raise ArgError("empty curvature curve")
    if not (kappa0 > 0 and kappa1 > 0):
        raise ArgError("kappa0 and kappa1 must be positive")
    if np.any(levels < 0) or np.any(levels > 1):
        raise ArgError("levels must lie in [0, 1]")
    lo = max(0.0, math.log(kappa1 / kappa0))
    if a_max < lo:
        raise FitError(f"a_max = {a_max} is below the search start {lo:.6g}")

    def rhs(A):
        return bound_value(levels, A, kappa0, kappa1)

    def feasible(A):
        return bool(np.all(kappa * (1.0 + fit_tol) >= rhs(A)))

    path = [lo]
    if feasible(lo):
        A = lo
    else:
        if not feasible(a_max):
            worst = float(np.max((rhs(a_max) - kappa) / kappa))
            raise FitError(f"no feasible A up to {a_max}; worst relative violation {worst:.4g}")
        a, b = lo, a_max
        path.append(a_max)
        for _ in range(iters):
            mid = 0.5 * (a + b)
            if mid in (a, b):
                break
            path.append(mid)
            if feasible(mid):
                b = mid
            else:
                a = mid
        A = b
    ordered = sorted(path)
    vals = np.array([rhs(x) for x in ordered])
    monotone = bool(np.all(np.diff(vals, axis=0) <= 1e-12 * np.abs(vals[:-1]) + 1e-300))
    b_vals = rhs(A)
    margins = kappa - b_vals
    equality = np.abs(margins) <= eq_tol * np.abs(kappa)
    return BoundReport(time, float(A), float(kappa0), float(kappa1), levels, kappa, b_vals, margins,
                       equality, fit_tol, eq_tol, monotone, lo)


def bound_for_curve(curve: KappaCurve, opts: AnalysisOptions) -> BoundReport:
    """Fit using kappa at the configured end levels as the boundary proxies."""
    lv = curve.levels
    k0 = float(curve.kappa[int(np.argmin(np.abs(lv - opts.level_lo)))])
    k1 = float(curve.kappa[int(np.argmin(np.abs(lv - opts.level_hi)))])
    return fit_A_and_check_bound(curve, k0, k1, opts.a_max, opts.fit_tol, opts.eq_tol)


# ----------------------------------------------------------------------------
# quasiconcavity


@dataclass
class DefectEntry:
    time: float
    level: float
    defect: float


def quasiconcavity_scan(snapshots, levels, defect_tol: float = 5.0, psd_tol: float = 1e-6,
                        cache: CurveCache | None = None) -> tuple[bool, list[DefectEntry]]:
    """2D: convexity defect per curve.  3D: negative part of the smallest curvature."""
    cache = cache or CurveCache()
    out = []
    ok = True
    for snap in snapshots:
        fld = _field(snap)
        for c in levels:
            curve = cache.get(snap, c)
            if fld.grid.dim == 2:
                d = convexity_defect(curve)
                ok &= d <= defect_tol
            else:
                kmin = curve.curvatures[curve.valid, 0]
                d = float(max(0.0, -kmin.min())) if kmin.size else 0.0
                ok &= d <= psd_tol
            out.append(DefectEntry(fld.time, float(c), float(d)))
    return bool(ok), out


# ----------------------------------------------------------------------------
# degeneracy


@dataclass
class DegeneracyResult:
    eta_star: float | None
    crossed: bool
    eta_bound: float
    location: str | None
    point: list[float] | None
    level: float | None
    per_level: list[float]
    spread: float | None
    simultaneous: bool

    def to_dict(self) -> dict:
        return {
            "eta_star": self.eta_star,
            "crossed": self.crossed,
            "eta_bound": self.eta_bound,
            "location": self.location,
            "point": self.point,
            "level": self.level,
            "per_level_eta": self.per_level,
            "relative_spread": self.spread,
            "simultaneous": self.simultaneous,
        }


def degeneracy_from_samples(levels, kappas, A: float, eta_grid, points=None,
                            simultaneous_tol: float = 0.02) -> DegeneracyResult:
    """Smallest eta at which ``min kappa_s - eta exp(A c)`` reaches zero.

    ``kappas[k]`` holds the smallest principal curvature of every sample on
    level ``levels[k]``.
    """
    grid = np.asarray(eta_grid, dtype=float)
    if grid.size < 2 or grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise ArgError("eta grid must ascend from 0")
    lv = np.asarray(levels, dtype=float)
    scaled = [np.asarray(k, dtype=float) * math.exp(-A * c) for k, c in zip(kappas, lv)]
    per_level = np.array([s.min() for s in scaled])
    # min over samples of kappa - eta g, g = exp(A c) > 0
    g = np.exp(A * lv)
    kmin = np.array([np.min(k) for k in kappas])
    vals = np.array([np.min(kmin - eta * g) for eta in grid])
    hit = np.flatnonzero(vals <= 0)
    if hit.size == 0:
        return DegeneracyResult(None, False, float(grid[-1]), None, None, None,
                                per_level.tolist(), None, False)
    k = int(hit[0])
    if k == 0:
        eta = 0.0
    else:
        e0, e1, v0, v1 = grid[k - 1], grid[k], vals[k - 1], vals[k]
        eta = float(e0 + (e1 - e0) * v0 / (v0 - v1))
    j = int(np.argmin(per_level))
    location = "boundary-adjacent" if j in (0, len(lv) - 1) else "interior"
    pt = None
    if points is not None:
        pt = [float(x) for x in points[j]]
    spread = float((per_level.max() - per_level.min()) / eta) if eta > 0 else None
    simultaneous = spread is not None and spread <= simultaneous_tol
    return DegeneracyResult(eta, True, float(grid[-1]), location, pt, float(lv[j]),
                            per_level.tolist(), spread, simultaneous)


def default_eta_grid(kappas, levels, A: float, count: int = 2001) -> np.ndarray:
    """Grid on ``[0, 2 max_c min kappa e^{-A c}]``, which brackets every per-level crossing."""
    top = max(float(np.min(k)) * math.exp(-A * c) for k, c in zip(kappas, levels))
    return np.linspace(0.0, 2.0 * max(top, 1e-12), count)


def degeneracy_scan(snapshot, A: float, eta_grid=None, levels=None, cache: CurveCache | None = None,
                    simultaneous_tol: float = 0.02) -> DegeneracyResult:
    cache = cache or CurveCache()
    levels = default_levels() if levels is None else levels
    kappas, points = [], []
    for c in levels:
        curve = cache.get(snapshot, c)
        k = curve.curvatures[curve.valid, 0]
        if k.size == 0:
            raise LevelError(f"all samples skipped on level {c}")
        kappas.append(k)
        points.append(curve.points[curve.valid][int(np.argmin(k))])
    if eta_grid is None:
        eta_grid = default_eta_grid(kappas, levels, A)
    return degeneracy_from_samples(levels, kappas, A, eta_grid, points, simultaneous_tol)


# ----------------------------------------------------------------------------
# report


@dataclass
class Flag:
    name: str
    value: float
    threshold: float
    passed: bool
    relation: str
    gating: bool = True

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "threshold": self.threshold,
            "relation": self.relation,
            "passed": self.passed,
            "gating": self.gating,
        }


@dataclass
class VerificationReport:
    scenario: dict
    rank: dict
    bound: dict
    quasiconcavity: dict
    structure: dict
    degeneracy: dict
    flags: list[Flag]

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.flags if f.gating)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "rank": self.rank,
            "bound": self.bound,
            "quasiconcavity": self.quasiconcavity,
            "structure": self.structure,
            "degeneracy": self.degeneracy,
            "flags": {f.name: f.to_dict() for f in self.flags},
        }


def run_verification(snapshots, spec, opts: AnalysisOptions | None = None, scenario: dict | None = None,
                     with_structure: bool = True) -> VerificationReport:
    """Full rank / bound / convexity / structure / degeneracy suite.

    Rank constancy is judged on snapshots with t > 0 when there are any (the
    initial data may carry flat pieces); monotonicity uses every snapshot.
    The bound and degeneracy analyses use the last snapshot.
    """
    from .structure import concavity_scan

    opts = opts or AnalysisOptions()
    snaps = list(snapshots)
    if not snaps:
        raise ArgError("verification needs snapshots")
    cache = CurveCache(opts)
    levels = opts.levels
    flags: list[Flag] = []

    prof = rank_profile(snaps, levels, opts.rank_tol, cache)
    later = [k for k, t in enumerate(prof.times) if t > 0]
    start = later[0] if later else 0
    mixed = sum(prof.mixed(k) for k in range(start, len(prof.times)))
    flags.append(Flag("rank_constant", float(mixed), 0.0, mixed == 0, "<="))
    if len(snaps) >= 2:
        mono_ok, witness = check_rank_monotonicity(prof)
    else:
        mono_ok, witness = True, None
    flags.append(Flag("rank_monotone", 0.0 if mono_ok else 1.0, 0.0, mono_ok, "<="))
    rank = prof.to_dict()
    rank["constancy_from_time"] = prof.times[start]
    rank["monotone_witness"] = list(witness) if witness else None

    qc_ok, defects = quasiconcavity_scan(snaps, levels, opts.defect_tol, opts.psd_tol, cache)
    worst = max(d.defect for d in defects)
    tol = opts.defect_tol if _field(snaps[0]).grid.dim == 2 else opts.psd_tol
    flags.append(Flag("quasiconcavity", worst, tol, qc_ok, "<="))
    quasi = {
        "threshold": tol,
        "max_defect": worst,
        "defects": [{"t": d.time, "c": d.level, "defect": d.defect} for d in defects],
    }

    final = snaps[-1]
    kc = kappa_curve(final, levels, opts.min_samples, cache)
    try:
        br = bound_for_curve(kc, opts)
        bound = br.to_dict()
        bound["samples"] = kc.samples
        flags.append(Flag("bound_holds", br.min_rel_margin, -opts.fit_tol, br.min_rel_margin >= -opts.fit_tol, ">="))
        flags.append(Flag("bound_monotone_path", float(br.monotone_path), 1.0, br.monotone_path, ">="))
        flags.append(Flag("all_equality", float(br.equality.mean()), 1.0, br.all_equality, ">=", gating=False))
        flags.append(Flag("equality_propagation", float(br.equality_propagates), 1.0,
                          br.equality_propagates, ">=", gating=False))
        A = br.A
        final_fit = br
    except FitError as exc:
        final_fit = None
        bound = {"error": str(exc), "levels": kc.pairs()}
        flags.append(Flag("bound_holds", -math.inf, -opts.fit_tol, False, ">="))
        A = 0.0
    except ArgError as exc:
        # nonpositive boundary proxies: the bound's hypothesis is not met
        final_fit = None
        bound = {"error": str(exc), "applicable": False, "levels": kc.pairs()}
        flags.append(Flag("bound_holds", float(min(kc.kappa[0], kc.kappa[-1])), 0.0, False, ">", gating=False))
        A = 0.0

    series = []
    for k, snap in enumerate(snaps):
        entry = {"index": k, "time": float(_field(snap).time)}
        try:
            if snap is final and final_fit is None:
                raise FitError(bound['error'])
            fit = final_fit if snap is final else bound_for_curve(kappa_curve(snap, levels, opts.min_samples, cache), opts)
            entry.update(A=fit.A, rows=[[float(c), float(kv), float(b), float(m)] for c, kv, b, m in
                                        zip(fit.levels, fit.kappa, fit.bound, fit.margins)])
        except (FitError, LevelError, ArgError) as exc:
            entry["error"] = str(exc)
        series.append(entry)
    bound["per_snapshot"] = series

    dg = degeneracy_scan(final, A, opts.eta_grid, levels, cache)
    degeneracy = dg.to_dict()
    degeneracy["A"] = A

    if with_structure:
        rep = concavity_scan(spec, snaps, opts.sampling, opts.gradient_floor, opts.corner_exclusion)
        structure = rep.to_dict()
        flags.append(Flag("ellipticity", rep.lambda_min, 0.0, rep.lambda_min > 0, ">"))
        flags.append(Flag("structure_concave", rep.worst_hessian_margin, 0.0, rep.concave_everywhere, "<=",
                          gating=False))
        flags.append(Flag("q_rayleigh_consistent", float(rep.rayleigh_ok), 1.0, rep.rayleigh_ok, ">="))
    else:
        structure = {}

    scen = dict(scenario or {})
    scen["snapshot_times"] = [float(_field(s).time) for s in snaps]
    scen["levels"] = [float(c) for c in levels]
    return VerificationReport(scen, rank, bound, quasi, structure, degeneracy, flags)
