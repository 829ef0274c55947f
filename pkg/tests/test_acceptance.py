"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` or directly as a script.
Tolerances are pinned below and are not tuned to the measured values.
"""

import functools
import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from levelcurv import (  # noqa: E402
    Ball, ConvexRing, OperatorSpec, Polygon, Scenario, build_grid, ellipticity_lambda, fd_jet, solve_scenario,
)
from levelcurv.geometry import frame_weingarten, projected_curvatures, weingarten_batch  # noqa: E402
from levelcurv.grid import ScalarField  # noqa: E402
from levelcurv.jets import Jet2  # noqa: E402
from levelcurv.solver import radial_profile  # noqa: E402
from levelcurv.structure import (  # noqa: E402
    StructState, coord_pairs, ftilde_hessian, path_second_difference, q_form,
)
from levelcurv.symfun import phi, phi_eps, sigma, sigma_all, sigma_deleted  # noqa: E402
from levelcurv.verify import (  # noqa: E402
    AnalysisOptions, CurveCache, bound_for_curve, check_rank_monotonicity, default_levels, degeneracy_scan,
    kappa_curve, quasiconcavity_scan, rank_profile,
)

LN2 = math.log(2.0)

# criterion 1
C1_RESOLUTION = 255  # 257 nodes per axis
C1_RESIDUAL = 1e-8
C1_KAPPA_REL = 0.02
C1_A_REL = 0.05
C1_EQ_TOL = 0.03
C1_SECONDS = 60.0
# criterion 2
C2_SPHERE_REL = 1e-12
C2_PATHS = 1e-10
C2_JETS = 1000
C2_GRAD_MIN = 0.1
C2_RATIO = (3.0, 5.0)
C2_SECONDS = 5.0
# criterion 3
C3_SAMPLES = 500
C3_REL = 1e-12
C3_SECONDS = 5.0
# criterion 4
C4_HESS = 1e-6
C4_Q_REL = 1e-5
C4_PATHS = 100
C4_SECONDS = 10.0
# criterion 5
C5_RESOLUTION = 127  # 129 nodes per axis
C5_SNAPSHOTS = 10
C5_DEFECT = 5.0
C5_SECONDS = 120.0
# criterion 6
C6_ETA = 0.5
C6_REL = 0.02
C6_SECONDS = 10.0
# criterion 7
C7_RATIO = (3.0, 5.0)


def emit(name, ok, detail, capsys=None):
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return line


def disc_ring():
    return ConvexRing(Ball((0.0, 0.0), 2.0), Ball((0.0, 0.0), 1.0))


def square_ring():
    square = Polygon(np.array([[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]]))
    return ConvexRing(square, Ball((0.4, 0.2), 0.6))


@functools.lru_cache(maxsize=None)
def radial_solution():
    t0 = time.perf_counter()
    sc = Scenario(disc_ring(), C1_RESOLUTION, OperatorSpec.heat(), initial="gauge", t_end=50.0,
                  snapshot_every=50.0, steady_tol=C1_RESIDUAL)
    return solve_scenario(sc), time.perf_counter() - t0


@functools.lru_cache(maxsize=None)
def square_solution():
    t0 = time.perf_counter()
    sc = Scenario(square_ring(), C5_RESOLUTION, OperatorSpec.heat(), initial="gauge",
                  t_end=0.05 * (C5_SNAPSHOTS - 1), snapshot_every=0.05, steady_tol=1e-10)
    return solve_scenario(sc), time.perf_counter() - t0


# ----------------------------------------------------------------------------


def check_radial_equality():
    res, solve_time = radial_solution()
    t0 = time.perf_counter()
    final = res.final
    opts = AnalysisOptions(eq_tol=C1_EQ_TOL)
    kc = kappa_curve(final, opts.levels, opts.min_samples, CurveCache(opts))
    want = 0.5 * 2.0**kc.levels
    kerr = float(np.max(np.abs(kc.kappa - want) / want))
    br = bound_for_curve(kc, opts)
    aerr = abs(br.A - LN2) / LN2
    elapsed = solve_time + time.perf_counter() - t0
    ok = (final.max_residual < C1_RESIDUAL and len(kc.levels) == 25 and kerr <= C1_KAPPA_REL
          and aerr <= C1_A_REL and br.all_equality and elapsed < C1_SECONDS)
    detail = (f"residual {final.max_residual:.4e}, max kappa rel err {kerr:.4f} at {len(kc.levels)} levels, "
              f"A* {br.A:.5f} (rel err {aerr:.4f}), all_equality {br.all_equality}, {elapsed:.1f} s")
    return ok, detail


def _radial_fd_curvature_error(resolution):
    ring = disc_ring()
    grid, mask = build_grid(ring, resolution)
    fld = ScalarField.from_function(grid, mask, radial_profile(ring))
    pts = grid.node_points()
    r = np.hypot(pts[:, 0], pts[:, 1])
    # nodes shared by both refinements with full stencils around them
    step = 4.0 / 32
    on_coarse = np.all(np.abs(pts / step - np.round(pts / step)) < 1e-9, axis=1)
    sel = np.flatnonzero(on_coarse & (r > 1.2) & (r < 1.8) & mask.interior.ravel())
    err = 0.0
    for i in sel:
        jet = fd_jet(fld, np.unravel_index(i, grid.shape))
        _, w = frame_weingarten(jet)
        err = max(err, abs(w.kappa_min - 1.0 / r[i]) * r[i])
    return err, len(sel)


def check_curvature_kernel():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_sphere = 0.0
    for n in (2, 3):
        for _ in range(200):
            x = rng.normal(size=n)
            x *= rng.uniform(0.2, 3.0) / np.linalg.norm(x)
            r = float(np.linalg.norm(x))
            _, w = frame_weingarten(Jet2(1 - r * r, -2 * x, -2 * np.eye(n), x))
            worst_sphere = max(worst_sphere, float(np.max(np.abs(w.curvatures - 1 / r))) * r)
    worst_paths = 0.0
    for n in (2, 3):
        g = rng.normal(size=(C2_JETS, n))
        norms = np.linalg.norm(g, axis=1)
        g *= (C2_GRAD_MIN + rng.exponential(1.0, size=C2_JETS))[:, None] / norms[:, None]
        h = rng.normal(size=(C2_JETS, n, n)) * 3
        h = 0.5 * (h + np.swapaxes(h, 1, 2))
        valid, _, _, curv = weingarten_batch(g, h, check=False)
        other = np.sort(projected_curvatures(g, h), axis=1)
        err = np.abs(curv - other).max(axis=1) / (1 + np.abs(curv).max(axis=1))
        worst_paths = max(worst_paths, float(err.max()))
        assert valid.all()
    e1, n1 = _radial_fd_curvature_error(64)
    e2, n2 = _radial_fd_curvature_error(128)
    ratio = e1 / e2
    elapsed = time.perf_counter() - t0
    ok = (worst_sphere <= C2_SPHERE_REL and worst_paths <= C2_PATHS and n1 == n2 > 0
          and C2_RATIO[0] <= ratio <= C2_RATIO[1] and elapsed < C2_SECONDS)
    detail = (f"sphere rel err {worst_sphere:.1e}, frame vs projected {worst_paths:.1e}, "
              f"fd curvature ratio {ratio:.2f} over {n1} nodes, {elapsed:.2f} s")
    return ok, detail


def _brute(k, values):
    return sum(math.prod(c) for c in itertools.combinations(values, k))


def check_symfun():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(C3_SAMPLES):
        v = list(rng.uniform(-5, 5, size=int(rng.integers(1, 7))))
        e = sigma_all(v)
        j = int(rng.integers(0, len(v)))
        rest = v[:j] + v[j + 1:]
        for k in range(len(v) + 1):
            scale = max(_brute(k, np.abs(v)), 1e-300)
            worst = max(worst, abs(e[k] - _brute(k, v)) / scale)
            if k <= len(v) - 1:
                scale = max(_brute(k, np.abs(rest)), 1e-300)
                worst = max(worst, abs(sigma_deleted(k, v, j) - _brute(k, rest)) / scale)
    phi_ok = True
    for _ in range(C3_SAMPLES):
        m = int(rng.integers(2, 7))
        l = int(rng.integers(0, m))
        spec = np.zeros(m)
        spec[:l] = rng.uniform(0.01, 10, size=l)
        phi_ok &= phi(rng.permutation(spec), l).phi == 0.0
        spec[l] = rng.uniform(0.01, 10)
        phi_ok &= phi(rng.permutation(spec), l).phi > 0
    mono_ok = True
    for _ in range(C3_SAMPLES):
        m = int(rng.integers(1, 7))
        spec = rng.uniform(0, 10, size=m) * (rng.uniform(size=m) < 0.6)
        l = int(rng.integers(0, m))
        eps = np.sort(rng.uniform(0, 5, size=4))
        vals = [phi_eps(spec, l, e).phi for e in eps]
        mono_ok &= all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))
    sandwich_ok = True
    for _ in range(C3_SAMPLES):
        bad = list(rng.uniform(0, 10, size=int(rng.integers(2, 7))))
        good = list(rng.uniform(0.01, 10, size=int(rng.integers(0, 4))))
        j = int(rng.integers(0, len(bad)))
        s1 = sigma(1, bad)
        sg = sigma(len(good), good)
        s2 = sigma_deleted(2, bad, j) if len(bad) >= 3 else 0.0
        mid = sg + (sigma_deleted(1, bad, j) ** 2 - s2) / s1**2
        sandwich_ok &= sg <= mid * (1 + 1e-12) and mid <= (sg + 1) * (1 + 1e-12)
    elapsed = time.perf_counter() - t0
    ok = worst <= C3_REL and phi_ok and mono_ok and sandwich_ok and elapsed < C3_SECONDS
    detail = (f"worst sigma rel err {worst:.1e}, phi rank test {phi_ok}, phi_eps monotone {mono_ok}, "
              f"sandwich {sandwich_ok}, {elapsed:.2f} s")
    return ok, detail


def _linear_oracle(m, st):
    n = st.dim
    pairs = coord_pairs(n)
    h = np.zeros((len(pairs) + 1, len(pairs) + 1))
    for i, (a, b) in enumerate(pairs):
        # an off-diagonal coordinate moves both A_ab and A_ba
        h[i, -1] = h[-1, i] = 2 * st.s * (m[a, b] if a == b else m[a, b] + m[b, a])
    h[-1, -1] = 2 * np.trace(m @ st.A)
    return h


def check_structure():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst_h = 0.0
    worst_q = 0.0
    for k in range(C4_PATHS):
        n = 2 + k % 2
        a = rng.normal(size=(n, n))
        m = a @ a.T + 0.2 * np.eye(n)
        spec = OperatorSpec.linear(m)
        A = rng.normal(size=(n, n))
        theta = rng.normal(size=n)
        st = StructState(0.5 * (A + A.T), float(rng.uniform(0.2, 3)), theta / np.linalg.norm(theta), 0.5, 0.0)
        worst_h = max(worst_h, float(np.abs(ftilde_hessian(spec, st) - _linear_oracle(m, st)).max()))
        for other in (spec, OperatorSpec.heat(), OperatorSpec.grad_augmented(m, float(rng.normal()))):
            xt = rng.normal(size=(n, n))
            xt = 0.5 * (xt + xt.T)
            yt = float(rng.normal())
            q = q_form(other, st, xt, yt)
            d2 = path_second_difference(other, st, xt, yt)
            worst_q = max(worst_q, abs(q - d2) / max(abs(q), 1e-300))
    probe = [Jet2(0.0, np.array([0.0, 1.0]), np.eye(2), np.zeros(2))]
    lam = ellipticity_lambda(OperatorSpec.linear(np.diag([2.0, 3.0])), probe)
    elapsed = time.perf_counter() - t0
    ok = worst_h <= C4_HESS and worst_q <= C4_Q_REL and lam == 2.0 and elapsed < C4_SECONDS
    detail = (f"FD vs closed-form Hessian {worst_h:.1e}, q_form vs second difference rel {worst_q:.1e}, "
              f"lambda {lam}, {elapsed:.2f} s")
    return ok, detail


def check_square_flow():
    res, solve_time = square_solution()
    t0 = time.perf_counter()
    snaps = res.snapshots
    opts = AnalysisOptions()
    cache = CurveCache(opts)
    qc_ok, defects = quasiconcavity_scan(snaps, opts.levels, C5_DEFECT, cache=cache)
    worst = max(d.defect for d in defects)
    prof = rank_profile(snaps, opts.levels, opts.rank_tol, cache)
    mono_ok, witness = check_rank_monotonicity(prof)
    later = [k for k, t in enumerate(prof.times) if t > 0]
    const_one = all(prof.l_of_t[k] == 1 and prof.mixed(k) == 0 for k in later)
    elapsed = solve_time + time.perf_counter() - t0
    ok = (len(snaps) == C5_SNAPSHOTS and qc_ok and worst <= C5_DEFECT and mono_ok and const_one
          and elapsed < C5_SECONDS)
    detail = (f"{len(snaps)} snapshots, max defect {worst:.3f}, l(t) {prof.l_of_t}, monotone {mono_ok}, "
              f"rank 1 everywhere for t > 0 {const_one}, {elapsed:.1f} s")
    return ok, detail


def check_degeneracy():
    res, _ = radial_solution()
    t0 = time.perf_counter()
    dg = degeneracy_scan(res.final, LN2, levels=default_levels())
    elapsed = time.perf_counter() - t0
    err = abs(dg.eta_star - C6_ETA) / C6_ETA if dg.crossed else math.inf
    ok = dg.crossed and err <= C6_REL and dg.simultaneous and elapsed < C6_SECONDS
    detail = (f"eta* {dg.eta_star}, rel err {err:.4f}, simultaneous {dg.simultaneous} "
              f"(spread {dg.spread}), {elapsed:.2f} s")
    return ok, detail


def _steady_error(resolution):
    ring = disc_ring()
    sc = Scenario(ring, resolution, OperatorSpec.heat(), initial="gauge", t_end=200.0, snapshot_every=1.0,
                  steady_tol=1e-10)
    res = solve_scenario(sc)
    fld = res.final.field
    exact = radial_profile(ring)(fld.grid.node_points()).reshape(fld.grid.shape)
    err = float(np.abs(fld.values - exact)[fld.mask.interior].max())
    return err, res


def check_solver():
    e1, r1 = _steady_error(32)
    e2, r2 = _steady_error(64)
    ratio = e1 / e2
    runs = [r1, r2, square_solution()[0], radial_solution()[0]]
    lo = min(float(np.nanmin(s.field.values)) for r in runs for s in r.snapshots)
    hi = max(float(np.nanmax(s.field.values)) for r in runs for s in r.snapshots)
    again = _steady_error(32)[1]
    identical = len(again) == len(r1) and all(
        a.field.values.tobytes() == b.field.values.tobytes() for a, b in zip(again.snapshots, r1.snapshots))
    ok = C7_RATIO[0] <= ratio <= C7_RATIO[1] and lo >= 0.0 and hi <= 1.0 and identical
    detail = (f"steady errors {e1:.2e} / {e2:.2e} (ratio {ratio:.2f}), u in [{lo:.3g}, {hi:.3g}], "
              f"bit-identical rerun {identical}")
    return ok, detail


CRITERIA = [
    ("C1 radial equality case", check_radial_equality),
    ("C2 curvature kernel", check_curvature_kernel),
    ("C3 symmetric functions", check_symfun),
    ("C4 structure checker", check_structure),
    ("C5 convexity and rank on square ring", check_square_flow),
    ("C6 degeneracy scan", check_degeneracy),
    ("C7 solver correctness", check_solver),
]


@pytest.mark.parametrize("name, check", CRITERIA, ids=[f"C{k + 1}" for k in range(len(CRITERIA))])
def test_criterion(name, check, capsys):
    ok, detail = check()
    emit(name, ok, detail, capsys)
    assert ok, detail


if __name__ == "__main__":
    results = []
    for name, check in CRITERIA:
        ok, detail = check()
        emit(name, ok, detail)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
