import math

import numpy as np
import pytest

from levelcurv import (
    Ball, ConvexRing, OperatorSpec, Polygon, Scenario, advance, initial_data, parse_body, solve_scenario,
)
from levelcurv.errors import ArgError, StabilityError
from levelcurv.levelsets import convexity_defect, extract_level_set
from levelcurv.solver import Stepper, gauge_values, radial_profile


def steady(ring, res, spec=None, initial="gauge", tol=1e-10):
    sc = Scenario(ring, res, spec or OperatorSpec.heat(), initial=initial, t_end=200.0,
                  snapshot_every=200.0, steady_tol=tol)
    return solve_scenario(sc)


def profile_error(snap, ring):
    fld = snap.field
    exact = radial_profile(ring)(fld.grid.node_points()).reshape(fld.grid.shape)
    return float(np.abs(fld.values - exact)[fld.mask.interior].max())


def test_radial_profile_value(disc_ring):
    assert radial_profile(disc_ring)(np.array([[1.5, 0.0]]))[0] == pytest.approx(math.log(2 / 1.5) / math.log(2))
    assert radial_profile(disc_ring)(np.array([[1.5, 0.0]]))[0] == pytest.approx(0.4150, abs=5e-5)


def test_radial_profile_3d():
    ring = ConvexRing(Ball((0, 0, 0), 2.0), Ball((0, 0, 0), 1.0))
    u = radial_profile(ring)
    assert np.allclose(u(np.array([[2.0, 0, 0], [0, 1.0, 0]])), (0.0, 1.0))
    # harmonic: (1/r - 1/2) / (1 - 1/2)
    assert u(np.array([[1.5, 0, 0]]))[0] == pytest.approx((1 / 1.5 - 0.5) / 0.5)


def test_radial_needs_concentric_balls(square_ring):
    with pytest.raises(ArgError):
        initial_data(square_ring, "radial", resolution=32)
    with pytest.raises(ArgError):
        initial_data(square_ring, "bogus", resolution=32)


def test_radial_initial_level_sets_are_circles(disc_ring):
    fld = initial_data(disc_ring, "radial", resolution=96)
    h = fld.grid.h
    for c in (0.1, 0.5, 0.9):
        r = np.linalg.norm(extract_level_set(fld, c).polylines[0], axis=1)
        assert np.abs(r - 2.0 * 0.5**c).max() <= 2 * h


def test_gauge_data_boundary_values_and_convexity(square_ring):
    fld = initial_data(square_ring, "gauge", resolution=64)
    m = fld.mask
    vals = fld.values.ravel()[m.boundary_nodes]
    assert np.array_equal(vals, m.boundary_value)
    outer = square_ring.outer.boundary_samples(64)
    inner = square_ring.inner.boundary_samples(64)
    assert np.allclose(gauge_values(square_ring, outer), 0.0, atol=1e-9)
    assert np.allclose(gauge_values(square_ring, inner), 1.0, atol=1e-9)
    for c in np.linspace(0.05, 0.95, 10):
        assert convexity_defect(extract_level_set(fld, c)) <= 1.0


def test_gauge_level_set_is_minkowski_combination(square_ring):
    # along direction d the level-c curve's support equals (1-c) h0(d) + c h1(d)
    fld = initial_data(square_ring, "gauge", resolution=128)
    dirs = np.c_[np.cos(np.linspace(0, 2 * np.pi, 16, endpoint=False)),
                 np.sin(np.linspace(0, 2 * np.pi, 16, endpoint=False))]
    for c in (0.25, 0.5, 0.75):
        p = np.vstack(extract_level_set(fld, c).polylines)
        support = (p @ dirs.T).max(axis=0)
        want = (1 - c) * square_ring.outer.support(dirs) + c * square_ring.inner.support(dirs)
        assert np.abs(support - want).max() <= 2 * fld.grid.h


def test_advance_steady_profile(disc_ring):
    fld = initial_data(disc_ring, "radial", resolution=64)
    stepper = Stepper(fld.mask, OperatorSpec.heat())
    dt = stepper.stability_bound()
    new = advance(fld, OperatorSpec.heat(), dt)
    h = fld.grid.h
    nodes = stepper.st.nodes
    change = (new.values.ravel() - fld.values.ravel())[nodes]
    f = stepper.rate(stepper.interior_of(fld))
    regular = stepper.free & (stepper.st.min_fraction(axes_only=True) == 1.0)
    # steady state of the continuum equation: residual O(h^2) on full stencils
    assert np.abs(f[regular]).max() <= 2 * h**2
    assert np.allclose(change[stepper.free], dt * f[stepper.free], rtol=0, atol=1e-15)
    # slaved nodes move by the interpolation error only
    assert np.abs(change[~stepper.free]).max() <= h**3
    assert new.time == pytest.approx(dt)
    b = fld.mask.boundary_nodes
    assert np.array_equal(new.values.ravel()[b], fld.values.ravel()[b])


def test_advance_rejects_unstable_step(disc_ring):
    fld = initial_data(disc_ring, "radial", resolution=64)
    h = fld.grid.h
    with pytest.raises(StabilityError):
        advance(fld, OperatorSpec.heat(), 10 * h**2, cfl_factor=0.5)


def test_t_end_zero_returns_initial(disc_ring):
    sc = Scenario(disc_ring, 32, OperatorSpec.heat(), initial="gauge", t_end=0.0)
    res = solve_scenario(sc)
    assert len(res) == 1
    init = initial_data(disc_ring, "gauge", resolution=32)
    assert np.array_equal(res[0].field.values, init.values, equal_nan=True)
    assert res[0].time == 0.0


def test_snapshot_cadence_and_bounds(square_ring):
    sc = Scenario(square_ring, 48, OperatorSpec.heat(), initial="gauge", t_end=0.3, snapshot_every=0.1)
    res = solve_scenario(sc)
    assert [round(s.time, 12) for s in res] == [0.0, 0.1, 0.2, 0.3]
    assert [s.index for s in res] == [0, 1, 2, 3]
    for s in res:
        v = s.field.values[~s.field.mask.exterior]
        assert v.min() >= 0.0 and v.max() <= 1.0
        b = s.field.mask.boundary_nodes
        assert np.array_equal(s.field.values.ravel()[b], s.field.mask.boundary_value)


def test_heat_from_gauge_converges_second_order(disc_ring):
    errs = [profile_error(steady(disc_ring, res).final, disc_ring) for res in (32, 64)]
    assert 3.0 <= errs[0] / errs[1] <= 5.0
    h = 4.0 / 64
    assert errs[1] <= 0.5 * h**2


def test_residual_decays_monotonically(disc_ring):
    sc = Scenario(disc_ring, 32, OperatorSpec.heat(), initial="gauge", t_end=3.0, snapshot_every=0.1,
                  steady_tol=1e-12)
    res = [s.max_residual for s in solve_scenario(sc)]
    assert all(b <= 1.01 * a for a, b in zip(res, res[1:]))
    assert res[-1] < 1e-2 * res[0]


def test_linear_isotropic_matches_heat_steady_state(disc_ring):
    a = steady(disc_ring, 32, OperatorSpec.heat(), initial="radial", tol=1e-13).final.field.values
    b = steady(disc_ring, 32, OperatorSpec.linear(2 * np.eye(2)), initial="radial", tol=1e-13).final.field.values
    assert np.nanmax(np.abs(a - b)) <= 1e-10


def test_presolve_initial_is_steady(disc_ring):
    fld = initial_data(disc_ring, "presolve", resolution=32, steady_tol=1e-10)
    stepper = Stepper(fld.mask, OperatorSpec.heat())
    assert stepper.residual(stepper.rate(stepper.interior_of(fld))) < 1e-10


def test_min_initial_rate_reported(square_ring, caplog):
    sc = Scenario(square_ring, 32, OperatorSpec.heat(), initial="gauge", t_end=0.01, snapshot_every=0.01)
    res = solve_scenario(sc)
    assert math.isfinite(res.min_initial_rate)
    if res.min_initial_rate <= 0:
        assert any("min F" in r.message for r in caplog.records)


def test_deterministic_reruns(square_ring):
    sc = Scenario(square_ring, 40, OperatorSpec.grad_augmented(np.eye(2), 0.3), initial="gauge",
                  t_end=0.1, snapshot_every=0.05)
    a, b = solve_scenario(sc), solve_scenario(sc)
    assert len(a) == len(b)
    for s, t in zip(a, b):
        assert s.field.values.tobytes() == t.field.values.tobytes()


@pytest.mark.parametrize("ring", [
    ConvexRing(Ball((0.0, 0.0), 2.0), Polygon(np.array([[-0.5, -0.4], [0.6, -0.3], [0.0, 0.5]]))),
    ConvexRing(parse_body("ellipse 0 0 2 1.2"), parse_body("ball 0.3 0 0.4")),
], ids=["triangle-hole", "ellipse"])
def test_other_bodies_stay_in_range(ring):
    res = solve_scenario(Scenario(ring, 40, OperatorSpec.heat(), t_end=0.05, snapshot_every=0.05))
    v = res.final.field.values[~res.final.field.mask.exterior]
    assert 0.0 <= v.min() and v.max() <= 1.0
    assert res.final.time == pytest.approx(0.05)


def test_3d_radial_steady():
    ring = ConvexRing(Ball((0, 0, 0), 2.0), Ball((0, 0, 0), 1.0))
    res = steady(ring, 20, initial="gauge", tol=1e-7)
    assert res.final.steady
    h = 4.0 / 20
    assert profile_error(res.final, ring) <= 0.5 * h**2
