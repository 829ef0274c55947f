import numpy as np
import pytest

from levelcurv import Ball, ConvexRing, OperatorSpec, Polygon, Scenario, build_grid, solve_scenario
from levelcurv.grid import ScalarField


@pytest.fixture(scope="session")
def disc_ring():
    return ConvexRing(Ball((0.0, 0.0), 2.0), Ball((0.0, 0.0), 1.0))


@pytest.fixture(scope="session")
def square_ring():
    square = Polygon(np.array([[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]]))
    return ConvexRing(square, Ball((0.4, 0.2), 0.6))


@pytest.fixture(scope="session")
def radial_steady(disc_ring):
    """Heat flow on the disc ring run to steady state at 128 cells per axis."""
    sc = Scenario(disc_ring, 127, OperatorSpec.heat(), initial="radial", t_end=50.0,
                  snapshot_every=50.0, steady_tol=1e-8)
    return solve_scenario(sc)


@pytest.fixture(scope="session")
def square_flow(square_ring):
    sc = Scenario(square_ring, 127, OperatorSpec.heat(), initial="gauge", t_end=0.45,
                  snapshot_every=0.05, steady_tol=1e-10)
    return solve_scenario(sc)


def analytic_field(ring, resolution, func, time=0.0):
    grid, mask = build_grid(ring, resolution)
    return ScalarField.from_function(grid, mask, func, time)
