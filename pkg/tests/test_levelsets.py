import math

import numpy as np
import pytest

from levelcurv import Ball, ConvexRing
from levelcurv.errors import ArgError, LevelError
from levelcurv.levelsets import (
    convexity_defect, extract_level_set, is_inside_polygon, marching_squares, polyline_length,
)
from levelcurv.solver import radial_profile

from conftest import analytic_field


def paraboloid(p):
    return 1.0 - np.sum(p**2, axis=1)


@pytest.fixture(scope="module")
def cap_field():
    ring = ConvexRing(Ball((0.0, 0.0), 2.0), Ball((0.0, 0.0), 0.2))
    return analytic_field(ring, 128, paraboloid)


def signed_area(p):
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def test_circle_level_set(cap_field):
    h = cap_field.grid.h
    curve = extract_level_set(cap_field, 0.75)
    assert len(curve.polylines) == 1 and curve.closed == [True]
    p = curve.polylines[0]
    assert len(p) >= 16
    assert abs(np.linalg.norm(p, axis=1).mean() - 0.5) <= 2 * h**2
    assert abs(polyline_length(p) - math.pi) <= 5 * h**2
    # {u >= c} (the disc) lies on the left: counterclockwise traversal
    assert signed_area(p) > 0
    assert convexity_defect(curve) == 0.0
    assert curve.valid.all()
    # vertices sit slightly off the circle; the level curve through each has radius |p|
    assert np.allclose(curve.curvatures[:, 0], 1.0 / np.linalg.norm(p, axis=1), rtol=1e-8)
    assert np.allclose(np.linalg.norm(curve.normals, axis=1), 1.0, atol=1e-12)
    # inner normal points toward larger u, i.e. toward the origin
    assert np.all(np.sum(curve.normals * p, axis=1) < 0)


def test_level_out_of_range(cap_field):
    with pytest.raises(LevelError):
        extract_level_set(cap_field, 2.0)
    with pytest.raises(LevelError):
        extract_level_set(cap_field, -10.0)


def test_nested_level_sets(disc_ring):
    fld = analytic_field(disc_ring, 96, radial_profile(disc_ring))
    outer = extract_level_set(fld, 0.3).polylines[0]
    inner = extract_level_set(fld, 0.7).polylines[0]
    assert is_inside_polygon(inner, outer).all()
    assert not is_inside_polygon(outer, inner).any()


def test_radial_log_levels_convex(disc_ring):
    fld = analytic_field(disc_ring, 128, radial_profile(disc_ring))
    h = fld.grid.h
    for c in np.linspace(0.02, 0.98, 25):
        curve = extract_level_set(fld, c)
        assert convexity_defect(curve) <= 5
        r = np.linalg.norm(curve.polylines[0], axis=1)
        assert np.abs(r - 2 * 2 ** (-c)).max() <= 2 * h


def test_perturbed_field_is_flagged(disc_ring):
    base = radial_profile(disc_ring)
    bump = lambda p: base(p) + 0.4 * np.exp(-((p[:, 0] - 1.5) ** 2 + p[:, 1] ** 2) / 0.02)
    fld = analytic_field(disc_ring, 128, bump)
    assert convexity_defect(extract_level_set(fld, 0.6)) > 5


def test_convexity_defect_examples():
    t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    assert convexity_defect(np.c_[np.cos(t), np.sin(t)], h=0.01) == 0.0
    assert convexity_defect(np.array([[0, 0], [1, 0], [0.2, 0.7]]), h=0.01) == 0.0
    # a single reflex turn of -0.1 rad
    a = 0.1
    pts = [np.zeros(2), np.array([1.0, 0.0])]
    pts.append(pts[-1] + np.array([math.cos(-a), math.sin(-a)]))
    poly = np.array(pts + [np.array([1.0, 3.0]), np.array([0.0, 3.0])])
    z = convexity_defect(poly, h=0.01)
    assert z == pytest.approx(math.sin(a) / 0.01, rel=1e-12)
    with pytest.raises(ArgError):
        convexity_defect(poly, h=0.01, closed=False)
    with pytest.raises(ArgError):
        convexity_defect(poly)


def test_saddle_cells_use_cell_average():
    # checkerboard corners: average above the level joins the high corners
    vals = np.full((10, 10), 0.0)
    vals[4, 4] = vals[5, 5] = 1.0
    vals[4, 5] = vals[5, 4] = 0.2
    lines, closed = marching_squares(vals, 0.45, np.zeros(2), np.ones(2))
    assert len(lines) == 1 and closed == [True]
    vals[4, 5] = vals[5, 4] = 0.0
    # cell average 0.5 now sits below the level: the high corners separate
    lines, closed = marching_squares(vals, 0.55, np.zeros(2), np.ones(2))
    assert len(lines) == 2 and all(closed)


def test_csv_export(cap_field):
    curve = extract_level_set(cap_field, 0.75)
    text = curve.to_csv().splitlines()
    assert text[0] == "c, x, y, nx, ny, kappa_1, grad_norm"
    assert len(text) == 1 + int(curve.valid.sum())
    row = [float(v) for v in text[1].split(",")]
    assert row[0] == 0.75 and row[5] == pytest.approx(1.0 / math.hypot(row[1], row[2]), rel=1e-8)


def test_samples_forms(cap_field):
    curve = extract_level_set(cap_field, 0.75)
    s = curve.samples()[0]
    assert s.b[0, 0] == pytest.approx(s.weingarten.kappa_min)
    assert s.h[0, 0] == pytest.approx(-s.gradient_norm**3 * s.b[0, 0])


def test_sphere_cloud_3d():
    ring = ConvexRing(Ball((0.0, 0.0, 0.0), 2.0), Ball((0.0, 0.0, 0.0), 0.5))
    fld = analytic_field(ring, 32, lambda p: 1.0 - np.sum(p**2, axis=1) / 4.0)
    curve = extract_level_set(fld, 0.75)
    assert curve.dim == 3 and curve.valid.sum() > 100
    r = np.linalg.norm(curve.points, axis=1)
    assert np.abs(r - 1.0).max() <= 2 * fld.grid.h**2
    k = curve.curvatures[curve.valid]
    assert np.allclose(k, 1.0 / r[curve.valid, None], rtol=0.02)
