"""Parabolic flows on convex rings and the curvature of their level sets."""

from .domain import Ball, ConvexRing, Ellipsoid, Polygon, parse_body
from .errors import LevelcurvError
from .grid import Grid, Mask, NodeKind, ScalarField, build_grid, classify_point
from .jets import Jet2, fd_jet, jet_at_point
from .operators import OperatorSpec, ellipticity_lambda, eval_operator
from .solver import Scenario, Snapshot, advance, initial_data, solve_scenario

__version__ = "0.1.0"

__all__ = [
    "Ball", "ConvexRing", "Ellipsoid", "Polygon", "parse_body", "LevelcurvError", "Grid", "Mask",
    "NodeKind", "ScalarField", "build_grid", "classify_point", "Jet2", "fd_jet", "jet_at_point",
    "OperatorSpec", "ellipticity_lambda", "eval_operator", "Scenario", "Snapshot", "advance",
    "initial_data", "solve_scenario",
]
