# tests/conftest.py
import pytest

from eitshape.eit import EitProblem, synthesize_measurements
from eitshape.fem import SolverSettings
from eitshape.levelset import Ball, ShapeSpec
from eitshape.mesh import build_unit_square_mesh


@pytest.fixture
def mesh16():
    return build_unit_square_mesh(16)


@pytest.fixture
def true_shapes():
    return ShapeSpec((Ball((0.6, 0.6), 0.15),))


@pytest.fixture
def initial_shapes():
    return ShapeSpec((Ball((0.4, 0.4), 0.2),))


@pytest.fixture
def small_problem():
    """Coarse three-flux problem that solves in well under a second"""
    return EitProblem(n=16, max_iterations=15, solver=SolverSettings(tol=1e-12))


@pytest.fixture
def small_measurements(small_problem, true_shapes):
    return synthesize_measurements(small_problem, true_shapes)
