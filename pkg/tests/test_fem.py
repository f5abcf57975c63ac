# tests/test_fem.py
import numpy as np
import pytest

from eitshape.errors import DimensionError, InvalidCoefficientError, SolverError
from eitshape.fem import (
    SolverSettings,
    SparseSystem,
    assemble_boundary_load,
    assemble_mass,
    assemble_misfit_load,
    assemble_stiffness,
    assemble_volume_load,
    misfit_energy,
    solve_adjoint_d,
    solve_adjoint_n,
    solve_grounded_neumann,
    solve_state_dirichlet,
    solve_state_neumann,
)
from eitshape.levelset import Ball, ShapeSpec, init_signed_distance, sigma_from_levelset
from eitshape.mesh import ALL_SIDES, LEFT_RIGHT, TOP_BOTTOM, Side, build_unit_square_mesh

TIGHT = SolverSettings(tol=1e-13)


def _inclusion_sigma(mesh, center=(0.5, 0.5), radius=0.2):
    phi = init_signed_distance(mesh, ShapeSpec((Ball(center, radius),)))
    return sigma_from_levelset(mesh, phi, 10.0, 1.0)


def test_stiffness_single_cell():
    """Test the n=1 stiffness diagonal for sigma = 1"""
    mesh = build_unit_square_mesh(1)
    K = assemble_stiffness(mesh, np.ones(2)).toarray()
    np.testing.assert_allclose(np.diag(K), [1.0, 1.0, 1.0, 1.0], atol=1e-15)


def test_stiffness_properties():
    """Test symmetry, zero row sums, semi-definiteness and linear scaling"""
    mesh = build_unit_square_mesh(6)
    sigma = _inclusion_sigma(mesh)
    K = assemble_stiffness(mesh, sigma).toarray()

    np.testing.assert_allclose(K, K.T, atol=1e-14)
    np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-12)
    assert np.linalg.eigvalsh(K).min() > -1e-10

    K3 = assemble_stiffness(mesh, 3.0 * sigma).toarray()
    np.testing.assert_allclose(K3, 3.0 * K, rtol=1e-14, atol=1e-14)


def test_mass_matrix_total():
    """Test the consistent mass matrix integrates one to the square's area"""
    mesh = build_unit_square_mesh(5)
    M = assemble_mass(mesh)
    ones = np.ones(mesh.num_nodes)
    assert ones @ (M @ ones) == pytest.approx(1.0, rel=1e-13)


def test_invalid_coefficient():
    """Test non-positive or mis-sized conductivities are rejected"""
    mesh = build_unit_square_mesh(2)
    sigma = np.ones(mesh.num_triangles)
    sigma[3] = 0.0
    with pytest.raises(InvalidCoefficientError):
        assemble_stiffness(mesh, sigma)
    with pytest.raises(DimensionError):
        assemble_stiffness(mesh, np.ones(3))


def test_boundary_load():
    """Test the flux load integrates the side values exactly"""
    mesh = build_unit_square_mesh(8)
    load = assemble_boundary_load(mesh, {Side.LEFT: 1.0}, [Side.LEFT])
    assert load.sum() == pytest.approx(1.0, rel=1e-14)
    support = np.flatnonzero(load)
    assert set(support) <= set(mesh.boundary_nodes([Side.LEFT]))

    assert not np.any(assemble_boundary_load(mesh, {}, ALL_SIDES))

    balanced = assemble_boundary_load(mesh, {Side.LEFT: 1.0, Side.RIGHT: -1.0}, LEFT_RIGHT)
    assert balanced.sum() == pytest.approx(0.0, abs=1e-14)


def test_volume_load_of_constant():
    """Test the vertex rule integrates constants exactly"""
    mesh = build_unit_square_mesh(4)
    assert assemble_volume_load(mesh, 2.0).sum() == pytest.approx(2.0, rel=1e-14)


def test_misfit_load_is_gradient_of_energy():
    """Test the misfit load is the derivative of the vertex-rule energy"""
    mesh = build_unit_square_mesh(4)
    rng = np.random.default_rng(3)
    w = rng.normal(size=mesh.num_nodes)
    load = assemble_misfit_load(mesh, w)

    eps = 1e-6
    for k in (0, 7, 12):
        e = np.zeros(mesh.num_nodes)
        e[k] = eps
        fd = (misfit_energy(mesh, w + e) - misfit_energy(mesh, w - e)) / (2 * eps)
        assert fd == pytest.approx(load[k], rel=1e-7, abs=1e-12)


def test_misfit_uses_vertex_rule():
    """Test the misfit load is the lumped mass times the misfit and the energy integrates x^2 by the vertex rule"""
    mesh = build_unit_square_mesh(4)
    w = mesh.nodes[:, 0].copy()
    lumped = assemble_volume_load(mesh, 1.0)
    np.testing.assert_allclose(assemble_misfit_load(mesh, w), lumped * w, atol=1e-15)

    # per cell the vertex rule reduces to the trapezoid rule in x
    h = mesh.h
    assert misfit_energy(mesh, w) == pytest.approx(0.5 * (1.0 / 3.0 + h ** 2 / 6.0), rel=1e-12)

    # one hot node: the load is the nodal lumped mass, not a shared centroid value
    e = np.zeros(mesh.num_nodes)
    e[12] = 1.0
    load = assemble_misfit_load(mesh, e)
    assert np.count_nonzero(load) == 1
    assert load[12] == pytest.approx(lumped[12], rel=1e-14)


@pytest.mark.parametrize("n", [4, 16])
def test_linear_exactness_neumann_state(n):
    """Test u = x is reproduced with flux -1 on the left and +1 on the right"""
    mesh = build_unit_square_mesh(n)
    sigma = np.ones(mesh.num_triangles)
    u = solve_state_neumann(mesh, sigma, 0.0, {Side.LEFT: -1.0, Side.RIGHT: 1.0},
                            lambda x, y: x, TIGHT)
    np.testing.assert_allclose(u, mesh.nodes[:, 0], atol=1e-10)


@pytest.mark.parametrize("n", [4, 16])
def test_linear_exactness_dirichlet_state(n):
    """Test u = y is reproduced with flux -1 on the bottom and +1 on the top"""
    mesh = build_unit_square_mesh(n)
    sigma = np.ones(mesh.num_triangles)
    u = solve_state_dirichlet(mesh, sigma, 0.0, {Side.BOTTOM: -1.0, Side.TOP: 1.0},
                              lambda x, y: y, TIGHT)
    np.testing.assert_allclose(u, mesh.nodes[:, 1], atol=1e-10)


def test_zero_data_gives_zero_state():
    """Test homogeneous data give the zero solution"""
    mesh = build_unit_square_mesh(8)
    sigma = _inclusion_sigma(mesh)
    assert not np.any(solve_state_neumann(mesh, sigma, 0.0, {}, 0.0))
    assert not np.any(solve_state_dirichlet(mesh, sigma, 0.0, {}, 0.0))


def test_conductivity_scaling():
    """Test scaling sigma and the flux together leaves the state unchanged"""
    mesh = build_unit_square_mesh(12)
    sigma = _inclusion_sigma(mesh)
    g = {Side.LEFT: 1.0, Side.RIGHT: -0.5}

    def h(x, y):
        return x * (1 - x)

    u = solve_state_neumann(mesh, sigma, 0.0, g, h, TIGHT)
    u_scaled = solve_state_neumann(mesh, 4.0 * sigma, 0.0, {k: 4.0 * v for k, v in g.items()}, h, TIGHT)
    np.testing.assert_allclose(u_scaled, u, atol=1e-9)


def test_state_swap_symmetry():
    """Test reflecting x and y maps the u_n problem onto the u_d problem"""
    n = 12
    mesh = build_unit_square_mesh(n)
    sigma = _inclusion_sigma(mesh)

    u_n = solve_state_neumann(mesh, sigma, 0.0, {Side.LEFT: 1.0, Side.RIGHT: -2.0},
                              lambda x, y: np.sin(3 * x) + y, TIGHT)
    u_d = solve_state_dirichlet(mesh, sigma, 0.0, {Side.BOTTOM: 1.0, Side.TOP: -2.0},
                                lambda x, y: np.sin(3 * y) + x, TIGHT)

    reflected = mesh.to_grid(u_n).T.ravel()
    np.testing.assert_allclose(u_d, reflected, atol=1e-9)


def test_galerkin_residual():
    """Test the discrete residual on free nodes is within the solver tolerance"""
    mesh = build_unit_square_mesh(16)
    sigma = _inclusion_sigma(mesh)
    settings = SolverSettings(tol=1e-10)
    rhs = assemble_boundary_load(mesh, {Side.LEFT: 1.0, Side.RIGHT: -1.0}, LEFT_RIGHT)
    constrained = mesh.boundary_nodes(TOP_BOTTOM)
    K = assemble_stiffness(mesh, sigma)
    u = SparseSystem(K, rhs, constrained, np.zeros(constrained.size)).solve(settings)

    free = np.setdiff1d(np.arange(mesh.num_nodes), constrained)
    residual = (K @ u - rhs)[free]
    assert np.linalg.norm(residual) <= 1e-10 * np.linalg.norm(rhs[free]) * 1.01


def test_energy_monotone_in_conductivity():
    """Test the Dirichlet energy grows with sigma but not past the variational bound"""
    mesh = build_unit_square_mesh(12)
    sigma1 = _inclusion_sigma(mesh)
    sigma2 = sigma1 + 0.5

    def h(x, y):
        return x ** 2 - y

    u1 = solve_state_neumann(mesh, sigma1, 0.0, {}, h, TIGHT, dirichlet_sides=ALL_SIDES)
    u2 = solve_state_neumann(mesh, sigma2, 0.0, {}, h, TIGHT, dirichlet_sides=ALL_SIDES)
    K1 = assemble_stiffness(mesh, sigma1)
    K2 = assemble_stiffness(mesh, sigma2)

    e1 = u1 @ (K1 @ u1)
    e2 = u2 @ (K2 @ u2)
    assert e2 >= e1
    assert e2 <= u1 @ (K2 @ u1) * (1 + 1e-10)


def test_grounded_neumann_solution():
    """Test the pure-flux solve pins node 0 and reproduces a linear field"""
    mesh = build_unit_square_mesh(8)
    sigma = np.ones(mesh.num_triangles)
    u = solve_grounded_neumann(mesh, sigma, {Side.LEFT: -1.0, Side.RIGHT: 1.0}, TIGHT)
    assert u[0] == 0.0
    np.testing.assert_allclose(u, mesh.nodes[:, 0], atol=1e-10)


def test_solver_failure_reports_residual():
    """Test an unreachable tolerance raises SolverError with the residual"""
    mesh = build_unit_square_mesh(8)
    sigma = _inclusion_sigma(mesh)
    with pytest.raises(SolverError) as exc:
        solve_state_neumann(mesh, sigma, 0.0, {Side.LEFT: 1.0, Side.RIGHT: -1.0}, 0.0,
                            SolverSettings(tol=1e-30, maxiter_factor=1))
    assert exc.value.residual > 0


def test_adjoints_vanish_for_matching_states():
    """Test zero misfit or zero weight give zero adjoints"""
    mesh = build_unit_square_mesh(8)
    sigma = _inclusion_sigma(mesh)
    u = np.sin(mesh.nodes[:, 0]) * mesh.nodes[:, 1]

    assert not np.any(solve_adjoint_d(mesh, sigma, u, u, 1.0))
    assert not np.any(solve_adjoint_n(mesh, sigma, u, u, u, 1.0, 0.0))
    assert not np.any(solve_adjoint_n(mesh, sigma, u, u, u, 1.0, 2.0))

    other = u + mesh.nodes[:, 0]
    assert not np.any(solve_adjoint_d(mesh, sigma, other, u, 0.0))


def test_adjoint_linearity_and_sign():
    """Test p_d scales with alpha1 and p_n mirrors it under matching constraints"""
    mesh = build_unit_square_mesh(10)
    sigma = _inclusion_sigma(mesh)
    u_n = mesh.nodes[:, 0] * mesh.nodes[:, 1]
    u_d = np.cos(mesh.nodes[:, 1])

    p1 = solve_adjoint_d(mesh, sigma, u_d, u_n, 1.0, TIGHT)
    p2 = solve_adjoint_d(mesh, sigma, u_d, u_n, 2.0, TIGHT)
    np.testing.assert_allclose(p2, 2.0 * p1, rtol=1e-12, atol=1e-15)

    p_n = solve_adjoint_n(mesh, sigma, u_d, u_n, 0.0, 1.0, 0.0, TIGHT, dirichlet_sides=LEFT_RIGHT)
    np.testing.assert_allclose(p_n, -p1, atol=1e-12)

    assert np.all(p1[mesh.boundary_nodes(LEFT_RIGHT)] == 0.0)
