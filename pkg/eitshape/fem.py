# eitshape/fem.py
"""
P1 finite element assembly and the state/adjoint solves of the EIT problem.

The state u_n carries Dirichlet data on its Dirichlet sides (top and bottom by
default) and a flux on the remaining sides; u_d swaps the two side pairs.
Adjoints carry homogeneous Dirichlet conditions on the Dirichlet sides of the
state they belong to.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .config import Config
from .errors import InvalidCoefficientError, DimensionError, SolverError
from .mesh import ALL_SIDES, LEFT_RIGHT, TOP_BOTTOM, Side, StructuredMesh, parse_sides
from .validators import ParameterValidator

logger = logging.getLogger(__name__)

# Nodal data either as a full-length array or as a function of (x, y)
NodalData = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray], float]
SideFlux = Mapping[Side, float]


@dataclass
class SolverSettings:
    """Conjugate gradient controls"""
    tol: float = field(default_factory=lambda: Config.CG_TOL)
    maxiter_factor: int = field(default_factory=lambda: Config.CG_MAXITER_FACTOR)

    def validate(self):
        ParameterValidator.validate_number(self.tol, "tol", min_val=0.0, strict_min=True)
        ParameterValidator.validate_positive_int(self.maxiter_factor, "maxiter_factor")


@dataclass
class SparseSystem:
    """Symmetric system with a set of constrained nodes"""
    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained: np.ndarray
    values: np.ndarray

    def solve(self, settings: Optional[SolverSettings] = None) -> np.ndarray:
        """Eliminate constrained rows and columns and run Jacobi-preconditioned CG"""
        settings = settings or SolverSettings()
        n = self.matrix.shape[0]
        x = np.zeros(n)
        x[self.constrained] = self.values

        free_mask = np.ones(n, dtype=bool)
        free_mask[self.constrained] = False
        free = np.flatnonzero(free_mask)
        if free.size == 0:
            return x

        a_ff = self.matrix[free][:, free].tocsr()
        b_f = self.rhs[free] - self.matrix[free][:, self.constrained] @ self.values

        b_norm = np.linalg.norm(b_f)
        if b_norm == 0.0:
            return x

        diag = a_ff.diagonal()
        preconditioner = sp.diags(1.0 / diag)
        maxiter = settings.maxiter_factor * n
        x_f, info = cg(a_ff, b_f, rtol=settings.tol, atol=0.0, maxiter=maxiter, M=preconditioner)
        residual = np.linalg.norm(b_f - a_ff @ x_f) / b_norm
        if info != 0:
            raise SolverError("Conjugate gradients did not converge", residual, iterations=maxiter)

        logger.debug("CG solved %d unknowns, relative residual %.2e", free.size, residual)
        x[free] = x_f
        return x


def check_coefficient(mesh: StructuredMesh, sigma: np.ndarray) -> np.ndarray:
    """Validate a piecewise-constant coefficient"""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (mesh.num_triangles,):
        raise DimensionError(f"sigma has shape {sigma.shape}, expected ({mesh.num_triangles},)")
    if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0.0):
        raise InvalidCoefficientError("Conductivity must be strictly positive on every element")
    return sigma


def nodal_values(mesh: StructuredMesh, data: NodalData) -> np.ndarray:
    """Turn callables and scalars into full-length nodal arrays"""
    if callable(data):
        return np.asarray(data(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float) * np.ones(mesh.num_nodes)
    if np.isscalar(data):
        return np.full(mesh.num_nodes, float(data))
    values = np.asarray(data, dtype=float)
    if values.shape != (mesh.num_nodes,):
        raise DimensionError(f"Nodal data has shape {values.shape}, expected ({mesh.num_nodes},)")
    return values


def _scatter_matrix(mesh: StructuredMesh, local: np.ndarray) -> sp.csr_matrix:
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.num_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble_stiffness(mesh: StructuredMesh, sigma: np.ndarray) -> sp.csr_matrix:
    """Stiffness matrix of the form (sigma grad u, grad v)"""
    sigma = check_coefficient(mesh, sigma)
    grads = mesh.basis_gradients
    local = np.einsum("t,tad,tbd->tab", sigma * mesh.areas, grads, grads)
    return _scatter_matrix(mesh, local)


def assemble_mass(mesh: StructuredMesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix"""
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = mesh.areas[:, None, None] * ref[None, :, :]
    return _scatter_matrix(mesh, local)


def assemble_volume_load(mesh: StructuredMesh, f: NodalData) -> np.ndarray:
    """Load of a nodal source with the vertex quadrature rule"""
    values = nodal_values(mesh, f)
    contrib = (mesh.areas / 3.0)[:, None] * values[mesh.triangles]
    return np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.num_nodes)


def assemble_misfit_load(mesh: StructuredMesh, misfit: np.ndarray) -> np.ndarray:
    """
    Load of a nodal misfit with the vertex quadrature rule.

    This is the exact gradient of misfit_energy with respect to the nodal values.
    """
    return assemble_volume_load(mesh, misfit)


def misfit_energy(mesh: StructuredMesh, misfit: np.ndarray) -> float:
    """Vertex-rule value of 1/2 * integral of misfit^2"""
    squares = mesh.vertex_average(misfit ** 2)
    return float(0.5 * np.sum(mesh.areas * squares))


def assemble_boundary_load(mesh: StructuredMesh, g: SideFlux, sides: Iterable) -> np.ndarray:
    """Load of a piecewise-constant boundary flux using the edge trapezoid rule"""
    load = np.zeros(mesh.num_nodes)
    for side in parse_sides(sides):
        value = float(g.get(side, 0.0))
        if value == 0.0:
            continue
        edges = mesh.boundary_edges[side]
        half = 0.5 * value * mesh.edge_lengths(side)
        np.add.at(load, edges[:, 0], half)
        np.add.at(load, edges[:, 1], half)
    return load


def assemble_boundary_trace_load(mesh: StructuredMesh, values: np.ndarray, sides: Iterable) -> np.ndarray:
    """Load of a nodal boundary function with the edge trapezoid rule"""
    load = np.zeros(mesh.num_nodes)
    for side in parse_sides(sides):
        edges = mesh.boundary_edges[side]
        half = 0.5 * mesh.edge_lengths(side)
        np.add.at(load, edges[:, 0], half * values[edges[:, 0]])
        np.add.at(load, edges[:, 1], half * values[edges[:, 1]])
    return load


def boundary_energy(mesh: StructuredMesh, values: np.ndarray, sides: Iterable) -> float:
    """Trapezoid value of 1/2 * boundary integral of values^2"""
    total = 0.0
    for side in parse_sides(sides):
        edges = mesh.boundary_edges[side]
        sq = values[edges[:, 0]] ** 2 + values[edges[:, 1]] ** 2
        total += float(np.sum(0.25 * mesh.edge_lengths(side) * sq))
    return total


def _solve_mixed(mesh: StructuredMesh, sigma: np.ndarray, f: NodalData, g: SideFlux,
                 h: NodalData, dirichlet_sides: Iterable,
                 settings: Optional[SolverSettings]) -> np.ndarray:
    dirichlet_sides = parse_sides(dirichlet_sides)
    flux_sides = ALL_SIDES - dirichlet_sides
    matrix = assemble_stiffness(mesh, sigma)
    rhs = assemble_volume_load(mesh, f)
    if flux_sides:
        rhs = rhs + assemble_boundary_load(mesh, g, flux_sides)
    constrained = mesh.boundary_nodes(dirichlet_sides)
    values = nodal_values(mesh, h)[constrained]
    return SparseSystem(matrix, rhs, constrained, values).solve(settings)


def solve_state_neumann(mesh: StructuredMesh, sigma: np.ndarray, f: NodalData, g: SideFlux,
                        h: NodalData, settings: Optional[SolverSettings] = None,
                        dirichlet_sides: Iterable = TOP_BOTTOM) -> np.ndarray:
    """
    Solve for u_n: Dirichlet data h on the Dirichlet sides, flux g elsewhere.

    Args:
        mesh: Triangulation
        sigma: Per-element conductivity
        f: Volume source
        g: Flux value per side (only the non-Dirichlet sides are used)
        h: Dirichlet data, nodal array or callable of (x, y)
        settings: CG controls
        dirichlet_sides: Sides carrying h, top and bottom by default

    Returns:
        Nodal solution
    """
    return _solve_mixed(mesh, sigma, f, g, h, dirichlet_sides, settings)


def solve_state_dirichlet(mesh: StructuredMesh, sigma: np.ndarray, f: NodalData, g: SideFlux,
                          h: NodalData, settings: Optional[SolverSettings] = None,
                          dirichlet_sides: Iterable = LEFT_RIGHT) -> np.ndarray:
    """Solve for u_d: Dirichlet data h on left/right by default, flux g on top/bottom"""
    return _solve_mixed(mesh, sigma, f, g, h, dirichlet_sides, settings)


def solve_grounded_neumann(mesh: StructuredMesh, sigma: np.ndarray, g: SideFlux,
                           settings: Optional[SolverSettings] = None,
                           ground_node: int = 0) -> np.ndarray:
    """Pure-flux problem with one node pinned to zero to fix the constant"""
    net = sum(float(g.get(side, 0.0)) * float(mesh.edge_lengths(side).sum()) for side in Side)
    if abs(net) > 1e-12:
        logger.warning("Flux pattern has nonzero net current %.3e; the grounded solve is not compatible", net)
    matrix = assemble_stiffness(mesh, sigma)
    rhs = assemble_boundary_load(mesh, g, ALL_SIDES)
    return SparseSystem(matrix, rhs, np.array([ground_node]), np.zeros(1)).solve(settings)


def solve_adjoint_d(mesh: StructuredMesh, sigma: np.ndarray, u_d: np.ndarray, u_n: np.ndarray,
                    alpha1: float, settings: Optional[SolverSettings] = None,
                    dirichlet_sides: Iterable = LEFT_RIGHT) -> np.ndarray:
    """Adjoint p_d with right-hand side -alpha1 * (u_d - u_n)"""
    rhs = -alpha1 * assemble_misfit_load(mesh, u_d - u_n)
    constrained = mesh.boundary_nodes(dirichlet_sides)
    matrix = assemble_stiffness(mesh, sigma)
    return SparseSystem(matrix, rhs, constrained, np.zeros(constrained.size)).solve(settings)


def solve_adjoint_n(mesh: StructuredMesh, sigma: np.ndarray, u_d: np.ndarray, u_n: np.ndarray,
                    h: NodalData, alpha1: float, alpha2: float,
                    settings: Optional[SolverSettings] = None,
                    dirichlet_sides: Iterable = TOP_BOTTOM) -> np.ndarray:
    """
    Adjoint p_n with right-hand side alpha1 * (u_d - u_n) minus the boundary
    misfit alpha2 * (u_n - h) on the flux sides of u_n.
    """
    dirichlet_sides = parse_sides(dirichlet_sides)
    rhs = alpha1 * assemble_misfit_load(mesh, u_d - u_n)
    if alpha2 != 0.0:
        measured = ALL_SIDES - dirichlet_sides
        boundary_misfit = np.nan_to_num(u_n - nodal_values(mesh, h))
        rhs = rhs - alpha2 * assemble_boundary_trace_load(mesh, boundary_misfit, measured)
    constrained = mesh.boundary_nodes(dirichlet_sides)
    matrix = assemble_stiffness(mesh, sigma)
    return SparseSystem(matrix, rhs, constrained, np.zeros(constrained.size)).solve(settings)
