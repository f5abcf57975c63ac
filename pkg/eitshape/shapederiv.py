# eitshape/shapederiv.py
"""
Distributed shape derivative of the EIT cost in tensor form.

Per element the derivative is area * (S1 : D theta + S0 . theta_bar), with
D theta the constant P1 gradient and theta_bar the vertex average.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import DimensionError
from .fem import assemble_mass, assemble_stiffness, check_coefficient, nodal_values, NodalData
from .mesh import ALL_SIDES, StructuredMesh
from .validators import ParameterValidator

logger = logging.getLogger(__name__)


@dataclass
class TensorRep:
    """Per-element S1 (2x2) and S0 (2-vector)"""
    mesh: StructuredMesh
    S1: np.ndarray
    S0: np.ndarray

    def __add__(self, other: "TensorRep") -> "TensorRep":
        if other.mesh is not self.mesh:
            raise DimensionError("Cannot add tensors assembled on different meshes")
        return TensorRep(self.mesh, self.S1 + other.S1, self.S0 + other.S0)

    def scaled(self, factor: float) -> "TensorRep":
        return TensorRep(self.mesh, factor * self.S1, factor * self.S0)

    @classmethod
    def zeros(cls, mesh: StructuredMesh) -> "TensorRep":
        return cls(mesh, np.zeros((mesh.num_triangles, 2, 2)), np.zeros((mesh.num_triangles, 2)))


def weighted_sum(tensors: Sequence[TensorRep], weights: Sequence[float]) -> TensorRep:
    """Combine single-flux tensors in a fixed order"""
    if not tensors:
        raise DimensionError("No tensors to combine")
    total = TensorRep.zeros(tensors[0].mesh)
    for rep, weight in zip(tensors, weights):
        total = total + rep.scaled(weight)
    return total


def _outer_sym(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ti,tj->tij", a, b) + np.einsum("ti,tj->tij", b, a)


def assemble_tensors(mesh: StructuredMesh, sigma: np.ndarray, f: NodalData,
                     u_d: np.ndarray, u_n: np.ndarray, p_d: np.ndarray, p_n: np.ndarray,
                     alpha1: float) -> TensorRep:
    """
    Assemble S1 and S0 from P1 states and adjoints.

    Args:
        mesh: Triangulation
        sigma: Per-element conductivity
        f: Volume source (zero in reconstruction)
        u_d, u_n: States
        p_d, p_n: Adjoints
        alpha1: Volume misfit weight

    Returns:
        TensorRep for a single flux
    """
    sigma = check_coefficient(mesh, sigma)
    fields = {}
    for name, values in (("u_d", u_d), ("u_n", u_n), ("p_d", p_d), ("p_n", p_n)):
        fields[name] = ParameterValidator.validate_nodal(values, mesh.num_nodes, name)
    f_nodal = nodal_values(mesh, f)

    gud = mesh.gradient(fields["u_d"])
    gun = mesh.gradient(fields["u_n"])
    gpd = mesh.gradient(fields["p_d"])
    gpn = mesh.gradient(fields["p_n"])

    misfit_sq = mesh.vertex_average((fields["u_d"] - fields["u_n"]) ** 2)
    adjoint_sum = mesh.vertex_average(fields["p_d"] + fields["p_n"])
    f_bar = mesh.vertex_average(f_nodal)

    dot = np.sum(gud * gpd, axis=1) + np.sum(gun * gpn, axis=1)
    scalar = sigma * dot + 0.5 * alpha1 * misfit_sq - f_bar * adjoint_sum

    S1 = -sigma[:, None, None] * (_outer_sym(gud, gpd) + _outer_sym(gun, gpn))
    S1 = S1 + scalar[:, None, None] * np.eye(2)[None, :, :]
    S0 = -adjoint_sum[:, None] * mesh.gradient(f_nodal)
    return TensorRep(mesh, S1, S0)


def element_jacobians(mesh: StructuredMesh, theta: np.ndarray) -> np.ndarray:
    """D theta per element, entry [t, i, j] = d theta_i / d x_j"""
    return np.einsum("tai,taj->tij", theta[mesh.triangles], mesh.basis_gradients)


def eval_dJ(tensors: TensorRep, theta: np.ndarray) -> float:
    """Evaluate the distributed derivative against a nodal vector field"""
    mesh = tensors.mesh
    theta = ParameterValidator.validate_nodal(theta, mesh.num_nodes, "theta", components=2)
    D = element_jacobians(mesh, theta)
    theta_bar = theta[mesh.triangles].mean(axis=1)
    integrand = np.einsum("tij,tij->t", tensors.S1, D) + np.einsum("ti,ti->t", tensors.S0, theta_bar)
    return float(np.sum(mesh.areas * integrand))


def dJ_load_vector(tensors: TensorRep) -> np.ndarray:
    """Nodal load L with sum(L * theta) == eval_dJ(tensors, theta) for every P1 theta"""
    mesh = tensors.mesh
    areas = mesh.areas
    local = np.einsum("t,tij,taj->tai", areas, tensors.S1, mesh.basis_gradients)
    local = local + (areas[:, None] * tensors.S0 / 3.0)[:, None, :]
    tri = mesh.triangles.ravel()
    load = np.empty((mesh.num_nodes, 2))
    for i in range(2):
        load[:, i] = np.bincount(tri, weights=local[:, :, i].ravel(), minlength=mesh.num_nodes)
    return load


def h1_norm(mesh: StructuredMesh, theta: np.ndarray) -> float:
    """Full H1 norm of a nodal vector field"""
    stiffness = assemble_stiffness(mesh, np.ones(mesh.num_triangles))
    mass = assemble_mass(mesh)
    total = 0.0
    for i in range(2):
        c = theta[:, i]
        total += float(c @ (stiffness @ c) + c @ (mass @ c))
    return float(np.sqrt(total))


def bump_field(mesh: StructuredMesh, center: Tuple[float, float], radius: float,
               direction: Tuple[float, float] = (1.0, 0.0)) -> np.ndarray:
    """Compactly supported C2 field (1 - (r/R)^2)^3 * direction"""
    r2 = np.sum((mesh.nodes - np.asarray(center)) ** 2, axis=1) / radius ** 2
    profile = np.where(r2 < 1.0, (1.0 - r2) ** 3, 0.0)
    return profile[:, None] * np.asarray(direction, dtype=float)[None, :]


def random_smooth_field(mesh: StructuredMesh, rng: np.random.Generator, modes: int = 2,
                        amplitude: float = 0.1) -> np.ndarray:
    """Random trigonometric field vanishing on the boundary of the square"""
    x = mesh.nodes[:, 0]
    y = mesh.nodes[:, 1]
    theta = np.zeros((mesh.num_nodes, 2))
    for k in range(1, modes + 1):
        for l in range(1, modes + 1):
            coeff = rng.normal(size=2) / (k * l)
            theta += np.sin(k * np.pi * x)[:, None] * np.sin(l * np.pi * y)[:, None] * coeff[None, :]
    theta[mesh.boundary_nodes(ALL_SIDES)] = 0.0
    scale = np.max(np.abs(theta))
    return amplitude * theta / scale if scale > 0 else theta


def interface_distance(mesh: StructuredMesh, phi: np.ndarray) -> np.ndarray:
    """Nodal distance to the centroids of elements cut by the discrete interface"""
    v = phi[mesh.triangles]
    cut = (v.min(axis=1) < 0) & (v.max(axis=1) >= 0)
    if not np.any(cut):
        return np.full(mesh.num_nodes, np.inf)
    points = mesh.centroids[cut]
    # chunk to bound memory on fine meshes
    out = np.empty(mesh.num_nodes)
    for start in range(0, mesh.num_nodes, 4096):
        block = mesh.nodes[start:start + 4096]
        d = np.sqrt(((block[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
        out[start:start + 4096] = d.min(axis=1)
    return out
