# eitshape/descent.py
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import Config
from .fem import SolverSettings, SparseSystem, assemble_mass, assemble_stiffness
from .mesh import ALL_SIDES, StructuredMesh
from .shapederiv import TensorRep, dJ_load_vector
from .validators import ParameterValidator

logger = logging.getLogger(__name__)


@dataclass
class DescentConfig:
    """Settings of the H1 descent-direction problem"""
    tol: float = field(default_factory=lambda: Config.CG_TOL)
    mass_weight: float = 0.0

    def validate(self):
        ParameterValidator.validate_number(self.tol, "descent tol", min_val=0.0, strict_min=True)
        ParameterValidator.validate_number(self.mass_weight, "mass_weight", min_val=0.0)


def descent_matrix(mesh: StructuredMesh, mass_weight: float = 0.0):
    matrix = assemble_stiffness(mesh, np.ones(mesh.num_triangles))
    if mass_weight > 0.0:
        matrix = matrix + mass_weight * assemble_mass(mesh)
    return matrix.tocsr()


def bilinear_form(mesh: StructuredMesh, theta: np.ndarray, mass_weight: float = 0.0) -> float:
    """B(theta, theta) of the descent problem"""
    matrix = descent_matrix(mesh, mass_weight)
    return float(sum(theta[:, i] @ (matrix @ theta[:, i]) for i in range(2)))


def solve_descent(mesh: StructuredMesh, tensors: TensorRep,
                  config: Optional[DescentConfig] = None) -> np.ndarray:
    """
    Solve B(theta, zeta) = -dJ(zeta) for all zeta vanishing on the boundary.

    The two components decouple and are solved as scalar Poisson problems
    with homogeneous Dirichlet conditions on the whole boundary.

    Returns:
        Nodal field of shape (nodes, 2), zero on the boundary
    """
    config = config or DescentConfig()
    config.validate()
    load = dJ_load_vector(tensors)
    matrix = descent_matrix(mesh, config.mass_weight)
    boundary = mesh.boundary_nodes(ALL_SIDES)
    settings = SolverSettings(tol=config.tol)

    theta = np.zeros((mesh.num_nodes, 2))
    for i in range(2):
        system = SparseSystem(matrix, -load[:, i], boundary, np.zeros(boundary.size))
        theta[:, i] = system.solve(settings)
    logger.debug("Descent direction max norm %.3e", float(np.max(np.linalg.norm(theta, axis=1))))
    return theta
