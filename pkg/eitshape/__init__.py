# eitshape/__init__.py
"""Shape optimization for EIT inclusion reconstruction with level sets."""

from .eit import EitProblem, MeasurementSet, OptTrace, RunStatus, reconstruct, synthesize_measurements
from .errors import (
    ConfigError,
    DegenerateDataError,
    DimensionError,
    EitShapeError,
    InvalidCoefficientError,
    InvalidParameterError,
    InvalidShapeError,
    SolverError,
    ValidationError,
)
from .levelset import Ball, Ellipse, ShapeSpec
from .mesh import Side, StructuredMesh, build_unit_square_mesh

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "ConfigError",
    "DegenerateDataError",
    "DimensionError",
    "EitProblem",
    "EitShapeError",
    "Ellipse",
    "InvalidCoefficientError",
    "InvalidParameterError",
    "InvalidShapeError",
    "MeasurementSet",
    "OptTrace",
    "RunStatus",
    "ShapeSpec",
    "Side",
    "SolverError",
    "StructuredMesh",
    "ValidationError",
    "build_unit_square_mesh",
    "reconstruct",
    "synthesize_measurements",
]
