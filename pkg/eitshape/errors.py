# eitshape/errors.py
from typing import Optional


class EitShapeError(Exception):
    """Base class for all eitshape failures"""
    pass


class ValidationError(EitShapeError):
    """Raised when an input fails validation"""
    pass


class InvalidParameterError(ValidationError):
    """Raised for out-of-range scalar parameters"""
    pass


class InvalidCoefficientError(ValidationError):
    """Raised when a conductivity is not strictly positive"""
    pass


class InvalidShapeError(ValidationError):
    """Raised for degenerate or out-of-domain shape primitives"""
    pass


class DimensionError(ValidationError):
    """Raised when fields do not match the mesh they are used with"""
    pass


class ConfigError(ValidationError):
    """Raised when a run configuration cannot be parsed or is inconsistent"""
    pass


class SolverError(EitShapeError):
    """Raised when the conjugate gradient solver fails to converge"""

    def __init__(self, message: str, residual: float, iterations: Optional[int] = None):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class DegenerateDataError(EitShapeError):
    """Raised when data make a normalization impossible"""
    pass
