# eitshape/validators.py
from typing import Any, Iterable, Optional

import numpy as np

from .errors import DimensionError, InvalidParameterError


class ParameterValidator:
    """Validates numeric parameters and array shapes"""

    @staticmethod
    def validate_number(value: Any, name: str, min_val: Optional[float] = None,
                        max_val: Optional[float] = None,
                        strict_min: bool = False) -> float:
        """Validate a finite numeric value inside optional bounds"""
        try:
            num = float(value)
        except (TypeError, ValueError):
            raise InvalidParameterError(f"{name} must be numeric, got {type(value).__name__}")

        if not np.isfinite(num):
            raise InvalidParameterError(f"{name} must be finite, got {num}")

        if min_val is not None:
            if strict_min and num <= min_val:
                raise InvalidParameterError(f"{name}={num} must be greater than {min_val}")
            if not strict_min and num < min_val:
                raise InvalidParameterError(f"{name}={num} is below minimum {min_val}")

        if max_val is not None and num > max_val:
            raise InvalidParameterError(f"{name}={num} is above maximum {max_val}")

        return num

    @staticmethod
    def validate_positive_int(value: Any, name: str, min_val: int = 1) -> int:
        """Validate an integer count"""
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise InvalidParameterError(f"{name} must be an integer, got {type(value).__name__}")
        if value < min_val:
            raise InvalidParameterError(f"{name}={value} must be at least {min_val}")
        return int(value)

    @staticmethod
    def validate_choice(value: Any, name: str, choices: Iterable[str]) -> str:
        """Validate a string against a fixed set of options"""
        options = list(choices)
        if value not in options:
            raise InvalidParameterError(f"Invalid {name}: {value}. Must be one of {options}")
        return value

    @staticmethod
    def validate_nodal(values: Any, num_nodes: int, name: str, components: int = 1) -> np.ndarray:
        """Validate a nodal array against the mesh node count"""
        arr = np.asarray(values, dtype=float)
        expected = (num_nodes,) if components == 1 else (num_nodes, components)
        if arr.shape != expected:
            raise DimensionError(f"{name} has shape {arr.shape}, expected {expected}")
        if not np.all(np.isfinite(arr)):
            raise DimensionError(f"{name} contains non-finite values")
        return arr
