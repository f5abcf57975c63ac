# eitshape/runconfig.py
"""
TOML run configuration.

Example:

    [problem]
    n = 64
    delta = 0.01
    seed = 3

    [[true_shapes]]
    kind = "ellipse"
    center = [0.3, 0.6]
    semi_axes = [0.15, 0.08]
    angle = 0.5

    [[initial_shapes]]
    kind = "ball"
    center = [0.5, 0.5]
    radius = 0.25
"""

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .descent import DescentConfig
from .eit import FD_ORACLES, EitProblem, check_oracle_strategy, parse_flux_pattern
from .errors import ConfigError, ValidationError
from .fem import SolverSettings
from .levelset import Ball, ShapeSpec
from .mesh import parse_sides
from .validators import ParameterValidator

logger = logging.getLogger(__name__)

DEFAULT_TRUE_SHAPES = ShapeSpec((Ball((0.6, 0.6), 0.15),))
DEFAULT_INITIAL_SHAPES = ShapeSpec((Ball((0.4, 0.4), 0.2),))
THETA_KINDS = ("random", "far-bump", "zero")


@dataclass
class RunConfig:
    """Everything a CLI run needs"""
    problem: EitProblem = field(default_factory=EitProblem)
    true_shapes: ShapeSpec = DEFAULT_TRUE_SHAPES
    initial_shapes: ShapeSpec = DEFAULT_INITIAL_SHAPES
    output_dir: str = "out"
    dump_every: int = 0
    dump_fields: bool = True
    fd_steps: Tuple[float, ...] = (1e-2, 5e-3, 2.5e-3)
    fd_oracle: str = "mesh"
    fd_theta: str = "random"
    fd_fields: int = 5
    fd_tol: float = 1e-13

    def validate(self):
        """Validate everything, reporting failures as ConfigError"""
        try:
            self.problem.validate()
            self.true_shapes.validate()
            self.initial_shapes.validate()
            ParameterValidator.validate_positive_int(self.dump_every, "dump_every", min_val=0)
            ParameterValidator.validate_choice(self.fd_oracle, "fd_oracle", FD_ORACLES)
            check_oracle_strategy(self.fd_oracle, self.problem.sigma_strategy)
            ParameterValidator.validate_choice(self.fd_theta, "fd_theta", THETA_KINDS)
            ParameterValidator.validate_positive_int(self.fd_fields, "fd_fields")
            ParameterValidator.validate_number(self.fd_tol, "fd_tol", min_val=0.0, strict_min=True)
            for t in self.fd_steps:
                ParameterValidator.validate_number(t, "fd step", min_val=0.0, strict_min=True)
        except ConfigError:
            raise
        except ValidationError as e:
            raise ConfigError(str(e)) from e


def _take(section: Mapping[str, Any], allowed: List[str], where: str) -> Dict[str, Any]:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"Unknown keys in [{where}]: {unknown}")
    return dict(section)


def _problem_from(section: Mapping[str, Any], solver: Mapping[str, Any],
                  descent: Mapping[str, Any]) -> EitProblem:
    nested = {"solver", "descent"}
    allowed = [f.name for f in fields(EitProblem) if f.name not in nested]
    values = _take(section, allowed, "problem")
    if "fluxes" in values:
        values["fluxes"] = tuple(parse_flux_pattern(p) for p in values["fluxes"])
    if "u_n_dirichlet_sides" in values:
        values["u_n_dirichlet_sides"] = parse_sides(values["u_n_dirichlet_sides"])
    values["solver"] = SolverSettings(**_take(solver, ["tol", "maxiter_factor"], "solver"))
    values["descent"] = DescentConfig(**_take(descent, ["tol", "mass_weight"], "descent"))
    return EitProblem(**values)


def run_config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    """Build a RunConfig from parsed TOML tables"""
    top = _take(data, ["problem", "solver", "descent", "true_shapes", "initial_shapes",
                       "output", "derivcheck"], "top level")
    try:
        problem = _problem_from(top.get("problem", {}), top.get("solver", {}), top.get("descent", {}))
        config = RunConfig(problem=problem)
        if "true_shapes" in top:
            config.true_shapes = ShapeSpec.from_dicts(top["true_shapes"])
        if "initial_shapes" in top:
            config.initial_shapes = ShapeSpec.from_dicts(top["initial_shapes"])

        output = _take(top.get("output", {}), ["dir", "dump_every", "dump_fields"], "output")
        config.output_dir = str(output.get("dir", config.output_dir))
        config.dump_every = output.get("dump_every", config.dump_every)
        config.dump_fields = bool(output.get("dump_fields", config.dump_fields))

        check = _take(top.get("derivcheck", {}), ["steps", "oracle", "theta", "fields", "tol"], "derivcheck")
        config.fd_steps = tuple(float(t) for t in check.get("steps", config.fd_steps))
        config.fd_oracle = check.get("oracle", config.fd_oracle)
        config.fd_theta = check.get("theta", config.fd_theta)
        config.fd_fields = check.get("fields", config.fd_fields)
        config.fd_tol = float(check.get("tol", config.fd_tol))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Malformed configuration: {e}") from e
    except ValidationError as e:
        raise ConfigError(str(e)) from e

    config.validate()
    return config


def load_run_config(path: Optional[str]) -> RunConfig:
    """Parse a TOML file; None gives the documented defaults"""
    if path is None:
        config = RunConfig()
        config.validate()
        return config
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    logger.info("Loaded run configuration from %s", path)
    return run_config_from_dict(data)
