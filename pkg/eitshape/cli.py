# eitshape/cli.py
"""
Command-line entry point.

    eitshape synth --config run.toml --out out/
    eitshape reconstruct --config run.toml --out out/ --dump-every 10
    eitshape verify
    eitshape deriv-check --config run.toml
    eitshape mesh-info --config run.toml
"""

import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional

import numpy as np

from .eit import (
    CostEvaluation,
    EitModel,
    RunStatus,
    finite_difference_check,
    reconstruct,
    synthesize_measurements,
)
from .errors import SolverError, ValidationError
from .levelset import init_signed_distance, interface_area, symmetric_difference_area
from .logging_setup import configure_logging
from .mesh import StructuredMesh, mesh_summary
from .output import (
    MANIFEST,
    flux_patterns_to_json,
    read_manifest,
    read_measurements,
    side_names,
    write_field_csv,
    write_measurements,
    write_trace_csv,
    write_vtk_structured_points,
)
from .runconfig import RunConfig, load_run_config
from .shapederiv import bump_field, random_smooth_field
from . import verify

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_STALLED = 2
EXIT_MAX_ITER = 3
EXIT_CONFIG = 4
EXIT_SOLVER = 5

STATUS_EXIT = {
    RunStatus.CONVERGED: EXIT_OK,
    RunStatus.STALLED: EXIT_STALLED,
    RunStatus.MAX_ITER: EXIT_MAX_ITER,
}


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "out", None):
        config.output_dir = args.out
    if getattr(args, "seed", None) is not None:
        config.problem.seed = args.seed
    if getattr(args, "dump_every", None) is not None:
        config.dump_every = args.dump_every
    config.validate()
    return config


def measurements_dir(config: RunConfig) -> str:
    return os.path.join(config.output_dir, "measurements")


def measurement_settings(config: RunConfig) -> Dict:
    """Manifest entries that determine the synthesized traces"""
    problem = config.problem
    settings = {
        "n": problem.n,
        "delta": problem.delta,
        "seed": problem.seed,
        "sigma_plus": problem.sigma_plus,
        "sigma_minus": problem.sigma_minus,
        "sigma_strategy": problem.sigma_strategy,
        "solver_tol": problem.solver.tol,
        "fluxes": flux_patterns_to_json(problem.fluxes),
        "u_n_dirichlet_sides": side_names(problem.u_n_dirichlet_sides),
        "true_shapes": config.true_shapes.to_dicts(),
    }
    return json.loads(json.dumps(settings))


def stale_settings(manifest: Dict, settings: Dict) -> List[str]:
    """Names of the settings a stored manifest disagrees on"""
    return sorted(key for key, value in settings.items() if manifest.get(key) != value)


def cmd_synth(config: RunConfig) -> Dict:
    """Synthesize and write measurement files; returns the manifest"""
    measurements = synthesize_measurements(config.problem, config.true_shapes)
    return write_measurements(measurements, measurements_dir(config), measurement_settings(config))


def _dump_fields(config: RunConfig, iteration: int, phi: np.ndarray, evaluation: CostEvaluation) -> None:
    mesh = evaluation.mesh
    first = evaluation.solutions[0]
    base = os.path.join(config.output_dir, "fields", f"iter_{iteration:05d}")
    point_data = {"phi": phi, "u_n": first.u_n, "u_d": first.u_d}
    write_vtk_structured_points(mesh, base + ".vtk", point_data, {"sigma": evaluation.sigma})
    write_field_csv(mesh, base + ".csv", point_data)


def cmd_reconstruct(config: RunConfig) -> RunStatus:
    """Run the reconstruction, writing the cost history and periodic field dumps"""
    problem = config.problem
    mesh = problem.build_mesh()
    data_dir = measurements_dir(config)
    manifest_path = os.path.join(data_dir, MANIFEST)
    if not os.path.exists(manifest_path):
        logger.info("No measurements in %s; synthesizing them first", data_dir)
        cmd_synth(config)
    else:
        stale = stale_settings(read_manifest(data_dir), measurement_settings(config))
        if stale:
            logger.warning("Measurements in %s disagree with the run configuration on %s; "
                           "synthesizing them again", data_dir, ", ".join(stale))
            cmd_synth(config)
    measurements = read_measurements(data_dir, mesh)

    def on_iteration(k: int, phi: np.ndarray, evaluation: CostEvaluation) -> None:
        if config.dump_fields and config.dump_every > 0 and k % config.dump_every == 0:
            _dump_fields(config, k, phi, evaluation)

    phi, trace = reconstruct(problem, measurements, config.initial_shapes, callback=on_iteration)
    write_trace_csv(trace, os.path.join(config.output_dir, "trace.csv"))

    truth = init_signed_distance(mesh, config.true_shapes)
    summary = {
        "status": trace.status.value,
        "iterations": trace.iterations,
        "initial_cost": trace.initial_cost,
        "final_cost": trace.final_cost,
        "relative_cost": trace.relative_cost,
        "symmetric_difference": symmetric_difference_area(mesh, phi, truth),
        "inclusion_area": interface_area(mesh, phi),
        "inverse_crime": trace.inverse_crime,
    }
    with open(os.path.join(config.output_dir, "summary.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if config.dump_fields:
        model = EitModel(problem, measurements)
        _dump_fields(config, trace.iterations, phi, model.evaluate(phi))
    return trace.status


def cmd_verify(panels: int = 32, radial: int = 24, negative_control: bool = False) -> bool:
    """Run every closed-form check and print a report"""
    results = verify.run_all(panels=panels, radial=radial, negative_control=negative_control)
    ok = True
    for name, result in results.items():
        if isinstance(result, verify.EquilibriumResult):
            line = (f"{name:18s} residuals={['%.3e' % r for r in result.residuals]} "
                    f"orders={['%.3f' % q for q in result.orders]}")
        else:
            line = (f"{name:18s} domain={result.domain_value:.12e} "
                    f"boundary={result.boundary_value:.12e} gap={result.gap:.2e}")
        status = "PASS" if result.passed else "FAIL"
        print(f"{status}  {line}")
        ok = ok and result.passed
    return ok


def _check_fields(config: RunConfig, mesh: StructuredMesh, phi: np.ndarray) -> List[np.ndarray]:
    if config.fd_theta == "zero":
        return [np.zeros((mesh.num_nodes, 2))]
    if config.fd_theta == "far-bump":
        # bump in the corner opposite to the inclusion, clear of the boundary
        center = np.where(init_centroid(mesh, phi) < 0.5, 0.75, 0.25)
        return [bump_field(mesh, tuple(center), 0.12, (0.6, 0.8))]
    rng = np.random.default_rng(config.problem.seed)
    return [random_smooth_field(mesh, rng) for _ in range(config.fd_fields)]


def init_centroid(mesh: StructuredMesh, phi: np.ndarray) -> np.ndarray:
    inside = phi < 0
    return mesh.nodes[inside].mean(axis=0) if np.any(inside) else np.array([0.5, 0.5])


def cmd_deriv_check(config: RunConfig) -> bool:
    """Finite-difference check of the tensor derivative at the initial shape"""
    problem = config.problem
    problem.solver.tol = min(problem.solver.tol, config.fd_tol)
    measurements = synthesize_measurements(problem, config.true_shapes)
    model = EitModel(problem, measurements)
    phi = init_signed_distance(model.mesh, config.initial_shapes)

    ok = True
    print(f"{'t':>10s} {'FD':>22s} {'dJ':>22s} {'error':>10s} {'ratio':>7s}")
    for k, theta in enumerate(_check_fields(config, model.mesh, phi)):
        report = finite_difference_check(model, phi, theta, config.fd_steps, config.fd_oracle)
        for row in report.rows:
            print(f"{row.step:10.3e} {row.fd_value:22.14e} {row.dJ_value:22.14e} "
                  f"{row.error:10.3e} {row.ratio:7.3f}")
        flag = " far-from-interface" if report.far_from_interface else ""
        print(f"field {k}: |dJ|/|theta|_H1={report.structure_ratio:.3e} "
              f"gap={report.interface_gap:.3f}{flag} {'PASS' if report.passed else 'FAIL'}")
        ok = ok and report.passed
    return ok


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--out", metavar="DIR", help="Output directory (overrides config)")
    common.add_argument("--seed", type=int, help="Noise seed (overrides config)")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")

    parser = argparse.ArgumentParser(prog="eitshape", description="EIT inclusion reconstruction by level-set shape descent")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="Generate synthetic boundary measurements")
    rec = sub.add_parser("reconstruct", parents=[common], help="Reconstruct the inclusion")
    rec.add_argument("--dump-every", type=int, metavar="K", help="Dump fields every K iterations")
    ver = sub.add_parser("verify", parents=[common], help="Run closed-form tensor checks")
    ver.add_argument("--panels", type=int, default=32)
    ver.add_argument("--radial", type=int, default=24)
    ver.add_argument("--negative-control", action="store_true",
                     help="Use an inconsistent data term; the equilibrium check must fail")
    sub.add_parser("deriv-check", parents=[common], help="Finite-difference check of the shape derivative")
    sub.add_parser("mesh-info", parents=[common], help="Print mesh statistics")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(quiet=args.quiet)

    try:
        if args.command == "verify":
            return EXIT_OK if cmd_verify(args.panels, args.radial, args.negative_control) else EXIT_FAILED_CHECK

        config = _apply_overrides(load_run_config(args.config), args)

        if args.command == "synth":
            manifest = cmd_synth(config)
            print(f"noise_level={manifest['noise_level']:.6g}")
            return EXIT_OK
        if args.command == "reconstruct":
            status = cmd_reconstruct(config)
            print(f"status={status.value}")
            return STATUS_EXIT[status]
        if args.command == "deriv-check":
            return EXIT_OK if cmd_deriv_check(config) else EXIT_FAILED_CHECK
        if args.command == "mesh-info":
            for key, value in mesh_summary(config.problem.build_mesh()).items():
                print(f"{key}: {value}")
            return EXIT_OK
    except ValidationError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except SolverError as e:
        logger.error("Solver failure: %s", e)
        return EXIT_SOLVER
    except OSError as e:
        logger.error("I/O failure on %s: %s", e.filename or "<unknown>", e)
        return EXIT_FAILED_CHECK
    return EXIT_FAILED_CHECK


if __name__ == "__main__":
    sys.exit(main())
