# tests/test_cli.py
import json
import os

import pandas as pd
import pyvista as pv
import pytest

from eitshape.cli import EXIT_CONFIG, EXIT_FAILED_CHECK, EXIT_OK, STATUS_EXIT, cmd_reconstruct, main
from eitshape.eit import RunStatus
from eitshape.runconfig import load_run_config

SMALL_CONFIG = """
[problem]
n = 12
max_iterations = 4
delta = {delta}
seed = 7

[solver]
tol = 1e-12

[[true_shapes]]
kind = "ball"
center = [0.6, 0.6]
radius = 0.15

[[initial_shapes]]
kind = "ball"
center = [0.4, 0.4]
radius = 0.2

[output]
dump_every = 2

[derivcheck]
theta = "zero"
"""


def _write_config(tmp_path, delta=0.0, extra=""):
    path = tmp_path / "run.toml"
    path.write_text(SMALL_CONFIG.format(delta=delta) + extra)
    return str(path)


def test_mesh_info(tmp_path, capsys):
    """Test mesh-info prints the mesh counts"""
    assert main(["mesh-info", "--config", _write_config(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "nodes: 169" in out
    assert "triangles: 288" in out
    assert "interior_edges: 408" in out
    assert "conforming: True" in out


def test_synth_writes_reproducible_files(tmp_path):
    """Test synth output is byte-identical for a fixed seed"""
    config = _write_config(tmp_path, delta=0.01)
    first = tmp_path / "a"
    second = tmp_path / "b"
    assert main(["synth", "--config", config, "--out", str(first), "--quiet"]) == EXIT_OK
    assert main(["synth", "--config", config, "--out", str(second), "--quiet"]) == EXIT_OK

    names = sorted(os.listdir(first / "measurements"))
    assert names == ["flux_1.csv", "flux_2.csv", "flux_3.csv", "manifest.json"]
    for name in names:
        assert (first / "measurements" / name).read_bytes() == (second / "measurements" / name).read_bytes()

    manifest = json.loads((first / "measurements" / "manifest.json").read_text())
    assert manifest["noise_level"] > 0
    assert manifest["seed"] == 7
    assert manifest["num_fluxes"] == 3


def test_synth_without_noise(tmp_path):
    """Test delta = 0 reports a zero noise level"""
    out = tmp_path / "out"
    assert main(["synth", "--config", _write_config(tmp_path), "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "measurements" / "manifest.json").read_text())
    assert manifest["noise_level"] == 0.0
    frame = pd.read_csv(out / "measurements" / "flux_1.csv")
    assert list(frame.columns) == ["node", "x", "y", "clean", "noisy"]
    assert len(frame) == 4 * 12


def test_reconstruct_outputs(tmp_path):
    """Test reconstruct writes the trace, summary and field dumps"""
    out = tmp_path / "out"
    code = main(["reconstruct", "--config", _write_config(tmp_path), "--out", str(out), "--quiet"])
    assert code in set(STATUS_EXIT.values())

    trace = pd.read_csv(out / "trace.csv")
    assert list(trace.columns) == ["iter", "J", "step", "dJ_theta", "grad_dev", "stop_hits"]
    assert (trace["J"].diff().dropna() <= 0).all()
    assert list(trace["iter"]) == list(range(1, len(trace) + 1))

    summary = json.loads((out / "summary.json").read_text())
    assert summary["iterations"] == len(trace)
    assert summary["initial_cost"] == pytest.approx(3.0, rel=1e-12)
    assert summary["relative_cost"] == pytest.approx(summary["final_cost"] / 3.0, rel=1e-12)
    assert STATUS_EXIT[RunStatus(summary["status"])] == code

    fields = sorted(os.listdir(out / "fields"))
    assert "iter_00000.vtk" in fields
    assert "iter_00000.csv" in fields
    grid = pv.read(str(out / "fields" / "iter_00000.vtk"))
    assert grid.dimensions == (13, 13, 1)
    assert grid.n_points == 169
    assert grid.n_cells == 144
    assert {"phi", "u_n", "u_d"} <= set(grid.point_data.keys())
    assert "sigma" in grid.cell_data.keys()
    assert (out / "fields" / "iter_00000.vtk").read_text().startswith("# vtk DataFile")


def test_reconstruct_is_reproducible(tmp_path):
    """Test two runs with the same configuration give identical cost histories"""
    config = _write_config(tmp_path)
    for name in ("a", "b"):
        main(["reconstruct", "--config", config, "--out", str(tmp_path / name), "--quiet"])
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_verify_command(capsys):
    """Test verify passes and the negative control fails"""
    assert main(["verify", "--quiet"]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out
    assert main(["verify", "--negative-control", "--quiet"]) == EXIT_FAILED_CHECK
    assert "FAIL" in capsys.readouterr().out


def test_deriv_check_zero_field(tmp_path):
    """Test the derivative check passes trivially for theta = 0"""
    assert main(["deriv-check", "--config", _write_config(tmp_path), "--quiet"]) == EXIT_OK


def test_config_errors(tmp_path):
    """Test malformed configurations exit with the configuration code"""
    assert main(["mesh-info", "--config", _write_config(tmp_path, extra="\n[extras]\nfoo = 1\n")]) == EXIT_CONFIG

    bad = tmp_path / "bad.toml"
    bad.write_text("[problem]\nn = 0\n")
    assert main(["mesh-info", "--config", str(bad)]) == EXIT_CONFIG

    broken = tmp_path / "broken.toml"
    broken.write_text("[problem\n")
    assert main(["synth", "--config", str(broken)]) == EXIT_CONFIG

    assert main(["synth", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG


def test_dump_every_override_rejected(tmp_path):
    """Test a negative --dump-every override is rejected as a configuration error"""
    assert main(["reconstruct", "--config", _write_config(tmp_path), "--dump-every", "-1"]) == EXIT_CONFIG


def test_reconstruct_replaces_stale_measurements(tmp_path):
    """Test reconstruct synthesizes again when the stored manifest disagrees with the run"""
    out = tmp_path / "out"
    assert main(["synth", "--config", _write_config(tmp_path, delta=0.01), "--out", str(out),
                 "--seed", "1", "--quiet"]) == EXIT_OK

    moved = tmp_path / "moved.toml"
    moved.write_text(SMALL_CONFIG.format(delta=0.01).replace("center = [0.6, 0.6]", "center = [0.55, 0.6]"))
    main(["reconstruct", "--config", str(moved), "--out", str(out), "--seed", "2", "--quiet"])

    manifest = json.loads((out / "measurements" / "manifest.json").read_text())
    assert manifest["seed"] == 2
    assert manifest["true_shapes"][0]["center"] == [0.55, 0.6]

    fresh = tmp_path / "fresh"
    assert main(["synth", "--config", str(moved), "--out", str(fresh), "--seed", "2", "--quiet"]) == EXIT_OK
    for name in ("flux_1.csv", "flux_2.csv", "flux_3.csv", "manifest.json"):
        assert (out / "measurements" / name).read_bytes() == (fresh / "measurements" / name).read_bytes()


def test_reconstruct_reuses_matching_measurements(tmp_path):
    """Test measurements written for the same settings are read back, not regenerated"""
    config = _write_config(tmp_path, delta=0.01)
    out = tmp_path / "out"
    assert main(["synth", "--config", config, "--out", str(out), "--quiet"]) == EXIT_OK

    path = out / "measurements" / "flux_1.csv"
    frame = pd.read_csv(path)
    frame["noisy"] = frame["clean"]
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    edited = path.read_bytes()

    main(["reconstruct", "--config", config, "--out", str(out), "--quiet"])
    assert path.read_bytes() == edited


@pytest.mark.slow
@pytest.mark.parametrize("name", ["two_ellipses.toml", "three_inclusions.toml"])
def test_shipped_configuration_runs(tmp_path, name):
    """Test the example runs on a coarser grid give a decreasing cost history"""
    config = load_run_config(os.path.join(os.path.dirname(__file__), "..", "configs", name))
    config.problem.n = 32
    config.problem.max_iterations = 40
    config.output_dir = str(tmp_path / "out")
    config.dump_every = 0

    status = cmd_reconstruct(config)
    trace = pd.read_csv(tmp_path / "out" / "trace.csv")
    assert len(trace) >= 1
    assert (trace["J"].diff().dropna() <= 0).all()
    assert trace["J"].iloc[-1] < config.problem.num_fluxes
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["status"] == status.value
