# eitshape/output.py
"""File formats: cost history CSV, legacy VTK dumps through pyvista, measurement sets."""

import json
import logging
import os
from typing import Any, Dict, Mapping, Optional

import numpy as np
import pandas as pd
import pyvista as pv

from .eit import MeasurementSet, OptTrace
from .errors import DimensionError
from .mesh import Side, StructuredMesh

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["iter", "J", "step", "dJ_theta", "grad_dev", "stop_hits"]
FLOAT_FORMAT = "%.17g"
MANIFEST = "manifest.json"


def trace_frame(trace: OptTrace) -> pd.DataFrame:
    rows = [(r.iteration, r.cost, r.step, r.dJ_theta, r.grad_dev, r.stop_hits) for r in trace.records]
    frame = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    return frame.astype({"iter": int, "stop_hits": int})


def write_trace_csv(trace: OptTrace, path: str) -> str:
    """One row per accepted iteration"""
    _ensure_parent(path)
    trace_frame(trace).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("Wrote cost history to %s", path)
    return path


def grid_cell_average(mesh: StructuredMesh, element_values: np.ndarray) -> np.ndarray:
    """Average the two triangles of every grid cell, in lexicographic cell order"""
    if element_values.shape != (mesh.num_triangles,):
        raise DimensionError("Cell data must have one value per triangle")
    return 0.5 * (element_values[0::2] + element_values[1::2])


def field_grid(mesh: StructuredMesh, point_data: Mapping[str, np.ndarray],
               cell_data: Optional[Mapping[str, np.ndarray]] = None) -> pv.ImageData:
    """Image grid over the mesh nodes with nodal point data and per-grid-cell cell data"""
    grid = pv.ImageData(dimensions=(mesh.n + 1, mesh.n + 1, 1),
                        spacing=(mesh.h, mesh.h, 1.0), origin=(0.0, 0.0, 0.0))
    for name, values in point_data.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.num_nodes,):
            raise DimensionError(f"Point data {name} must have one value per node")
        grid.point_data[name] = values
    for name, values in (cell_data or {}).items():
        grid.cell_data[name] = grid_cell_average(mesh, np.asarray(values, dtype=float))
    return grid


def write_vtk_structured_points(mesh: StructuredMesh, path: str,
                                point_data: Mapping[str, np.ndarray],
                                cell_data: Optional[Mapping[str, np.ndarray]] = None) -> str:
    """Legacy ASCII VTK of field_grid"""
    _ensure_parent(path)
    field_grid(mesh, point_data, cell_data).save(path, binary=False)
    return path


def write_field_csv(mesh: StructuredMesh, path: str, columns: Mapping[str, np.ndarray]) -> str:
    """Plain CSV mirror of nodal fields"""
    _ensure_parent(path)
    frame = pd.DataFrame({"x": mesh.nodes[:, 0], "y": mesh.nodes[:, 1]})
    for name, values in columns.items():
        frame[name] = np.asarray(values, dtype=float)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_measurements(measurements: MeasurementSet, out_dir: str,
                       extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Per-flux trace files plus a JSON manifest with the realized noise level"""
    os.makedirs(out_dir, exist_ok=True)
    mesh = measurements.mesh
    for i in range(measurements.num_fluxes):
        frame = pd.DataFrame({
            "node": measurements.nodes,
            "x": mesh.nodes[measurements.nodes, 0],
            "y": mesh.nodes[measurements.nodes, 1],
            "clean": measurements.clean[i],
            "noisy": measurements.noisy[i],
        })
        frame.to_csv(os.path.join(out_dir, f"flux_{i + 1}.csv"), index=False,
                     float_format=FLOAT_FORMAT, lineterminator="\n")

    manifest: Dict[str, Any] = {
        "n": mesh.n,
        "num_fluxes": measurements.num_fluxes,
        "noise_level": measurements.realized_noise_level(),
        "inverse_crime": measurements.inverse_crime,
    }
    manifest.update(extra or {})
    with open(os.path.join(out_dir, MANIFEST), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    logger.info("Wrote %d traces to %s (noise level %.4f)", measurements.num_fluxes, out_dir,
                manifest["noise_level"])
    return manifest


def read_manifest(out_dir: str) -> Dict[str, Any]:
    with open(os.path.join(out_dir, MANIFEST), encoding="utf-8") as fh:
        return json.load(fh)


def read_measurements(out_dir: str, mesh: StructuredMesh) -> MeasurementSet:
    """Load traces written by write_measurements"""
    manifest = read_manifest(out_dir)
    if manifest["n"] != mesh.n:
        raise DimensionError(f"Measurements were taken on n={manifest['n']}, mesh has n={mesh.n}")
    frames = [pd.read_csv(os.path.join(out_dir, f"flux_{i + 1}.csv"))
              for i in range(manifest["num_fluxes"])]
    nodes = frames[0]["node"].to_numpy(dtype=np.int64)
    clean = np.array([f["clean"].to_numpy(dtype=float) for f in frames])
    noisy = np.array([f["noisy"].to_numpy(dtype=float) for f in frames])
    return MeasurementSet(mesh=mesh, nodes=nodes, clean=clean, noisy=noisy,
                          inverse_crime=bool(manifest.get("inverse_crime", True)))


def flux_patterns_to_json(fluxes) -> list:
    return [{side.value: value for side, value in pattern.items()} for pattern in fluxes]


def side_names(sides) -> list:
    return sorted(s.value if isinstance(s, Side) else str(s) for s in sides)


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
