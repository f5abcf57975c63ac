# eitshape/mesh.py
"""
Structured triangulation of the unit square.

Nodes are numbered lexicographically with x running fastest, so node (i, j)
sits at (i*h, j*h) with index j*(n+1) + i. Every grid cell is split along its
lower-left to upper-right diagonal into two counterclockwise triangles.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, Tuple

import numpy as np

from .errors import DimensionError
from .validators import ParameterValidator

logger = logging.getLogger(__name__)


class Side(Enum):
    """Boundary segments of the hold-all square"""
    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    BOTTOM = "bottom"


ALL_SIDES: FrozenSet[Side] = frozenset(Side)
LEFT_RIGHT: FrozenSet[Side] = frozenset({Side.LEFT, Side.RIGHT})
TOP_BOTTOM: FrozenSet[Side] = frozenset({Side.TOP, Side.BOTTOM})


def parse_sides(sides: Iterable) -> FrozenSet[Side]:
    """Accept Side members or their string names"""
    return frozenset(s if isinstance(s, Side) else Side(str(s).lower()) for s in sides)


@dataclass(frozen=True, eq=False)
class StructuredMesh:
    """Regular triangulation of (0,1)x(0,1) with side-tagged boundary edges"""
    n: int
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: Dict[Side, np.ndarray]
    displaced_from_grid: bool = False
    _geometry: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def num_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def node_index(self, i: int, j: int) -> int:
        return j * (self.n + 1) + i

    def _compute_geometry(self) -> None:
        p = self.nodes[self.triangles]
        x0, x1, x2 = p[:, 0], p[:, 1], p[:, 2]
        e1 = x1 - x0
        e2 = x2 - x0
        signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        twice = 2.0 * signed
        grads = np.empty((self.num_triangles, 3, 2))
        grads[:, 0, 0] = (x1[:, 1] - x2[:, 1]) / twice
        grads[:, 0, 1] = (x2[:, 0] - x1[:, 0]) / twice
        grads[:, 1, 0] = (x2[:, 1] - x0[:, 1]) / twice
        grads[:, 1, 1] = (x0[:, 0] - x2[:, 0]) / twice
        grads[:, 2, 0] = (x0[:, 1] - x1[:, 1]) / twice
        grads[:, 2, 1] = (x1[:, 0] - x0[:, 0]) / twice
        self._geometry["areas"] = signed
        self._geometry["grads"] = grads

    @property
    def areas(self) -> np.ndarray:
        """Signed triangle areas"""
        if "areas" not in self._geometry:
            self._compute_geometry()
        return self._geometry["areas"]

    @property
    def basis_gradients(self) -> np.ndarray:
        """Constant P1 basis gradients, shape (triangles, 3 vertices, 2)"""
        if "grads" not in self._geometry:
            self._compute_geometry()
        return self._geometry["grads"]

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def boundary_nodes(self, sides: Iterable) -> np.ndarray:
        """Sorted, duplicate-free indices of the nodes on the requested sides"""
        requested = parse_sides(sides)
        if not requested:
            raise DimensionError("At least one side must be requested")
        collected = [self.boundary_edges[side].ravel() for side in requested]
        return np.unique(np.concatenate(collected))

    def edge_lengths(self, side: Side) -> np.ndarray:
        edges = self.boundary_edges[side]
        return np.linalg.norm(self.nodes[edges[:, 1]] - self.nodes[edges[:, 0]], axis=1)

    def to_grid(self, values: np.ndarray) -> np.ndarray:
        """Reshape nodal values to a (n+1, n+1) array indexed [j, i]"""
        return np.asarray(values).reshape(self.n + 1, self.n + 1, *np.shape(values)[1:])

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """Element-wise constant gradient of a P1 field, shape (triangles, 2)"""
        return np.einsum("ta,tad->td", values[self.triangles], self.basis_gradients)

    def vertex_average(self, values: np.ndarray) -> np.ndarray:
        return values[self.triangles].mean(axis=1)

    def displaced(self, displacement: np.ndarray) -> "StructuredMesh":
        """Same topology with nodes moved by a nodal displacement field"""
        displacement = ParameterValidator.validate_nodal(
            displacement, self.num_nodes, "displacement", components=2)
        return replace(self, nodes=self.nodes + displacement,
                       displaced_from_grid=True, _geometry={})


def build_unit_square_mesh(n: int) -> StructuredMesh:
    """
    Build the regular n x n triangulation of the unit square.

    Args:
        n: Number of cells per side

    Returns:
        StructuredMesh with (n+1)^2 nodes, 2n^2 triangles and 4n boundary edges
    """
    n = ParameterValidator.validate_positive_int(n, "n")
    h = 1.0 / n

    jj, ii = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    nodes = np.column_stack([ii.ravel() * h, jj.ravel() * h])

    cj, ci = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ci = ci.ravel()
    cj = cj.ravel()
    a = cj * (n + 1) + ci
    b = a + 1
    c = a + (n + 1) + 1
    d = a + (n + 1)
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([a, b, c])
    triangles[1::2] = np.column_stack([a, c, d])

    k = np.arange(n)
    top_row = n * (n + 1)
    boundary_edges = {
        Side.BOTTOM: np.column_stack([k, k + 1]),
        Side.TOP: np.column_stack([top_row + k, top_row + k + 1]),
        Side.LEFT: np.column_stack([k * (n + 1), (k + 1) * (n + 1)]),
        Side.RIGHT: np.column_stack([k * (n + 1) + n, (k + 1) * (n + 1) + n]),
    }

    mesh = StructuredMesh(n=n, nodes=nodes, triangles=triangles, boundary_edges=boundary_edges)
    logger.debug("Built %dx%d mesh: %d nodes, %d triangles", n, n, mesh.num_nodes, mesh.num_triangles)
    return mesh


def edge_triangle_counts(mesh: StructuredMesh) -> Tuple[np.ndarray, np.ndarray]:
    """Unique undirected edges and how many triangles share each one"""
    tri = mesh.triangles
    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    unique, counts = np.unique(edges, axis=0, return_counts=True)
    return unique, counts


def mesh_summary(mesh: StructuredMesh) -> Dict[str, Any]:
    """Counts reported by the mesh-info command"""
    _, counts = edge_triangle_counts(mesh)
    tagged = sum(len(e) for e in mesh.boundary_edges.values())
    return {
        "n": mesh.n,
        "h": mesh.h,
        "nodes": mesh.num_nodes,
        "triangles": mesh.num_triangles,
        "boundary_edges": tagged,
        "interior_edges": int(np.count_nonzero(counts == 2)),
        # every edge in one or two triangles, the single-triangle ones all side-tagged
        "conforming": bool(counts.max() <= 2 and np.count_nonzero(counts == 1) == tagged),
        "total_area": float(mesh.areas.sum()),
    }
