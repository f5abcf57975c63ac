# tests/test_mesh.py
import numpy as np
import pytest

from eitshape.errors import DimensionError, InvalidParameterError
from eitshape.mesh import (
    ALL_SIDES,
    Side,
    build_unit_square_mesh,
    edge_triangle_counts,
    mesh_summary,
    parse_sides,
)


@pytest.mark.parametrize("n", [1, 2, 7, 128])
def test_mesh_counts(n):
    """Test node, triangle and boundary edge counts"""
    mesh = build_unit_square_mesh(n)
    assert mesh.num_nodes == (n + 1) ** 2
    assert mesh.num_triangles == 2 * n * n
    assert sum(len(e) for e in mesh.boundary_edges.values()) == 4 * n
    for side in Side:
        assert len(mesh.boundary_edges[side]) == n


def test_node_coordinates_are_lexicographic():
    """Test node (i, j) sits at (i*h, j*h) with x running fastest"""
    mesh = build_unit_square_mesh(4)
    for j in range(5):
        for i in range(5):
            k = mesh.node_index(i, j)
            assert k == j * 5 + i
            assert mesh.nodes[k, 0] == i * 0.25
            assert mesh.nodes[k, 1] == j * 0.25


def test_triangles_are_counterclockwise_with_equal_area():
    """Test every triangle has area h^2/2 and the areas sum to one"""
    mesh = build_unit_square_mesh(8)
    assert np.all(mesh.areas > 0)
    np.testing.assert_allclose(mesh.areas, 0.5 / 64, rtol=1e-14)
    assert mesh.areas.sum() == pytest.approx(1.0, rel=1e-14)


def test_cell_split_along_diagonal():
    """Test the first cell is split into (a, b, c) and (a, c, d)"""
    mesh = build_unit_square_mesh(2)
    np.testing.assert_array_equal(mesh.triangles[0], [0, 1, 4])
    np.testing.assert_array_equal(mesh.triangles[1], [0, 4, 3])


def test_edges_conforming():
    """Test interior edges are shared by two triangles and boundary edges by one"""
    mesh = build_unit_square_mesh(6)
    edges, counts = edge_triangle_counts(mesh)
    assert counts.max() == 2

    on_boundary = {tuple(e) for e in edges[counts == 1]}
    tagged = {tuple(sorted(e)) for side in Side for e in mesh.boundary_edges[side]}
    assert on_boundary == tagged
    assert len(tagged) == 4 * 6


def test_boundary_edges_lie_on_their_side():
    """Test side tags match coordinates"""
    mesh = build_unit_square_mesh(5)
    coords = {
        Side.LEFT: (0, 0.0),
        Side.RIGHT: (0, 1.0),
        Side.BOTTOM: (1, 0.0),
        Side.TOP: (1, 1.0),
    }
    for side, (axis, value) in coords.items():
        pts = mesh.nodes[mesh.boundary_edges[side].ravel(), axis]
        np.testing.assert_allclose(pts, value, atol=1e-15)
        np.testing.assert_allclose(mesh.edge_lengths(side), 0.2, rtol=1e-14)


def test_boundary_nodes():
    """Test boundary node queries for n=2"""
    mesh = build_unit_square_mesh(2)
    np.testing.assert_array_equal(mesh.boundary_nodes([Side.LEFT]), [0, 3, 6])
    every = mesh.boundary_nodes(ALL_SIDES)
    assert len(every) == 8
    assert 4 not in every
    corner = set(mesh.boundary_nodes([Side.LEFT])) & set(mesh.boundary_nodes([Side.BOTTOM]))
    assert corner == {0}

    with pytest.raises(DimensionError):
        mesh.boundary_nodes([])


def test_parse_sides():
    """Test sides accept names in any case"""
    assert parse_sides(["Left", "right"]) == {Side.LEFT, Side.RIGHT}
    assert parse_sides([Side.TOP]) == {Side.TOP}
    with pytest.raises(ValueError):
        parse_sides(["front"])


def test_invalid_resolution():
    """Test n below one is rejected"""
    with pytest.raises(InvalidParameterError):
        build_unit_square_mesh(0)
    with pytest.raises(InvalidParameterError):
        build_unit_square_mesh(2.5)


def test_displaced_mesh_keeps_topology():
    """Test moving nodes keeps connectivity and refreshes geometry"""
    mesh = build_unit_square_mesh(4)
    _ = mesh.areas
    disp = np.zeros((mesh.num_nodes, 2))
    disp[mesh.node_index(2, 2)] = (0.05, 0.0)
    moved = mesh.displaced(disp)

    assert moved.displaced_from_grid
    np.testing.assert_array_equal(moved.triangles, mesh.triangles)
    assert moved.areas.sum() == pytest.approx(1.0, rel=1e-14)
    assert not np.allclose(moved.areas, mesh.areas)

    with pytest.raises(DimensionError):
        mesh.displaced(np.zeros((3, 2)))


def test_mesh_summary():
    """Test mesh-info statistics"""
    summary = mesh_summary(build_unit_square_mesh(4))
    assert summary["nodes"] == 25
    assert summary["triangles"] == 32
    assert summary["boundary_edges"] == 16
    assert summary["interior_edges"] == 3 * 4 ** 2 - 2 * 4
    assert summary["conforming"] is True
    assert summary["total_area"] == pytest.approx(1.0)
