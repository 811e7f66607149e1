import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from porous_opt.errors import MeshConformityError, MeshStructureError
from porous_opt.mesh import (
    build_barycentric_dual,
    build_diamond_dual,
    build_primal,
    read_mesh,
    square_mesh,
    write_mesh,
)

SQUARE_VERTS = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
SQUARE_TRIS = [[0, 1, 2], [0, 2, 3]]


@pytest.fixture
def two_tri():
    return build_primal(SQUARE_VERTS, SQUARE_TRIS)


def test_two_triangle_square_counts(two_tri):
    # 5 edges total, one interior (forced by the topology)
    assert two_tri.num_edges == 5
    assert len(two_tri.interior_edges) == 1
    assert two_tri.num_triangles == 2
    assert two_tri.domain_area == pytest.approx(1.0)


def test_reference_triangle_geometry():
    m = build_primal([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    assert m.tri_area[0] == pytest.approx(0.5)
    assert m.h == pytest.approx(np.sqrt(2.0))
    assert m.boundary_edge.all()


@settings(deadline=None, max_examples=12)
@given(n=st.integers(min_value=1, max_value=9))
def test_square_mesh_counts_and_area(n):
    m = square_mesh(n)
    assert m.num_triangles == 2 * n * n
    assert m.tri_area.sum() == pytest.approx(1.0, abs=1e-13)
    assert (m.tri_area > 0).all()


def test_orientation_normalized():
    # clockwise input triangle gets reordered, area stays positive
    m = build_primal([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    assert m.tri_area[0] == pytest.approx(0.5)
    pts = m.tri_vertices(0)
    d = pts[1] - pts[0]; e = pts[2] - pts[0]
    assert d[0] * e[1] - d[1] * e[0] > 0


def test_bad_index_rejected():
    with pytest.raises(MeshStructureError):
        build_primal(SQUARE_VERTS, [[0, 1, 7]])


def test_degenerate_triangle_rejected():
    with pytest.raises(MeshStructureError):
        build_primal([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_duplicate_triangle_rejected():
    with pytest.raises(MeshStructureError):
        build_primal(SQUARE_VERTS, [[0, 1, 2], [2, 1, 0]])


def test_nonconforming_rejected():
    verts = SQUARE_VERTS + [[2.0, 0.5]]
    tris = [[0, 1, 2], [0, 2, 3], [0, 2, 4]]  # edge (0,2) used three times
    with pytest.raises(MeshConformityError):
        build_primal(verts, tris)


def test_normal_orientation_convention(two_tri):
    # interior edge normal points out of the lower-indexed adjacent triangle
    e = two_tri.interior_edges[0]
    k_low = two_tri.edge_tris[e, 0]
    away = two_tri.edge_midpoint[e] - two_tri.barycentre[k_low]
    assert np.dot(two_tri.edge_normal[e], away) > 0
    # and outward on the boundary
    for eb in np.flatnonzero(two_tri.boundary_edge):
        k = two_tri.edge_tris[eb, 0]
        away = two_tri.edge_midpoint[eb] - two_tri.barycentre[k]
        assert np.dot(two_tri.edge_normal[eb], away) > 0


def test_interior_normal_sign_pairing():
    m = square_mesh(3)
    for e in m.interior_edges:
        k0, k1 = m.edge_tris[e]
        j0 = np.argmax(m.tri_edges[k0] == e)
        j1 = np.argmax(m.tri_edges[k1] == e)
        assert m.tri_edge_sign[k0, j0] == -m.tri_edge_sign[k1, j1]


# ---------------------------------------------------------------------------
# diamond dual
# ---------------------------------------------------------------------------

def test_diamond_two_tri(two_tri):
    dd = build_diamond_dual(two_tri)
    assert dd.num_cells == 5
    boundary = two_tri.boundary_edge
    assert boundary.sum() == 4
    assert dd.cell_area.sum() == pytest.approx(1.0, rel=1e-12)
    # the single interior cell is a quadrilateral
    e = two_tri.interior_edges[0]
    assert dd.cell_polygons[e].shape[0] == 4


def test_diamond_reference_triangle():
    m = build_primal([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    dd = build_diamond_dual(m)
    # three boundary cells, each one third of the element
    assert dd.num_cells == 3
    assert np.allclose(dd.cell_area, m.tri_area[0] / 3.0)


def test_diamond_interior_area_identity():
    m = square_mesh(4)
    dd = build_diamond_dual(m)
    for e in m.interior_edges:
        k0, k1 = m.edge_tris[e]
        expect = (m.tri_area[k0] + m.tri_area[k1]) / 3.0
        assert dd.cell_area[e] == pytest.approx(expect, rel=1e-12)


def test_partition_of_unity_all_grids():
    mesh = read_mesh("data/unstructured_square.node", "data/unstructured_square.ele")
    dd = build_diamond_dual(mesh)
    bd = build_barycentric_dual(mesh)
    area = mesh.domain_area
    assert dd.cell_area.sum() == pytest.approx(area, rel=1e-12)
    assert bd.cell_area.sum() == pytest.approx(area, rel=1e-12)


# ---------------------------------------------------------------------------
# barycentric dual
# ---------------------------------------------------------------------------

def test_barycentric_reference_triangle():
    m = build_primal([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    bd = build_barycentric_dual(m)
    assert np.allclose(bd.cell_area, 1.0 / 6.0)


def test_barycentric_two_tri(two_tri):
    bd = build_barycentric_dual(two_tri)
    assert bd.num_cells == 6
    assert bd.cell_area.sum() == pytest.approx(1.0, rel=1e-12)


def test_barycentric_arbitrary_triangle():
    m = build_primal([[0, 0], [2, 0], [0, 4]], [[0, 1, 2]])
    bd = build_barycentric_dual(m)
    assert np.allclose(bd.cell_area, 4.0 / 3.0)


def test_barycentric_cells_contain_their_edge():
    m = square_mesh(3)
    bd = build_barycentric_dual(m)
    # cell (K, j) is tagged with local edge j's global index
    assert np.array_equal(bd.edge_of_cell, m.tri_edges)


def test_fan_closure():
    # per triangle, the six interior fan segments close: sum n * len = 0
    mesh = read_mesh("data/unstructured_square.node", "data/unstructured_square.ele")
    bd = build_barycentric_dual(mesh)
    total = np.einsum("tjse,tjs->te", bd.seg_normal, bd.seg_length)
    assert np.abs(total).max() < 1e-12


# ---------------------------------------------------------------------------
# file round trip
# ---------------------------------------------------------------------------

def test_mesh_file_round_trip(tmp_path):
    m = square_mesh(3)
    write_mesh(m, tmp_path / "m.node", tmp_path / "m.ele")
    m2 = read_mesh(tmp_path / "m.node", tmp_path / "m.ele")
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.allclose(m.vertices, m2.vertices)


def test_mesh_file_bad_width(tmp_path):
    (tmp_path / "bad.node").write_text("2 3\n0 0 0 0\n1 1 1 1\n")
    with pytest.raises(MeshStructureError):
        read_mesh(tmp_path / "bad.node", tmp_path / "bad.node")
