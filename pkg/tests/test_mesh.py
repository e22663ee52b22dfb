import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdafem.mesh import build_hierarchy, build_uniform_mesh, dump_mesh, neighborhood, refine


def _vertex_sharing(mesh, K):
    """Brute-force set of elements sharing at least one vertex with K."""
    verts = set(mesh.elements[K])
    return {k for k, tri in enumerate(mesh.elements) if verts & set(tri)}


def _point_in_triangle(p, tri, tol=1e-12):
    a, b, c = tri
    T = np.column_stack([b - a, c - a])
    lam = np.linalg.solve(T, p - a)
    return lam.min() >= -tol and lam.sum() <= 1 + tol


def test_single_cell_counts():
    mesh = build_uniform_mesh(1)
    assert mesh.n_elements == 2
    assert mesh.n_vertices == 4
    assert mesh.n_faces == 5
    assert mesh.boundary_faces.sum() == 4


def test_h_one_tenth_counts():
    mesh = build_uniform_mesh(20)
    assert mesh.n_elements == 800
    assert mesh.n_vertices == 441


@pytest.mark.parametrize("n", [1, 2, 5])
def test_face_adjacency(n):
    mesh = build_uniform_mesh(n)
    fe = mesh.face_elements
    interior = fe[:, 1] >= 0
    assert np.all(fe[:, 0] >= 0)
    assert np.all(fe[interior, 0] != fe[interior, 1])
    assert np.array_equal(~interior, mesh.boundary_faces)
    # every face is referenced by exactly its adjacent elements
    counts = np.bincount(mesh.element_faces.ravel(), minlength=mesh.n_faces)
    assert np.array_equal(counts, np.where(interior, 2, 1))
    assert (~interior).sum() == 4 * n


@pytest.mark.parametrize("n", [1, 3, 8])
def test_orientation_and_tiling(n):
    mesh = build_uniform_mesh(n)
    c = mesh.element_coords
    d1, d2 = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
    signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    assert np.all(signed > 0)
    assert abs(signed.sum() - 4.0) <= 1e-12 * 4
    assert np.allclose(mesh.diameters, 2 * np.sqrt(2) / n)
    assert mesh.diameters.max() / mesh.diameters.min() <= 2


def test_invalid_cell_count():
    with pytest.raises(ValueError):
        build_uniform_mesh(0)
    with pytest.raises(ValueError):
        build_uniform_mesh(2.5)


def test_refine_two_elements():
    mesh = build_uniform_mesh(1)
    fine, parent = refine(mesh)
    assert fine.n_elements == 8
    assert np.array_equal(np.bincount(parent), [4, 4])
    area = np.bincount(parent, weights=fine.areas)
    np.testing.assert_allclose(area, mesh.areas, rtol=1e-14)


def test_refine_twice_quarters_h():
    mesh = build_uniform_mesh(3)
    f1, _ = refine(mesh)
    f2, _ = refine(f1)
    np.testing.assert_allclose(f2.diameters.max() * 4, mesh.diameters.max(), rtol=1e-14)


def test_hierarchy_counts_and_maps():
    hier = build_hierarchy(5, 3)
    assert hier.J == 3
    assert hier.finest.n_elements == 2 * 40 ** 2
    for j in range(1, 4):
        parent = hier.parent_of[j]
        children = hier.children_of[j - 1]
        fine = np.arange(hier.levels[j].n_elements)
        assert children.shape == (hier.levels[j - 1].n_elements, 4)
        assert np.all(np.any(children[parent] == fine[:, None], axis=1))
        h = hier.levels[j].diameters.max()
        np.testing.assert_allclose(h, hier.levels[0].diameters.max() / 2 ** j, rtol=1e-14)


def test_hierarchy_matches_direct_construction():
    hier = build_hierarchy(5, 2)
    direct = build_uniform_mesh(20)
    np.testing.assert_allclose(hier.finest.vertices, direct.vertices, atol=1e-14)
    assert np.array_equal(hier.finest.elements, direct.elements)


def test_children_tile_parent():
    hier = build_hierarchy(2, 2)
    for j in range(1, 3):
        coarse, fine = hier.levels[j - 1], hier.levels[j]
        parent = hier.parent_of[j]
        np.testing.assert_allclose(np.bincount(parent, weights=fine.areas), coarse.areas,
                                   rtol=1e-14)
        for k in range(fine.n_elements):
            tri = coarse.element_coords[parent[k]]
            for p in fine.element_coords[k]:
                assert _point_in_triangle(p, tri)
        assert abs(fine.areas.sum() - 4.0) <= 1e-12 * 4


def test_hierarchy_rejects_bad_input():
    with pytest.raises(ValueError):
        build_hierarchy(0, 2)
    with pytest.raises(ValueError):
        build_hierarchy(4, 0)


def test_neighborhood_interior_element():
    mesh = build_uniform_mesh(8)
    K = 2 * (4 * 8 + 4)
    layer = neighborhood(mesh, K, 1)
    assert len(layer) == 13
    assert set(layer) == _vertex_sharing(mesh, K)


def test_neighborhood_corner_contains_self():
    mesh = build_uniform_mesh(4)
    assert 0 in neighborhood(mesh, 0, 1)


def test_neighborhood_nested_and_symmetric():
    mesh = build_uniform_mesh(10)
    layers = {}
    for K in range(mesh.n_elements):
        prev = None
        for s in (1, 2, 3):
            cur = set(neighborhood(mesh, K, s))
            layers[K, s] = cur
            if prev is not None:
                assert prev <= cur
            prev = cur
    for K in range(0, mesh.n_elements, 7):
        for s in (1, 2):
            for Kp in layers[K, s]:
                assert K in layers[Kp, s]


def test_face_handshake():
    mesh = build_uniform_mesh(6)
    for kp, km in mesh.face_elements[mesh.face_elements[:, 1] >= 0]:
        assert km in neighborhood(mesh, kp, 1)
        assert kp in neighborhood(mesh, km, 1)


def test_neighborhood_errors():
    mesh = build_uniform_mesh(2)
    with pytest.raises(ValueError):
        neighborhood(mesh, 0, 0)
    with pytest.raises(IndexError):
        neighborhood(mesh, 99, 1)


def test_dump_mesh(tmp_path):
    mesh = build_uniform_mesh(1)
    path = tmp_path / "mesh.txt"
    dump_mesh(mesh, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "4"
    assert lines[5] == "2"
    assert len(lines) == 1 + 4 + 1 + 2


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 12))
def test_area_sums_to_domain(n):
    mesh = build_uniform_mesh(n)
    assert abs(mesh.areas.sum() - 4.0) <= 1e-12 * 4
    fine, _ = refine(mesh)
    assert abs(fine.areas.sum() - 4.0) <= 1e-12 * 4
