import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdafem.basis import dim_p, eval_monomials
from rdafem.errors import PatchInfeasible, RankDeficient
from rdafem.geometry import Affine, Circle, Flower, compute_geometry
from rdafem.mesh import TriMesh, build_uniform_mesh, neighborhood
from rdafem.reconstruction import (build_active_meshes, build_patch, build_patches,
                                   build_reconstruction, build_sigma_map, default_threshold,
                                   solve_constrained_ls)


@pytest.fixture(scope="module")
def circle20():
    mesh = build_uniform_mesh(20)
    return mesh, compute_geometry(Circle(0.6), mesh, depth=3, vol_order=6)


@pytest.fixture(scope="module")
def circle40():
    mesh = build_uniform_mesh(40)
    return mesh, compute_geometry(Circle(0.6), mesh, depth=3, vol_order=6)


@pytest.fixture(scope="module")
def spaces(circle20):
    mesh, geom = circle20
    return {m: build_reconstruction(mesh, geom, m) for m in (0, 1, 2, 3)}


def _eval_poly(coef, m, pts):
    return eval_monomials(pts, m) @ coef


# ----------------------------------------------------------------------------
# active meshes and sigma map


def test_active_mesh_counts(circle20):
    mesh, geom = circle20
    a0, a1 = build_active_meshes(mesh, geom)
    ncut = len(geom.cut_elements)
    assert ncut > 0
    assert a0.size + a1.size == mesh.n_elements + ncut
    for act in (a0, a1):
        fe = mesh.face_elements[act.interior_faces]
        assert np.all(act.mask[fe[:, 0]]) and np.all(act.mask[fe[:, 1]])


def test_active_meshes_brute_force_for_affine_interface():
    mesh = build_uniform_mesh(7)
    geom = compute_geometry(Affine((1.0, 0.0), 0.0), mesh, depth=1)
    x = mesh.element_coords[:, :, 0]
    a0, a1 = build_active_meshes(mesh, geom)
    assert np.array_equal(a0.mask, x.min(axis=1) < 0)
    assert np.array_equal(a1.mask, x.max(axis=1) > 0)


@pytest.mark.parametrize("fixture", ["circle20", "circle40"])
def test_sigma_map_injective_and_local(fixture, request):
    mesh, geom = request.getfixturevalue(fixture)
    sigma = build_sigma_map(mesh, geom)
    for side in (0, 1):
        image = sigma.image[side]
        assert len(set(image.tolist())) == len(image)
        assert np.all(geom.cls[image] == side)
        if fixture == "circle40":
            assert sigma.s0[side] <= 2
        for K, img, s in zip(sigma.cut, image, sigma.layer[side]):
            assert img in neighborhood(mesh, K, s)
        # the inverse map undoes sigma
        assert np.array_equal(sigma.inverse[side][image], sigma.cut)


def test_sigma_first_element_takes_nearest_neighbour(circle20):
    mesh, geom = circle20
    sigma = build_sigma_map(mesh, geom)
    K = sigma.cut[0]
    bary = mesh.barycenters
    for side in (0, 1):
        cand = [k for k in neighborhood(mesh, K, 1) if geom.cls[k] == side]
        best = min(cand, key=lambda k: (np.linalg.norm(bary[k] - bary[K]), k))
        assert sigma.sigma(side, K) == best
    with pytest.raises(KeyError):
        sigma.sigma(0, int(np.flatnonzero(geom.cls == 0)[0]))


def test_sigma_map_flower_coarse():
    mesh = build_uniform_mesh(20)
    geom = compute_geometry(Flower(), mesh, depth=3)
    sigma = build_sigma_map(mesh, geom)
    for side in (0, 1):
        assert len(set(sigma.image[side].tolist())) == len(sigma.cut)
        assert np.all(geom.cls[sigma.image[side]] == side)


# ----------------------------------------------------------------------------
# patches


def test_patch_of_interior_element(circle20):
    mesh, geom = circle20
    a0, a1 = build_active_meshes(mesh, geom)
    sigma = build_sigma_map(mesh, geom)
    bary = mesh.barycenters
    K = int(np.argmin(np.linalg.norm(bary - [-0.8, 0.85], axis=1)))
    members, depth = build_patch(mesh, a1, sigma, K, 6)
    ring = sorted(neighborhood(mesh, K, 1), key=lambda k: (np.linalg.norm(bary[k] - bary[K]), k))
    assert members[0] == K
    assert list(members) == ring[:6]
    assert depth == 0


def test_patch_size_and_forced_preimage(circle20):
    mesh, geom = circle20
    actives = build_active_meshes(mesh, geom)
    sigma = build_sigma_map(mesh, geom)
    for side in (0, 1):
        act = actives[side]
        members, depth = build_patches(mesh, act, sigma.inverse[side], 9)
        assert members.shape == (act.size, 9)
        assert np.array_equal(members[:, 0], act.elements)
        assert all(len(set(row)) == 9 for row in members.tolist())
        assert np.all(act.mask[members])
        for k in np.flatnonzero(sigma.inverse[side][act.elements] >= 0):
            assert sigma.inverse[side][act.elements[k]] in members[k]


def test_patch_infeasible(circle20):
    mesh, geom = circle20
    a0, _ = build_active_meshes(mesh, geom)
    sigma = build_sigma_map(mesh, geom)
    with pytest.raises(PatchInfeasible):
        build_patches(mesh, a0, sigma.inverse[0], a0.size + 1)


# ----------------------------------------------------------------------------
# constrained least squares


def test_interpolation_example():
    coef = solve_constrained_ls([(0, 0), (1, 0), (0, 1)], [1, 2, 3], [0], 1)
    np.testing.assert_allclose(coef, [1, 1, 2], atol=1e-14)


def test_matches_dense_kkt_oracle():
    pts = np.array([(0, 0), (1, 0), (2, 0), (0, 1)], dtype=float)
    v = np.array([0, 1, 2, 5], dtype=float)
    A = eval_monomials(pts, 1)
    C = A[:1]
    kkt = np.block([[2 * A.T @ A, C.T], [C, np.zeros((1, 1))]])
    oracle = np.linalg.solve(kkt, np.concatenate([2 * A.T @ v, v[:1]]))[:3]
    coef = solve_constrained_ls(pts, v, [0], 1)
    np.testing.assert_allclose(coef, oracle, atol=1e-12)


def test_two_constraints_against_kkt():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, (9, 2))
    v = rng.standard_normal(9)
    A = eval_monomials(pts, 2)
    C = A[[0, 4]]
    kkt = np.block([[2 * A.T @ A, C.T], [C, np.zeros((2, 2))]])
    oracle = np.linalg.solve(kkt, np.concatenate([2 * A.T @ v, v[[0, 4]]]))[:6]
    coef = solve_constrained_ls(pts, v, [0, 4], 2)
    np.testing.assert_allclose(coef, oracle, atol=1e-11)
    np.testing.assert_allclose(_eval_poly(coef, 2, pts[[0, 4]]), v[[0, 4]], atol=1e-13)


def test_polynomial_recovery():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (7, 2))
    v = 3 - 2 * pts[:, 0] + pts[:, 1]
    coef = solve_constrained_ls(pts, v, [0], 1)
    np.testing.assert_allclose(coef, [3, -2, 1], atol=1e-13)


def test_rank_deficient_patch():
    with pytest.raises(RankDeficient):
        solve_constrained_ls([(0, 0), (1, 0), (2, 0), (3, 0)], [0, 1, 2, 3], [0], 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 10_000))
def test_constraints_hold_for_random_data(m, seed):
    rng = np.random.default_rng(seed)
    n = dim_p(m) + 4
    pts = rng.uniform(-1, 1, (n, 2))
    v = rng.standard_normal(n)
    coef = solve_constrained_ls(pts, v, [0, n - 1], m)
    np.testing.assert_allclose(_eval_poly(coef, m, pts[[0, n - 1]]), v[[0, n - 1]], atol=1e-10)


# ----------------------------------------------------------------------------
# reconstruction operator


def test_default_thresholds():
    assert [default_threshold(m) for m in range(5)] == [1, 6, 9, 16, 21]
    assert default_threshold(5) == dim_p(5) + 10


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_dimension_preserved(spaces, circle20, m):
    mesh, geom = circle20
    space = spaces[m]
    n0, n1 = geom.active(0).sum(), geom.active(1).sum()
    assert space.ndof == n0 + n1
    for side in space.sides:
        assert side.operator.shape == (side.active.size * dim_p(m), side.active.size)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_constant_reproduction(spaces, m):
    space = spaces[m]
    rng = np.random.default_rng(m)
    mesh = space.mesh
    for side in (0, 1):
        el = space.sides[side].active.elements
        lam = rng.dirichlet(np.ones(3), size=(len(el), 5))
        pts = np.einsum("ekv,evd->ekd", lam, mesh.element_coords[el]).reshape(-1, 2)
        vals = space.evaluate(side, np.ones(len(el)), pts, np.repeat(el, 5))
        assert np.abs(vals - 1).max() < 1e-12


@pytest.mark.parametrize("m", [1, 2, 3])
def test_polynomial_reproduction(spaces, m):
    space = spaces[m]
    rng = np.random.default_rng(10 + m)
    coef = rng.standard_normal(dim_p(m))
    mesh = space.mesh
    for side in (0, 1):
        el = space.sides[side].active.elements
        v = _eval_poly(coef, m, mesh.barycenters[el])
        pts = mesh.element_coords[el].mean(axis=1) * 0.7 + mesh.element_coords[el][:, 0] * 0.3
        got = space.evaluate(side, v, pts, el)
        assert np.abs(got - _eval_poly(coef, m, pts)).max() < 1e-12


def test_affine_function_exact_on_every_element(spaces):
    space = spaces[1]
    mesh = space.mesh
    for side in (0, 1):
        el = space.sides[side].active.elements
        pts = mesh.element_coords[el][:, 1]
        got = space.evaluate(side, mesh.barycenters[el, 0], pts, el)
        assert np.abs(got - pts[:, 0]).max() < 1e-13


@pytest.mark.parametrize("m", [1, 2, 3])
def test_constraint_interpolation(spaces, m):
    space = spaces[m]
    mesh = space.mesh
    rng = np.random.default_rng(20 + m)
    for side in (0, 1):
        rec = space.sides[side]
        el = rec.active.elements
        v = rng.standard_normal(len(el))
        for k, cons in enumerate(rec.constraints):
            vals = space.evaluate(side, v, mesh.barycenters[cons], np.full(len(cons), el[k]))
            assert np.abs(vals - v[rec.active.dof_index[cons]]).max() < 1e-12


def test_unit_vector_constraints(spaces):
    space = spaces[2]
    mesh = space.mesh
    rec = space.sides[0]
    el = rec.active.elements
    K = int(np.flatnonzero(~rec.active.interior)[0])
    e = np.zeros(len(el))
    e[K] = 1.0
    for k, cons in enumerate(rec.constraints):
        local = rec.active.dof_index[cons]
        vals = space.evaluate(0, e, mesh.barycenters[cons], np.full(len(cons), el[k]))
        np.testing.assert_allclose(vals, (local == K).astype(float), atol=1e-12)


def test_two_constraints_on_sigma_images(spaces):
    space = spaces[1]
    for side in (0, 1):
        rec = space.sides[side]
        inv = space.sigma.inverse[side][rec.active.elements]
        for k, cons in enumerate(rec.constraints):
            expected = 2 if inv[k] >= 0 else 1
            assert len(cons) == expected
            if expected == 2:
                assert cons[1] == inv[k]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(spaces, seed, a, b):
    space = spaces[2]
    rec = space.sides[1]
    rng = np.random.default_rng(seed)
    v, w = rng.standard_normal((2, rec.active.size))
    lhs = rec.coefficients(a * v + b * w)
    rhs = a * rec.coefficients(v) + b * rec.coefficients(w)
    assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + np.abs(rhs).max())


def test_lambda_single_element_constant():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    mesh = TriMesh(verts, np.array([[0, 1, 2], [1, 3, 2]]))
    geom = compute_geometry(Affine((1.0, 1.0), 1.0), mesh, depth=1)
    space = build_reconstruction(mesh, geom, 0)
    np.testing.assert_allclose(space.sides[0].lam, [0.5], rtol=1e-14)
    np.testing.assert_allclose(space.sides[1].lam, [0.5], rtol=1e-14)


def test_lambda_nonincreasing_in_threshold(circle20):
    mesh, geom = circle20
    lams = []
    for N in (6, 7, 8, 9, 10):
        space = build_reconstruction(mesh, geom, 1, threshold=N, auto_increase=False)
        lams.append(space)
    for side in (0, 1):
        free = space.sigma.inverse[side][lams[0].sides[side].active.elements] < 0
        for a, b in zip(lams[:-1], lams[1:]):
            la, lb = a.sides[side].lam[free], b.sides[side].lam[free]
            assert np.all(lb <= la * (1 + 1e-12))


def test_stability_report(spaces, tmp_path):
    rep = spaces[1].stability()
    assert np.isfinite(rep.Lambda_m) and rep.Lambda_m > 1
    assert all(rep.adequate)
    path = tmp_path / "lambda.csv"
    rep.to_csv(path, [s.active.elements for s in spaces[1].sides])
    lines = path.read_text().splitlines()
    assert lines[0] == "side,element,t_depth,lambda"
    assert len(lines) == 1 + spaces[1].ndof


@pytest.mark.parametrize("m", [1, 2, 3])
def test_default_thresholds_adequate(circle40, m):
    mesh, geom = circle40
    space = build_reconstruction(mesh, geom, m, auto_increase=False)
    assert all(s.adequate for s in space.sides)
    assert all(s.threshold == default_threshold(m) for s in space.sides)


def test_threshold_below_minimum(circle20):
    mesh, geom = circle20
    with pytest.raises(ValueError):
        build_reconstruction(mesh, geom, 1, threshold=4)
