import numpy as np
import pytest
import scipy.sparse.linalg as spla

from rdafem.assembly import (ExactSolution, ProblemSpec, assemble_highorder,
                             assemble_level_systems, assemble_lowest_order, build_transfer,
                             default_penalty, export_coo, harmonic_weights, mass_diagonal)
from rdafem.cases import example1, make_problem
from rdafem.errors import NonPositivePenalty
from rdafem.geometry import Affine, Circle, compute_geometry
from rdafem.mesh import build_hierarchy, build_uniform_mesh
from rdafem.norms import compute_errors
from rdafem.reconstruction import build_active_meshes, build_reconstruction


def _affine_problem(alpha0=10.0, alpha1=1.0):
    ex = ExactSolution(lambda p: 1 + 2 * p[:, 0] - p[:, 1],
                       lambda p: 3 - p[:, 0] + 0.5 * p[:, 1],
                       lambda p: np.tile([2.0, -1.0], (len(p), 1)),
                       lambda p: np.tile([-1.0, 0.5], (len(p), 1)))
    zero = lambda p: np.zeros(len(p))  # noqa: E731
    return make_problem(ex, alpha0, alpha1, zero, zero)


def _solve(space, spec, mu=None):
    sys = assemble_highorder(space, spec, mu=mu)
    return sys, spla.spsolve(sys.A.tocsc(), sys.rhs)


@pytest.fixture(scope="module")
def circle_space():
    mesh = build_uniform_mesh(10)
    geom = compute_geometry(Circle(0.6), mesh, depth=3, vol_order=6, face_npts=4)
    return {m: build_reconstruction(mesh, geom, m) for m in (0, 1, 2)}


def test_harmonic_weights():
    w0, w1, aw = harmonic_weights(10.0, 1.0)
    assert abs(w0 - 1 / 11) < 1e-15 and abs(w1 - 10 / 11) < 1e-15
    assert abs(aw - 20 / 11) < 1e-14


def test_default_penalty_table():
    assert [default_penalty(m) for m in range(6)] == [1.0, 3.0, 8.0, 10.0, 14.0, 18.0]


def test_nonpositive_coefficient():
    with pytest.raises(ValueError):
        _affine_problem(alpha0=0.0)


@pytest.mark.parametrize("levelset", [Affine((1.0, 0.0), 0.2), Affine((1.0, 0.4), 0.13),
                                      Affine((-0.3, 1.0), -0.27)])
def test_affine_patch_test(levelset):
    mesh = build_uniform_mesh(10)
    geom = compute_geometry(levelset, mesh, depth=1, vol_order=4, face_npts=3)
    space = build_reconstruction(mesh, geom, 1)
    spec = _affine_problem()
    _, v = _solve(space, spec)
    err = compute_errors(space, v, spec)
    assert err.energy <= 1e-9
    assert err.l2 <= 1e-9


@pytest.mark.parametrize("m", [1, 2])
def test_symmetric_positive_definite(circle_space, m):
    sys = assemble_highorder(circle_space[m], example1().spec)
    A = sys.A
    assert abs(A - A.T).max() == 0
    lam = np.linalg.eigvalsh(A.toarray())
    assert lam.min() > 0


def test_penalty_part_scales_linearly(circle_space):
    space = circle_space[2]
    spec = example1().spec
    a = assemble_highorder(space, spec, mu=4.0, keep_parts=True)
    b = assemble_highorder(space, spec, mu=8.0)
    diff = (b.A - a.A) - a.parts["penalty"]
    assert abs(diff).max() <= 1e-10 * abs(a.A).max()
    total = a.parts["volume"] + a.parts["consistency"] + a.parts["penalty"]
    assert abs(total - a.A).max() <= 1e-12 * abs(a.A).max()


def test_nonpositive_penalty(circle_space):
    with pytest.raises(NonPositivePenalty):
        assemble_highorder(circle_space[1], example1().spec, mu=0.0)


def test_lowest_order_matches_m0_path(circle_space):
    space = circle_space[0]
    spec = example1().spec
    A0 = assemble_lowest_order(space.mesh, space.geom, spec)
    Am = assemble_highorder(space, spec, mu=1.0).A
    assert abs(A0 - Am).max() <= 1e-12 * abs(A0).max()


def test_lowest_order_brute_force():
    mesh = build_uniform_mesh(2)
    geom = compute_geometry(Affine((1.0, 0.0), 0.0), mesh, depth=1)
    spec = _affine_problem(alpha0=3.0, alpha1=2.0)
    actives = build_active_meshes(mesh, geom)
    A = assemble_lowest_order(mesh, geom, spec, actives).toarray()
    n0 = actives[0].size
    dof = [lambda K: actives[0].dof_index[K], lambda K: n0 + actives[1].dof_index[K]]
    ref = np.zeros_like(A)
    _, _, aw = harmonic_weights(3.0, 2.0)
    for f, (kp, km) in enumerate(mesh.face_elements):
        sp_, alpha = int(geom.cls[kp]), spec.alpha(int(geom.cls[kp]))
        if km < 0:
            ref[dof[sp_](kp), dof[sp_](kp)] += alpha
            continue
        if geom.cls[kp] == geom.cls[km]:
            i, j, w = dof[sp_](kp), dof[sp_](km), alpha
        else:
            k0, k1 = (kp, km) if geom.cls[kp] == 0 else (km, kp)
            i, j = dof[0](k0), dof[1](k1)
            w = aw * mesh.face_lengths[f] / max(mesh.diameters[k0], mesh.diameters[k1])
        ref[i, i] += w
        ref[j, j] += w
        ref[i, j] -= w
        ref[j, i] -= w
    np.testing.assert_allclose(A, ref, atol=1e-14)


def test_mass_diagonal_measures():
    mesh = build_uniform_mesh(40)
    geom = compute_geometry(Circle(0.6), mesh, depth=4)
    spec = example1().spec
    actives = build_active_meshes(mesh, geom)
    D = mass_diagonal(geom, actives, spec)
    n0 = actives[0].size
    assert np.all(D > 0)
    assert abs(D[:n0].sum() / 10.0 - np.pi * 0.36) < 1e-5
    assert abs(D[n0:].sum() - (4 - np.pi * 0.36)) < 1e-5


@pytest.fixture(scope="module")
def levels():
    hier = build_hierarchy(5, 2)
    geom = compute_geometry(Circle(0.6), hier.finest, depth=3)
    return hier, geom, assemble_level_systems(hier, geom, example1().spec)


def test_level_systems(levels):
    hier, geom, ls = levels
    assert ls.J == 2
    sizes = [A.shape[0] for A in ls.A0]
    assert sizes[0] < sizes[1] < sizes[2]
    A_fine = assemble_lowest_order(hier.finest, geom, example1().spec)
    assert abs(ls.A0[2] - A_fine).max() <= 1e-13 * abs(A_fine).max()
    for j in range(3):
        assert len(ls.D[j]) == sizes[j]
        np.testing.assert_allclose(ls.D[j].sum(), ls.D[2].sum(), rtol=1e-10)


def test_transfer_properties(levels):
    _, _, ls = levels
    for j in (1, 2):
        P = ls.P[j]
        nc = P.shape[1]
        np.testing.assert_array_equal(P @ np.ones(nc), np.ones(P.shape[0]))
        counts = np.asarray(P.sum(axis=0)).ravel()
        assert np.all(counts >= 1)
        R = P.T.multiply(1 / counts[:, None])
        np.testing.assert_allclose((R @ P).toarray(), np.eye(nc), atol=1e-14)
        # the coarse mass is the Galerkin mass of the fine one
        Dc = P.T @ (ls.D[j][:, None] * P.toarray())
        np.testing.assert_allclose(np.diag(Dc), ls.D[j - 1], rtol=1e-10)


def test_transfer_errors_on_orphans():
    from rdafem.errors import OrphanFineDof
    coarse = build_uniform_mesh(2)
    hier = build_hierarchy(2, 1)
    # the fine side-0 region reaches past the coarse one, leaving orphans
    ac = build_active_meshes(coarse, compute_geometry(Affine((1.0, 0.0), 0.0), coarse, depth=1))
    af = build_active_meshes(hier.finest, compute_geometry(Affine((1.0, 0.0), 0.3),
                                                           hier.finest, depth=1))
    with pytest.raises(OrphanFineDof):
        build_transfer(ac, af, hier.parent_of[1])


def test_export_coo(tmp_path):
    mesh = build_uniform_mesh(2)
    geom = compute_geometry(Affine((1.0, 0.0), 0.1), mesh, depth=1)
    A = assemble_lowest_order(mesh, geom, _affine_problem())
    path = tmp_path / "A.txt"
    export_coo(A, path)
    rows = np.loadtxt(path)
    assert len(rows) == A.nnz
    B = np.zeros(A.shape)
    B[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    np.testing.assert_array_equal(B, A.toarray())


def test_problem_spec_boundary_pair():
    spec = _affine_problem()
    p = np.array([[0.5, 0.5]])
    assert spec.boundary(0)(p)[0] == 1 + 1 - 0.5
    assert spec.boundary(1)(p)[0] == 3 - 0.5 + 0.25
    single = ProblemSpec(1.0, 1.0, spec.f0, spec.f1, spec.boundary(0), spec.jump_a, spec.jump_b)
    assert single.boundary(1) is single.boundary(0)
