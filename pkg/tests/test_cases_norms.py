import numpy as np
import pytest

from rdafem.assembly import ExactSolution
from rdafem.cases import check_jump_data, example1, example2, get_case, make_problem
from rdafem.errors import MissingExact
from rdafem.geometry import Circle, compute_geometry
from rdafem.mesh import build_uniform_mesh
from rdafem.norms import compute_errors, eoc
from rdafem.reconstruction import build_reconstruction


@pytest.fixture(scope="module")
def space():
    mesh = build_uniform_mesh(10)
    geom = compute_geometry(Circle(0.6), mesh, depth=3, vol_order=4)
    return build_reconstruction(mesh, geom, 1)


def _const_problem(c0, c1):
    ex = ExactSolution(lambda p: np.full(len(p), c0), lambda p: np.full(len(p), c1),
                       lambda p: np.zeros((len(p), 2)), lambda p: np.zeros((len(p), 2)))
    zero = lambda p: np.zeros(len(p))  # noqa: E731
    return make_problem(ex, 10.0, 1.0, zero, zero)


def test_eoc_values():
    assert eoc([1e-2, 2.5e-3], [0.1, 0.05]) == [None, pytest.approx(2.0, abs=1e-12)]
    assert eoc([3.0], [0.1]) == [None]


def test_exact_constants_have_zero_error(space):
    spec = _const_problem(2.0, -1.0)
    n0 = space.sides[0].active.size
    v = np.concatenate([np.full(n0, 2.0), np.full(space.ndof - n0, -1.0)])
    err = compute_errors(space, v, spec)
    assert err.energy < 1e-12 and err.l2 < 1e-12


def test_error_of_wrong_constant(space):
    spec = _const_problem(0.0, 0.0)
    err = compute_errors(space, np.ones(space.ndof), spec)
    # L2 norm of 1 over the square
    assert abs(err.l2 - 2.0) < 1e-10
    assert err.energy > 0


def test_missing_exact(space):
    spec = _const_problem(0.0, 0.0)
    spec.exact = None
    with pytest.raises(MissingExact):
        compute_errors(space, np.zeros(space.ndof), spec)


@pytest.mark.parametrize("factory", [example1, example2])
def test_jump_data_consistent(factory):
    assert check_jump_data(factory()) < 1e-10


def test_source_matches_laplacian():
    spec = example1(alpha0=3.0, alpha1=2.0).spec
    ex = spec.exact
    p = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    eps = 1e-4
    for side in (0, 1):
        u = ex.u(side)
        lap = sum((u(p + e) - 2 * u(p) + u(p - e)) / eps ** 2
                  for e in (np.array([eps, 0.0]), np.array([0.0, eps])))
        np.testing.assert_allclose(-spec.alpha(side) * lap, spec.f(side)(p), rtol=1e-5, atol=1e-5)


def test_get_case():
    assert get_case("example2").name == "example2"
    assert get_case("example1", alpha0=1.0).spec.alpha0 == 1.0
    with pytest.raises(ValueError):
        get_case("example9")
