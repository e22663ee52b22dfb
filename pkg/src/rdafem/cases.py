"""Built-in benchmark problems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import ExactSolution, ProblemSpec
from .geometry import Circle, Flower, LevelSet

__all__ = ["BenchmarkCase", "trig_solution", "make_problem", "example1", "example2",
           "get_case", "check_jump_data", "CASES"]

PI = np.pi


def trig_solution() -> ExactSolution:
    """u0 = sin(pi x) sin(pi y), u1 = cos(2 pi x) cos(4 pi y)."""

    def u0(p):
        return np.sin(PI * p[:, 0]) * np.sin(PI * p[:, 1])

    def u1(p):
        return np.cos(2 * PI * p[:, 0]) * np.cos(4 * PI * p[:, 1])

    def grad0(p):
        x, y = p[:, 0], p[:, 1]
        return np.stack([PI * np.cos(PI * x) * np.sin(PI * y),
                         PI * np.sin(PI * x) * np.cos(PI * y)], axis=1)

    def grad1(p):
        x, y = p[:, 0], p[:, 1]
        return np.stack([-2 * PI * np.sin(2 * PI * x) * np.cos(4 * PI * y),
                         -4 * PI * np.cos(2 * PI * x) * np.sin(4 * PI * y)], axis=1)

    return ExactSolution(u0, u1, grad0, grad1)


def make_problem(exact: ExactSolution, alpha0: float, alpha1: float, f0, f1) -> ProblemSpec:
    """Problem whose boundary and jump data are derived from ``exact``."""

    def jump_a(p):
        return exact.u0(p) - exact.u1(p)

    def jump_b(p, n):
        q = alpha0 * exact.grad0(p) - alpha1 * exact.grad1(p)
        return np.einsum("nd,nd->n", q, n)

    return ProblemSpec(alpha0=alpha0, alpha1=alpha1, f0=f0, f1=f1, g=(exact.u0, exact.u1),
                       jump_a=jump_a, jump_b=jump_b, exact=exact)


def _trig_problem(alpha0: float, alpha1: float) -> ProblemSpec:
    ex = trig_solution()

    def f0(p):
        return 2 * PI ** 2 * alpha0 * ex.u0(p)

    def f1(p):
        return 20 * PI ** 2 * alpha1 * ex.u1(p)

    return make_problem(ex, alpha0, alpha1, f0, f1)


@dataclass
class BenchmarkCase:
    name: str
    levelset: LevelSet
    spec: ProblemSpec


def example1(alpha0: float = 10.0, alpha1: float = 1.0) -> BenchmarkCase:
    """Circle of radius 0.6 centred at the origin."""
    return BenchmarkCase("example1", Circle(0.6), _trig_problem(alpha0, alpha1))


def example2(alpha0: float = 10.0, alpha1: float = 1.0) -> BenchmarkCase:
    """Five-lobed flower r = 1/2 + sin(5 theta)/7."""
    return BenchmarkCase("example2", Flower(0.5, 1.0 / 7.0, 5), _trig_problem(alpha0, alpha1))


CASES = {"example1": example1, "example2": example2}


def get_case(name: str, **kw) -> BenchmarkCase:
    try:
        return CASES[name](**kw)
    except KeyError:
        raise ValueError(f"unknown case {name!r}; choose from {sorted(CASES)}") from None


def check_jump_data(case: BenchmarkCase, npts: int = 64, seed: int = 0) -> float:
    """Max mismatch of the jump data against the exact solution at points on the interface."""
    from .geometry import _project

    rng = np.random.default_rng(seed)
    theta = rng.uniform(0, 2 * PI, npts)
    start = 0.55 * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    pts, nrm = _project(case.levelset, start, 1.0)
    spec, ex = case.spec, case.spec.exact
    ea = np.abs(spec.jump_a(pts) - (ex.u0(pts) - ex.u1(pts))).max()
    q = spec.alpha0 * ex.grad0(pts) - spec.alpha1 * ex.grad1(pts)
    eb = np.abs(spec.jump_b(pts, nrm) - np.einsum("nd,nd->n", q, nrm)).max()
    return float(max(ea, eb))
