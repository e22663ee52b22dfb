"""Compare the compiled and pure-Python Gauss-Seidel backends.

Run with ``python benchmarks/bench_kernels.py [--n 80] [--repeat 20]``.
The matrix is the lowest-order interface matrix A_0 of the circle benchmark.
"""
import argparse
import time

import numpy as np

from rdafem.assembly import assemble_lowest_order
from rdafem.cases import example1
from rdafem.geometry import compute_geometry
from rdafem.mesh import build_uniform_mesh
from rdafem.solvers import GaussSeidel, available_backends


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=80, help="cells per side")
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)

    case = example1()
    mesh = build_uniform_mesh(args.n)
    geom = compute_geometry(case.levelset, mesh)
    A = assemble_lowest_order(mesh, geom, case.spec)
    b = np.random.default_rng(0).standard_normal(A.shape[0])
    print(f"n={args.n} unknowns={A.shape[0]} nnz={A.nnz}")
    results = {}
    for backend in available_backends():
        gs = GaussSeidel(A, backend)
        x = np.zeros_like(b)
        t0 = time.perf_counter()
        for _ in range(args.repeat):
            gs.forward(b, x)
            gs.backward(b, x)
        dt = (time.perf_counter() - t0) / args.repeat
        results[backend] = (dt, x)
        print(f"{backend:>8}: {1e3 * dt:8.3f} ms per symmetric sweep")
    if len(results) == 2:
        diff = np.abs(results["cython"][1] - results["python"][1]).max()
        print(f"speedup {results['python'][0] / results['cython'][0]:.1f}x, max difference {diff:.1e}")


if __name__ == "__main__":
    main()
