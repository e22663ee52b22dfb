"""Command-line interface.

``rdafem <command> [--config FILE] [--out DIR] [--threads N] [--seed N]``
with commands convergence, conditioning, alpha-sweep, lambda-sweep and
solve.  On failure a single line ``error: <code>: <message>`` is written to
stderr and the exit status is nonzero.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import RdaError

__all__ = ["main", "build_parser"]

COMMANDS = ("convergence", "conditioning", "alpha-sweep", "lambda-sweep", "solve")
EXIT_LIBRARY = 2
EXIT_UNEXPECTED = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdafem", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="INI run configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--threads", type=int, default=None,
                        help="thread count for the numerical libraries")
    parser.add_argument("--seed", type=int, default=0, help="seed for randomized estimates")
    return parser


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise ValueError("--threads must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _run(args) -> Path:
    # imported late so that thread settings take effect before BLAS loads
    from . import bench
    from .config import RunConfig, load_config, mesh_cells

    cfg = load_config(args.config, seed=args.seed) if args.config else RunConfig(seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "convergence":
        path = out / "convergence.csv"
        bench.run_convergence(cfg, path)
    elif args.command == "conditioning":
        path = out / "conditioning.csv"
        bench.run_conditioning(cfg, path)
    elif args.command == "alpha-sweep":
        path = out / "alpha_sweep.csv"
        bench.run_alpha_sweep(cfg, path)
    elif args.command == "lambda-sweep":
        path = out / "lambda_sweep.csv"
        bench.run_lambda_sweep(cfg, path)
    else:
        from .assembly import export_coo
        from .norms import compute_errors

        case = bench._case(cfg)
        m, h = cfg.degrees[0], cfg.hs[-1]
        disc = bench.discretize(case, mesh_cells(h), m, cfg.mu, cfg.threshold, cfg.depth)
        x, rep = bench.solve(disc, cfg.method, cfg.coarse_n, bench.solver_config(cfg))
        export_coo(disc.system.A, out / "matrix.coo")
        np.savetxt(out / "rhs.txt", disc.system.rhs)
        np.savetxt(out / "solution.txt", x)
        err = compute_errors(disc.space, x, case.spec)
        path = out / "solve.json"
        path.write_text(json.dumps(dict(
            case=case.name, m=m, h=str(h), dofs=int(disc.space.ndof), mu=disc.system.mu,
            method=cfg.method, iterations=int(rep.iterations), residual=float(rep.residual),
            converged=bool(rep.converged), energy_err=err.energy, l2_err=err.l2), indent=2) + "\n")
    return path


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _set_threads(args.threads)
        path = _run(args)
    except RdaError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_LIBRARY
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__.lower()}: {exc}", file=sys.stderr)
        return EXIT_LIBRARY
    except Exception as exc:  # pragma: no cover - last-resort reporting
        print(f"error: unexpected: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
