"""Benchmark drivers: convergence, conditioning, alpha and threshold sweeps.

Each driver takes a RunConfig, returns its rows as dictionaries and, when
an output path is given, writes them as CSV with a header line.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (AssembledSystem, assemble_highorder, assemble_level_systems,
                       assemble_lowest_order)
from .cases import BenchmarkCase, get_case
from .config import RunConfig, mesh_cells
from .errors import ConfigError, FactorizationFailure
from .geometry import compute_geometry, default_depth
from .mesh import build_hierarchy, build_uniform_mesh
from .norms import compute_errors, eoc
from .reconstruction import ReconstructionSpace, build_reconstruction
from .solvers import SolverConfig, build_mg_I, build_mg_II, estimate_condition, pcg

__all__ = ["Discretization", "discretize", "solver_config", "make_preconditioner", "solve",
           "run_convergence", "run_conditioning", "run_alpha_sweep", "run_lambda_sweep",
           "write_csv", "CONVERGENCE_COLUMNS", "CONDITIONING_COLUMNS", "ALPHA_COLUMNS",
           "LAMBDA_COLUMNS"]

CONVERGENCE_COLUMNS = ["case", "m", "h", "dofs", "energy_err", "energy_eoc", "l2_err",
                       "l2_eoc", "iters", "seconds"]
CONDITIONING_COLUMNS = ["m", "h", "kappa_Am", "kappa_precond", "kappa_Am_ratio",
                        "kappa_precond_ratio"]
ALPHA_COLUMNS = ["alpha0", "l2_err", "pcg_iters"]
LAMBDA_COLUMNS = ["m", "N", "Lambda_m", "Lambda_max", "adequate"]


@dataclass
class Discretization:
    case: BenchmarkCase
    n: int
    m: int
    mesh: object
    geom: object
    space: ReconstructionSpace
    system: AssembledSystem


def discretize(case: BenchmarkCase, n: int, m: int, mu=None, threshold=None, depth=None,
               mesh=None, auto_increase: bool = True) -> Discretization:
    """Geometry, reconstruction space and assembled system on the n x n mesh."""
    mesh = mesh if mesh is not None else build_uniform_mesh(n)
    geom = compute_geometry(case.levelset, mesh,
                            depth=default_depth(m) if depth is None else depth,
                            vol_order=2 * m + 2, face_npts=m + 2)
    space = build_reconstruction(mesh, geom, m, threshold=threshold, auto_increase=auto_increase)
    system = assemble_highorder(space, case.spec, mu=mu)
    return Discretization(case, n, m, mesh, geom, space, system)


def solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(tol=cfg.tol, max_iter=cfg.max_iter, cycle=cfg.cycle, inner=cfg.inner,
                        backend=cfg.backend, seed=cfg.seed)


def _levels(n: int, coarse_n: int) -> int:
    J = 0
    while coarse_n * 2 ** J < n:
        J += 1
    if coarse_n * 2 ** J != n:
        raise ConfigError(f"mesh with {n} cells per side is not a dyadic refinement of {coarse_n}")
    return J


def make_preconditioner(disc: Discretization, method: str, coarse_n: int = 10,
                        config: SolverConfig | None = None):
    """Preconditioner callable for PCG on A_m (None for plain CG)."""
    if method == "cg":
        return None
    J = _levels(disc.n, coarse_n)
    if method == "a0" or J == 0:
        A0 = assemble_lowest_order(disc.mesh, disc.geom, disc.case.spec,
                                   [s.active for s in disc.space.sides])
        try:
            lu = spla.splu(A0.tocsc())
        except RuntimeError as exc:
            raise FactorizationFailure(str(exc)) from exc
        return lu.solve
    hierarchy = build_hierarchy(coarse_n, J)
    levels = assemble_level_systems(hierarchy, disc.geom, disc.case.spec)
    if method == "mg1":
        return build_mg_I(levels.A0[-1], levels.P, levels.D, config)
    if method == "mg2":
        return build_mg_II(levels.A0, levels.P, levels.D, config)
    raise ConfigError(f"unknown method {method!r}")


def solve(disc: Discretization, method: str = "mg2", coarse_n: int = 10,
          config: SolverConfig | None = None):
    """Solve A_m x = b by CG/PCG; returns (x, SolveReport)."""
    config = config or SolverConfig()
    prec = make_preconditioner(disc, method, coarse_n, config)
    return pcg(disc.system.A, disc.system.rhs, prec, config)


def write_csv(rows, columns, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in columns})


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6e}"
    return str(v)


def _case(cfg: RunConfig, alpha0=None) -> BenchmarkCase:
    return get_case(cfg.case, alpha0=cfg.alpha0 if alpha0 is None else alpha0, alpha1=cfg.alpha1)


def run_convergence(cfg: RunConfig, path=None):
    """Error table over degrees and mesh sizes."""
    case = _case(cfg)
    sconf = solver_config(cfg)
    rows = []
    try:
        for m in cfg.degrees:
            block = []
            for h in cfg.hs:
                t0 = time.perf_counter()
                n = mesh_cells(h)
                disc = discretize(case, n, m, cfg.mu, cfg.threshold, cfg.depth)
                x, rep = solve(disc, cfg.method, cfg.coarse_n, sconf)
                err = compute_errors(disc.space, x, case.spec)
                block.append(dict(case=case.name, m=m, h=str(h), dofs=disc.space.ndof,
                                  energy_err=err.energy, l2_err=err.l2, iters=rep.iterations,
                                  seconds=time.perf_counter() - t0, _h=float(h)))
                _rates(block)
                rows.append(block[-1])
    finally:
        if path is not None:
            write_csv(rows, CONVERGENCE_COLUMNS, path)
    return rows


def _rates(block):
    """Fill EOC columns where the previous mesh is exactly twice as coarse."""
    row = block[-1]
    row["energy_eoc"] = row["l2_eoc"] = None
    if len(block) > 1 and np.isclose(block[-2]["_h"], 2 * row["_h"]):
        hs = [block[-2]["_h"], row["_h"]]
        row["energy_eoc"] = eoc([block[-2]["energy_err"], row["energy_err"]], hs)[1]
        row["l2_eoc"] = eoc([block[-2]["l2_err"], row["l2_err"]], hs)[1]


def run_conditioning(cfg: RunConfig, path=None):
    """kappa(A_m) and kappa(A_0^{-1} A_m) with growth ratios per mesh halving."""
    if len(cfg.hs) < 2:
        raise ConfigError("conditioning needs at least two mesh sizes")
    case = _case(cfg)
    rows = []
    try:
        for m in cfg.degrees:
            prev = None
            for h in cfg.hs:
                disc = discretize(case, mesh_cells(h), m, cfg.mu, cfg.threshold, cfg.depth)
                A0 = assemble_lowest_order(disc.mesh, disc.geom, case.spec,
                                           [s.active for s in disc.space.sides])
                kA = estimate_condition(disc.system.A)[2]
                kP = estimate_condition(disc.system.A, M=A0)[2]
                row = dict(m=m, h=str(h), kappa_Am=kA, kappa_precond=kP,
                           kappa_Am_ratio=None if prev is None else kA / prev[0],
                           kappa_precond_ratio=None if prev is None else kP / prev[1])
                rows.append(row)
                prev = (kA, kP)
    finally:
        if path is not None:
            write_csv(rows, CONDITIONING_COLUMNS, path)
    return rows


def run_alpha_sweep(cfg: RunConfig, path=None):
    """L2 error and PCG count versus alpha0 at the first degree and the last mesh size."""
    m = cfg.degrees[0]
    n = mesh_cells(cfg.hs[-1])
    sconf = solver_config(cfg)
    mesh = build_uniform_mesh(n)
    rows = []
    try:
        for a0 in cfg.alpha0_values:
            case = _case(cfg, alpha0=a0)
            disc = discretize(case, n, m, cfg.mu, cfg.threshold, cfg.depth, mesh=mesh)
            x, rep = solve(disc, cfg.method, cfg.coarse_n, sconf)
            err = compute_errors(disc.space, x, case.spec)
            rows.append(dict(alpha0=a0, l2_err=err.l2, pcg_iters=rep.iterations))
    finally:
        if path is not None:
            write_csv(rows, ALPHA_COLUMNS, path)
    return rows


def run_lambda_sweep(cfg: RunConfig, path=None):
    """Stability constants versus the patch threshold on the last mesh size.

    ``Lambda_m`` is the aggregated constant 1 + t_m Lambda sqrt(N) and
    ``Lambda_max`` the largest per-element constant Lambda_{m,K,i}.
    """
    case = _case(cfg)
    m = cfg.lambda_degree
    mesh = build_uniform_mesh(mesh_cells(cfg.hs[-1]))
    geom = compute_geometry(case.levelset, mesh, depth=cfg.depth or default_depth(m),
                            vol_order=2 * m + 2, face_npts=m + 2)
    rows = []
    try:
        for N in cfg.thresholds:
            space = build_reconstruction(mesh, geom, m, threshold=N, auto_increase=False)
            rep = space.stability()
            rows.append(dict(m=m, N=N, Lambda_m=rep.Lambda_m,
                             Lambda_max=max(float(l.max()) for l in rep.lam),
                             adequate=bool(all(rep.adequate))))
    finally:
        if path is not None:
            write_csv(rows, LAMBDA_COLUMNS, path)
    return rows
