"""Conjugate gradients with Lanczos eigenvalue estimates."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ..errors import Breakdown, ConfigError, NonlinearPreconditioner

__all__ = ["SolverConfig", "SolveReport", "cg", "pcg", "lanczos_extremes"]


@dataclass
class SolverConfig:
    """Krylov and multigrid settings.

    ``inner`` selects the inner product used for the multigrid adjoints:
    ``"alpha"`` carries the diagonal mass matrices D_j, ``"euclidean"``
    replaces them by identities.
    """

    tol: float = 1e-8
    max_iter: int = 3000
    pre_sweeps: int = 1
    post_sweeps: int = 1
    cycle: str = "W"
    inner: str = "alpha"
    safety: float = 1.1
    power_iters: int = 50
    power_tol: float = 1e-4
    backend: str | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.pre_sweeps < 1 or self.post_sweeps < 1:
            raise ConfigError("smoother sweeps must be >= 1")
        if self.cycle not in ("V", "W"):
            raise ConfigError(f"cycle must be 'V' or 'W', got {self.cycle!r}")
        if self.inner not in ("alpha", "euclidean"):
            raise ConfigError(f"inner must be 'alpha' or 'euclidean', got {self.inner!r}")
        if not self.safety > 1:
            raise ConfigError("safety factor must exceed 1")


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    history: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def max_iter_reached(self) -> bool:
        return not self.converged

    def eigen_estimates(self):
        """Extreme eigenvalues of the Lanczos tridiagonal matrix."""
        return lanczos_extremes(self.alphas, self.betas)

    def condition_estimate(self) -> float:
        lo, hi = self.eigen_estimates()
        return hi / lo


def lanczos_extremes(alphas, betas):
    """(lambda_min, lambda_max) of the tridiagonal matrix built from CG coefficients."""
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)
    k = len(a)
    if k == 0:
        raise ValueError("no CG steps recorded")
    diag = 1.0 / a
    diag[1:] += b[:k - 1] / a[:k - 1]
    off = np.sqrt(b[:k - 1]) / a[:k - 1]
    ev = sla.eigvalsh_tridiagonal(diag, off)
    return float(ev[0]), float(ev[-1])


def cg(A, b, config: SolverConfig | None = None, x0=None):
    """Unpreconditioned conjugate gradients."""
    return pcg(A, b, None, config, x0)


def pcg(A, b, preconditioner=None, config: SolverConfig | None = None, x0=None):
    """Preconditioned conjugate gradients.

    ``preconditioner`` is a callable r -> z (or None for the identity).
    Stops when ||r|| <= tol ||b||.  Returns ``(x, SolveReport)``.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), SolveReport(0, 0.0, True, [0.0], seconds=0.0)
    res = np.linalg.norm(r) / bnorm
    history = [res]
    alphas, betas = [], []
    z = r if preconditioner is None else preconditioner(r)
    rz = float(r @ z)
    if rz < 0:
        raise NonlinearPreconditioner("(z, r) < 0: preconditioner is not positive")
    p = z.copy()
    it = 0
    while res > config.tol and it < config.max_iter:
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise Breakdown(f"p^T A p = {pAp:.3e} <= 0 at iteration {it}: matrix is not SPD")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        res = np.linalg.norm(r) / bnorm
        history.append(res)
        alphas.append(alpha)
        if res <= config.tol:
            break
        z = r if preconditioner is None else preconditioner(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise NonlinearPreconditioner("(z, r) < 0: preconditioner is not positive")
        beta = rz_new / rz
        betas.append(beta)
        rz = rz_new
        p = z + beta * p
    report = SolveReport(iterations=it, residual=res, converged=res <= config.tol,
                         history=history, alphas=alphas, betas=betas,
                         seconds=time.perf_counter() - t0)
    return x, report
