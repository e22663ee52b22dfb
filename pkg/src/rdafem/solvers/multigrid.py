"""W-cycle multigrid preconditioners for the lowest-order matrix A_0.

Level j = 0 is the coarsest.  Both cycles act on matrix equations
A_j y = Z; in the operator form used by the analysis the right-hand side is
Z = D_j z with D_j the diagonal of the alpha-weighted L^2 mass matrix, and
the D-adjoint of a prolongator Q is D_{j-1}^{-1} Q^T D_j, so restriction of
a residual reduces to Q^T (Z - A_j y).
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import FactorizationFailure, IndefiniteLevel
from .krylov import SolverConfig
from .smoothers import GaussSeidel

__all__ = ["MGHierarchyI", "MGHierarchyII", "build_mg_I", "build_mg_II",
           "mg_cycle_I", "mg_cycle_II", "power_iteration", "spectral_radius"]

DENSE_CHECK = 3000


def power_iteration(A, D, iters: int = 50, tol: float = 1e-4, seed: int = 0) -> float:
    """Estimate of rho(D^{-1} A) by power iteration with Rayleigh quotients."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.shape[0])
    est = 0.0
    for _ in range(iters):
        y = (A @ x) / D
        new = float(x @ (A @ x)) / float(x @ (D * x))
        x = y / np.linalg.norm(y)
        if est > 0 and abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return est


def spectral_radius(A, D) -> float:
    """rho(D^{-1} A) from a symmetric Lanczos solve on D^{-1/2} A D^{-1/2}."""
    s = 1.0 / np.sqrt(D)
    B = sp.diags(s) @ sp.csr_matrix(A) @ sp.diags(s)
    if B.shape[0] <= 50:
        return float(np.linalg.eigvalsh(B.toarray())[-1])
    return float(spla.eigsh(B, k=1, which="LA", return_eigenvectors=False, tol=1e-10)[0])


def _factorize(A):
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise FactorizationFailure(f"coarse factorization failed: {exc}") from exc


def _check_spd(A, j):
    A = sp.csr_matrix(A)
    asym = abs(A - A.T).max() if A.nnz else 0.0
    scale = abs(A).max() if A.nnz else 1.0
    if asym > 1e-10 * scale:
        raise IndefiniteLevel(f"level {j} operator is not symmetric ({asym:.2e})")
    if np.any(A.diagonal() <= 0):
        raise IndefiniteLevel(f"level {j} operator has a nonpositive diagonal")
    if A.shape[0] <= DENSE_CHECK:
        lmin = np.linalg.eigvalsh(A.toarray())[0]
        if lmin <= -1e-12 * scale:
            raise IndefiniteLevel(f"level {j} operator is indefinite (lambda_min = {lmin:.2e})")


class _Cycle:
    """Shared W-cycle machinery; subclasses fill ``mats``, ``prolong`` and ``D``."""

    def __init__(self, mats, prolong, D, config: SolverConfig):
        self.config = config
        self.mats = [sp.csr_matrix(A) for A in mats]
        self.prolong = prolong
        self.D = D
        for j, A in enumerate(self.mats):
            _check_spd(A, j)
        self.lu = _factorize(self.mats[0])
        self.smoothers = [None] + [GaussSeidel(A, config.backend) for A in self.mats[1:]]

    @property
    def J(self) -> int:
        return len(self.mats) - 1

    def _solve(self, j, y, Z):
        if j == 0:
            return self.lu.solve(Z)
        A = self.mats[j]
        gs = self.smoothers[j]
        for _ in range(self.config.pre_sweeps):
            gs.forward(Z, y)
        Q = self.prolong[j]
        xi = Q.T @ (Z - A @ y)
        w = self._solve(j - 1, np.zeros(Q.shape[1]), xi)
        if self.config.cycle == "W":
            w = self._solve(j - 1, w, xi)
        y += Q @ w
        for _ in range(self.config.post_sweeps):
            gs.backward(Z, y)
        return y

    def apply(self, r):
        """Approximate A_J^{-1} r by one cycle from a zero initial guess."""
        r = np.asarray(r, dtype=float)
        return self._solve(self.J, np.zeros_like(r), r)

    __call__ = apply

    def apply_operator(self, z):
        """Cycle in operator form: approximate (D^{-1} A_J)^{-1} z."""
        return self.apply(self.D[self.J] * np.asarray(z, dtype=float))

    def iterate(self, b, x):
        """One stand-alone iteration x <- x + cycle(b - A x)."""
        return x + self.apply(b - self.mats[self.J] @ x)

    def level_sizes(self):
        return [A.shape[0] for A in self.mats]


class MGHierarchyI(_Cycle):
    """Galerkin hierarchy with smoothed prolongators.

    Attributes
    ----------
    mats : level operators, ``mats[J]`` the fine matrix
    lam : lambda_j = 4^{j-J} lambda per level
    P : plain transfers (``P[0]`` is None)
    prolong : smoothed prolongators S_j P_j
    """

    def __init__(self, A_fine, transfers, D_diags, config: SolverConfig | None = None):
        config = config or SolverConfig()
        J = len(transfers) - 1
        D = [np.ones(A_fine.shape[0] if j == J else transfers[j + 1].shape[1])
             if config.inner == "euclidean" else np.asarray(D_diags[j], dtype=float)
             for j in range(J + 1)]
        A = [None] * (J + 1)
        A[J] = sp.csr_matrix(A_fine)
        self.rho_estimate = power_iteration(A[J], D[J], config.power_iters,
                                            config.power_tol, config.seed)
        self.lam_top = config.safety * self.rho_estimate
        self.lam = [4.0 ** (j - J) * self.lam_top for j in range(J + 1)]
        self.P = list(transfers)
        prolong = [None] * (J + 1)
        for j in range(J, 0, -1):
            Pj = sp.csr_matrix(transfers[j])
            Q = Pj - sp.diags(1.0 / (self.lam[j] * D[j])) @ (A[j] @ Pj)
            prolong[j] = sp.csr_matrix(Q)
            C = sp.csr_matrix(Q.T @ A[j] @ Q)
            A[j - 1] = sp.csr_matrix(0.5 * (C + C.T))
        super().__init__(A, prolong, D, config)

    def level_radii(self):
        """rho(D_j^{-1} A_j) per level, from Lanczos."""
        return [spectral_radius(A, d) for A, d in zip(self.mats, self.D)]


class MGHierarchyII(_Cycle):
    """Geometric hierarchy with rediscretized level matrices and injections."""

    def __init__(self, level_matrices, transfers, D_diags=None, config: SolverConfig | None = None):
        config = config or SolverConfig()
        J = len(level_matrices) - 1
        if D_diags is None or config.inner == "euclidean":
            D = [np.ones(A.shape[0]) for A in level_matrices]
        else:
            D = [np.asarray(d, dtype=float) for d in D_diags]
        self.P = list(transfers)
        prolong = [None] + [sp.csr_matrix(transfers[j]) for j in range(1, J + 1)]
        super().__init__(level_matrices, prolong, D, config)


def build_mg_I(A_fine, transfers, D_diags, config: SolverConfig | None = None) -> MGHierarchyI:
    """MG-I hierarchy; ``transfers[j]`` maps level j-1 to level j (``transfers[0]`` unused)."""
    return MGHierarchyI(A_fine, transfers, D_diags, config)


def build_mg_II(level_matrices, transfers, D_diags=None,
                config: SolverConfig | None = None) -> MGHierarchyII:
    return MGHierarchyII(level_matrices, transfers, D_diags, config)


def mg_cycle_I(hierarchy: MGHierarchyI, z):
    """One MG-I W-cycle on the operator-form right-hand side z."""
    return hierarchy.apply_operator(z)


def mg_cycle_II(hierarchy: MGHierarchyII, z):
    return hierarchy.apply_operator(z)
