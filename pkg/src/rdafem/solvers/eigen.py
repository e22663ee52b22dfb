"""Extreme eigenvalues and spectral condition numbers."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import FactorizationFailure

__all__ = ["estimate_condition", "DENSE_LIMIT"]

DENSE_LIMIT = 4000


def _lu(A):
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise FactorizationFailure(str(exc)) from exc


def estimate_condition(A, mode: str = "auto", M=None, tol: float = 1e-8):
    """(lambda_min, lambda_max, kappa) of A, or of the pencil (A, M) when M is given.

    ``mode`` is ``"dense"``, ``"lanczos"`` or ``"auto"`` (dense up to
    DENSE_LIMIT unknowns).  The Lanczos mode takes lambda_max from an
    eigsh run and lambda_min from shift-invert around zero with a sparse LU;
    for a pencil both runs use an exact factorization of M.
    """
    n = A.shape[0]
    if mode == "auto":
        mode = "dense" if n <= DENSE_LIMIT else "lanczos"
    if mode == "dense":
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        if M is None:
            ev = np.linalg.eigvalsh(Ad)
        else:
            Md = M.toarray() if sp.issparse(M) else np.asarray(M)
            try:
                ev = sla.eigh(Ad, Md, eigvals_only=True)
            except np.linalg.LinAlgError as exc:
                raise FactorizationFailure(str(exc)) from exc
        lo, hi = float(ev[0]), float(ev[-1])
    elif mode == "lanczos":
        A = sp.csc_matrix(A)
        luA = _lu(A)
        opA = spla.LinearOperator(A.shape, matvec=luA.solve, dtype=float)
        if M is None:
            hi = spla.eigsh(A, k=1, which="LA", tol=tol, return_eigenvectors=False)[0]
            lo = spla.eigsh(A, k=1, sigma=0.0, which="LM", OPinv=opA, tol=tol,
                            return_eigenvectors=False)[0]
        else:
            M = sp.csc_matrix(M)
            luM = _lu(M)
            Minv = spla.LinearOperator(M.shape, matvec=luM.solve, dtype=float)
            hi = spla.eigsh(A, k=1, M=M, Minv=Minv, which="LA", tol=tol,
                            return_eigenvectors=False)[0]
            lo = spla.eigsh(A, k=1, M=M, sigma=0.0, which="LM", OPinv=opA, tol=tol,
                            return_eigenvectors=False)[0]
        lo, hi = float(lo), float(hi)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return lo, hi, hi / lo
