"""Gauss-Seidel smoother with a compiled kernel and a pure-Python fallback.

The compiled backend is used when the extension module is importable;
``BACKEND`` records which one is active.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ._fallback import TriangularSweeps

try:
    from ._kernels import gs_backward as _gs_backward
    from ._kernels import gs_forward as _gs_forward
    BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on the build
    _gs_forward = _gs_backward = None
    BACKEND = "python"

__all__ = ["GaussSeidel", "BACKEND", "available_backends"]


def available_backends():
    return ("cython", "python") if _gs_forward is not None else ("python",)


class GaussSeidel:
    """Symmetric pair of Gauss-Seidel sweeps for a fixed sparse matrix."""

    def __init__(self, A, backend: str | None = None):
        A = sp.csr_matrix(A, dtype=float)
        A.sort_indices()
        if np.any(A.diagonal() == 0):
            raise ValueError("Gauss-Seidel needs a nonzero diagonal")
        self.A = A
        self.backend = backend or BACKEND
        if self.backend not in available_backends():
            raise ValueError(f"backend {self.backend!r} is not available")
        if self.backend == "python":
            self._tri = TriangularSweeps(A)

    def forward(self, b, x):
        """One forward sweep on A x = b; x is updated in place."""
        if self.backend == "cython":
            _gs_forward(self.A.indptr, self.A.indices, self.A.data,
                        np.ascontiguousarray(b, dtype=float), x)
        else:
            self._tri.forward(b, x)
        return x

    def backward(self, b, x):
        if self.backend == "cython":
            _gs_backward(self.A.indptr, self.A.indices, self.A.data,
                         np.ascontiguousarray(b, dtype=float), x)
        else:
            self._tri.backward(b, x)
        return x
