"""Pure-Python Gauss-Seidel sweeps built on sparse triangular solves."""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular


class TriangularSweeps:
    """Forward / backward Gauss-Seidel via x += L^{-1}(b - A x) and x += U^{-1}(b - A x)."""

    def __init__(self, A: sp.csr_matrix):
        self.A = A
        self.L = sp.tril(A, format="csr")
        self.U = sp.triu(A, format="csr")

    def forward(self, b, x):
        x += spsolve_triangular(self.L, b - self.A @ x, lower=True)
        return x

    def backward(self, b, x):
        x += spsolve_triangular(self.U, b - self.A @ x, lower=False)
        return x
