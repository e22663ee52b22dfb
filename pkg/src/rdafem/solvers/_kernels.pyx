# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Gauss-Seidel sweeps on CSR matrices."""
import numpy as np
cimport numpy as cnp

ctypedef fused index_t:
    cnp.int32_t
    cnp.int64_t


def gs_forward(const index_t[::1] indptr, const index_t[::1] indices,
               const double[::1] data, const double[::1] b, double[::1] x):
    """One forward sweep of Gauss-Seidel for A x = b, in place."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, k
    cdef index_t j
    cdef double s, d
    with nogil:
        for i in range(n):
            s = b[i]
            d = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j == i:
                    d = data[k]
                else:
                    s -= data[k] * x[j]
            x[i] = s / d


def gs_backward(const index_t[::1] indptr, const index_t[::1] indices,
                const double[::1] data, const double[::1] b, double[::1] x):
    """One backward sweep of Gauss-Seidel for A x = b, in place."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, k
    cdef index_t j
    cdef double s, d
    with nogil:
        for i in range(n - 1, -1, -1):
            s = b[i]
            d = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j == i:
                    d = data[k]
                else:
                    s -= data[k] * x[j]
            x[i] = s / d
