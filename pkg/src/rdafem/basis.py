"""Element-local polynomial bases.

On every element K the basis of P_m is obtained from the scaled monomials
((x - x_K) / h_K)^a ((y - y_K) / h_K)^b by modified Gram-Schmidt in L^2(K).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .quadrature import map_triangle_rule

__all__ = ["monomial_exponents", "dim_p", "eval_monomials", "LocalBasis"]

CHUNK = 20000


def dim_p(m: int) -> int:
    return (m + 1) * (m + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(m: int) -> np.ndarray:
    """Exponent pairs ordered by total degree, x-power descending within a degree."""
    return np.array([(d - k, k) for d in range(m + 1) for k in range(d + 1)], dtype=np.int64)


def eval_monomials(xi: np.ndarray, m: int, deriv: bool = False):
    """Monomials (and optionally their gradients) at local coordinates xi (N, 2)."""
    ex = monomial_exponents(m)
    x = xi[:, 0:1]
    y = xi[:, 1:2]
    px = x ** ex[None, :, 0]
    py = y ** ex[None, :, 1]
    val = px * py
    if not deriv:
        return val
    ax = ex[:, 0]
    ay = ex[:, 1]
    dpx = np.where(ax > 0, ax * x ** np.maximum(ax - 1, 0), 0.0)
    dpy = np.where(ay > 0, ay * y ** np.maximum(ay - 1, 0), 0.0)
    return val, np.stack([dpx * py, px * dpy], axis=-1)


class LocalBasis:
    """L^2(K)-orthonormal bases of P_m on every element of a mesh.

    Attributes
    ----------
    centers : (ne, 2) barycenters
    scales : (ne,) element diameters h_K
    coef : (ne, nb, nb); basis function j on K is sum_k coef[K, j, k] * monomial_k
    """

    def __init__(self, mesh, m: int):
        if m < 0:
            raise ValueError("degree must be >= 0")
        self.m = int(m)
        self.nb = dim_p(m)
        self.centers = mesh.barycenters
        self.scales = mesh.diameters
        pts, w = map_triangle_rule(mesh.element_coords, max(2 * m, 1))
        ne, nq, _ = pts.shape
        xi = (pts - self.centers[:, None, :]) / self.scales[:, None, None]
        V = eval_monomials(xi.reshape(-1, 2), m).reshape(ne, nq, self.nb)
        self.coef = _mgs(V, w)

    def values(self, points: np.ndarray, elem: np.ndarray) -> np.ndarray:
        """(N, nb) basis values of element elem[k] at points[k]."""
        out = np.empty((len(points), self.nb))
        for lo in range(0, len(points), CHUNK):
            sl = slice(lo, lo + CHUNK)
            e = elem[sl]
            xi = (points[sl] - self.centers[e]) / self.scales[e][:, None]
            out[sl] = np.einsum("njk,nk->nj", self.coef[e], eval_monomials(xi, self.m))
        return out

    def values_and_grads(self, points: np.ndarray, elem: np.ndarray):
        """Basis values (N, nb) and gradients (N, nb, 2)."""
        val = np.empty((len(points), self.nb))
        grad = np.empty((len(points), self.nb, 2))
        for lo in range(0, len(points), CHUNK):
            sl = slice(lo, lo + CHUNK)
            e = elem[sl]
            s = self.scales[e]
            xi = (points[sl] - self.centers[e]) / s[:, None]
            mono, dmono = eval_monomials(xi, self.m, deriv=True)
            c = self.coef[e]
            val[sl] = np.einsum("njk,nk->nj", c, mono)
            grad[sl] = np.einsum("njk,nkd->njd", c, dmono) / s[:, None, None]
        return val, grad


def _mgs(V: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Batched modified Gram-Schmidt of the columns of V under sum_q w_q f g."""
    ne, nq, nb = V.shape
    Q = V.copy()
    coef = np.broadcast_to(np.eye(nb), (ne, nb, nb)).copy()
    for j in range(nb):
        for k in range(j):
            r = np.einsum("eq,eq,eq->e", w, Q[:, :, j], Q[:, :, k])
            Q[:, :, j] -= r[:, None] * Q[:, :, k]
            coef[:, j, :] -= r[:, None] * coef[:, k, :]
        nrm = np.sqrt(np.einsum("eq,eq->e", w, Q[:, :, j] ** 2))
        Q[:, :, j] /= nrm[:, None]
        coef[:, j, :] /= nrm[:, None]
    return coef
