"""Gauss rules on segments and triangles."""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def gauss_legendre(npts: int):
    """Gauss-Legendre nodes and weights on [0, 1] (weights sum to 1)."""
    x, w = roots_legendre(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(order: int):
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1).

    Integrates every bivariate polynomial of total degree <= ``order`` exactly.
    Returns ``(points, weights)`` with ``points`` of shape (nq, 2) and weights
    summing to the reference area 1/2.  All weights are positive.
    """
    n = max(1, (order + 2) // 2)
    u, wu = roots_legendre(n)
    v, wv = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    v = 0.5 * (v + 1.0)
    wv = 0.25 * wv
    U, V = np.meshgrid(u, v, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    pts = np.stack([(U * (1.0 - V)).ravel(), V.ravel()], axis=1)
    return pts, (WU * WV).ravel()


def map_triangle_rule(tris: np.ndarray, order: int):
    """Map the reference rule onto a batch of triangles.

    Parameters
    ----------
    tris : (M, 3, 2) array of vertex coordinates (any orientation)
    order : polynomial exactness

    Returns
    -------
    points : (M, nq, 2)
    weights : (M, nq)
    """
    ref, w = triangle_rule(order)
    a = tris[:, 0]
    e1 = tris[:, 1] - a
    e2 = tris[:, 2] - a
    pts = (a[:, None, :] + ref[None, :, 0:1] * e1[:, None, :]
           + ref[None, :, 1:2] * e2[:, None, :])
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    return pts, det[:, None] * w[None, :]


def map_segment_rule(a: np.ndarray, b: np.ndarray, npts: int):
    """Gauss-Legendre rule on a batch of segments a->b; returns (M, nq, 2) and (M, nq)."""
    t, w = gauss_legendre(npts)
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    length = np.linalg.norm(b - a, axis=1)
    return pts, length[:, None] * w[None, :]
