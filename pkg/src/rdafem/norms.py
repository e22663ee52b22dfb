"""Error norms against an exact solution."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import harmonic_weights
from .errors import MissingExact
from .quadrature import gauss_legendre, map_triangle_rule

__all__ = ["ErrorRow", "compute_errors", "eoc"]


@dataclass
class ErrorRow:
    energy: float
    l2: float


def _eval(space, side, coef, pts, elem, grad=False):
    loc = space.sides[side].active.dof_index[elem]
    c = coef[loc]
    if grad:
        v, g = space.basis.values_and_grads(pts, elem)
        return np.einsum("nj,nj->n", v, c), np.einsum("njd,nj->nd", g, c)
    return np.einsum("nj,nj->n", space.basis.values(pts, elem), c)


def compute_errors(space, v: np.ndarray, spec, order: int | None = None) -> ErrorRow:
    """Energy-norm and L2 errors of the reconstructed solution R v."""
    ex = spec.exact
    if ex is None:
        raise MissingExact("the problem has no exact solution")
    mesh, geom = space.mesh, space.geom
    order = geom.vol_order if order is None else order
    fe = mesh.face_elements
    hlen = mesh.face_lengths
    vs = space.split(v)
    coefs = [space.sides[s].coefficients(vs[s]) for s in (0, 1)]
    grad_sq = 0.0
    l2_sq = 0.0
    jump_sq = 0.0
    for side in (0, 1):
        alpha = spec.alpha(side)
        act = space.sides[side].active
        u, gu = ex.u(side), ex.grad(side)
        el = act.elements[act.interior]
        pts, w = map_triangle_rule(mesh.element_coords[el], order)
        nq = pts.shape[1]
        flat, wf = pts.reshape(-1, 2), w.ravel()
        elem = np.repeat(el, nq)
        q = geom.vol[side]
        flat = np.concatenate([flat, q.points])
        wf = np.concatenate([wf, q.weights])
        elem = np.concatenate([elem, q.owner])
        val, g = _eval(space, side, coefs[side], flat, elem, grad=True)
        l2_sq += np.sum(wf * (u(flat) - val) ** 2)
        grad_sq += alpha * np.sum(wf * np.sum((gu(flat) - g) ** 2, axis=1))

        faces = act.interior_faces
        t, gw = gauss_legendre(geom.face_npts)
        fv = mesh.vertices[mesh.faces[faces]]
        fp = (fv[:, 0][:, None, :] + t[None, :, None] * (fv[:, 1] - fv[:, 0])[:, None, :]).reshape(-1, 2)
        fw = (hlen[faces][:, None] * gw[None, :]).ravel()
        ff = np.repeat(faces, len(t))
        jmp = (_eval(space, side, coefs[side], fp, fe[ff, 0])
               - _eval(space, side, coefs[side], fp, fe[ff, 1]))
        jump_sq += alpha * np.sum(fw / hlen[ff] * jmp ** 2)

        qf = geom.face_parts[side]
        bnd = fe[qf.owner, 1] < 0
        bp, bw, bf = qf.points[bnd], qf.weights[bnd], qf.owner[bnd]
        if len(bw):
            r = u(bp) - _eval(space, side, coefs[side], bp, fe[bf, 0])
            jump_sq += alpha * np.sum(bw / hlen[bf] * r ** 2)

    qi = geom.iface
    if len(qi.weights):
        _, _, aw = harmonic_weights(spec.alpha0, spec.alpha1)
        K = qi.owner
        ju = ex.u0(qi.points) - ex.u1(qi.points)
        jh = (_eval(space, 0, coefs[0], qi.points, qi.traces[:, 0])
              - _eval(space, 1, coefs[1], qi.points, qi.traces[:, 1]))
        jump_sq += aw * np.sum(qi.weights / mesh.diameters[K] * (ju - jh) ** 2)
    return ErrorRow(energy=float(np.sqrt(grad_sq + jump_sq)), l2=float(np.sqrt(l2_sq)))


def eoc(errors, hs):
    """log2-type rates between consecutive entries; None for the first."""
    out = [None]
    for k in range(1, len(errors)):
        out.append(float(np.log(errors[k - 1] / errors[k]) / np.log(hs[k - 1] / hs[k])))
    return out
