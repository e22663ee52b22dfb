"""Assembly of the interior-penalty systems.

The high-order matrix is assembled in coefficient space (one block of local
basis coefficients per active element and side) and then pulled back to the
piecewise-constant DOFs through the reconstruction operators:
A_m = R^T A_coef R.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import MissingReconstruction, NonPositivePenalty, OrphanFineDof
from .geometry import ElementClass, MeshGeometry
from .quadrature import gauss_legendre, map_triangle_rule
from .reconstruction import build_active_meshes

__all__ = [
    "ExactSolution",
    "ProblemSpec",
    "AssembledSystem",
    "LevelGeometry",
    "LevelSystems",
    "harmonic_weights",
    "default_penalty",
    "assemble_highorder",
    "assemble_lowest_order",
    "level_geometry",
    "coarsen_geometry",
    "assemble_level_systems",
    "build_transfer",
    "mass_diagonal",
    "export_coo",
]

VOLUME_CHUNK = 20000
MASS_FLOOR = 1e-12


@dataclass
class ExactSolution:
    """Side solutions u_0, u_1 (smooth on the whole plane) and their gradients."""

    u0: Callable
    u1: Callable
    grad0: Callable
    grad1: Callable

    def u(self, side):
        return self.u0 if side == 0 else self.u1

    def grad(self, side):
        return self.grad0 if side == 0 else self.grad1


@dataclass
class ProblemSpec:
    """Coefficients and data.

    ``f0, f1, jump_a`` take points (N, 2); ``jump_b`` takes points and unit
    normals (N, 2), (N, 2).  ``g`` is the Dirichlet datum, either one callable
    or a pair (g0, g1) used on the boundary parts of the two sides.
    """

    alpha0: float
    alpha1: float
    f0: Callable
    f1: Callable
    g: Callable | tuple
    jump_a: Callable
    jump_b: Callable
    exact: Optional[ExactSolution] = None

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.alpha1 > 0):
            raise ValueError("coefficients must be positive")

    def alpha(self, side):
        return self.alpha0 if side == 0 else self.alpha1

    def f(self, side):
        return self.f0 if side == 0 else self.f1

    def boundary(self, side):
        return self.g[side] if isinstance(self.g, (tuple, list)) else self.g


def harmonic_weights(alpha0: float, alpha1: float):
    """(w0, w1, {alpha}_w)."""
    s = alpha0 + alpha1
    return alpha1 / s, alpha0 / s, 2.0 * alpha0 * alpha1 / s


PENALTY_TABLE = {0: 1.0, 1: 3.0, 2: 8.0, 3: 10.0}


def default_penalty(m: int) -> float:
    """Nitsche penalty mu per degree; about twice the smallest coercive value on the benchmarks."""
    if m in PENALTY_TABLE:
        return PENALTY_TABLE[m]
    return 10.0 + 4.0 * (m - 3)


@dataclass
class AssembledSystem:
    A: sp.csr_matrix
    rhs: np.ndarray
    mu: float
    m: int
    parts: dict = field(default=None, repr=False)


# ----------------------------------------------------------------------------
# helpers


def _trace(vals: np.ndarray, base: np.ndarray, ncols: int) -> sp.csr_matrix:
    """Sparse (N, ncols) matrix with row k = vals[k] placed at columns base[k] + j."""
    n, nb = vals.shape
    indptr = np.arange(0, n * nb + 1, nb)
    indices = (base[:, None] + np.arange(nb)[None, :]).ravel()
    return sp.csr_matrix((vals.ravel(), indices, indptr), shape=(n, ncols))


def _sym_product(X, w, Y):
    """X^T diag(w) Y."""
    return (X.T.multiply(w[None, :]) @ Y).tocsr() if X.shape[0] else sp.csr_matrix(
        (X.shape[1], Y.shape[1]))


class _Layout:
    """Coefficient-space indexing: side-0 blocks then side-1 blocks."""

    def __init__(self, space):
        self.nb = space.basis.nb
        self.sizes = [s.active.size for s in space.sides]
        self.offsets = [0, self.sizes[0] * self.nb]
        self.ncoef = (self.sizes[0] + self.sizes[1]) * self.nb
        self.dof_index = [s.active.dof_index for s in space.sides]

    def base(self, side, elem):
        loc = self.dof_index[side][elem]
        return self.offsets[side] + loc * self.nb

    def active(self, side, elem):
        return self.dof_index[side][elem] >= 0


def _check_space(space):
    if space is None or getattr(space, "sides", None) is None or len(space.sides) != 2:
        raise MissingReconstruction("reconstruction operators are required for assembly")


# ----------------------------------------------------------------------------
# high-order system


def _volume(space, layout, spec, order):
    mesh, geom, basis = space.mesh, space.geom, space.basis
    nb = layout.nb
    rows, cols, vals = [], [], []
    rhs = np.zeros(layout.ncoef)
    extra = sp.csr_matrix((layout.ncoef, layout.ncoef))
    jj, kk = np.meshgrid(np.arange(nb), np.arange(nb), indexing="ij")
    for side in (0, 1):
        alpha = spec.alpha(side)
        f = spec.f(side)
        act = space.sides[side].active
        el = act.elements[act.interior]
        ref_pts, _ = map_triangle_rule(mesh.element_coords[:1], order)
        nq = ref_pts.shape[1]
        step = max(1, VOLUME_CHUNK // nq)
        for lo in range(0, len(el), step):
            ch = el[lo:lo + step]
            pts, w = map_triangle_rule(mesh.element_coords[ch], order)
            flat = pts.reshape(-1, 2)
            val, grad = basis.values_and_grads(flat, np.repeat(ch, nq))
            val = val.reshape(len(ch), nq, nb)
            grad = grad.reshape(len(ch), nq, nb, 2)
            blk = alpha * np.einsum("cq,cqjd,cqkd->cjk", w, grad, grad)
            b = layout.base(side, ch)
            rows.append((b[:, None, None] + jj[None]).ravel())
            cols.append((b[:, None, None] + kk[None]).ravel())
            vals.append(blk.ravel())
            fv = f(flat).reshape(len(ch), nq)
            loc = np.einsum("cq,cq,cqj->cj", w, fv, val)
            np.add.at(rhs, (b[:, None] + np.arange(nb)[None, :]).ravel(), loc.ravel())
        q = geom.vol[side]
        if len(q.weights):
            val, grad = basis.values_and_grads(q.points, q.owner)
            b = layout.base(side, q.owner)
            for d in (0, 1):
                G = _trace(grad[:, :, d], b, layout.ncoef)
                extra = extra + alpha * _sym_product(G, q.weights, G)
            V = _trace(val, b, layout.ncoef)
            rhs += V.T @ (q.weights * f(q.points))
    A = sp.csr_matrix((np.concatenate(vals) if vals else [],
                       (np.concatenate(rows) if rows else [], np.concatenate(cols) if cols else [])),
                      shape=(layout.ncoef, layout.ncoef))
    return (A + extra).tocsr(), rhs


def _faces(space, layout, spec, mu):
    mesh, geom, basis = space.mesh, space.geom, space.basis
    fe = mesh.face_elements
    normals = mesh.face_normals
    hlen = mesh.face_lengths
    n = layout.ncoef
    cons = sp.csr_matrix((n, n))
    pen = sp.csr_matrix((n, n))
    rhs = np.zeros(n)
    for side in (0, 1):
        alpha = spec.alpha(side)
        q = geom.face_parts[side]
        f = q.owner
        ok = layout.active(side, fe[f, 0]) & ((fe[f, 1] < 0) | layout.active(side, np.maximum(fe[f, 1], 0)))
        pts, w, f = q.points[ok], q.weights[ok], f[ok]
        nrm = normals[f]
        bnd = fe[f, 1] < 0

        # interior portions: consistency only
        it = ~bnd
        Kp, Km = fe[f[it], 0], fe[f[it], 1]
        vp, gp = basis.values_and_grads(pts[it], Kp)
        vm, gm = basis.values_and_grads(pts[it], Km)
        bp, bm = layout.base(side, Kp), layout.base(side, Km)
        J = _trace(vp, bp, n) - _trace(vm, bm, n)
        F = 0.5 * alpha * (_trace(np.einsum("njd,nd->nj", gp, nrm[it]), bp, n)
                           + _trace(np.einsum("njd,nd->nj", gm, nrm[it]), bm, n))
        C = _sym_product(F, w[it], J)
        cons = cons - (C + C.T)

        # boundary portions: consistency, penalty and Dirichlet data
        K = fe[f[bnd], 0]
        pb, wb = pts[bnd], w[bnd]
        v, g = basis.values_and_grads(pb, K)
        b = layout.base(side, K)
        J = _trace(v, b, n)
        F = alpha * _trace(np.einsum("njd,nd->nj", g, nrm[bnd]), b, n)
        C = _sym_product(F, wb, J)
        cons = cons - (C + C.T)
        pw = wb * mu * alpha / hlen[f[bnd]]
        pen = pen + _sym_product(J, pw, J)
        gv = spec.boundary(side)(pb)
        rhs += -(F.T @ (wb * gv)) + J.T @ (pw * gv)

        # full-face penalty on interior faces of the active mesh
        faces = space.sides[side].active.interior_faces
        if len(faces):
            t, gw = gauss_legendre(geom.face_npts)
            fv = mesh.vertices[mesh.faces[faces]]
            fp = (fv[:, 0][:, None, :] + t[None, :, None] * (fv[:, 1] - fv[:, 0])[:, None, :]).reshape(-1, 2)
            fw = (hlen[faces][:, None] * gw[None, :]).ravel()
            ff = np.repeat(faces, len(t))
            Kp, Km = fe[ff, 0], fe[ff, 1]
            J = (_trace(basis.values(fp, Kp), layout.base(side, Kp), n)
                 - _trace(basis.values(fp, Km), layout.base(side, Km), n))
            pen = pen + _sym_product(J, fw * mu * alpha / hlen[ff], J)
    return cons, pen, rhs


def _interface(space, layout, spec, mu):
    geom, basis, mesh = space.geom, space.basis, space.mesh
    n = layout.ncoef
    q = geom.iface
    if len(q.weights) == 0:
        z = sp.csr_matrix((n, n))
        return z, z, np.zeros(n)
    a0, a1 = spec.alpha0, spec.alpha1
    w0, w1, aw = harmonic_weights(a0, a1)
    K = q.owner
    V, G = [], []
    for side in (0, 1):
        T = q.traces[:, side]
        v, g = basis.values_and_grads(q.points, T)
        gn = np.einsum("njd,nd->nj", g, q.normals)
        V.append(_trace(v, layout.base(side, T), n))
        G.append(_trace(gn, layout.base(side, T), n))
    V0, V1 = V
    J = V0 - V1
    F = w0 * a0 * G[0] + w1 * a1 * G[1]
    C = _sym_product(F, q.weights, J)
    cons = -(C + C.T)
    pw = q.weights * mu * aw / mesh.diameters[K]
    pen = _sym_product(J, pw, J)
    av = spec.jump_a(q.points)
    bv = spec.jump_b(q.points, q.normals)
    rhs = (w1 * V0 + w0 * V1).T @ (q.weights * bv) - F.T @ (q.weights * av) + J.T @ (pw * av)
    return cons, pen, rhs


def assemble_highorder(space, spec: ProblemSpec, mu: float | None = None,
                       keep_parts: bool = False) -> AssembledSystem:
    """Assemble A_m and the right-hand side on the reconstructed space."""
    _check_space(space)
    m = space.m
    mu = default_penalty(m) if mu is None else float(mu)
    if not mu > 0:
        raise NonPositivePenalty(f"penalty must be positive, got {mu}")
    layout = _Layout(space)
    vol, rhs_v = _volume(space, layout, spec, space.geom.vol_order)
    cons_f, pen_f, rhs_f = _faces(space, layout, spec, mu)
    cons_i, pen_i, rhs_i = _interface(space, layout, spec, mu)
    R = sp.block_diag([s.operator for s in space.sides], format="csr")

    def pull(M):
        M = (R.T @ M @ R).tocsr()
        return ((M + M.T) * 0.5).tocsr()

    Acoef = vol + cons_f + cons_i + pen_f + pen_i
    A = pull(Acoef)
    A.sort_indices()
    rhs = R.T @ (rhs_v + rhs_f + rhs_i)
    parts = None
    if keep_parts:
        parts = {"volume": pull(vol), "consistency": pull(cons_f + cons_i),
                 "penalty": pull(pen_f + pen_i)}
    return AssembledSystem(A=A, rhs=rhs, mu=mu, m=m, parts=parts)


# ----------------------------------------------------------------------------
# lowest-order systems and levels


@dataclass
class LevelGeometry:
    """Geometry summary sufficient for the piecewise-constant systems."""

    mesh: object
    cls: np.ndarray
    measures: np.ndarray
    iface_pairs: tuple
    boundary_measures: np.ndarray

    def active(self, side: int) -> np.ndarray:
        return (self.cls == side) | (self.cls == ElementClass.CUT)

    @property
    def cut_elements(self):
        return np.flatnonzero(self.cls == ElementClass.CUT)


def _merge_pairs(e0, e1, length):
    """Sum interface lengths over identical (side-0 element, side-1 element) pairs."""
    if len(e0) == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, np.zeros(0)
    key, inv = np.unique(np.stack([e0, e1], axis=1), axis=0, return_inverse=True)
    return key[:, 0], key[:, 1], np.bincount(inv.ravel(), weights=length, minlength=len(key))


def level_geometry(geom: MeshGeometry) -> LevelGeometry:
    """Piecewise-constant view of the geometry.

    ``iface_pairs = (e0, e1, length)`` lists the interface pieces together
    with the elements carrying the side-0 and side-1 traces.
    """
    bm = geom.face_measures.copy()
    bm[~geom.mesh.boundary_faces] = 0.0
    q = geom.iface
    pairs = _merge_pairs(q.traces[:, 0], q.traces[:, 1], q.weights)
    return LevelGeometry(geom.mesh, geom.cls.copy(), geom.measures.copy(), pairs, bm)


def coarsen_geometry(fine: LevelGeometry, coarse_mesh, parent: np.ndarray) -> LevelGeometry:
    """Aggregate fine-level geometry onto the parent mesh."""
    nc = coarse_mesh.n_elements
    act = [np.bincount(parent, weights=fine.active(s).astype(float), minlength=nc) > 0
           for s in (0, 1)]
    cls = np.where(act[0], 0, 1).astype(np.int8)
    cls[act[0] & act[1]] = ElementClass.CUT
    measures = np.stack([np.bincount(parent, weights=fine.measures[:, s], minlength=nc)
                         for s in (0, 1)], axis=1)
    e0, e1, length = fine.iface_pairs
    pairs = _merge_pairs(parent[e0], parent[e1], length)

    fm = fine.mesh
    fb = np.flatnonzero(fm.boundary_faces)
    mid = fm.vertices[fm.faces[fb]].mean(axis=1)
    cand = coarse_mesh.element_faces[parent[fm.face_elements[fb, 0]]]     # (nb, 3)
    cv = coarse_mesh.vertices[coarse_mesh.faces[cand]]                     # (nb, 3, 2, 2)
    d1 = cv[:, :, 1] - cv[:, :, 0]
    d2 = mid[:, None, :] - cv[:, :, 0]
    cross = np.abs(d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])
    cross = np.where(coarse_mesh.boundary_faces[cand], cross, np.inf)
    target = cand[np.arange(len(fb)), np.argmin(cross, axis=1)]
    bm = np.stack([np.bincount(target, weights=fine.boundary_measures[fb, s],
                               minlength=coarse_mesh.n_faces) for s in (0, 1)], axis=1)
    return LevelGeometry(coarse_mesh, cls, measures, pairs, bm)


def assemble_lowest_order(mesh, geom, spec: ProblemSpec, actives=None) -> sp.csr_matrix:
    """Jump-penalty matrix A_0 on piecewise constants (penalty parameter 1)."""
    if isinstance(geom, MeshGeometry):
        geom = level_geometry(geom)
    if actives is None:
        actives = build_active_meshes(mesh, geom)
    n0 = actives[0].size
    offs = (0, n0)
    ndof = n0 + actives[1].size
    fe = mesh.face_elements
    h = mesh.face_lengths
    ri, ci, wi = [], [], []
    diag = np.zeros(ndof)
    for side in (0, 1):
        act = actives[side]
        alpha = spec.alpha(side)
        faces = act.interior_faces
        ri.append(offs[side] + act.dof_index[fe[faces, 0]])
        ci.append(offs[side] + act.dof_index[fe[faces, 1]])
        wi.append(alpha * h[faces] / h[faces])
        bf = act.boundary_faces
        np.add.at(diag, offs[side] + act.dof_index[fe[bf, 0]],
                  alpha * geom.boundary_measures[bf, side] / h[bf])
    _, _, aw = harmonic_weights(spec.alpha0, spec.alpha1)
    e0, e1, length = geom.iface_pairs
    ri.append(actives[0].dof_index[e0])
    ci.append(n0 + actives[1].dof_index[e1])
    wi.append(aw * length / np.maximum(mesh.diameters[e0], mesh.diameters[e1]))
    r, c, w = np.concatenate(ri), np.concatenate(ci), np.concatenate(wi)
    np.add.at(diag, r, w)
    np.add.at(diag, c, w)
    off = sp.csr_matrix((np.concatenate([-w, -w]), (np.concatenate([r, c]), np.concatenate([c, r]))),
                        shape=(ndof, ndof))
    A = (off + sp.diags(diag)).tocsr()
    A.sort_indices()
    return A


def mass_diagonal(geom, actives, spec: ProblemSpec) -> np.ndarray:
    """Entries alpha_i |K cap Omega_i| per DOF (floored to stay positive)."""
    out = []
    for side in (0, 1):
        el = actives[side].elements
        area = geom.mesh.areas[el]
        meas = np.maximum(geom.measures[el, side], MASS_FLOOR * area)
        out.append(spec.alpha(side) * meas)
    return np.concatenate(out)


def build_transfer(coarse_actives, fine_actives, parent: np.ndarray) -> sp.csr_matrix:
    """Injection from coarse DOFs to fine DOFs (copy to every active child)."""
    rows, cols = [], []
    nc0 = coarse_actives[0].size
    nf0 = fine_actives[0].size
    for side in (0, 1):
        fa, ca = fine_actives[side], coarse_actives[side]
        cidx = ca.dof_index[parent[fa.elements]]
        if np.any(cidx < 0):
            raise OrphanFineDof(f"a fine side-{side} element has an inactive parent")
        rows.append((0 if side == 0 else nf0) + np.arange(fa.size))
        cols.append((0 if side == 0 else nc0) + cidx)
    r, c = np.concatenate(rows), np.concatenate(cols)
    shape = (nf0 + fine_actives[1].size, nc0 + coarse_actives[1].size)
    return sp.csr_matrix((np.ones(len(r)), (r, c)), shape=shape)


@dataclass
class LevelSystems:
    """Per-level data for the multigrid preconditioners (index 0 = coarsest)."""

    geoms: list
    actives: list
    A0: list
    D: list
    P: list

    @property
    def J(self):
        return len(self.A0) - 1


def assemble_level_systems(hierarchy, fine_geom: MeshGeometry, spec: ProblemSpec) -> LevelSystems:
    """A_{0,j}, D_j and injections P_j for every level of the hierarchy."""
    J = hierarchy.J
    geoms = [None] * (J + 1)
    geoms[J] = level_geometry(fine_geom)
    for j in range(J, 0, -1):
        geoms[j - 1] = coarsen_geometry(geoms[j], hierarchy.levels[j - 1], hierarchy.parent_of[j])
    actives = [build_active_meshes(hierarchy.levels[j], geoms[j]) for j in range(J + 1)]
    A0 = [assemble_lowest_order(hierarchy.levels[j], geoms[j], spec, actives[j]) for j in range(J + 1)]
    D = [mass_diagonal(geoms[j], actives[j], spec) for j in range(J + 1)]
    P = [None] + [build_transfer(actives[j - 1], actives[j], hierarchy.parent_of[j])
                  for j in range(1, J + 1)]
    return LevelSystems(geoms=geoms, actives=actives, A0=A0, D=D, P=P)


def export_coo(A: sp.spmatrix, path) -> None:
    """Write 'row col value' lines (0-based)."""
    C = A.tocoo()
    order = np.lexsort((C.col, C.row))
    with open(path, "w") as fh:
        for r, c, v in zip(C.row[order], C.col[order], C.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
