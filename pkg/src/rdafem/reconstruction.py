"""Active meshes, sigma maps, element patches and the constrained least-squares
reconstruction of piecewise constants into piecewise polynomials.

Global DOFs are one value per (element, side) pair: all side-0 DOFs first, in
ascending element order, then all side-1 DOFs.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import (maximum_bipartite_matching,
                                  min_weight_full_bipartite_matching)

from .basis import LocalBasis, dim_p, eval_monomials
from .errors import (EmptySide, PatchInfeasible, RankDeficient, SigmaExhausted,
                     SingularB)
from .mesh import neighborhood

__all__ = [
    "ActiveMesh",
    "SigmaMap",
    "SideReconstruction",
    "ReconstructionSpace",
    "StabilityReport",
    "default_threshold",
    "build_active_meshes",
    "build_sigma_map",
    "build_patches",
    "build_patch",
    "constrained_lstsq",
    "solve_constrained_ls",
    "build_reconstruction",
]

RANK_TOL = 1e-10
SINGULAR_B_TOL = 1e-14
ADEQUACY_RATIO = 5.0


THRESHOLD_TABLE = {0: 1, 1: 6, 2: 9, 3: 16, 4: 21}


def default_threshold(m: int) -> int:
    """Default patch size N_m: 1, 6, 9, 16, 21 for m = 0..4, dim P_m + 2m beyond.

    These are the smallest sizes of at least dim P_m + m + 1 for which the
    barycenters of every patch on the uniform mesh pattern determine a
    polynomial of degree m (smaller m = 3, 4 patches lie on cubic or quartic
    curves through rows of barycenters).
    """
    return THRESHOLD_TABLE.get(m, dim_p(m) + 2 * m)


# ----------------------------------------------------------------------------
# active meshes


@dataclass
class ActiveMesh:
    """Elements meeting one subdomain.

    Attributes
    ----------
    side : 0 or 1
    elements : (n,) ascending global element indices
    dof_index : (ne,) local index of each global element, -1 when inactive
    interior : (n,) True where K lies inside the subdomain
    interior_faces : faces whose two neighbours are both active
    boundary_faces : domain-boundary faces whose element is active
    """

    side: int
    elements: np.ndarray
    dof_index: np.ndarray
    interior: np.ndarray
    interior_faces: np.ndarray
    boundary_faces: np.ndarray

    @property
    def size(self) -> int:
        return len(self.elements)

    @property
    def mask(self) -> np.ndarray:
        return self.dof_index >= 0


def build_active_meshes(mesh, geom):
    """Active meshes of both sides from a classified :class:`MeshGeometry`."""
    out = []
    fe = mesh.face_elements
    for side in (0, 1):
        mask = geom.active(side)
        elements = np.flatnonzero(mask)
        if len(elements) == 0:
            raise EmptySide(f"no element meets subdomain {side}")
        dof_index = -np.ones(mesh.n_elements, dtype=np.int64)
        dof_index[elements] = np.arange(len(elements))
        interior = geom.cls[elements] == side
        both = (fe[:, 1] >= 0) & mask[fe[:, 0]] & mask[np.maximum(fe[:, 1], 0)]
        bnd = (fe[:, 1] < 0) & mask[fe[:, 0]]
        out.append(ActiveMesh(side, elements, dof_index, interior,
                              np.flatnonzero(both), np.flatnonzero(bnd)))
    return tuple(out)


# ----------------------------------------------------------------------------
# sigma map


@dataclass
class SigmaMap:
    """Injective maps from cut elements to nearby interior elements, per side.

    ``cut`` lists the cut elements; ``image[i][k]`` is the interior element of
    side i assigned to ``cut[k]`` and ``layer[i][k]`` the neighbour layer it
    was found in.  ``inverse[i]`` maps global elements back to their cut
    element (-1 elsewhere).
    """

    cut: np.ndarray
    image: list
    layer: list
    inverse: list
    s0: list

    def sigma(self, side: int, K: int) -> int:
        k = np.searchsorted(self.cut, K)
        if k >= len(self.cut) or self.cut[k] != K:
            raise KeyError(f"element {K} is not cut")
        return int(self.image[side][k])


def build_sigma_map(mesh, geom, s_max: int = 3) -> SigmaMap:
    """Injective assignment of cut elements to nearby interior elements.

    Cut elements are visited in ascending order; each takes the nearest
    unmarked interior element of the same side in the smallest neighbour
    layer that has one (ties broken by index).  If this greedy marking runs
    out of candidates within ``s_max`` layers, the assignment of that side is
    recomputed as a minimum-distance perfect bipartite matching restricted to
    the smallest layer count admitting one.
    """
    cut = geom.cut_elements
    bary = mesh.barycenters
    images, layers, inverses, s0s = [], [], [], []
    for side in (0, 1):
        interior = geom.cls == side
        if len(cut):
            interior[cut] = False
        image, layer = _greedy_sigma(mesh, cut, interior, s_max)
        if image is None:
            image, layer = _matching_sigma(mesh, cut, interior, s_max, side)
        inverse = -np.ones(mesh.n_elements, dtype=np.int64)
        inverse[image] = cut
        images.append(image)
        layers.append(layer)
        inverses.append(inverse)
        s0s.append(int(layer.max()) if len(layer) else 0)
    return SigmaMap(cut=cut, image=images, layer=layers, inverse=inverses, s0=s0s)


def _greedy_sigma(mesh, cut, interior, s_max):
    bary = mesh.barycenters
    marked = np.zeros(mesh.n_elements, dtype=bool)
    image = np.empty(len(cut), dtype=np.int64)
    layer = np.empty(len(cut), dtype=np.int64)
    for k, K in enumerate(cut):
        for s in range(1, s_max + 1):
            cand = neighborhood(mesh, K, s)
            cand = cand[interior[cand] & ~marked[cand]]
            if len(cand):
                d = np.linalg.norm(bary[cand] - bary[K], axis=1)
                best = cand[np.lexsort((cand, d))[0]]
                image[k] = best
                layer[k] = s
                marked[best] = True
                break
        else:
            return None, None
    return image, layer


def _matching_sigma(mesh, cut, interior, s_max, side):
    bary = mesh.barycenters
    cols = np.flatnonzero(interior)
    adj = mesh.vertex_adjacency.tocsr()
    reach = sp.identity(mesh.n_elements, format="csr")[cut]
    for s in range(1, s_max + 1):
        reach = (reach @ adj).tocsr()
        reach.data[:] = 1.0
        B = reach[:, cols].tocsr()
        if np.all(maximum_bipartite_matching(B, perm_type="column") >= 0):
            break
    else:
        raise SigmaExhausted(
            f"no injective assignment of cut elements to interior elements of side "
            f"{side} within {s_max} layers")
    B.sort_indices()
    rows = np.repeat(np.arange(len(cut)), np.diff(B.indptr))
    dist = np.linalg.norm(bary[cut[rows]] - bary[cols[B.indices]], axis=1)
    W = sp.csr_matrix((dist + 1.0, B.indices, B.indptr), shape=B.shape)
    image = cols[min_weight_full_bipartite_matching(W)[1]]
    layer = np.array([next(t for t in range(1, s + 1)
                           if img in neighborhood(mesh, K, t))
                      for K, img in zip(cut, image)], dtype=np.int64)
    return image, layer


# ----------------------------------------------------------------------------
# patches


def build_patches(mesh, active: ActiveMesh, sigma_inverse: np.ndarray, N: int):
    """Patches of size N for every element of an active mesh.

    Returns ``(members, depth)``: ``members`` (n, N) global element indices with
    the owner first, ``depth`` (n,) the layer index t with
    #S_t < N <= #S_{t+1}.
    """
    n = active.size
    if N < 1:
        raise ValueError("patch size must be positive")
    if N > n:
        raise PatchInfeasible(f"patch size {N} exceeds the {n} elements of side {active.side}")
    ne = mesh.n_elements
    rows = active.elements
    adj = mesh.vertex_adjacency
    reach = sp.csr_matrix((np.ones(n), (np.arange(n), rows)), shape=(n, ne))
    total = reach.copy()
    colmask = sp.diags(active.mask.astype(float))
    T = 0
    prev = np.ones(n)
    while True:
        T += 1
        reach = reach @ adj
        reach.data[:] = 1.0
        total = total + reach
        cnt = np.asarray((reach @ colmask).sum(axis=1)).ravel()
        if np.all(cnt >= N):
            break
        if np.any((cnt < N) & (cnt == prev)):
            raise PatchInfeasible("active mesh too small around some element for the patch size")
        prev = cnt
    total = (total @ colmask).tocoo()
    r, c = total.row, total.col
    layer = (T + 1 - np.rint(total.data)).astype(np.int64)
    # per-row counts #S_t
    counts = np.zeros((n, T + 1), dtype=np.int64)
    np.add.at(counts, (r, layer), 1)
    cum = np.cumsum(counts, axis=1)
    depth = np.maximum((cum < N).sum(axis=1) - 1, 0)
    keep = layer <= depth[r] + 1
    r, c, layer = r[keep], c[keep], layer[keep]
    group = (layer > depth[r]).astype(np.int64)
    dist = np.linalg.norm(mesh.barycenters[c] - mesh.barycenters[rows[r]], axis=1)
    order = np.lexsort((c, dist, group, r))
    r, c = r[order], c[order]
    start = np.searchsorted(r, np.arange(n))
    pos = np.arange(len(r)) - start[r]
    sel = pos < N
    members = np.empty((n, N), dtype=np.int64)
    members[r[sel], pos[sel]] = c[sel]

    # the cut preimage of a sigma image must belong to the patch
    if N > 1:
        for k in np.flatnonzero(sigma_inverse[rows] >= 0):
            pre = sigma_inverse[rows[k]]
            if pre not in members[k]:
                members[k, -1] = pre
    return members, depth


def build_patch(mesh, active: ActiveMesh, sigma: SigmaMap, K: int, N: int):
    """Patch of a single element (global index K); see :func:`build_patches`."""
    members, depth = build_patches(mesh, active, sigma.inverse[active.side], N)
    k = active.dof_index[K]
    if k < 0:
        raise ValueError(f"element {K} is not active on side {active.side}")
    return members[k], int(depth[k])


# ----------------------------------------------------------------------------
# constrained least squares


def constrained_lstsq(A: np.ndarray, cpos: np.ndarray) -> np.ndarray:
    """Linear map from sample values to coefficients of the constrained LS fit.

    Minimises |A a - v| subject to (A a)[cpos] = v[cpos], for a batch.

    Parameters
    ----------
    A : (B, N, nb) sample matrices
    cpos : (B, c) constrained row indices

    Returns
    -------
    M : (B, nb, N) with a = M v
    """
    B, N, nb = A.shape
    c = cpos.shape[1]
    bi = np.arange(B)[:, None]
    C = A[bi, cpos]                                   # (B, c, nb)
    E = np.zeros((B, c, N))
    E[bi, np.arange(c)[None, :], cpos] = 1.0
    Q, R = np.linalg.qr(np.swapaxes(C, 1, 2), mode="complete")
    R1 = R[:, :c, :]
    Q1, Q2 = Q[:, :, :c], Q[:, :, c:]
    G = np.linalg.solve(np.swapaxes(R1, 1, 2), E)     # (B, c, N)
    M = Q1 @ G
    if nb > c:
        AQ2 = A @ Q2
        U, s, Vt = np.linalg.svd(AQ2, full_matrices=False)
        if np.any(s[:, -1] < RANK_TOL * s[:, 0]):
            raise RankDeficient("patch barycenters do not determine a unique polynomial")
        pinv = np.swapaxes(Vt, 1, 2) @ (np.swapaxes(U, 1, 2) / s[:, :, None])
        resid = np.eye(N)[None] - A @ M
        M = M + Q2 @ (pinv @ resid)
    return M


def solve_constrained_ls(points, values, constrained, m: int) -> np.ndarray:
    """Coefficients of the constrained LS polynomial in plain monomials x^a y^b.

    Monomials are ordered by total degree, x-power descending.
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    A = eval_monomials(points, m)[None]
    cpos = np.atleast_1d(np.asarray(constrained, dtype=np.int64))[None]
    return (constrained_lstsq(A, cpos)[0] @ values)


# ----------------------------------------------------------------------------
# reconstruction operator


@dataclass
class SideReconstruction:
    """Reconstruction on one active mesh.

    ``patches`` holds local DOF indices (owner first); ``coef[k]`` maps the DOF
    values on ``patches[k]`` to basis coefficients of the polynomial on
    element ``active.elements[k]``.
    """

    active: ActiveMesh
    threshold: int
    patches: np.ndarray
    depth: np.ndarray
    constraints: list
    coef: np.ndarray
    lam: np.ndarray
    adequate: bool
    _R: object = field(default=None, repr=False)

    @property
    def operator(self) -> sp.csr_matrix:
        """Sparse (n * nb, n) matrix from DOF values to stacked coefficients."""
        if self._R is None:
            n, nb, N = self.coef.shape
            rows = np.broadcast_to((np.arange(n)[:, None] * nb + np.arange(nb)[None, :])[:, :, None],
                                   (n, nb, N))
            cols = np.broadcast_to(self.patches[:, None, :], (n, nb, N))
            self._R = sp.csr_matrix((self.coef.ravel(), (rows.ravel(), cols.ravel())),
                                    shape=(n * nb, n))
        return self._R

    def coefficients(self, v: np.ndarray) -> np.ndarray:
        """(n, nb) local coefficients of R v."""
        return np.einsum("kjn,kn->kj", self.coef, v[self.patches])


@dataclass
class StabilityReport:
    lam: list
    depth: list
    thresholds: list
    Lambda_m: float
    adequate: list

    def summary(self):
        return {f"side{i}": dict(min=float(l.min()), max=float(l.max()),
                                 threshold=self.thresholds[i], adequate=self.adequate[i])
                for i, l in enumerate(self.lam)}

    def to_csv(self, path, elements):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["side", "element", "t_depth", "lambda"])
            for i in (0, 1):
                for K, t, lam in zip(elements[i], self.depth[i], self.lam[i]):
                    w.writerow([i, int(K), int(t), f"{lam:.10g}"])


@dataclass
class ReconstructionSpace:
    """Reconstructed space U_h^m on both sides."""

    mesh: object
    geom: object
    m: int
    basis: LocalBasis
    sigma: SigmaMap
    sides: list

    @property
    def offsets(self):
        return (0, self.sides[0].active.size)

    @property
    def ndof(self) -> int:
        return self.sides[0].active.size + self.sides[1].active.size

    def split(self, v):
        n0 = self.sides[0].active.size
        return v[:n0], v[n0:]

    def evaluate(self, side: int, v_side: np.ndarray, points: np.ndarray,
                 elem: np.ndarray, grad: bool = False):
        """Values (and gradients) of R^{m,side} v at points lying in elements elem."""
        s = self.sides[side]
        coef = s.coefficients(v_side)
        local = s.active.dof_index[elem]
        if np.any(local < 0):
            raise ValueError("evaluation element is not active on this side")
        if grad:
            val, g = self.basis.values_and_grads(points, elem)
            c = coef[local]
            return np.einsum("nj,nj->n", val, c), np.einsum("njd,nj->nd", g, c)
        return np.einsum("nj,nj->n", self.basis.values(points, elem), coef[local])

    def stability(self) -> StabilityReport:
        t_m = max(int(s.depth.max()) for s in self.sides)
        Lm = max(float(np.max(1.0 + t_m * s.lam * np.sqrt(s.threshold))) for s in self.sides)
        return StabilityReport(lam=[s.lam for s in self.sides],
                               depth=[s.depth for s in self.sides],
                               thresholds=[s.threshold for s in self.sides],
                               Lambda_m=Lm, adequate=[s.adequate for s in self.sides])


def _side_reconstruction(mesh, basis, active, sigma_inverse, m, N):
    members, depth = build_patches(mesh, active, sigma_inverse, N)
    n = active.size
    nb = basis.nb
    owners = active.elements
    pts = mesh.barycenters[members].reshape(-1, 2)
    A = basis.values(pts, np.repeat(owners, N)).reshape(n, N, nb)

    # stability constants from the smallest singular value of the sampling matrix
    s = np.linalg.svd(A, compute_uv=False)
    smin2, smax2 = s[:, -1] ** 2, s[:, 0] ** 2
    if np.any(smin2 < SINGULAR_B_TOL * smax2):
        raise SingularB("degenerate patch geometry")
    lam = 1.0 / (mesh.diameters[owners] * np.sqrt(smin2))

    pre = sigma_inverse[owners]
    has2 = (pre >= 0) & (m > 0)
    coef = np.zeros((n, nb, N))
    constraints = [None] * n
    for two in (False, True):
        idx = np.flatnonzero(has2 == two)
        if len(idx) == 0:
            continue
        if two:
            pos = np.argmax(members[idx] == pre[idx][:, None], axis=1)
            cpos = np.stack([np.zeros(len(idx), dtype=np.int64), pos], axis=1)
        else:
            cpos = np.zeros((len(idx), 1), dtype=np.int64)
        if m == 0:
            coef[idx, 0, 0] = 1.0 / A[idx, 0, 0]
        else:
            coef[idx] = constrained_lstsq(A[idx], cpos)
        for k, row in zip(idx, cpos):
            constraints[k] = members[k, row]
    local = active.dof_index[members]
    adequate = bool(lam.max() <= ADEQUACY_RATIO * lam.min())
    return SideReconstruction(active=active, threshold=N, patches=local, depth=depth,
                              constraints=constraints, coef=coef, lam=lam, adequate=adequate)


def build_reconstruction(mesh, geom, m: int, threshold: int | None = None,
                         auto_increase: bool = True, max_increase: int = 20,
                         s_max: int = 3, basis: LocalBasis | None = None,
                         sigma: SigmaMap | None = None) -> ReconstructionSpace:
    """Build R^{m,0} and R^{m,1}.

    With ``auto_increase`` the patch size grows by 2 on a side while
    max Lambda > 5 min Lambda there, at most ``max_increase`` beyond the start.
    """
    if m < 0:
        raise ValueError("degree must be >= 0")
    actives = build_active_meshes(mesh, geom)
    if sigma is None:
        sigma = build_sigma_map(mesh, geom, s_max=s_max)
    if basis is None or basis.m != m:
        basis = LocalBasis(mesh, m)
    N0 = default_threshold(m) if threshold is None else int(threshold)
    if m > 0 and N0 < dim_p(m) + 2:
        raise ValueError(f"patch size must be at least dim P_m + 2 = {dim_p(m) + 2}")
    sides = []
    for side in (0, 1):
        N = N0
        limit = min(N0 + max_increase, actives[side].size) if auto_increase else N0
        while True:
            try:
                rec = _side_reconstruction(mesh, basis, actives[side], sigma.inverse[side], m, N)
            except (SingularB, RankDeficient):
                # patches whose barycenters lie on an algebraic curve of degree m
                if N + 2 > limit:
                    raise
                N += 2
                continue
            if rec.adequate or N + 2 > limit:
                break
            N += 2
        sides.append(rec)
    return ReconstructionSpace(mesh=mesh, geom=geom, m=m, basis=basis, sigma=sigma, sides=sides)
