"""Level-set interfaces, element classification and cut-cell quadrature.

Cut volumes are resolved by uniform subdivision of each element into
sub-triangles.  Sub-triangles on which the sign of the level set is certified
(through a Lipschitz bound on the level set) are kept whole; the others are
split further, up to ``depth`` times.  Sign-changing leaves are cut along the
chord joining the two edge roots.  The pieces adjacent to the chord are
integrated on their curved shape: the chord is lifted onto the zero level set
along its normal, and the piece is parametrized by rays from a leaf vertex to
the lifted curve.  Leaves where no vertex sees the whole curve are subdivided
a few more times, so all weights stay positive.  Interface rules use the same
lifted curve.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DegenerateInterface, ProjectionDivergence, RootFindFailure
from .quadrature import gauss_legendre, map_triangle_rule

__all__ = [
    "LevelSet",
    "Circle",
    "Flower",
    "Affine",
    "Custom",
    "ElementClass",
    "CutQuadrature",
    "FaceQuadrature",
    "MeshGeometry",
    "classify_element",
    "cut_volume_quadrature",
    "face_cut_quadrature",
    "active_measures",
    "compute_geometry",
    "default_depth",
]

SIGN_TOL = 1e-12
SLIVER_TOL = 1e-12
NEWTON_STEPS = 10
NEWTON_TOL = 1e-12
BISECTION_STEPS = 60
EXTRA_LEVELS = 3


def default_depth(m: int) -> int:
    return 3 if m <= 2 else 4


class ElementClass(IntEnum):
    INTERIOR0 = 0
    INTERIOR1 = 1
    CUT = 2


# ----------------------------------------------------------------------------
# level sets


class LevelSet:
    """Signed function with phi < 0 in the inner region and phi > 0 outside."""

    descriptor = "custom"

    def phi(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_bound(self, centers: np.ndarray, radius: np.ndarray):
        """Upper bound of |grad phi| on the balls B(centers, radius), or None."""
        return None

    def __call__(self, p):
        return self.phi(p)


class Circle(LevelSet):
    descriptor = "circle"

    def __init__(self, radius: float = 0.6, center=(0.0, 0.0)):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=float)

    def phi(self, p):
        return np.linalg.norm(np.asarray(p) - self.center, axis=-1) - self.radius

    def grad(self, p):
        d = np.asarray(p) - self.center
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        return d / np.where(r > 0, r, 1.0)

    def grad_bound(self, centers, radius):
        return np.ones(len(centers))

    def __repr__(self):
        return f"Circle(radius={self.radius}, center={tuple(self.center)})"


class Flower(LevelSet):
    """phi = rho - r0 - a sin(k theta) in polar coordinates about ``center``."""

    descriptor = "flower"

    def __init__(self, base_radius: float = 0.5, amplitude: float = 1.0 / 7.0,
                 lobes: int = 5, center=(0.0, 0.0)):
        self.base_radius = float(base_radius)
        self.amplitude = float(amplitude)
        self.lobes = int(lobes)
        self.center = np.asarray(center, dtype=float)

    def phi(self, p):
        d = np.asarray(p) - self.center
        rho = np.hypot(d[..., 0], d[..., 1])
        theta = np.arctan2(d[..., 1], d[..., 0])
        return rho - self.base_radius - self.amplitude * np.sin(self.lobes * theta)

    def grad(self, p):
        d = np.asarray(p) - self.center
        x, y = d[..., 0], d[..., 1]
        rho2 = x * x + y * y
        rho = np.sqrt(rho2)
        rho = np.where(rho > 0, rho, 1.0)
        rho2 = np.where(rho2 > 0, rho2, 1.0)
        theta = np.arctan2(y, x)
        c = self.amplitude * self.lobes * np.cos(self.lobes * theta)
        gx = x / rho + c * y / rho2
        gy = y / rho - c * x / rho2
        return np.stack([gx, gy], axis=-1)

    def grad_bound(self, centers, radius):
        rho_min = np.linalg.norm(centers - self.center, axis=1) - radius
        ak = self.amplitude * self.lobes
        with np.errstate(divide="ignore"):
            bound = np.sqrt(1.0 + (ak / np.maximum(rho_min, 0.0)) ** 2)
        return np.where(rho_min > 0, bound, np.inf)

    def __repr__(self):
        return (f"Flower(base_radius={self.base_radius}, amplitude={self.amplitude:.6g}, "
                f"lobes={self.lobes})")


class Affine(LevelSet):
    """phi = normal . x - offset."""

    descriptor = "affine"

    def __init__(self, normal=(1.0, 0.0), offset: float = 0.0):
        self.normal = np.asarray(normal, dtype=float)
        if not np.linalg.norm(self.normal) > 0:
            raise ValueError("normal must be nonzero")
        self.offset = float(offset)

    def phi(self, p):
        return np.asarray(p) @ self.normal - self.offset

    def grad(self, p):
        p = np.asarray(p)
        return np.broadcast_to(self.normal, p.shape).copy()

    def grad_bound(self, centers, radius):
        return np.full(len(centers), np.linalg.norm(self.normal))

    def __repr__(self):
        return f"Affine(normal={tuple(self.normal)}, offset={self.offset})"


class Custom(LevelSet):
    """User-supplied vectorised ``phi`` and ``grad``; ``lipschitz`` enables certification."""

    descriptor = "custom"

    def __init__(self, phi, grad, lipschitz: float | None = None):
        self._phi = phi
        self._grad = grad
        self.lipschitz = lipschitz

    def phi(self, p):
        return np.asarray(self._phi(np.asarray(p)), dtype=float)

    def grad(self, p):
        return np.asarray(self._grad(np.asarray(p)), dtype=float)

    def grad_bound(self, centers, radius):
        if self.lipschitz is None:
            return None
        return np.full(len(centers), float(self.lipschitz))


# ----------------------------------------------------------------------------
# subdivision kernels


def _split4(tris: np.ndarray) -> np.ndarray:
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    ch = np.stack([
        np.stack([a, ab, ca], axis=1),
        np.stack([ab, b, bc], axis=1),
        np.stack([ca, bc, c], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ], axis=1)
    return ch.reshape(-1, 3, 2)


def _snap(phi, tol):
    return np.where(np.abs(phi) <= tol, 0.0, phi)


def _resolve(levelset, tris, owner, tol, depth):
    """Subdivide until every leaf is sign-certified or ``depth`` is reached.

    Returns ``(uniform, cut, touched)``: ``uniform`` = (tris, owner, side),
    ``cut`` = (tris, owner, snapped vertex phi), ``touched`` marks owners that
    needed subdivision (could not be certified as a whole).
    """
    uni_t, uni_o, uni_s = [], [], []
    touched = np.zeros(0, dtype=np.int64)
    cut = (np.zeros((0, 3, 2)), np.zeros(0, dtype=np.int64), np.zeros((0, 3)))
    for level in range(depth + 1):
        if len(tris) == 0:
            break
        phi = levelset.phi(tris.reshape(-1, 2)).reshape(-1, 3)
        t = tol[owner]
        phi = _snap(phi, t[:, None])
        if np.any(np.all(phi == 0.0, axis=1)):
            raise DegenerateInterface("level set vanishes on a whole sub-triangle")
        side = phi >= 0
        same = side.all(axis=1) | (~side).all(axis=1)
        centers = tris.mean(axis=1)
        radius = np.linalg.norm(tris - centers[:, None, :], axis=2).max(axis=1)
        diam = np.linalg.norm(tris - np.roll(tris, 1, axis=1), axis=2).max(axis=1)
        bound = levelset.grad_bound(centers, radius)
        if bound is None:
            certified = np.zeros(len(tris), dtype=bool)
        else:
            certified = same & (np.abs(phi).max(axis=1) > bound * diam)
        final = same if level == depth else certified
        uni_t.append(tris[final])
        uni_o.append(owner[final])
        uni_s.append(side[final, 0].astype(np.int8))
        rest = ~final
        if level == 0:
            touched = owner[rest]
        if level == depth:
            cut = (tris[rest], owner[rest], phi[rest])
        else:
            tris = _split4(tris[rest])
            owner = np.repeat(owner[rest], 4)
    uniform = (np.concatenate(uni_t) if uni_t else np.zeros((0, 3, 2)),
               np.concatenate(uni_o) if uni_o else np.zeros(0, dtype=np.int64),
               np.concatenate(uni_s) if uni_s else np.zeros(0, dtype=np.int8))
    return uniform, cut, np.unique(touched)


def _bisect(levelset, a, b, fa, fb):
    """Vectorised root of phi on segments a->b given endpoint values of opposite sign.

    Snapped zeros at an endpoint are returned exactly.  Returns the parameter t.
    """
    t = np.full(len(a), np.nan)
    t[fa == 0] = 0.0
    t[(fb == 0) & (fa != 0)] = 1.0
    todo = np.isnan(t)
    if np.any(todo):
        A, B = a[todo], b[todo]
        lo = np.zeros(len(A))
        hi = np.ones(len(A))
        flo, fhi = fa[todo].copy(), fb[todo].copy()
        if np.any(np.sign(flo) == np.sign(fhi)):
            raise RootFindFailure("edge endpoints do not bracket a root")
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            fm = levelset.phi(A + mid[:, None] * (B - A))
            left = np.sign(fm) == np.sign(flo)
            lo = np.where(left, mid, lo)
            flo = np.where(left, fm, flo)
            hi = np.where(left, hi, mid)
            fhi = np.where(left, fhi, fm)
            if np.all(hi - lo < 1e-15):
                break
        denom = fhi - flo
        safe = np.abs(denom) > 0
        tt = np.where(safe, lo - flo * (hi - lo) / np.where(safe, denom, 1.0), 0.5 * (lo + hi))
        t[todo] = np.clip(tt, lo, hi)
    return t


def _project(levelset, pts, scale):
    """Newton projection of points onto phi = 0 along the gradient."""
    x = pts.copy()
    for _ in range(NEWTON_STEPS):
        f = levelset.phi(x)
        if np.all(np.abs(f) <= NEWTON_TOL * scale):
            break
        g = levelset.grad(x)
        g2 = np.einsum("ij,ij->i", g, g)
        if np.any(g2 == 0):
            raise ProjectionDivergence("vanishing level-set gradient at an interface node")
        x = x - (f / g2)[:, None] * g
    f = levelset.phi(x)
    if not np.all(np.abs(f) <= max(NEWTON_TOL * scale, 1e-10)):
        raise ProjectionDivergence(
            f"Newton projection did not converge (max |phi| = {np.abs(f).max():.3e})")
    g = levelset.grad(x)
    return x, g / np.linalg.norm(g, axis=1, keepdims=True)


def _lift_chords(levelset, P, Q, tau):
    """Lift chord points P + tau (Q - P) onto phi = 0 along the chord normal.

    Returns the curve points G (M, k, 2) and their derivatives dG/dtau.
    """
    d = Q - P
    nu = np.stack([-d[:, 1], d[:, 0]], axis=1)
    nu /= np.linalg.norm(nu, axis=1, keepdims=True)
    base = P[:, None, :] + tau[None, :, None] * d[:, None, :]
    M, k = base.shape[:2]
    flat = base.reshape(-1, 2)
    nuf = np.repeat(nu, k, axis=0)
    scale = np.repeat(np.linalg.norm(d, axis=1), k)
    sig = np.zeros(len(flat))
    for _ in range(NEWTON_STEPS + 10):
        x = flat + sig[:, None] * nuf
        f = levelset.phi(x)
        if np.all(np.abs(f) <= NEWTON_TOL * np.maximum(scale, 1e-300)):
            break
        gn = np.einsum("ij,ij->i", levelset.grad(x), nuf)
        if np.any(gn == 0):
            raise ProjectionDivergence("level set is tangent to a chord normal")
        sig = sig - f / gn
    x = flat + sig[:, None] * nuf
    if not np.all(np.abs(levelset.phi(x)) <= max(1e-10, NEWTON_TOL)):
        raise ProjectionDivergence("chord lifting did not converge")
    if np.any(np.abs(sig) > scale):
        raise ProjectionDivergence("interface is not a graph over a cut chord")
    g = levelset.grad(x)
    df = np.repeat(d, k, axis=0)
    dsig = -np.einsum("ij,ij->i", g, df) / np.einsum("ij,ij->i", g, nuf)
    dG = df + dsig[:, None] * nuf
    return x.reshape(M, k, 2), dG.reshape(M, k, 2)


def _orientation(X, P, Q):
    e1, e2 = P - X, Q - X
    return np.sign(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _curved_rule(apex, G, dG, orient, order):
    """Rule on the region bounded by apex-P, apex-Q and a lifted chord.

    ``G, dG`` are the lifted curve and its derivative at the Gauss nodes of
    :func:`_curve_nodes`.  The region is swept by x = apex + lam (G(tau) - apex);
    weights are signed by ``orient``, the orientation of the straight piece
    (apex, P, Q).  Returns points (M, nq, 2) and weights (M, nq); all weights
    are positive exactly when the region is star-shaped from the apex.
    """
    tau, wt = _curve_nodes(order)
    lam, wl = tau, wt
    r = G - apex[:, None, :]
    det = r[..., 0] * dG[..., 1] - r[..., 1] * dG[..., 0]             # (M, n)
    pts = apex[:, None, None, :] + lam[None, :, None, None] * r[:, None, :, :]  # (M, nl, nt, 2)
    w = (orient[:, None, None] * det[:, None, :] * (wl * lam)[None, :, None]
         * wt[None, None, :])
    M = len(apex)
    return pts.reshape(M, -1, 2), w.reshape(M, -1)


def _curve_nodes(order):
    return gauss_legendre(max(1, (order + 2) // 2) + 1)


def _split_cut_leaves(levelset, tris, phi):
    """Split sign-changing leaves along the chord between edge roots.

    Returns sub-triangles (3M, 3, 2) with their side, and chord endpoints
    (M, 2, 2).  Sub-triangles 0 and 2 of each leaf have the chord as an edge
    and apexes A (= vertex 0) and C (= vertex 1).
    """
    side = phi >= 0
    m = np.arange(len(tris))
    ones = side.sum(axis=1)
    lonely = np.where(ones == 1, np.argmax(side, axis=1), np.argmax(~side, axis=1))
    ia, ib, ic = lonely, (lonely + 1) % 3, (lonely + 2) % 3
    A, B, C = tris[m, ia], tris[m, ib], tris[m, ic]
    fA, fB, fC = phi[m, ia], phi[m, ib], phi[m, ic]
    tP = _bisect(levelset, A, B, fA, fB)
    tQ = _bisect(levelset, A, C, fA, fC)
    P = A + tP[:, None] * (B - A)
    Q = A + tQ[:, None] * (C - A)
    sA = side[m, ia].astype(np.int8)
    sub = np.stack([
        np.stack([A, P, Q], axis=1),
        np.stack([P, B, C], axis=1),
        np.stack([P, C, Q], axis=1),
    ], axis=1).reshape(-1, 3, 2)
    sub_side = np.stack([sA, 1 - sA, 1 - sA], axis=1).ravel()
    return sub, sub_side, np.stack([P, Q], axis=1)


def _tri_area(t):
    d1 = t[:, 1] - t[:, 0]
    d2 = t[:, 2] - t[:, 0]
    return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


# ----------------------------------------------------------------------------
# results


@dataclass
class QuadSet:
    """Flat quadrature data: ``owner[k]`` is the element (or face) of point k."""

    points: np.ndarray
    weights: np.ndarray
    owner: np.ndarray

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=np.int64))

    def select(self, idx) -> "QuadSet":
        mask = self.owner == idx
        return QuadSet(self.points[mask], self.weights[mask], self.owner[mask])


@dataclass
class InterfaceSet(QuadSet):
    """Interface rule; ``traces[k, i]`` is the element whose side-i polynomial is
    traced at point k.  It equals ``owner`` for points inside a cut element
    and differs on one side when the interface runs along a mesh face."""

    normals: np.ndarray = None
    traces: np.ndarray = None

    def __post_init__(self):
        if self.traces is None:
            self.traces = np.stack([self.owner, self.owner], axis=1)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros((0, 2)))

    def select(self, idx) -> "InterfaceSet":
        mask = self.owner == idx
        return self.subset(mask)

    def subset(self, mask) -> "InterfaceSet":
        return InterfaceSet(self.points[mask], self.weights[mask], self.owner[mask],
                            self.normals[mask], self.traces[mask])


@dataclass
class CutQuadrature:
    vol0: tuple
    vol1: tuple
    iface: tuple
    measures: tuple


@dataclass
class FaceQuadrature:
    full: tuple
    part0: tuple
    part1: tuple


@dataclass
class MeshGeometry:
    """Interface geometry of a whole mesh.

    Attributes
    ----------
    cls : (ne,) int8, values of :class:`ElementClass`
    measures : (ne, 2) |K cap Omega_0|, |K cap Omega_1|
    vol : [QuadSet, QuadSet], volume rules per side for cut elements only
    iface : InterfaceSet on the cut elements, normals point into Omega_1
    iface_length : (ne,) length of the interface rule owned by each element
    face_parts : [QuadSet, QuadSet], rules on e cap Omega_i for every face
    face_measures : (nf, 2)
    """

    mesh: object
    levelset: LevelSet
    depth: int
    vol_order: int
    face_npts: int
    cls: np.ndarray
    measures: np.ndarray
    vol: list
    iface: InterfaceSet
    iface_length: np.ndarray
    face_parts: list
    face_measures: np.ndarray

    def active(self, side: int) -> np.ndarray:
        """Boolean mask of elements meeting Omega_side."""
        return (self.cls == side) | (self.cls == ElementClass.CUT)

    @property
    def cut_elements(self) -> np.ndarray:
        return np.flatnonzero(self.cls == ElementClass.CUT)


def _sort_by_owner(*arrays, owner):
    order = np.argsort(owner, kind="stable")
    return [a[order] for a in arrays] + [owner[order]]


def _element_tol(mesh, elems):
    return SIGN_TOL * mesh.diameters[elems]


def _uniform_pieces(tris, owner, side, order):
    pts, w = map_triangle_rule(tris, order)
    nq = pts.shape[1]
    return pts.reshape(-1, 2), w.ravel(), np.repeat(owner, nq), np.repeat(side, nq)


def _cut_leaf_pieces(levelset, ct, co, cphi, order, tol, extra, pieces):
    """Append the volume pieces of sign-changing leaves to ``pieces``.

    Curved pieces are swept from a vertex of the leaf onto the lifted chord.
    The single-vertex side uses its vertex A; the other side is split at C
    or, when that piece is not star-shaped, at B.  Leaves admitting neither
    split are subdivided once more (``extra`` times at most) and finally
    fall back to straight chord pieces.  Returns the chords and their owners.
    """
    if len(ct) == 0:
        return np.zeros((0, 2, 2)), np.zeros(0, dtype=np.int64)
    sub, sub_side, chords = _split_cut_leaves(levelset, ct, cphi)
    sub = sub.reshape(-1, 3, 3, 2)
    sub_side = sub_side.reshape(-1, 3)
    P, Q = chords[:, 0], chords[:, 1]
    ok = np.linalg.norm(Q - P, axis=1) > 0
    # a degenerate chord leaves the whole leaf on one side
    deg = np.flatnonzero(~ok)
    pieces.append(_uniform_pieces(sub[deg, 1], co[deg], sub_side[deg, 1], order))

    A, B, C = sub[ok, 0, 0], sub[ok, 1, 1], sub[ok, 2, 1]
    Pk, Qk = P[ok], Q[ok]
    G, dG = _lift_chords(levelset, Pk, Qk, _curve_nodes(order)[0])
    # B and C lie across the chord from A; an apex on the chord line takes
    # the orientation opposite to the other side
    oA = _orientation(A, Pk, Qk)
    oC, oB = _orientation(C, Pk, Qk), _orientation(B, Pk, Qk)
    oA = np.where(oA == 0, -np.where(oC == 0, oB, oC), oA)
    oB, oC = np.where(oB == 0, -oA, oB), np.where(oC == 0, -oA, oC)
    rules = [_curved_rule(X, G, dG, o, order) for X, o in ((A, oA), (C, oC), (B, oB))]
    star = [np.all(w > 0, axis=1) for _, w in rules]
    use_c = star[0] & star[1]
    use_b = star[0] & ~star[1] & star[2]
    co_ok, side_ok = co[ok], sub_side[ok]
    other = side_ok[:, 1]
    BCQ = np.stack([B, C, Qk], axis=1)
    for sel, (cp, cw), sd, straight in ((use_c | use_b, rules[0], side_ok[:, 0], None),
                                        (use_c, rules[1], other, sub[ok, 1]),
                                        (use_b, rules[2], other, BCQ)):
        k = cp.shape[1]
        pieces.append((cp[sel].reshape(-1, 2), cw[sel].ravel(),
                       np.repeat(co_ok[sel], k), np.repeat(sd[sel], k)))
        if straight is not None:
            pieces.append(_uniform_pieces(straight[sel], co_ok[sel], other[sel], order))
    good = use_c | use_b
    out_chords, out_owner = [chords[ok][good]], [co_ok[good]]

    bad = np.flatnonzero(ok)[~good]
    if len(bad) and extra > 0:
        (ut, uo, us), (ct2, co2, cphi2), _ = _resolve(levelset, ct[bad], co[bad], tol, 1)
        pieces.append(_uniform_pieces(ut, uo, us, order))
        ch2, ow2 = _cut_leaf_pieces(levelset, ct2, co2, cphi2, order, tol, extra - 1, pieces)
        out_chords.append(ch2)
        out_owner.append(ow2)
    elif len(bad):
        pieces.append(_uniform_pieces(sub[bad].reshape(-1, 3, 2), np.repeat(co[bad], 3),
                                      sub_side[bad].ravel(), order))
        out_chords.append(chords[bad])
        out_owner.append(co[bad])
    return np.concatenate(out_chords), np.concatenate(out_owner)


def _cut_data(levelset, mesh, elems, vol_order, iface_npts, depth):
    """Resolve the given elements; returns per-owner raw pieces."""
    ne = mesh.n_elements
    tol = np.zeros(ne)
    tol[elems] = _element_tol(mesh, elems)
    tris = mesh.element_coords[elems]
    (ut, uo, us), (ct, co, cphi), touched = _resolve(levelset, tris, np.asarray(elems), tol, depth)
    pieces = [_uniform_pieces(ut, uo, us, vol_order)]
    chords, cowner = _cut_leaf_pieces(levelset, ct, co, cphi, vol_order, tol,
                                      EXTRA_LEVELS, pieces)
    allp, allw, allo, alls = (np.concatenate(a) for a in zip(*pieces))
    # straight pieces of zero area carry no information
    nz = allw > 0
    allp, allw, allo, alls = allp[nz], allw[nz], allo[nz], alls[nz]

    vol = []
    measures = np.zeros((ne, 2))
    for s in (0, 1):
        sel = alls == s
        measures[:, s] = np.bincount(allo[sel], weights=allw[sel], minlength=ne)
        p, ww, o = _sort_by_owner(allp[sel], allw[sel], owner=allo[sel])
        vol.append(QuadSet(p, ww, o))

    if len(chords):
        t, gw = gauss_legendre(iface_npts)
        G, dG = _lift_chords(levelset, chords[:, 0], chords[:, 1], t)
        ip = G.reshape(-1, 2)
        iw = (np.linalg.norm(dG, axis=2) * gw[None, :]).ravel()
        io = np.repeat(cowner, len(t))
        g = levelset.grad(ip)
        nrm = g / np.linalg.norm(g, axis=1, keepdims=True)
        ip, iw, nrm, io = _sort_by_owner(ip, iw, nrm, owner=io)
        iface = InterfaceSet(ip, iw, io, nrm)
    else:
        iface = InterfaceSet.empty()
    ilen = np.bincount(iface.owner, weights=iface.weights, minlength=ne)
    return measures, vol, iface, ilen, touched


def _face_data(levelset, mesh, faces, npts, depth):
    """Split the given faces at the interface; returns per-side QuadSets and measures."""
    nf = mesh.n_faces
    fv = mesh.vertices[mesh.faces[faces]]
    a, b = fv[:, 0], fv[:, 1]
    L = mesh.face_lengths[faces]
    tol = SIGN_TOL * L
    ns = 2 ** depth
    s = np.linspace(0.0, 1.0, ns + 1)
    samples = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
    ph = _snap(levelset.phi(samples.reshape(-1, 2)).reshape(len(faces), ns + 1), tol[:, None])
    side = ph >= 0
    change = side[:, 1:] != side[:, :-1]
    fi, k = np.nonzero(change)
    sa = a[fi] + s[k][:, None] * (b[fi] - a[fi])
    sb = a[fi] + s[k + 1][:, None] * (b[fi] - a[fi])
    tr = _bisect(levelset, sa, sb, ph[fi, k], ph[fi, k + 1])
    roots = s[k] + tr / ns

    # breakpoints per face: 0, roots..., 1
    bf = np.concatenate([np.arange(len(faces)), fi, np.arange(len(faces))])
    bt = np.concatenate([np.zeros(len(faces)), roots, np.ones(len(faces))])
    order = np.lexsort((bt, bf))
    bf, bt = bf[order], bt[order]
    same = bf[1:] == bf[:-1]
    f_seg = bf[:-1][same]
    t0, t1 = bt[:-1][same], bt[1:][same]
    seg_len = (t1 - t0) * L[f_seg]
    keep = seg_len > SLIVER_TOL * L[f_seg]
    f_seg, t0, t1, seg_len = f_seg[keep], t0[keep], t1[keep], seg_len[keep]
    tm = 0.5 * (t0 + t1)
    pm = a[f_seg] + tm[:, None] * (b[f_seg] - a[f_seg])
    phm = levelset.phi(pm)
    on_gamma = np.abs(phm) <= tol[f_seg]
    seg_side = (phm > 0).astype(np.int8)

    gt, gw = gauss_legendre(npts)
    parts = []
    measures = np.zeros((nf, 2))
    for sd in (0, 1):
        sel = (seg_side == sd) & ~on_gamma
        fs = f_seg[sel]
        tt = t0[sel][:, None] + gt[None, :] * (t1[sel] - t0[sel])[:, None]
        p = (a[fs][:, None, :] + tt[:, :, None] * (b[fs] - a[fs])[:, None, :]).reshape(-1, 2)
        w = (seg_len[sel][:, None] * gw[None, :]).ravel()
        o = np.repeat(faces[fs], npts)
        parts.append((p, w, o))
        measures[:, sd] = np.bincount(faces[fs], weights=seg_len[sel], minlength=nf)
    return parts, measures


# ----------------------------------------------------------------------------
# bulk driver


def compute_geometry(levelset: LevelSet, mesh, depth: int = 3, vol_order: int = 4,
                     face_npts: int = 3, iface_npts: int | None = None) -> MeshGeometry:
    """Classify all elements of ``mesh`` and build every cut quadrature rule."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if vol_order < 1 or face_npts < 1:
        raise ValueError("quadrature order must be >= 1")
    iface_npts = face_npts if iface_npts is None else iface_npts
    ne = mesh.n_elements
    elems = np.arange(ne)
    measures, vol, iface, ilen, touched = _cut_data(
        levelset, mesh, elems, vol_order, iface_npts, depth)

    area = mesh.areas
    small = SLIVER_TOL * area
    has0 = measures[:, 0] > small
    has1 = measures[:, 1] > small
    cls = np.where(has0, 0, 1).astype(np.int8)
    cut = has0 & has1
    cls[cut] = ElementClass.CUT
    if np.any(~has0 & ~has1):
        raise DegenerateInterface("element with no measurable area on either side")

    # uncut elements: exact measures, drop their pieces
    measures[~cut] = 0.0
    measures[~cut, cls[~cut]] = area[~cut]
    vol = [_restrict(q, cut) for q in vol]
    iface = _face_interface(mesh, iface, cls, cut)
    ilen = np.bincount(iface.owner, weights=iface.weights, minlength=ne)

    # faces: full rules for faces away from the interface, split the rest
    fe = mesh.face_elements
    near = np.zeros(ne, dtype=bool)
    near[touched] = True
    near |= cut
    cand = near[fe[:, 0]] | (fe[:, 1] >= 0) & near[np.maximum(fe[:, 1], 0)]
    cand_idx = np.flatnonzero(cand)
    parts, fmeas = _face_data(levelset, mesh, cand_idx, face_npts, depth)

    far = np.flatnonzero(~cand)
    far_side = cls[fe[far, 0]]
    fv = mesh.vertices[mesh.faces[far]]
    gt, gw = gauss_legendre(face_npts)
    fp = (fv[:, 0][:, None, :] + gt[None, :, None] * (fv[:, 1] - fv[:, 0])[:, None, :])
    fw = mesh.face_lengths[far][:, None] * gw[None, :]
    face_parts = []
    for sd in (0, 1):
        sel = far_side == sd
        p = np.concatenate([parts[sd][0], fp[sel].reshape(-1, 2)])
        w = np.concatenate([parts[sd][1], fw[sel].ravel()])
        o = np.concatenate([parts[sd][2], np.repeat(far[sel], face_npts)])
        p, w, o = _sort_by_owner(p, w, owner=o)
        face_parts.append(QuadSet(p, w, o))
        fmeas[far[sel], sd] = mesh.face_lengths[far[sel]]

    return MeshGeometry(mesh=mesh, levelset=levelset, depth=depth, vol_order=vol_order,
                        face_npts=face_npts, cls=cls, measures=measures, vol=vol,
                        iface=iface, iface_length=ilen, face_parts=face_parts,
                        face_measures=fmeas)


def _face_interface(mesh, iface: InterfaceSet, cls, cut) -> InterfaceSet:
    """Keep interface points of cut elements and re-home those on mesh faces.

    A chord produced by an uncut element lies on one of its edges.  When the
    element across that edge belongs to the other side, the point is kept
    and its two traces are taken from the two neighbours; otherwise the
    interface only touches the mesh there and the point is dropped.
    """
    own = iface.owner
    inside = cut[own]
    idx = np.flatnonzero(~inside)
    if len(idx) == 0:
        return iface.subset(inside)
    K = own[idx]
    faces = mesh.element_faces[K]                                  # (n, 3)
    fv = mesh.vertices[mesh.faces[faces]]                          # (n, 3, 2, 2)
    d = fv[:, :, 1] - fv[:, :, 0]
    r = iface.points[idx][:, None, :] - fv[:, :, 0]
    dist = np.abs(d[..., 0] * r[..., 1] - d[..., 1] * r[..., 0]) / np.linalg.norm(d, axis=2)
    f = faces[np.arange(len(idx)), np.argmin(dist, axis=1)]
    fe = mesh.face_elements[f]
    other = np.where(fe[:, 0] == K, fe[:, 1], fe[:, 0])
    side = cls[K]
    valid = (other >= 0)
    valid[valid] &= (cls[other[valid]] != side[valid])
    keep = inside.copy()
    keep[idx[valid]] = True
    traces = iface.traces.copy()
    j = idx[valid]
    traces[j, side[valid]] = K[valid]
    traces[j, 1 - side[valid]] = other[valid]
    out = InterfaceSet(iface.points, iface.weights, iface.owner, iface.normals, traces)
    return out.subset(keep)


def _restrict(q: QuadSet, mask):
    keep = mask[q.owner]
    return QuadSet(q.points[keep], q.weights[keep], q.owner[keep])


# ----------------------------------------------------------------------------
# per-element / per-face operations


def classify_element(levelset: LevelSet, mesh, K: int, depth: int = 3) -> ElementClass:
    """Classification of a single element (same rules as :func:`compute_geometry`)."""
    measures, _, _, ilen, _ = _cut_data(levelset, mesh, np.array([K]), 1, 1, depth)
    area = mesh.areas[K]
    has0 = measures[K, 0] > SLIVER_TOL * area
    has1 = measures[K, 1] > SLIVER_TOL * area
    if not has0 and not has1:
        raise DegenerateInterface("element with no measurable area on either side")
    if has0 and has1:
        return ElementClass.CUT
    return ElementClass.INTERIOR0 if has0 else ElementClass.INTERIOR1


def cut_volume_quadrature(levelset: LevelSet, mesh, K: int, order: int = 4,
                          depth: int = 3, iface_npts: int = 3) -> CutQuadrature:
    """Volume and interface rules of one element.

    Works for uncut elements as well; then one side carries the whole element.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    measures, vol, iface, ilen, _ = _cut_data(levelset, mesh, np.array([K]), order,
                                               iface_npts, depth)
    return CutQuadrature(
        vol0=(vol[0].points, vol[0].weights),
        vol1=(vol[1].points, vol[1].weights),
        iface=(iface.points, iface.weights, iface.normals),
        measures=(measures[K, 0], measures[K, 1], ilen[K]),
    )


def face_cut_quadrature(levelset: LevelSet, mesh, e: int, npts: int = 3,
                        depth: int = 3) -> FaceQuadrature:
    """Gauss-Legendre rules on the whole face and on its parts in each subdomain."""
    if npts < 1:
        raise ValueError("npts must be >= 1")
    parts, _ = _face_data(levelset, mesh, np.array([e]), npts, depth)
    fv = mesh.vertices[mesh.faces[e]]
    gt, gw = gauss_legendre(npts)
    full = (fv[0] + gt[:, None] * (fv[1] - fv[0]), mesh.face_lengths[e] * gw)
    return FaceQuadrature(full=full, part0=parts[0][:2], part1=parts[1][:2])


def active_measures(levelset: LevelSet, mesh, depth: int = 3) -> np.ndarray:
    """(ne, 2) array of |K cap Omega_0|, |K cap Omega_1|."""
    return compute_geometry(levelset, mesh, depth=depth, vol_order=1, face_npts=1).measures
