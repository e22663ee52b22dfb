"""Uniform triangular meshes of the square (-1, 1)^2 and their refinement hierarchy.

Vertices are numbered row by row (x fastest), every grid square is split along
its lower-left to upper-right diagonal, and faces are sorted by their vertex
pair.  All index orderings are deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "TriMesh",
    "MeshHierarchy",
    "build_uniform_mesh",
    "refine",
    "build_hierarchy",
    "neighborhood",
    "dump_mesh",
]

DOMAIN_LO = -1.0
DOMAIN_HI = 1.0


class TriMesh:
    """Conforming triangular mesh with face adjacency.

    Attributes
    ----------
    vertices : (nv, 2) float array
    elements : (ne, 3) int array, counter-clockwise vertex triples
    faces : (nf, 2) int array, vertex pairs with ``faces[:, 0] < faces[:, 1]``
    face_elements : (nf, 2) int array
        Adjacent elements; the second entry is -1 on boundary faces.
    element_faces : (ne, 3) int array
        Face opposite to local vertex k is ``element_faces[:, k]``.
    level : int
    n : int or None
        Cells per side when the mesh is a structured grid of the square.
    """

    def __init__(self, vertices, elements, level=0, n=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.elements = np.ascontiguousarray(elements, dtype=np.int64)
        self.level = int(level)
        self.n = n
        self._build_faces()
        for arr in (self.vertices, self.elements, self.faces,
                    self.face_elements, self.element_faces):
            arr.setflags(write=False)

    def _build_faces(self):
        el = self.elements
        ne = el.shape[0]
        # local face k is opposite to local vertex k
        local = np.array([[1, 2], [2, 0], [0, 1]])
        edges = el[:, local].reshape(-1, 2)
        edges = np.sort(edges, axis=1)
        faces, inverse = np.unique(edges, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        self.faces = faces
        self.element_faces = inverse.reshape(ne, 3)

        owner = np.repeat(np.arange(ne), 3)
        order = np.argsort(inverse, kind="stable")
        counts = np.bincount(inverse, minlength=len(faces))
        if counts.max() > 2:
            raise ValueError("non-manifold mesh: a face has more than two elements")
        fe = -np.ones((len(faces), 2), dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        fe[:, 0] = owner[order[starts]]
        two = counts == 2
        fe[two, 1] = owner[order[starts[two] + 1]]
        self.face_elements = fe

    # ------------------------------------------------------------------
    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        return self.face_elements[:, 1] < 0

    @cached_property
    def element_coords(self) -> np.ndarray:
        """(ne, 3, 2) vertex coordinates per element."""
        return self.vertices[self.elements]

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.element_coords
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.element_coords.mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        """h_K, the longest edge of each element."""
        c = self.element_coords
        lens = np.stack([np.linalg.norm(c[:, (k + 1) % 3] - c[:, k], axis=1)
                         for k in range(3)], axis=1)
        return lens.max(axis=1)

    @cached_property
    def face_lengths(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return np.linalg.norm(v[:, 1] - v[:, 0], axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normals pointing out of ``face_elements[:, 0]``."""
        v = self.vertices[self.faces]
        t = v[:, 1] - v[:, 0]
        nrm = np.stack([t[:, 1], -t[:, 0]], axis=1) / self.face_lengths[:, None]
        mid = v.mean(axis=1)
        inward = self.barycenters[self.face_elements[:, 0]] - mid
        flip = np.einsum("ij,ij->i", nrm, inward) > 0
        nrm[flip] *= -1
        return nrm

    @cached_property
    def vertex_adjacency(self) -> sp.csr_matrix:
        """Boolean element-by-element matrix: True where two elements share a vertex."""
        ne = self.n_elements
        ev = sp.csr_matrix(
            (np.ones(3 * ne), (np.repeat(np.arange(ne), 3), self.elements.ravel())),
            shape=(ne, self.n_vertices))
        adj = (ev @ ev.T).tocsr()
        adj.data[:] = 1.0
        adj.sort_indices()
        return adj

    def __repr__(self):
        return (f"TriMesh(level={self.level}, n={self.n}, elements={self.n_elements}, "
                f"vertices={self.n_vertices}, faces={self.n_faces})")


@dataclass(frozen=True)
class MeshHierarchy:
    """Nested meshes, ``levels[0]`` coarsest.

    ``parent_of[j]`` maps elements of level j to their parent on level j-1
    (``parent_of[0]`` is None); ``children_of[j]`` is the (ne_j, 4) inverse.
    """

    levels: list
    parent_of: list = field(repr=False)
    children_of: list = field(repr=False)

    @property
    def J(self) -> int:
        return len(self.levels) - 1

    @property
    def finest(self) -> TriMesh:
        return self.levels[-1]


def build_uniform_mesh(n: int, level: int = 0) -> TriMesh:
    """n x n squares on (-1, 1)^2, each cut by its lower-left/upper-right diagonal."""
    if int(n) != n or n < 1:
        raise ValueError(f"cells per side must be a positive integer, got {n!r}")
    n = int(n)
    t = np.linspace(DOMAIN_LO, DOMAIN_HI, n + 1)
    X, Y = np.meshgrid(t, t)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    elements = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return TriMesh(vertices, elements, level=level, n=n)


def refine(mesh: TriMesh):
    """Red refinement: split every triangle into four through its edge midpoints.

    Returns the refined mesh and ``parent_map`` (child -> parent).
    """
    nv = mesh.n_vertices
    mids = mesh.vertices[mesh.faces].mean(axis=1)
    vertices = np.concatenate([mesh.vertices, mids])
    el = mesh.elements
    ef = mesh.element_faces + nv
    # midpoint opposite local vertex k sits on the edge (k+1, k+2)
    a, b, c = el[:, 0], el[:, 1], el[:, 2]
    m_bc, m_ca, m_ab = ef[:, 0], ef[:, 1], ef[:, 2]
    children = np.stack([
        np.stack([a, m_ab, m_ca], axis=1),
        np.stack([m_ab, b, m_bc], axis=1),
        np.stack([m_ca, m_bc, c], axis=1),
        np.stack([m_ab, m_bc, m_ca], axis=1),
    ], axis=1).reshape(-1, 3)
    parent_map = np.repeat(np.arange(mesh.n_elements), 4)
    fine = TriMesh(vertices, children, level=mesh.level + 1,
                   n=None if mesh.n is None else 2 * mesh.n)
    return fine, parent_map


def _locate_structured(points: np.ndarray, n: int) -> np.ndarray:
    """Element of build_uniform_mesh(n) containing each point (interior points only)."""
    h = (DOMAIN_HI - DOMAIN_LO) / n
    s = (points - DOMAIN_LO) / h
    ij = np.clip(np.floor(s).astype(np.int64), 0, n - 1)
    local = s - ij
    upper = local[:, 1] > local[:, 0]
    return 2 * (ij[:, 1] * n + ij[:, 0]) + upper


def build_hierarchy(n0: int, J: int) -> MeshHierarchy:
    """Meshes with n0 * 2^j cells per side for j = 0..J, plus parent/child maps."""
    if int(n0) != n0 or n0 < 1:
        raise ValueError(f"n0 must be a positive integer, got {n0!r}")
    if int(J) != J or J < 1:
        raise ValueError(f"J must be an integer >= 1, got {J!r}")
    levels = [build_uniform_mesh(n0 * 2 ** j, level=j) for j in range(J + 1)]
    parent_of = [None]
    children_of = []
    for j in range(1, J + 1):
        parent = _locate_structured(levels[j].barycenters, levels[j - 1].n)
        order = np.argsort(parent, kind="stable")
        counts = np.bincount(parent, minlength=levels[j - 1].n_elements)
        if not np.all(counts == 4):
            raise RuntimeError("hierarchy is not nested")  # pragma: no cover
        parent_of.append(parent)
        children_of.append(order.reshape(-1, 4))
    children_of.append(None)
    return MeshHierarchy(levels=levels, parent_of=parent_of, children_of=children_of)


def neighborhood(mesh: TriMesh, K: int, s: int) -> np.ndarray:
    """Sorted indices of the s-th vertex-neighbour layer around element K (K included)."""
    if s < 1:
        raise ValueError("layer count must be >= 1")
    if not 0 <= K < mesh.n_elements:
        raise IndexError(f"element {K} out of range")
    adj = mesh.vertex_adjacency
    current = np.array([K])
    for _ in range(s):
        rows = [adj.indices[adj.indptr[k]:adj.indptr[k + 1]] for k in current]
        current = np.unique(np.concatenate(rows))
    return current


def dump_mesh(mesh: TriMesh, path) -> None:
    """Write the plain-text debug format: counts followed by coordinate / index lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        fh.write(f"{mesh.n_elements}\n")
        for i, j, k in mesh.elements:
            fh.write(f"{i} {j} {k}\n")
