"""Closed oriented triangle meshes: validation, measures, distances and I/O."""

from __future__ import annotations

import logging
import os
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import (
    DegenerateFace,
    DomainError,
    InsideTestAmbiguous,
    ParseError,
    TopologyError,
)

logger = logging.getLogger(__name__)

DEGENERACY_FLOOR = 1e-12


@dataclass(frozen=True)
class MeshMeasures:
    area: float
    volume: float
    euler_characteristic: int
    genus: int


class TriangleMesh:
    """Closed, consistently oriented, connected triangle mesh.

    The constructor validates the topology, repairs inconsistent face
    orientation when possible and flips every face if the enclosed volume
    comes out negative, so that face normals point outwards. Instances are
    immutable; the coordinate and index arrays are read-only.

    Parameters
    ----------
    vertices : array_like, shape (V, 3)
    triangles : array_like of int, shape (F, 3)
    """

    def __init__(self, vertices, triangles):
        v = np.array(vertices, dtype=float)
        t = np.array(triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must have shape (V, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise ValueError("triangles must have shape (F, 3)")
        if len(t) == 0:
            raise TopologyError("mesh has no faces")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        if t.min() < 0 or t.max() >= len(v):
            raise TopologyError("face references a vertex index out of range")
        if np.any((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
            raise DegenerateFace("face repeats a vertex index")
        if len(np.unique(t)) != len(v):
            raise TopologyError("mesh has unreferenced vertices")

        self._build_topology(t)
        t = self._orient(t)
        self._vertices = v
        self._triangles = t
        self._freeze()
        self._check_faces()
        self._check_vertex_manifold()
        if self.signed_volume() < 0:
            t = t[:, ::-1].copy()
            self._triangles = t
            self._freeze()

    # ------------------------------------------------------------------ build
    def _build_topology(self, t):
        F = len(t)
        he = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und = np.sort(he, axis=1)
        edges, inverse, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts == 1):
            raise TopologyError("open surface: some edge belongs to a single face")
        if np.any(counts > 2):
            raise TopologyError("non-manifold edge shared by more than two faces")
        face_of_he = np.tile(np.arange(F), 3)
        order = np.argsort(inverse, kind="stable")
        pairs = face_of_he[order].reshape(-1, 2)
        self._edges = edges
        self._edge_faces = pairs
        self._face_edges = inverse.reshape(3, F).T.copy()
        adj = sparse.coo_matrix(
            (np.ones(2 * len(pairs)), (np.r_[pairs[:, 0], pairs[:, 1]], np.r_[pairs[:, 1], pairs[:, 0]])),
            shape=(F, F),
        ).tocsr()
        ncomp, _ = csgraph.connected_components(adj, directed=False)
        if ncomp != 1:
            raise TopologyError(f"mesh is disconnected ({ncomp} components)")
        self._face_adj = adj

    def _orient(self, t):
        """Make face orientation globally consistent (BFS over faces)."""
        if self._is_consistent(t):
            return t
        t = t.copy()
        F = len(t)
        nbr = {}
        for e, (f0, f1) in enumerate(self._edge_faces):
            nbr.setdefault(f0, []).append((f1, e))
            nbr.setdefault(f1, []).append((f0, e))
        flipped = np.zeros(F, dtype=bool)
        seen = np.zeros(F, dtype=bool)
        seen[0] = True
        queue = deque([0])

        def direction(face, a, b):
            # +1 if the oriented face contains a->b, -1 if b->a
            tri = t[face]
            for k in range(3):
                if tri[k] == a and tri[(k + 1) % 3] == b:
                    return 1
            return -1

        while queue:
            f = queue.popleft()
            for g, e in nbr[f]:
                a, b = self._edges[e]
                consistent = direction(f, a, b) != direction(g, a, b)
                if not seen[g]:
                    if not consistent:
                        t[g] = t[g, ::-1]
                        flipped[g] = True
                    seen[g] = True
                    queue.append(g)
                elif not consistent:
                    raise TopologyError("surface is not orientable")
        logger.info("repaired orientation of %d faces", int(flipped.sum()))
        return t

    @staticmethod
    def _is_consistent(t):
        he = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return len(np.unique(he, axis=0)) == len(he)

    def _freeze(self):
        for name in ("_vertices", "_triangles", "_edges", "_edge_faces", "_face_edges"):
            getattr(self, name).setflags(write=False)
        self._cache = {}

    def _check_faces(self):
        a = self.face_areas
        floor = DEGENERACY_FLOOR * a.mean()
        bad = np.flatnonzero(a <= floor)
        if len(bad):
            raise DegenerateFace(f"{len(bad)} faces below the area floor (first: {bad[0]})")

    def _check_vertex_manifold(self):
        # halfedge h = (a->b) in face f; rotating around a: h -> twin(prev(h))
        t = self._triangles
        F = len(t)
        src = t.T.ravel()  # halfedge k*F + f starts at t[f, k]
        dst = np.roll(t, -1, axis=1).T.ravel()
        key = src * len(self._vertices) + dst
        order = np.argsort(key)
        sorted_keys = key[order]
        twin_key = dst * len(self._vertices) + src
        twin = order[np.searchsorted(sorted_keys, twin_key)]
        f = np.tile(np.arange(F), 3)
        k = np.repeat(np.arange(3), F)
        prev = ((k + 2) % 3) * F + f
        nxt = twin[prev]
        n = 3 * F
        g = sparse.coo_matrix((np.ones(n), (np.arange(n), nxt)), shape=(n, n))
        ncyc, _ = csgraph.connected_components(g, directed=True, connection="weak")
        if ncyc != len(self._vertices):
            raise TopologyError("non-manifold vertex (more than one face fan)")

    # ----------------------------------------------------------- properties
    @property
    def vertices(self) -> np.ndarray:
        return self._vertices

    @property
    def triangles(self) -> np.ndarray:
        return self._triangles

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, shape (E, 2), sorted vertex pairs."""
        return self._edges

    @property
    def edge_faces(self) -> np.ndarray:
        return self._edge_faces

    @property
    def n_vertices(self) -> int:
        return len(self._vertices)

    @property
    def n_faces(self) -> int:
        return len(self._triangles)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def _cached(self, key, fn):
        if key not in self._cache:
            val = fn()
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            self._cache[key] = val
        return self._cache[key]

    @property
    def face_cross(self) -> np.ndarray:
        """Unnormalised face normals (twice the area vector)."""

        def fn():
            v, t = self._vertices, self._triangles
            return np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])

        return self._cached("cross", fn)

    @property
    def face_areas(self) -> np.ndarray:
        return self._cached("areas", lambda: 0.5 * np.linalg.norm(self.face_cross, axis=1))

    @property
    def face_normals(self) -> np.ndarray:
        return self._cached("normals", lambda: self.face_cross / (2.0 * self.face_areas[:, None]))

    @property
    def face_centroids(self) -> np.ndarray:
        return self._cached("centroids", lambda: self._vertices[self._triangles].mean(axis=1))

    @property
    def edge_lengths(self) -> np.ndarray:
        def fn():
            v = self._vertices
            return np.linalg.norm(v[self._edges[:, 0]] - v[self._edges[:, 1]], axis=1)

        return self._cached("elen", fn)

    @property
    def mean_edge_length(self) -> float:
        return float(self.edge_lengths.mean())

    @property
    def vertex_adjacency(self) -> sparse.csr_matrix:
        """Symmetric vertex adjacency as a CSR matrix (indices sorted)."""

        def fn():
            e = self._edges
            n = self.n_vertices
            a = sparse.coo_matrix(
                (np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n)
            ).tocsr()
            a.sort_indices()
            return a

        if "vadj" not in self._cache:
            self._cache["vadj"] = fn()
        return self._cache["vadj"]

    @property
    def vertex_faces(self) -> sparse.csr_matrix:
        """Vertex-to-face incidence, shape (V, F)."""

        def fn():
            t = self._triangles
            F = len(t)
            m = sparse.coo_matrix(
                (np.ones(3 * F), (t.ravel(), np.repeat(np.arange(F), 3))), shape=(self.n_vertices, F)
            ).tocsr()
            m.sort_indices()
            return m

        if "vf" not in self._cache:
            self._cache["vf"] = fn()
        return self._cache["vf"]

    @property
    def lumped_areas(self) -> np.ndarray:
        """Barycentric vertex areas: one third of each incident face."""

        def fn():
            out = np.zeros(self.n_vertices)
            np.add.at(out, self._triangles.ravel(), np.repeat(self.face_areas / 3.0, 3))
            return out

        return self._cached("lumped", fn)

    @property
    def kdtree(self) -> cKDTree:
        if "kdtree" not in self._cache:
            self._cache["kdtree"] = cKDTree(self._vertices)
        return self._cache["kdtree"]

    def bounding_box(self):
        return self._vertices.min(axis=0), self._vertices.max(axis=0)

    def bbox_diagonal(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    # ------------------------------------------------------------- measures
    def area(self) -> float:
        return float(self.face_areas.sum())

    def volume(self) -> float:
        """Enclosed volume by the divergence theorem, (1/3) sum <c_T, n_T> A_T."""
        return float(np.einsum("ij,ij->", self.face_centroids, self.face_normals * self.face_areas[:, None]) / 3.0)

    def signed_volume(self) -> float:
        """Enclosed volume as a fan of signed tetrahedra, sum det(v0, v1, v2) / 6."""
        v = self._vertices[self._triangles]
        return float(np.einsum("ij,ij->", v[:, 0], np.cross(v[:, 1], v[:, 2])) / 6.0)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def genus(self) -> int:
        return (2 - self.euler_characteristic()) // 2

    def diameter(self) -> float:
        """Largest vertex-to-vertex distance (exact, via the convex hull)."""
        from scipy.spatial import ConvexHull
        from scipy.spatial.distance import pdist

        pts = self._vertices
        try:
            pts = pts[ConvexHull(pts).vertices]
        except Exception:  # flat or tiny inputs
            pass
        return float(pdist(pts).max())

    # ---------------------------------------------------------- derivations
    def with_vertices(self, vertices) -> "TriangleMesh":
        """Same connectivity, new coordinates.

        Skips the topology checks (connectivity is unchanged) but re-checks
        finiteness and face degeneracy. Orientation is kept as is; callers
        moving vertices far enough to invert the volume get a mesh with
        inward normals, which :func:`measures` will report as negative volume.
        """
        v = np.array(vertices, dtype=float)
        if v.shape != self._vertices.shape:
            raise ValueError("vertex array shape mismatch")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        new = object.__new__(TriangleMesh)
        new._vertices = v
        new._triangles = self._triangles
        new._edges = self._edges
        new._edge_faces = self._edge_faces
        new._face_edges = self._face_edges
        new._face_adj = self._face_adj
        new._freeze()
        for key in ("vadj", "vf"):
            if key in self._cache:
                new._cache[key] = self._cache[key]
        new._check_faces()
        return new

    def transformed(self, rotation=None, translation=None, scale=1.0) -> "TriangleMesh":
        """Apply x -> scale * R x + t."""
        v = self._vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        v = scale * v
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return self.with_vertices(v)

    def __repr__(self):
        return f"TriangleMesh(V={self.n_vertices}, E={self.n_edges}, F={self.n_faces})"

    # ------------------------------------------------------------ distances
    def closest_points(self, points):
        """Exact closest point on the surface for each query point.

        Returns ``(distance, closest, face)``. Candidate faces are those
        incident to a vertex ``v`` with ``|v - p|^2 < d_min^2 + l_max^2 / 3``
        where ``d_min`` is the nearest-vertex distance and ``l_max`` the
        longest edge: any point of a face is a convex combination of its
        corners, so its squared distance is at least the smallest corner
        distance squared minus ``l_max^2 / 3``.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d0, i0 = self.kdtree.query(p)
        lmax2 = float(self.edge_lengths.max()) ** 2
        radius = np.sqrt(d0**2 + lmax2 / 3.0) * (1 + 1e-12) + 1e-15
        cand = self.kdtree.query_ball_point(p, radius)
        counts = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(p))
        cand_v = np.fromiter((i for c in cand for i in c), dtype=np.int64, count=int(counts.sum()))
        owner = np.repeat(np.arange(len(p)), counts)

        vf = self.vertex_faces
        nf = np.diff(vf.indptr)[cand_v]
        starts = vf.indptr[cand_v]
        face = vf.indices[np.repeat(starts, nf) + _ragged_arange(nf)]
        owner = np.repeat(owner, nf)

        tri = self._vertices[self._triangles[face]]
        q = closest_point_on_triangles(p[owner], tri[:, 0], tri[:, 1], tri[:, 2])
        d = np.linalg.norm(q - p[owner], axis=1)

        best = np.full(len(p), np.inf)
        np.minimum.at(best, owner, d)
        # pick the first pair attaining the minimum for each point
        hit = d <= best[owner]
        idx = np.flatnonzero(hit)
        first = np.full(len(p), -1)
        first[owner[idx[::-1]]] = idx[::-1]
        # fall back to the nearest vertex if no face improved on it
        closest = self._vertices[i0].copy()
        faces = np.full(len(p), -1)
        ok = first >= 0
        closest[ok] = q[first[ok]]
        faces[ok] = face[first[ok]]
        dist = np.where(ok, best, d0)
        return dist, closest, faces

    def inside(self, points, rng=None, retries=3) -> np.ndarray:
        """Inside/outside test by ray parity along +z with jittered retries."""
        return _inside(self, np.atleast_2d(np.asarray(points, dtype=float)), rng, retries)


def _ragged_arange(counts):
    """Concatenate arange(c) for each c in counts."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offs = np.repeat(np.cumsum(counts) - counts, counts)
    return np.arange(total) - offs


def closest_point_on_triangles(p, a, b, c):
    """Vectorised closest point on triangles (a, b, c) to points p.

    Region-based algorithm from Ericson, Real-Time Collision Detection 5.1.5.
    All arguments have shape (N, 3).
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        out = a + ab * v[:, None] + ac * w[:, None]

        # edge regions
        m_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        wbc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out = np.where(m_bc[:, None], b + (c - b) * wbc[:, None], out)

        m_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        wac = d2 / (d2 - d6)
        out = np.where(m_ac[:, None], a + ac * wac[:, None], out)

        m_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        vab = d1 / (d1 - d3)
        out = np.where(m_ab[:, None], a + ab * vab[:, None], out)

    # vertex regions take precedence
    m_c = (d6 >= 0) & (d5 <= d6)
    out = np.where(m_c[:, None], c, out)
    m_b = (d3 >= 0) & (d4 <= d3)
    out = np.where(m_b[:, None], b, out)
    m_a = (d1 <= 0) & (d2 <= 0)
    out = np.where(m_a[:, None], a, out)
    return out


def point_triangle_distance_bruteforce(p, mesh):
    """O(N F) reference: distance of each point to the nearest face."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    tri = mesh.vertices[mesh.triangles]
    out = np.empty(len(p))
    for i, q in enumerate(p):
        qq = np.broadcast_to(q, (len(tri), 3))
        c = closest_point_on_triangles(qq, tri[:, 0], tri[:, 1], tri[:, 2])
        out[i] = np.sqrt(((c - q) ** 2).sum(axis=1).min())
    return out


# ------------------------------------------------------------------- parity
_EDGE_EPS = 1e-10


def _column_crossings(xy, tri, chunk=256):
    """For each xy column, z of the crossings with the triangle set.

    Returns (column index, z) pairs plus a per-column ambiguity flag
    (ray grazing an edge or vertex, or a face seen edge-on).
    """
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    lo = tri[:, :, :2].min(axis=1)
    hi = tri[:, :, :2].max(axis=1)
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    cols, zs = [], []
    ambiguous = np.zeros(len(xy), dtype=bool)
    for s in range(0, len(xy), chunk):
        q = xy[s : s + chunk]
        inbox = (
            (q[:, None, 0] >= lo[None, :, 0])
            & (q[:, None, 0] <= hi[None, :, 0])
            & (q[:, None, 1] >= lo[None, :, 1])
            & (q[:, None, 1] <= hi[None, :, 1])
        )
        qi, fi = np.nonzero(inbox)
        if len(qi) == 0:
            continue
        px, py = q[qi, 0], q[qi, 1]
        A, B, C = a[fi], b[fi], c[fi]
        D = det[fi]
        with np.errstate(divide="ignore", invalid="ignore"):
            l1 = ((B[:, 0] - px) * (C[:, 1] - py) - (C[:, 0] - px) * (B[:, 1] - py)) / D
            l2 = ((C[:, 0] - px) * (A[:, 1] - py) - (A[:, 0] - px) * (C[:, 1] - py)) / D
            l3 = 1.0 - l1 - l2
        flat = np.abs(D) <= 1e-14 * np.maximum(1.0, np.abs(A[:, :2]).max(axis=1)) ** 2
        lmin = np.nan_to_num(np.minimum(np.minimum(l1, l2), l3), nan=-1.0)
        graze = (~flat) & (np.abs(lmin) <= _EDGE_EPS)
        # an edge-on face only matters if the column passes through it
        flat_hit = flat & _segment_hits(px, py, A, B, C)
        bad = graze | flat_hit
        ambiguous[s + qi[bad]] = True
        hit = (~flat) & (lmin > _EDGE_EPS)
        with np.errstate(invalid="ignore"):
            z = l1 * A[:, 2] + l2 * B[:, 2] + l3 * C[:, 2]
        cols.append(s + qi[hit])
        zs.append(z[hit])
    if cols:
        return np.concatenate(cols), np.concatenate(zs), ambiguous
    return np.zeros(0, dtype=np.int64), np.zeros(0), ambiguous


def _segment_hits(px, py, A, B, C):
    # point lies on the projected (degenerate) triangle, approximated by its bbox
    lo = np.minimum(np.minimum(A[:, :2], B[:, :2]), C[:, :2])
    hi = np.maximum(np.maximum(A[:, :2], B[:, :2]), C[:, :2])
    return (px >= lo[:, 0]) & (px <= hi[:, 0]) & (py >= lo[:, 1]) & (py <= hi[:, 1])


def _parity_along_z(points, tri):
    """Inside flags for points via +z ray parity; also returns ambiguity flags."""
    xy, col = np.unique(points[:, :2], axis=0, return_inverse=True)
    col = col.ravel()
    c_idx, c_z, amb = _column_crossings(xy, tri)
    order = np.lexsort((c_z, c_idx))
    c_idx, c_z = c_idx[order], c_z[order]
    start = np.searchsorted(c_idx, np.arange(len(xy)))
    stop = np.searchsorted(c_idx, np.arange(len(xy)), side="right")
    inside = np.zeros(len(points), dtype=bool)
    for k in np.unique(col):
        sel = np.flatnonzero(col == k)
        zk = c_z[start[k] : stop[k]]
        above = len(zk) - np.searchsorted(zk, points[sel, 2], side="right")
        inside[sel] = (above % 2) == 1
    return inside, amb[col]


def _random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def _inside(mesh, points, rng=None, retries=3):
    rng = np.random.default_rng(0x5EED) if rng is None else rng
    tri = mesh.vertices[mesh.triangles]
    inside, amb = _parity_along_z(points, tri)
    todo = np.flatnonzero(amb)
    for _ in range(retries):
        if len(todo) == 0:
            break
        R = _random_rotation(rng)
        sub_in, sub_amb = _parity_along_z(points[todo] @ R.T, tri @ R.T)
        inside[todo] = sub_in
        todo = todo[sub_amb]
    if len(todo):
        raise InsideTestAmbiguous(f"{len(todo)} points remain ambiguous after {retries} jittered retries")
    return inside


# ---------------------------------------------------------------- operations
def measures(mesh: TriangleMesh) -> MeshMeasures:
    chi = mesh.euler_characteristic()
    return MeshMeasures(area=mesh.area(), volume=mesh.volume(), euler_characteristic=chi, genus=(2 - chi) // 2)


def directed_distance(a: TriangleMesh, b: TriangleMesh) -> float:
    """max over vertices of ``a`` of the distance to the surface ``b``."""
    d, _, _ = b.closest_points(a.vertices)
    return float(d.max())


def hausdorff_distance(a: TriangleMesh, b: TriangleMesh) -> float:
    """Symmetric vertex-to-surface Hausdorff distance."""
    return max(directed_distance(a, b), directed_distance(b, a))


def char_fn_distance(a: TriangleMesh, b: TriangleMesh, grid_res: int = 64, seed: int = 0x5EED) -> float:
    """Volume of the symmetric difference of the enclosed regions.

    Voxel estimate of the integral of |1_A - 1_B| over the common bounding
    box, sampling cell centres with the ray-parity inside test.
    """
    if grid_res < 16:
        raise DomainError("grid_res must be at least 16")
    lo = np.minimum(a.vertices.min(axis=0), b.vertices.min(axis=0))
    hi = np.maximum(a.vertices.max(axis=0), b.vertices.max(axis=0))
    pad = 1e-3 * np.linalg.norm(hi - lo)
    lo, hi = lo - pad, hi + pad
    h = (hi - lo) / grid_res
    axes = [lo[k] + (np.arange(grid_res) + 0.5) * h[k] for k in range(3)]
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    rng = np.random.default_rng(seed)
    ia = a.inside(g, rng=rng)
    ib = b.inside(g, rng=rng)
    return float(np.count_nonzero(ia ^ ib) * np.prod(h))


# ----------------------------------------------------------------------- I/O
def load_mesh(path, format=None) -> TriangleMesh:
    """Read an ASCII OFF or OBJ file into a validated :class:`TriangleMesh`."""
    fmt = (format or os.path.splitext(str(path))[1].lstrip(".")).lower()
    if fmt not in ("off", "obj"):
        raise ParseError(f"unsupported mesh format {fmt!r} (expected OFF or OBJ)")
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not an ASCII file") from exc
    if fmt == "off":
        v, t = _parse_off(text)
    else:
        v, t = _parse_obj(text)
    if len(t) and (t.min() < 0 or t.max() >= len(v)):
        raise ParseError("face references a vertex index out of range")
    if not np.all(np.isfinite(v)):
        raise ParseError("non-finite vertex coordinate")
    return TriangleMesh(v, t)


def _tokens(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _parse_off(text):
    lines = list(_tokens(text))
    if not lines or not lines[0].startswith("OFF"):
        raise ParseError("missing OFF header")
    head = lines[0][3:].split()
    rest = lines[1:]
    if not head:
        if not rest:
            raise ParseError("missing OFF counts line")
        head, rest = rest[0].split(), rest[1:]
    try:
        nv, nf = int(head[0]), int(head[1])
    except (ValueError, IndexError) as exc:
        raise ParseError("malformed OFF counts line") from exc
    if len(rest) < nv + nf:
        raise ParseError("OFF file truncated")
    try:
        v = np.array([[float(x) for x in rest[i].split()[:3]] for i in range(nv)], dtype=float)
    except ValueError as exc:
        raise ParseError("malformed OFF vertex line") from exc
    if v.shape != (nv, 3):
        raise ParseError("OFF vertex line with fewer than 3 coordinates")
    faces = []
    for line in rest[nv : nv + nf]:
        parts = line.split()
        try:
            n = int(parts[0])
            idx = [int(x) for x in parts[1 : 1 + n]]
        except (ValueError, IndexError) as exc:
            raise ParseError("malformed OFF face line") from exc
        if n != 3 or len(idx) != 3:
            raise ParseError("only triangular faces are supported")
        faces.append(idx)
    return v, np.array(faces, dtype=np.int64).reshape(-1, 3)


def _parse_obj(text):
    verts, faces = [], []
    for line in _tokens(text):
        parts = line.split()
        if parts[0] == "v":
            try:
                verts.append([float(x) for x in parts[1:4]])
            except ValueError as exc:
                raise ParseError("malformed OBJ vertex line") from exc
            if len(verts[-1]) != 3:
                raise ParseError("OBJ vertex line with fewer than 3 coordinates")
        elif parts[0] == "f":
            if len(parts) != 4:
                raise ParseError("only triangular faces are supported")
            try:
                idx = [int(p.split("/")[0]) for p in parts[1:]]
            except ValueError as exc:
                raise ParseError("malformed OBJ face line") from exc
            # 1-based, negative indices are relative to the current end
            faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    if not verts or not faces:
        raise ParseError("OBJ file without vertices or faces")
    return np.array(verts, dtype=float), np.array(faces, dtype=np.int64)


def save_mesh(mesh: TriangleMesh, path, format=None) -> None:
    """Write ASCII OFF or OBJ; coordinates use 17 significant digits so they round-trip."""
    fmt = (format or os.path.splitext(str(path))[1].lstrip(".")).lower()
    if fmt not in ("off", "obj"):
        raise ParseError(f"unsupported mesh format {fmt!r}")
    v, t = mesh.vertices, mesh.triangles
    coords = [" ".join(format_float(x) for x in p) for p in v]
    with open(path, "w") as fh:
        if fmt == "off":
            fh.write(f"OFF\n{len(v)} {len(t)} {mesh.n_edges}\n")
            fh.writelines(c + "\n" for c in coords)
            fh.writelines(f"3 {a} {b} {c}\n" for a, b, c in t)
        else:
            fh.writelines(f"v {c}\n" for c in coords)
            fh.writelines(f"f {a} {b} {c}\n" for a, b, c in t + 1)


def format_float(x) -> str:
    return format(float(x), ".17g")
