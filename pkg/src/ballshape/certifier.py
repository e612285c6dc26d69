"""Numerical certificates for the uniform epsilon-ball condition.

A closed surface satisfies the condition when, at every point x with outward
normal n, the open balls of radius eps centred at x - eps n (inner side) and
x + eps n (outer side) contain no surface point. The reach is the supremum of
such eps.

On a triangle mesh the test is run at every vertex against the exact
piecewise-linear surface. A flat triangle sits below the smooth surface it
samples by up to its chord sagitta, which on a fine sphere is already of the
order of the default tolerance; each triangle therefore gets an allowance
``s_T = kappa_T * R_T^2 / 2`` (``R_T`` its circumradius, ``kappa_T`` the largest
principal curvature magnitude at its corners), i.e. the sagitta of a circle of
curvature ``kappa_T`` over the chord. Vertices lie on the surface and are used
as they are.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .charts import CurvatureField
from .errors import DomainError, NoCertifiableEpsilon
from .mesh import TriangleMesh, _ragged_arange, closest_point_on_triangles

logger = logging.getLogger(__name__)

DEFAULT_TOL_FACTOR = 1e-2
REACH_REL_TOL = 1e-3
FULL_PAIR_LIMIT = 5000
SAMPLED_PAIRS = 1_000_000
PAIR_SEED = 0x5EED


@dataclass
class Certificate:
    epsilon: float
    passed: bool
    min_clearance: float
    violations: list = field(default_factory=list)  # (vertex, "inner"|"outer", clearance)
    lipschitz_max: float = 0.0
    kappa_bound_max: float = 0.0
    tolerance: float = 0.0

    def to_dict(self):
        return {
            "epsilon": float(self.epsilon),
            "passed": bool(self.passed),
            "min_clearance": float(self.min_clearance),
            "violations": [[int(v), s, float(c)] for v, s, c in self.violations],
            "lipschitz_max": float(self.lipschitz_max),
            "kappa_bound_max": float(self.kappa_bound_max),
            "tolerance": float(self.tolerance),
        }


def default_tolerance(mesh: TriangleMesh) -> float:
    return DEFAULT_TOL_FACTOR * mesh.mean_edge_length


def circumradii(mesh: TriangleMesh) -> np.ndarray:
    v, t = mesh.vertices, mesh.triangles
    a = np.linalg.norm(v[t[:, 1]] - v[t[:, 2]], axis=1)
    b = np.linalg.norm(v[t[:, 2]] - v[t[:, 0]], axis=1)
    c = np.linalg.norm(v[t[:, 0]] - v[t[:, 1]], axis=1)
    return a * b * c / (4.0 * mesh.face_areas)


def chord_allowance(mesh: TriangleMesh, field: CurvatureField) -> np.ndarray:
    """Per-face sagitta estimate ``kappa_T R_T^2 / 2``."""
    kmax = field.max_abs_kappa()[mesh.triangles].max(axis=1)
    return 0.5 * kmax * circumradii(mesh) ** 2


def corrected_distance(mesh: TriangleMesh, points, allowance) -> np.ndarray:
    """min over the surface of distance, with face distances raised by ``allowance``.

    Equals ``min(min_v |p - v|, min_T (d(p, T) + allowance_T))``. Since the
    result never exceeds the nearest-vertex distance ``d0``, only faces with a
    corner inside ``sqrt(d0^2 + l_max^2 / 3)`` can contribute.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    d0, _ = mesh.kdtree.query(p)
    lmax2 = float(mesh.edge_lengths.max()) ** 2
    radius = np.sqrt(d0**2 + lmax2 / 3.0) * (1 + 1e-12) + 1e-15
    cand = mesh.kdtree.query_ball_point(p, radius)
    counts = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(p))
    cand_v = np.fromiter((i for c in cand for i in c), dtype=np.int64, count=int(counts.sum()))
    owner = np.repeat(np.arange(len(p)), counts)
    vf = mesh.vertex_faces
    nf = np.diff(vf.indptr)[cand_v]
    face = vf.indices[np.repeat(vf.indptr[cand_v], nf) + _ragged_arange(nf)]
    owner = np.repeat(owner, nf)
    # a face is reached once per candidate corner; keep one copy
    key = np.unique(owner * mesh.n_faces + face)
    owner, face = key // mesh.n_faces, key % mesh.n_faces
    tri = mesh.vertices[mesh.triangles[face]]
    best = d0.copy()
    chunk = 2_000_000
    for s in range(0, len(face), chunk):
        o, f, tr = owner[s : s + chunk], face[s : s + chunk], tri[s : s + chunk]
        q = closest_point_on_triangles(p[o], tr[:, 0], tr[:, 1], tr[:, 2])
        d = np.linalg.norm(q - p[o], axis=1) + allowance[f]
        np.minimum.at(best, o, d)
    return best


def any_closer_than(mesh: TriangleMesh, points, threshold: float, allowance) -> bool:
    """Whether some corrected surface distance from ``points`` is below ``threshold``.

    Decision version of :func:`corrected_distance` used by the reach
    bisection. Faces are screened by their plane distance, a lower bound of
    the point-triangle distance, before exact evaluation.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    d0, _ = mesh.kdtree.query(p)
    if np.any(d0 < threshold):
        return True
    lmax2 = float(mesh.edge_lengths.max()) ** 2
    radius = np.sqrt(threshold**2 + lmax2 / 3.0) * (1 + 1e-12) + 1e-15
    vf = mesh.vertex_faces
    fn, fa = mesh.face_normals, mesh.vertices[mesh.triangles[:, 0]]
    batch = max(1, 200_000 // max(1, mesh.n_vertices // 8))
    for s in range(0, len(p), batch):
        pb = p[s : s + batch]
        cand = mesh.kdtree.query_ball_point(pb, radius, return_sorted=False)
        counts = np.fromiter((len(c) for c in cand), dtype=np.int64, count=len(pb))
        if counts.sum() == 0:
            continue
        cand_v = np.concatenate([np.asarray(c, dtype=np.int64) for c in cand if len(c)])
        owner = np.repeat(np.arange(len(pb)), counts)
        nf = np.diff(vf.indptr)[cand_v]
        face = vf.indices[np.repeat(vf.indptr[cand_v], nf) + _ragged_arange(nf)]
        owner = np.repeat(owner, nf)
        plane = np.abs(np.einsum("ij,ij->i", pb[owner] - fa[face], fn[face])) + allowance[face]
        keep = plane < threshold
        if not keep.any():
            continue
        owner, face = owner[keep], face[keep]
        tri = mesh.vertices[mesh.triangles[face]]
        q = closest_point_on_triangles(pb[owner], tri[:, 0], tri[:, 1], tri[:, 2])
        d = np.linalg.norm(q - pb[owner], axis=1) + allowance[face]
        if np.any(d < threshold):
            return True
    return False


def side_clearances(mesh: TriangleMesh, field: CurvatureField, epsilon: float, allowance=None):
    """Clearances (inner, outer) per vertex: corrected distance to ``x -+ eps n`` minus eps."""
    if allowance is None:
        allowance = chord_allowance(mesh, field)
    x, n = mesh.vertices, field.normal
    centers = np.vstack([x - epsilon * n, x + epsilon * n])
    d = corrected_distance(mesh, centers, allowance)
    V = mesh.n_vertices
    return d[:V] - epsilon, d[V:] - epsilon


def lipschitz_ratio(mesh: TriangleMesh, field: CurvatureField, epsilon: float) -> float:
    """max over edges of eps |n_x - n_y| / |x - y|."""
    e = mesh.edges
    dn = np.linalg.norm(field.normal[e[:, 0]] - field.normal[e[:, 1]], axis=1)
    return float(epsilon * (dn / mesh.edge_lengths).max())


def curvature_bound_check(field: CurvatureField, epsilon: float) -> float:
    """eps * max |kappa| over vertices; at most about 1 on a certified mesh."""
    return float(epsilon * field.max_abs_kappa().max())


def certify_ball_condition(mesh: TriangleMesh, field: CurvatureField, epsilon: float, tolerance=None, _allowance=None):
    """Test the inner and outer tangent balls of radius ``epsilon`` at every vertex.

    Parameters
    ----------
    tolerance : float, optional
        Accepted negative clearance; defaults to 1e-2 times the mean edge.

    Returns
    -------
    Certificate
        ``passed`` is True exactly when ``min_clearance >= -tolerance``.
    """
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    tol = default_tolerance(mesh) if tolerance is None else float(tolerance)
    if tol < 0:
        raise DomainError("tolerance must be nonnegative")
    inner, outer = side_clearances(mesh, field, epsilon, _allowance)
    min_clear = float(min(inner.min(), outer.min()))
    viol = []
    for side, c in (("inner", inner), ("outer", outer)):
        for v in np.flatnonzero(c < -tol):
            viol.append((int(v), side, float(c[v])))
    viol.sort(key=lambda item: (item[2], item[0], item[1]))
    return Certificate(
        epsilon=epsilon,
        passed=bool(min_clear >= -tol),
        min_clearance=min_clear,
        violations=viol,
        lipschitz_max=lipschitz_ratio(mesh, field, epsilon),
        kappa_bound_max=curvature_bound_check(field, epsilon),
        tolerance=tol,
    )


def estimate_reach(mesh: TriangleMesh, field: CurvatureField, tolerance=None, rel_tol=REACH_REL_TOL) -> float:
    """Largest certified epsilon, by bisection on [min edge, bbox diagonal / 2].

    The returned value always passed certification; the bracket's upper end
    always failed (unless the whole bracket passes).
    """
    allowance = chord_allowance(mesh, field)
    lo = float(mesh.edge_lengths.min())
    hi = 0.5 * mesh.bbox_diagonal()

    tol = default_tolerance(mesh) if tolerance is None else float(tolerance)
    x, n = mesh.vertices, field.normal

    def ok(eps):
        # same decision as certify_ball_condition(...).passed without the exact minimum
        centers = np.vstack([x - eps * n, x + eps * n])
        return not any_closer_than(mesh, centers, eps - tol, allowance)

    if not ok(lo):
        raise NoCertifiableEpsilon(f"ball condition fails already at epsilon = {lo:.6g}")
    if ok(hi):
        return hi
    while hi - lo > rel_tol * lo:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    logger.debug("reach bracket [%g, %g]", lo, hi)
    return lo


def global_inequality_check(mesh: TriangleMesh, field: CurvatureField, epsilon: float, max_full=FULL_PAIR_LIMIT) -> float:
    """max of 2 eps |<x - a, n_a>| / |x - a|^2 over vertex pairs.

    All ordered pairs are used up to ``max_full`` vertices, otherwise 10^6
    random pairs drawn with a fixed seed.
    """
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    x, n = mesh.vertices, field.normal
    V = len(x)
    best = 0.0
    if V <= max_full:
        rows = max(1, 4_000_000 // V)
        for s in range(0, V, rows):
            a = x[s : s + rows]
            diff = x[None, :, :] - a[:, None, :]
            num = np.abs(np.einsum("ijk,ik->ij", diff, n[s : s + rows]))
            den = (diff * diff).sum(axis=2)
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(den > 0, num / den, 0.0)
            best = max(best, float(r.max()))
    else:
        rng = np.random.default_rng(PAIR_SEED)
        ia = rng.integers(0, V, SAMPLED_PAIRS)
        ix = rng.integers(0, V, SAMPLED_PAIRS)
        keep = ia != ix
        diff = x[ix[keep]] - x[ia[keep]]
        num = np.abs(np.einsum("ij,ij->i", diff, n[ia[keep]]))
        best = float((num / (diff * diff).sum(axis=1)).max())
    return 2.0 * epsilon * best
