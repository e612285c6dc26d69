"""Local graph charts and the differential geometry computed from them.

Around every vertex the surface is written as a graph ``x_n = phi(x')`` over
the tangent plane of an orthonormal frame ``(t1, t2, n)`` with ``n`` the
outward normal. ``phi`` is fitted by weighted least squares through the
centre point; the frame is then tilted by the fitted gradient and the fit is
repeated until ``grad phi(0') = 0'``. Fundamental forms, Weingarten map and
curvatures follow from the graph formulas

    g_ij = delta_ij + d_i phi d_j phi
    b_ij = Hess phi / sqrt(1 + |grad phi|^2)
    h    = -g^{-1} b,   H = tr h,   K = det h.

With the interior below the graph the unit sphere has H = 2, K = 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .constants import chart_radius as uniform_chart_radius
from .errors import (
    IllConditionedFit,
    InsufficientNeighbors,
    NonSPD,
    RayMiss,
    TangentDegenerate,
    ZeroNormal,
)
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

MIN_NEIGHBORS = 6
JET_DEGREE = 4
FALLBACK_DEGREE = 2
JET_MIN_WEIGHTED = 18  # weighted neighbours needed before the quartic jet is trusted
JET_MIN_ESS = 8.0  # and the Kish effective sample size (sum w)^2 / sum w^2
MAX_ALIGN_ITER = 5
ALIGN_TOL = 1e-8  # times the chart radius
MAX_COND = 1e12
ENLARGE_ATTEMPTS = 3
ENLARGE_FACTOR = 1.5
CANDIDATE_FACTOR = 1.6  # candidate sets reach this far beyond the base radius
ESS_BISECT = 40


@dataclass(frozen=True)
class VertexFrame:
    vertex_id: int
    normal: np.ndarray
    tangent_basis: np.ndarray  # (2, 3), rows t1, t2


@dataclass(frozen=True)
class LocalChart:
    frame: VertexFrame
    radius: float
    c: float
    b: np.ndarray  # (2,)
    A: np.ndarray  # (2, 2) symmetric
    residual_rms: float
    neighbor_count: int
    iterations: int = 0

    @property
    def quad_coeffs(self):
        return self.c, self.b, self.A


@dataclass(frozen=True)
class FundamentalForms:
    g: np.ndarray
    g_inv: np.ndarray
    b: np.ndarray
    h: np.ndarray
    kappa: np.ndarray  # (kappa1 <= kappa2)
    H: float
    K: float
    directions: np.ndarray  # (2, 2) eigenvectors of h in chart coordinates (columns)

    @property
    def H_l(self):
        """Elementary symmetric polynomials (H^(0), H^(1), H^(2)) = (1, H, K)."""
        return (1.0, self.H, self.K)


@dataclass
class CurvatureField:
    """Per-vertex geometry of a mesh.

    Arrays are indexed by vertex; ``tangents`` has shape (V, 2, 3) and
    ``principal_dirs`` (V, 2, 3) holds the unit 3D directions of kappa1 and
    kappa2.
    """

    normal: np.ndarray
    tangents: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray
    H: np.ndarray
    K: np.ndarray
    lumped_area: np.ndarray
    principal_dirs: np.ndarray
    radius: np.ndarray
    residual_rms: np.ndarray
    neighbor_count: np.ndarray
    iterations: np.ndarray
    grad_norm: np.ndarray
    degree: np.ndarray = field(repr=False, default=None)
    neighborhoods: "Neighborhoods" = field(repr=False, default=None)

    @property
    def n_vertices(self):
        return len(self.H)

    def max_abs_kappa(self):
        return np.maximum(np.abs(self.kappa1), np.abs(self.kappa2))


# ---------------------------------------------------------------- frames
def _tangent_basis(n):
    """Deterministic orthonormal (t1, t2) with (t1, t2, n) right-handed."""
    n = np.atleast_2d(n)
    axis = np.zeros_like(n)
    idx = np.argmin(np.abs(n), axis=1)
    axis[np.arange(len(n)), idx] = 1.0
    t1 = axis - np.einsum("ij,ij->i", axis, n)[:, None] * n
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


def angle_weighted_normals(mesh: TriangleMesh) -> np.ndarray:
    v, t = mesh.vertices, mesh.triangles
    fn = mesh.face_normals
    out = np.zeros_like(v)
    for k in range(3):
        a = v[t[:, k]]
        e1 = v[t[:, (k + 1) % 3]] - a
        e2 = v[t[:, (k + 2) % 3]] - a
        cosang = np.einsum("ij,ij->i", e1, e2) / (np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1))
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(out, t[:, k], fn * ang[:, None])
    norm = np.linalg.norm(out, axis=1)
    bad = np.flatnonzero(norm <= 1e-12 * max(1.0, norm.max()))
    if len(bad):
        raise ZeroNormal(bad[0])
    return out / norm[:, None]


def estimate_frames(mesh: TriangleMesh) -> list[VertexFrame]:
    """Seed frames from angle-weighted face normals."""
    n = angle_weighted_normals(mesh)
    t1, t2 = _tangent_basis(n)
    return [VertexFrame(i, n[i], np.stack([t1[i], t2[i]])) for i in range(len(n))]


# --------------------------------------------------------- neighborhoods
@dataclass(frozen=True)
class Neighborhoods:
    """CSR lists of chart neighbours (centre excluded) with per-vertex radius."""

    indptr: np.ndarray
    indices: np.ndarray
    radius: np.ndarray

    def of(self, i):
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def counts(self):
        return np.diff(self.indptr)

    def padded(self, rows=None):
        """(len(rows), kmax) neighbour index array and validity mask."""
        rows = np.arange(len(self.radius)) if rows is None else np.asarray(rows)
        cnt = self.counts()[rows]
        kmax = int(cnt.max()) if len(rows) else 0
        idx = np.zeros((len(rows), kmax), dtype=np.int64)
        mask = np.arange(kmax)[None, :] < cnt[:, None]
        starts = self.indptr[rows]
        pos = starts[:, None] + np.arange(kmax)[None, :]
        idx[mask] = self.indices[pos[mask]]
        idx[~mask] = rows[np.nonzero(~mask)[0]]
        return idx, mask


def ring_median_distance(mesh: TriangleMesh, rings=2) -> np.ndarray:
    """Median distance from each vertex to the vertices of its k-ring."""
    adj = mesh.vertex_adjacency
    reach = sparse.identity(mesh.n_vertices, format="csr")
    for _ in range(rings):
        reach = reach + reach @ adj
    reach = reach.tocsr()
    reach.setdiag(0)
    reach.eliminate_zeros()
    reach.sort_indices()
    cnt = np.diff(reach.indptr)
    rows = np.repeat(np.arange(mesh.n_vertices), cnt)
    d = np.linalg.norm(mesh.vertices[reach.indices] - mesh.vertices[rows], axis=1)
    d = d[np.lexsort((d, rows))]
    lo = reach.indptr[:-1] + (cnt - 1) // 2
    hi = reach.indptr[:-1] + cnt // 2
    return 0.5 * (d[lo] + d[hi])


def default_radius(mesh: TriangleMesh, epsilon_hint=None) -> np.ndarray:
    r = np.maximum(ring_median_distance(mesh, 2), 3.0 * mesh.mean_edge_length)
    if epsilon_hint is not None:
        r = np.minimum(r, uniform_chart_radius(float(epsilon_hint)))
    return r


def build_neighborhoods(mesh: TriangleMesh, radius) -> Neighborhoods:
    """Breadth-first growth over edges, keeping vertices within ``radius``.

    ``radius`` is a scalar or per-vertex array. Implemented as repeated
    sparse frontier expansion masked by the Euclidean cutoff.
    """
    n = mesh.n_vertices
    radius = np.broadcast_to(np.asarray(radius, dtype=float), (n,)).copy()
    v = mesh.vertices
    adj = mesh.vertex_adjacency
    eye = sparse.identity(n, format="csr", dtype=bool)
    reached = eye.copy()
    frontier = eye.copy()
    r2 = radius**2
    while frontier.nnz:
        cand = (frontier.astype(float) @ adj).tocsr()
        cand.sort_indices()
        rows = np.repeat(np.arange(n), np.diff(cand.indptr))
        cols = cand.indices
        d2 = ((v[cols] - v[rows]) ** 2).sum(axis=1)
        keep = d2 <= r2[rows]
        new = sparse.csr_matrix((np.ones(int(keep.sum()), dtype=bool), (rows[keep], cols[keep])), shape=(n, n))
        new = new - new.multiply(reached)
        new.eliminate_zeros()
        new = new.astype(bool)
        reached = (reached + new).astype(bool)
        frontier = new
    reached = reached.tocsr()
    reached.setdiag(False)
    reached.eliminate_zeros()
    reached.sort_indices()
    return Neighborhoods(reached.indptr.astype(np.int64), reached.indices.astype(np.int64), radius)


# ------------------------------------------------------------- batch fit
def effective_sample_size(w):
    """Row-wise (sum w)^2 / sum w^2 of a weight matrix."""
    s1 = w.sum(axis=1)
    s2 = (w * w).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(s2 > 0, s1 * s1 / s2, 0.0)


def wendland(d, r):
    q = np.clip(d / r, 0.0, 1.0)
    return (1.0 - q) ** 4 * (4.0 * q + 1.0)


@dataclass
class BatchFit:
    normal: np.ndarray  # (N, 3)
    t1: np.ndarray
    t2: np.ndarray
    b: np.ndarray  # (N, 2)
    A: np.ndarray  # (N, 2, 2)
    residual_rms: np.ndarray
    iterations: np.ndarray
    cond: np.ndarray
    effective_count: np.ndarray
    degree: np.ndarray
    ess: np.ndarray


def jet_exponents(degree):
    """Monomial exponents (a, b), 1 <= a + b <= degree, in graded order."""
    return [(d - j, j) for d in range(1, degree + 1) for j in range(d + 1)]


def _design(s1, s2, degree):
    cols = []
    for a, b in jet_exponents(degree):
        cols.append(s1**a * s2**b / (math.factorial(a) * math.factorial(b)))
    return np.stack(cols, axis=-1)


def fit_batch(
    centers,
    points,
    mask,
    radius,
    normal,
    t1=None,
    tol=ALIGN_TOL,
    max_iter=MAX_ALIGN_ITER,
    with_cond=True,
    degree=JET_DEGREE,
):
    """Iterated weighted quadratic fits for a batch of charts.

    Parameters
    ----------
    centers : (N, 3) chart origins.
    points : (N, k, 3) neighbour positions (padding rows are ignored).
    mask : (N, k) validity of each neighbour slot.
    radius : (N,) chart radius (weight support).
    normal : (N, 3) seed normals; ``t1`` optional seed first tangent.
    """
    N = len(centers)
    radius = np.asarray(radius, dtype=float)
    n = normal / np.linalg.norm(normal, axis=1, keepdims=True)
    if t1 is None:
        t1, _ = _tangent_basis(n)
    else:
        t1 = t1 - np.einsum("ij,ij->i", t1, n)[:, None] * n
        t1 = t1 / np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)

    rel = points - centers[:, None, :]
    dist = np.linalg.norm(rel, axis=2)
    w = wendland(dist, radius[:, None]) * mask
    eff = np.count_nonzero(w > 0, axis=1)
    ess = effective_sample_size(w)

    active = np.ones(N, dtype=bool)
    iters = np.zeros(N, dtype=np.int64)
    ncoef = len(jet_exponents(degree))
    J = np.broadcast_to(np.eye(3), (N, 3, 3)).copy()
    last_step = np.zeros((N, 3))
    last_b = np.zeros((N, 3))
    beta = np.zeros((N, ncoef))
    cond = np.ones(N)
    resid = np.zeros(N)
    for it in range(max_iter + 1):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        s1 = np.einsum("ikj,ij->ik", rel[idx], t1[idx]) / radius[idx, None]
        s2 = np.einsum("ikj,ij->ik", rel[idx], t2[idx]) / radius[idx, None]
        z = np.einsum("ikj,ij->ik", rel[idx], n[idx]) / radius[idx, None]
        X = _design(s1, s2, degree)
        wi = w[idx]
        XtW = X * wi[:, :, None]
        M = np.einsum("ikp,ikq->ipq", XtW, X)
        rhs = np.einsum("ikp,ik->ip", XtW, z)
        if with_cond or it == 0:
            ev = np.linalg.eigvalsh(M)
            with np.errstate(divide="ignore", invalid="ignore"):
                c = np.where(ev[:, 0] > 0, ev[:, -1] / ev[:, 0], np.inf)
            cond[idx] = np.maximum(cond[idx], c) if it else c
            sing = ~(c <= MAX_COND)
            if sing.any():
                # keep the batch solvable; callers reject these rows via ``cond``
                M[sing] += np.eye(ncoef)[None] * (1e-12 * np.maximum(ev[sing, -1], 1.0))[:, None, None]
        sol = np.linalg.solve(M, rhs[..., None])[..., 0]
        beta[idx] = sol
        r = z - np.einsum("ikp,ip->ik", X, sol)
        wsum = wi.sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            resid[idx] = radius[idx] * np.sqrt((wi * r * r).sum(axis=1) / wsum)
        bn = np.linalg.norm(sol[:, :2], axis=1)
        done = bn <= tol * radius[idx]
        if it == max_iter:
            break
        move = idx[~done]
        active[idx[done]] = False
        if len(move) == 0:
            break
        iters[move] += 1
        gb = beta[move, :2]
        bvec = gb[:, 0:1] * t1[move] + gb[:, 1:2] * t2[move]
        if it > 0:
            # Broyden update of the map tilt -> slope reduction (starts at identity)
            sk = last_step[move]
            yk = last_b[move] - bvec
            Jm = J[move]
            ss = np.maximum(np.einsum("ij,ij->i", sk, sk), 1e-300)
            J[move] = Jm + np.einsum("ni,nj->nij", yk - np.einsum("nij,nj->ni", Jm, sk), sk) / ss[:, None, None]
        try:
            step = np.linalg.solve(J[move], bvec[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = bvec
        step = step - np.einsum("ij,ij->i", step, n[move])[:, None] * n[move]
        # keep the quasi-Newton step within a factor 4 of the plain update
        ratio = np.linalg.norm(step, axis=1) / np.maximum(np.linalg.norm(bvec, axis=1), 1e-300)
        wild = ~((ratio > 0.25) & (ratio < 4.0) & (np.einsum("ij,ij->i", step, bvec) > 0))
        step[wild] = bvec[wild]
        last_step[move], last_b[move] = step, bvec
        nn = n[move] - step
        nn /= np.linalg.norm(nn, axis=1, keepdims=True)
        tt = t1[move] - np.einsum("ij,ij->i", t1[move], nn)[:, None] * nn
        tt /= np.linalg.norm(tt, axis=1, keepdims=True)
        n[move], t1[move], t2[move] = nn, tt, np.cross(nn, tt)

    b = beta[:, :2]
    A = np.empty((N, 2, 2))
    # columns 2..4 are s1^2/2, s1 s2, s2^2/2: their coefficients are r * Hess phi
    A[:, 0, 0] = beta[:, 2] / radius
    A[:, 0, 1] = A[:, 1, 0] = beta[:, 3] / radius
    A[:, 1, 1] = beta[:, 4] / radius
    return BatchFit(n, t1, t2, b, A, resid, iters, cond, eff, np.full(N, degree), ess)


def fit_adaptive(centers, points, mask, radius, normal, t1=None, degree=JET_DEGREE, degrees=None):
    """Quartic jet where the neighbourhood supports it, quadratic elsewhere.

    Only the second-order Taylor part of the jet is kept; the higher terms
    absorb the truncation bias a plain quadratic fit would carry into the
    Hessian. ``degrees`` (per row) fixes the choice instead, which keeps the
    fitted geometry a smooth function of the points while they move.
    """
    if degrees is not None:
        degrees = np.asarray(degrees)
        res = fit_batch(centers, points, mask, radius, normal, t1, degree=int(degrees.max()))
        redo = np.flatnonzero(degrees != degrees.max())
    else:
        res = fit_batch(centers, points, mask, radius, normal, t1, degree=degree)
        if degree == FALLBACK_DEGREE:
            return res
        thin = (res.effective_count < JET_MIN_WEIGHTED) | (res.ess < JET_MIN_ESS)
        redo = np.flatnonzero(thin | ~(res.cond <= MAX_COND))
    if len(redo):
        sub = fit_batch(
            centers[redo],
            points[redo],
            mask[redo],
            radius[redo],
            normal[redo],
            None if t1 is None else t1[redo],
            degree=FALLBACK_DEGREE,
        )
        for name in ("normal", "t1", "t2", "b", "A", "residual_rms", "iterations", "cond", "effective_count", "degree", "ess"):
            getattr(res, name)[redo] = getattr(sub, name)
    return res


def forms_batch(b, A):
    """Graph formulas at the chart origin for gradient ``b`` and Hessian ``A``.

    Returns g, g_inv, second form, Weingarten matrix, sorted eigenvalues and
    eigenvectors of h (columns).
    """
    N = len(b)
    q = 1.0 + (b * b).sum(axis=1)
    g = np.eye(2)[None] + b[:, :, None] * b[:, None, :]
    g_inv = np.eye(2)[None] - b[:, :, None] * b[:, None, :] / q[:, None, None]
    bb = A / np.sqrt(q)[:, None, None]
    h = -np.einsum("nik,nkj->nij", g_inv, bb)
    # h is self-adjoint w.r.t. g; diagonalise the symmetric g^{-1/2}-conjugate
    L = np.linalg.cholesky(g)
    Linv = np.linalg.inv(L)
    S = -np.einsum("nik,nkl,njl->nij", Linv, bb, Linv)
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    kap, Y = np.linalg.eigh(S)
    vecs = np.einsum("nki,nkj->nij", Linv, Y)  # L^{-T} Y
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return g, g_inv, bb, h, kap, vecs


# -------------------------------------------------------- single-vertex API
def _chart_data(mesh, nb, rows):
    idx, mask = nb.padded(rows)
    return mesh.vertices[rows], mesh.vertices[idx], mask


def fit_chart(mesh: TriangleMesh, vertex: int, radius: float, frame: VertexFrame | None = None) -> LocalChart:
    """Fit the aligned local graph at one vertex."""
    vertex = int(vertex)
    if frame is None:
        seed = angle_weighted_normals(mesh)[vertex]
    else:
        seed = frame.normal
    r = float(radius)
    for attempt in range(ENLARGE_ATTEMPTS + 1):
        nb = build_neighborhoods(mesh, np.full(mesh.n_vertices, r))
        nbrs = nb.of(vertex)
        pts = mesh.vertices[nbrs]
        w = wendland(np.linalg.norm(pts - mesh.vertices[vertex], axis=1), r)
        if np.count_nonzero(w > 0) >= MIN_NEIGHBORS:
            break
        r *= ENLARGE_FACTOR
    else:
        raise InsufficientNeighbors(vertex, f"fewer than {MIN_NEIGHBORS} neighbours at vertex {vertex}")
    t1 = None if frame is None else frame.tangent_basis[0][None]
    res = fit_adaptive(
        mesh.vertices[vertex][None], pts[None], np.ones((1, len(nbrs)), dtype=bool), np.array([r]), seed[None], t1
    )
    if res.cond[0] > MAX_COND:
        raise IllConditionedFit(vertex, f"normal equations condition {res.cond[0]:.3g} at vertex {vertex}")
    fr = VertexFrame(vertex, res.normal[0], np.stack([res.t1[0], res.t2[0]]))
    return LocalChart(
        frame=fr,
        radius=r,
        c=0.0,
        b=res.b[0],
        A=res.A[0],
        residual_rms=float(res.residual_rms[0]),
        neighbor_count=len(nbrs),
        iterations=int(res.iterations[0]),
    )


def fundamental_forms(chart: LocalChart) -> FundamentalForms:
    g, g_inv, bb, h, kap, vecs = forms_batch(chart.b[None], chart.A[None])
    if np.linalg.eigvalsh(g[0])[0] <= 0:
        raise NonSPD(chart.frame.vertex_id, "first fundamental form is not positive definite")
    return FundamentalForms(
        g=g[0],
        g_inv=g_inv[0],
        b=bb[0],
        h=h[0],
        kappa=kap[0],
        H=float(np.trace(h[0])),
        K=float(np.linalg.det(h[0])),
        directions=vecs[0],
    )


# ------------------------------------------------------------ whole field
def curvature_field(
    mesh: TriangleMesh, epsilon_hint=None, radius=None, neighborhoods=None, seed_normals=None, degrees=None, candidates=None
):
    """Per-vertex normals, principal curvatures, H, K and lumped areas.

    By default the chart radius is max(2-ring median distance, 3 x mean
    edge), raised where needed until the weights' effective sample size
    reaches JET_MIN_ESS (see :func:`adaptive_neighborhoods`); ``candidates``
    may pass a reusable superset of the neighbour lists. With
    ``epsilon_hint`` the radius is instead clamped to the common chart radius
    of the ball condition, and an explicit ``radius`` is used as given; in
    both cases vertices with too few weighted neighbours get their radius
    enlarged (x1.5, at most three times). ``degrees`` fixes the per-vertex
    jet degree (see :func:`fit_adaptive`).
    """
    if neighborhoods is None:
        if radius is not None:
            r = np.broadcast_to(np.asarray(radius, dtype=float), (mesh.n_vertices,))
            neighborhoods = _neighborhoods_with_enlargement(mesh, np.asarray(r, dtype=float))
        elif epsilon_hint is not None:
            fallback = default_radius(mesh)
            r = np.minimum(fallback, uniform_chart_radius(float(epsilon_hint)))
            neighborhoods = _neighborhoods_with_enlargement(mesh, r, fallback)
        else:
            neighborhoods, _ = adaptive_neighborhoods(mesh, candidates=candidates)
    nb = neighborhoods
    seed = angle_weighted_normals(mesh) if seed_normals is None else seed_normals
    rows = np.arange(mesh.n_vertices)
    centers, pts, mask = _chart_data(mesh, nb, rows)
    res = fit_adaptive(centers, pts, mask, nb.radius, seed, degrees=degrees)
    bad = np.flatnonzero(res.cond > MAX_COND)
    if len(bad):
        raise IllConditionedFit(bad[0], f"normal equations condition {res.cond[bad[0]]:.3g} at vertex {bad[0]}")
    return _assemble_field(mesh, nb, res)


def _neighborhoods_with_enlargement(mesh, r, fallback=None):
    """Fixed-radius neighbourhoods; radii of starving vertices grow x1.5, at most three times."""
    r = r.copy()
    for attempt in range(ENLARGE_ATTEMPTS + 2):
        nb = build_neighborhoods(mesh, r)
        idx, mask = nb.padded()
        d = np.linalg.norm(mesh.vertices[idx] - mesh.vertices[:, None, :], axis=2)
        eff = np.count_nonzero((wendland(d, r[:, None]) > 0) & mask, axis=1)
        short = eff < MIN_NEIGHBORS
        if not short.any():
            return nb
        if attempt == ENLARGE_ATTEMPTS and fallback is not None:
            # the epsilon clamp is advisory: return to the adaptive radius where it starves the fit
            logger.warning("chart radius clamp too small at %d vertices; using the adaptive radius", short.sum())
            r[short] = np.maximum(r[short], fallback[short])
            fallback = None
            continue
        if attempt >= ENLARGE_ATTEMPTS:
            v = int(np.flatnonzero(short)[0])
            raise InsufficientNeighbors(v, f"fewer than {MIN_NEIGHBORS} neighbours at vertex {v}")
        r[short] *= ENLARGE_FACTOR
    return nb


def ess_radius(mesh: TriangleMesh, candidates: Neighborhoods, base):
    """Smallest radius >= ``base`` whose Wendland weights reach JET_MIN_ESS.

    Found by bisection over the candidate sets, so the result is (up to the
    bisection tolerance) a continuous function of the vertex positions.
    Returns the radii and a mask of vertices capped at the candidate radius.
    """
    idx, mask = candidates.padded()
    d = np.linalg.norm(mesh.vertices[idx] - mesh.vertices[:, None, :], axis=2)
    d = np.where(mask, d, np.inf)
    r = np.asarray(base, dtype=float).copy()
    hi = candidates.radius

    def ess(dd, rr):
        return effective_sample_size(wendland(dd, rr[:, None]))

    need = ess(d, r) < JET_MIN_ESS
    capped = need & (ess(d, hi) < JET_MIN_ESS)
    rows = np.flatnonzero(need & ~capped)
    if len(rows):
        dd, lo_, hi_ = d[rows], r[rows], hi[rows].copy()
        for _ in range(ESS_BISECT):
            mid = 0.5 * (lo_ + hi_)
            ok = ess(dd, mid) >= JET_MIN_ESS
            hi_ = np.where(ok, mid, hi_)
            lo_ = np.where(ok, lo_, mid)
        r[rows] = hi_
    r[capped] = hi[capped]
    return r, capped


def restrict_neighborhoods(mesh: TriangleMesh, candidates: Neighborhoods, radius) -> Neighborhoods:
    """Members of ``candidates`` strictly inside the per-vertex ``radius``."""
    cnt = candidates.counts()
    rows = np.repeat(np.arange(mesh.n_vertices), cnt)
    d = np.linalg.norm(mesh.vertices[candidates.indices] - mesh.vertices[rows], axis=1)
    keep = d < radius[rows]
    indptr = np.zeros(mesh.n_vertices + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows[keep], minlength=mesh.n_vertices), out=indptr[1:])
    return Neighborhoods(indptr, candidates.indices[keep], np.asarray(radius, dtype=float))


def adaptive_neighborhoods(mesh: TriangleMesh, base=None, candidates: Neighborhoods | None = None):
    """Chart neighbourhoods with the default adaptive radius.

    The radius at a vertex is ``base`` (default :func:`default_radius`) raised
    until the effective sample size of the weights reaches JET_MIN_ESS: on
    stretched parts of a mesh a fixed radius lets the quartic jet
    interpolate. Neighbours are drawn from ``candidates`` (grown when they
    turn out too small), so the result does not depend on which superset is
    passed. Returns (neighbourhoods, candidates).
    """
    base = default_radius(mesh) if base is None else np.asarray(base, dtype=float)
    if candidates is None:
        candidates = build_neighborhoods(mesh, CANDIDATE_FACTOR * base)
    for attempt in range(ENLARGE_ATTEMPTS + 1):
        r, capped = ess_radius(mesh, candidates, base)
        if not capped.any() or attempt == ENLARGE_ATTEMPTS:
            break
        grown = np.where(capped, candidates.radius * ENLARGE_FACTOR, candidates.radius)
        candidates = build_neighborhoods(mesh, np.maximum(grown, CANDIDATE_FACTOR * base))
    nb = restrict_neighborhoods(mesh, candidates, r)
    short = np.flatnonzero(nb.counts() < MIN_NEIGHBORS)
    if len(short):
        v = int(short[0])
        raise InsufficientNeighbors(v, f"fewer than {MIN_NEIGHBORS} neighbours at vertex {v}")
    return nb, candidates


def _assemble_field(mesh, nb, res):
    g, g_inv, bb, h, kap, vecs = forms_batch(res.b, res.A)
    H = np.trace(h, axis1=1, axis2=2)
    K = np.linalg.det(h)
    tang = np.stack([res.t1, res.t2], axis=1)  # (N, 2, 3)
    # principal directions: chart-coordinate vectors mapped through dX = t_i + d_i phi n
    dX = tang + res.b[:, :, None] * res.normal[:, None, :]
    dirs = np.einsum("nik,nij->nkj", vecs, dX)
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    return CurvatureField(
        normal=res.normal,
        tangents=tang,
        kappa1=kap[:, 0],
        kappa2=kap[:, 1],
        H=H,
        K=K,
        lumped_area=mesh.lumped_areas.copy(),
        principal_dirs=dirs,
        radius=nb.radius.copy(),
        residual_rms=res.residual_rms,
        neighbor_count=nb.counts(),
        iterations=res.iterations,
        grad_norm=np.linalg.norm(res.b, axis=1),
        degree=res.degree,
        neighborhoods=nb,
    )


def normal_curvature(field: CurvatureField, mesh: TriangleMesh, vertex: int, V) -> float:
    """Normal curvature II(v, v) for the tangential part v of ``V``."""
    n = field.normal[vertex]
    V = np.asarray(V, dtype=float)
    v = V - np.dot(V, n) * n
    nv = np.linalg.norm(v)
    if nv <= 1e-10:
        raise TangentDegenerate(f"direction is parallel to the normal at vertex {vertex}")
    v /= nv
    e1, e2 = field.principal_dirs[vertex]
    return float(field.kappa1[vertex] * np.dot(v, e1) ** 2 + field.kappa2[vertex] * np.dot(v, e2) ** 2)


# ------------------------------------------------------- grid resampling
@dataclass(frozen=True)
class ChartGrid:
    """Graph values ``phi[i, j] = phi(u[i], u[j])`` on a square grid in a chart disc."""

    u: np.ndarray
    phi: np.ndarray
    frame: VertexFrame | None = None
    radius: float | None = None

    @property
    def spacing(self):
        return float(self.u[1] - self.u[0])

    @classmethod
    def from_function(cls, fn, half_width, n=9):
        """Sample an analytic graph ``fn(u, v)`` exactly (no mesh involved)."""
        if n < 5:
            raise ValueError("grid needs at least 5 x 5 points")
        u = np.linspace(-half_width, half_width, n)
        U, V = np.meshgrid(u, u, indexing="ij")
        return cls(u=u, phi=np.asarray(fn(U, V), dtype=float), radius=float(np.sqrt(2) * half_width))


def _ray_hits(origins, direction, a, b, c):
    """Signed line parameters of ``origins + t direction`` against triangles.

    Returns an (G, F) array with NaN where the line misses.
    """
    e1, e2 = b - a, c - a
    pvec = np.cross(direction, e2)  # (F, 3)
    det = np.einsum("fj,fj->f", e1, pvec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        tvec = origins[:, None, :] - a[None]  # (G, F, 3)
        uu = np.einsum("gfj,fj->gf", tvec, pvec) * inv
        qvec = np.cross(tvec, e1[None])
        vv = np.einsum("gfj,j->gf", qvec, direction) * inv
        tt = np.einsum("gfj,fj->gf", qvec, e2) * inv
    eps = 1e-12
    ok = (np.abs(det) > 1e-300)[None] & (uu >= -eps) & (vv >= -eps) & (uu + vv <= 1 + eps)
    return np.where(ok, tt, np.nan)


def sample_chart_grid(mesh: TriangleMesh, chart: LocalChart, n=9, half_width=None) -> ChartGrid:
    """Resample the mesh as a graph over ``chart``'s tangent plane.

    Each grid point casts a line along the frame normal; the intersection
    closest to the tangent plane gives phi. ``half_width`` defaults to
    ``radius / sqrt(2)`` so the square fits the chart disc.
    """
    if n < 5:
        raise ValueError("grid needs at least 5 x 5 points")
    fr = chart.frame
    x0 = mesh.vertices[fr.vertex_id]
    hw = chart.radius / np.sqrt(2) if half_width is None else float(half_width)
    u = np.linspace(-hw, hw, n)
    U, V = np.meshgrid(u, u, indexing="ij")
    t1, t2 = fr.tangent_basis
    origins = x0 + U.reshape(-1, 1) * t1 + V.reshape(-1, 1) * t2
    reach = np.sqrt(2) * hw + 2 * float(mesh.edge_lengths.max())
    verts = mesh.kdtree.query_ball_point(x0, reach)
    faces = np.unique(mesh.vertex_faces[verts].indices)
    tri = mesh.vertices[mesh.triangles[faces]]
    t = _ray_hits(origins, fr.normal, tri[:, 0], tri[:, 1], tri[:, 2])
    if np.isnan(t).all(axis=1).any():
        raise RayMiss(fr.vertex_id, f"grid ray misses the surface near vertex {fr.vertex_id}; shrink the grid")
    with np.errstate(invalid="ignore"):
        pick = np.nanargmin(np.abs(t), axis=1)
    phi = t[np.arange(len(t)), pick].reshape(n, n)
    return ChartGrid(u=u, phi=phi, frame=fr, radius=chart.radius)


def _d(f, h, axis):
    return np.gradient(f, h, axis=axis, edge_order=2)


def _grid_geometry(grid: ChartGrid):
    h = grid.spacing
    phi = grid.phi
    p = [_d(phi, h, 0), _d(phi, h, 1)]
    n = phi.shape[0]
    g = np.empty((2, 2, n, n))
    for i in range(2):
        for j in range(2):
            g[i, j] = (i == j) + p[i] * p[j]
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    g_inv = np.empty_like(g)
    g_inv[0, 0], g_inv[1, 1] = g[1, 1] / det, g[0, 0] / det
    g_inv[0, 1] = g_inv[1, 0] = -g[0, 1] / det
    q = np.sqrt(1.0 + p[0] ** 2 + p[1] ** 2)
    bf = np.empty_like(g)
    for i in range(2):
        for j in range(2):
            bf[i, j] = _d(p[i], h, j) / q
    bf = 0.5 * (bf + bf.transpose(1, 0, 2, 3))
    return g, g_inv, bf


def christoffel(grid: ChartGrid) -> np.ndarray:
    """Christoffel symbols ``G[k, i, j]`` on the grid from the induced metric.

    ``G^k_ij = 1/2 g^{kl} (d_j g_li + d_i g_lj - d_l g_ij)`` with central
    differences; symmetric in (i, j) by construction.
    """
    g, g_inv, _ = _grid_geometry(grid)
    return _christoffel_from_metric(g, g_inv, grid.spacing)


def _christoffel_from_metric(g, g_inv, h):
    dg = np.empty((2,) + g.shape)  # dg[l, i, j] = d_l g_ij
    for l in range(2):
        dg[l] = _d(g, h, 2 + l)
    G = np.zeros_like(dg)
    for k in range(2):
        for i in range(2):
            for j in range(i, 2):
                s = 0.0
                for l in range(2):
                    s = s + g_inv[k, l] * (dg[j, l, i] + dg[i, l, j] - dg[l, i, j])
                G[k, i, j] = G[k, j, i] = 0.5 * s
    return G


def _interior(n):
    m = min(3, (n - 1) // 2)
    return slice(m, n - m)


def gauss_codazzi_residual(grid: ChartGrid) -> tuple[float, float]:
    """Max-norm residuals of the Gauss and Codazzi-Mainardi equations.

    Gauss:   d_l G^k_ij - d_j G^k_il + G^m_ij G^k_ml - G^m_il G^k_mj
             = g^{km} (b_ij b_ml - b_il b_mj)
    Codazzi: d_k b_ij - d_j b_ik = G^l_ik b_lj - G^l_ij b_lk
    evaluated on interior grid points. Both are finite-difference
    diagnostics; they vanish only in the limit of fine grids.
    """
    h = grid.spacing
    g, g_inv, bf = _grid_geometry(grid)
    G = _christoffel_from_metric(g, g_inv, h)
    dG = np.stack([_d(G, h, 3 + l) for l in range(2)])  # dG[l, k, i, j]
    db = np.stack([_d(bf, h, 2 + l) for l in range(2)])  # db[k, i, j]
    gauss = 0.0
    codazzi = 0.0
    sl = _interior(grid.phi.shape[0])
    for k in range(2):
        for i in range(2):
            for j in range(2):
                for l in range(2):
                    lhs = dG[l, k, i, j] - dG[j, k, i, l]
                    rhs = 0.0
                    for m in range(2):
                        lhs = lhs + G[m, i, j] * G[k, m, l] - G[m, i, l] * G[k, m, j]
                        rhs = rhs + g_inv[k, m] * (bf[i, j] * bf[m, l] - bf[i, l] * bf[m, j])
                    gauss = max(gauss, float(np.abs(lhs - rhs)[sl, sl].max()))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                lhs = db[k, i, j] - db[j, i, k]
                rhs = sum(G[l, i, k] * bf[l, j] - G[l, i, j] * bf[l, k] for l in range(2))
                codazzi = max(codazzi, float(np.abs(lhs - rhs)[sl, sl].max()))
    return gauss, codazzi
