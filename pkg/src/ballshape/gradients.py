"""Shape gradients of the energies with respect to vertex positions.

Area and Volume use the closed-form discrete gradients. Curvature energies
are differentiated by central finite differences with a local refit: moving
vertex j only changes the charts whose neighbourhood contains j (and j's own
chart), and the barycentric areas of j's one-ring. For a perturbed
neighbour the weighted normal equations change by a rank-two update, so all
perturbed fits of a chart are solved as one batch. The chart frames and
neighbour lists are held fixed during differentiation. Instead of realigning
every perturbed fit, the first-order effect of the realignment is added from
the sensitivity of each chart's fit to a tilt of its frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .charts import CurvatureField, _design, wendland
from .errors import DomainError
from .functionals import FunctionalSpec
from .mesh import TriangleMesh

FD_REL_STEP = 1e-6
_CHUNK_ENTRIES = 4_000_000  # perturbed fits x coefficients^2 per batch


# ------------------------------------------------------------ analytic
def area_gradient(mesh: TriangleMesh) -> np.ndarray:
    """d Area / d x_a = sum over faces of N_T x (x_c - x_b) / 2."""
    v, t = mesh.vertices, mesh.triangles
    N = mesh.face_normals
    g = np.zeros_like(v)
    for k in range(3):
        b = v[t[:, (k + 1) % 3]]
        c = v[t[:, (k + 2) % 3]]
        np.add.at(g, t[:, k], 0.5 * np.cross(N, c - b))
    return g


def volume_gradient(mesh: TriangleMesh) -> np.ndarray:
    """d Volume / d x_a = one sixth of the summed face cross products around a."""
    g = np.zeros_like(mesh.vertices)
    fc = mesh.face_cross / 6.0
    for k in range(3):
        np.add.at(g, mesh.triangles[:, k], fc)
    return g


def lumped_area_weighted_gradient(mesh: TriangleMesh, e: np.ndarray) -> np.ndarray:
    """Gradient of sum_i e_i A_i with e held fixed."""
    v, t = mesh.vertices, mesh.triangles
    N = mesh.face_normals
    eT = e[t].sum(axis=1) / 3.0
    g = np.zeros_like(v)
    for k in range(3):
        b = v[t[:, (k + 1) % 3]]
        c = v[t[:, (k + 2) % 3]]
        np.add.at(g, t[:, k], (0.5 * eT)[:, None] * np.cross(N, c - b))
    return g


# -------------------------------------------------------- energy terms
@dataclass(frozen=True)
class _Term:
    """E contribution ``outer(int e dA)``; ``outer`` is (value, derivative)."""

    integrand: object  # callable (x, n, H, K) -> per-vertex values
    outer: object = None


def _terms(spec: FunctionalSpec):
    k, p = spec.kind, spec.params
    if k == "willmore":
        return [_Term(lambda x, n, H, K: 0.25 * H * H)]
    if k == "helfrich":
        H0 = p["H0"]
        return [_Term(lambda x, n, H, K: (H - H0) ** 2)]
    if k in ("canham_helfrich", "vesicle_energy"):
        kb, H0, kG = p["k_b"], p["H0"], p["k_G"]
        terms = [_Term(lambda x, n, H, K: 0.5 * kb * (H - H0) ** 2 + kG * K)]
        if k == "vesicle_energy" and p["k_m"] != 0:
            km, M0 = p["k_m"], p["M0"]
            terms.append(_Term(lambda x, n, H, K: H, lambda u: (km * (u - M0) ** 2, 2 * km * (u - M0))))
        return terms
    if k == "gauss_integral":
        return [_Term(lambda x, n, H, K: K)]
    if k == "mean_integral":
        return [_Term(lambda x, n, H, K: H)]
    if k == "generic":
        j0, j1, j2 = spec.compiled()

        def e(x, n, H, K):
            env = {f"x{i}": x[:, i] for i in range(3)}
            env.update({f"n{i}": n[:, i] for i in range(3)})
            out = np.zeros(len(H))
            if j0 is not None:
                out = out + j0(env)
            if j1 is not None:
                out = out + j1({**env, "t": H})
            if j2 is not None:
                out = out + j2({**env, "t": K})
            return out

        return [_Term(e)]
    raise DomainError(f"no curvature integrand for {k}")


def _HK(beta, radius):
    """H, K and the gradient b from jet coefficients (columns as in the design)."""
    b = beta[..., :2]
    A00 = beta[..., 2] / radius
    A01 = beta[..., 3] / radius
    A11 = beta[..., 4] / radius
    q = 1.0 + b[..., 0] ** 2 + b[..., 1] ** 2
    sq = np.sqrt(q)
    # h = -(I - b b^T / q) A / sqrt(q)
    gi00 = 1.0 - b[..., 0] ** 2 / q
    gi01 = -b[..., 0] * b[..., 1] / q
    gi11 = 1.0 - b[..., 1] ** 2 / q
    h00 = -(gi00 * A00 + gi01 * A01) / sq
    h01 = -(gi00 * A01 + gi01 * A11) / sq
    h10 = -(gi01 * A00 + gi11 * A01) / sq
    h11 = -(gi01 * A01 + gi11 * A11) / sq
    return h00 + h11, h00 * h11 - h01 * h10, b, sq


# ------------------------------------------------------------ FD engine
def _local_fd(mesh: TriangleMesh, field: CurvatureField, terms, delta):
    """Per-term gradients of ``int e dA`` with areas frozen, plus base integrands."""
    x = mesh.vertices
    V = len(x)
    nb = field.neighborhoods
    if nb is None:
        raise DomainError("curvature field carries no neighbourhoods")
    idx_all, mask_all = nb.padded()
    degree = field.degree if field.degree is not None else np.full(V, 2)
    A_lumped = field.lumped_area
    grads = [np.zeros((V, 3)) for _ in terms]
    base = [t.integrand(x, field.normal, field.H, field.K) for t in terms]
    eye = np.eye(3)

    for deg in np.unique(degree):
        rows_all = np.flatnonzero(degree == deg)
        P = (int(deg) + 1) * (int(deg) + 2) // 2 - 1
        k = idx_all.shape[1]
        per_row = (k + 1) * 6 * P * P
        step = max(1, _CHUNK_ENTRIES // per_row)
        for s in range(0, len(rows_all), step):
            rows = rows_all[s : s + step]
            _fd_rows(x, rows, idx_all[rows], mask_all[rows], nb.radius[rows], int(deg), field, A_lumped, terms, grads, delta, eye)
    return grads, base


TILT_STEP = 1e-4


def _fit_frame(rel, mask, r, F, deg):
    loc = np.einsum("nkj,naj->nka", rel, F)
    w = wendland(np.linalg.norm(rel, axis=2), r) * mask
    X = _design(loc[..., 0] / r, loc[..., 1] / r, deg)
    XW = X * w[..., None]
    M = np.einsum("nkp,nkq->npq", XW, X)
    rhs = np.einsum("nkp,nk->np", XW, loc[..., 2] / r)
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def _geometry(beta, radius, F):
    """H, K, unit normal and slope b of a jet read in frame ``F`` (rows t1, t2, n)."""
    H, K, b, sq = _HK(beta, radius[:, None] if beta.ndim == 3 else radius)
    t1, t2, n = F[:, 0], F[:, 1], F[:, 2]
    if beta.ndim == 3:
        t1, t2, n = t1[:, None], t2[:, None], n[:, None]
    nrm = (n - b[..., 0:1] * t1 - b[..., 1:2] * t2) / sq[..., None]
    return H, K, nrm, b


def _tilted(F, a, theta):
    """Frame whose normal is tilted by ``theta`` towards -t_a (the alignment update)."""
    t1, t2, n = F[:, 0], F[:, 1], F[:, 2]
    nn = n - theta * F[:, a]
    nn = nn / np.linalg.norm(nn, axis=1, keepdims=True)
    tt = t1 - np.einsum("ij,ij->i", t1, nn)[:, None] * nn
    tt = tt / np.linalg.norm(tt, axis=1, keepdims=True)
    return np.stack([tt, np.cross(nn, tt), nn], axis=1)


def _fd_rows(x, rows, idx, mask, radius, deg, field, A_lumped, terms, grads, delta, eye):
    N, k = idx.shape
    F = np.stack([field.tangents[rows, 0], field.tangents[rows, 1], field.normal[rows]], axis=1)
    r = radius[:, None]
    rel = x[idx] - x[rows][:, None, :]
    loc = np.einsum("nkj,naj->nka", rel, F)  # frame coordinates
    w = wendland(np.linalg.norm(rel, axis=2), r) * mask
    X = _design(loc[..., 0] / r, loc[..., 1] / r, deg)  # (N, k, P)
    y = loc[..., 2] / r
    XW = X * w[..., None]
    M = np.einsum("nkp,nkq->npq", XW, X)
    rhs = np.einsum("nkp,nk->np", XW, y)
    xi = x[rows]
    Ai = A_lumped[rows]

    # Sensitivity of the fitted geometry to the frame tilt. The realigned fit
    # of perturbed data sits at the tilt theta* = -Jb^{-1} b' that cancels the
    # slope b' seen in the base frame; geometry is corrected to first order.
    dG = []
    for a in range(2):
        out = []
        for sgn in (1.0, -1.0):
            Ft = _tilted(F, a, sgn * TILT_STEP)
            out.append(_geometry(_fit_frame(rel, mask, r, Ft, deg), radius, Ft))
        dG.append([(p - m) / (2 * TILT_STEP) for p, m in zip(*out)])
    dH = np.stack([dG[0][0], dG[1][0]], axis=-1)  # (N, 2)
    dK = np.stack([dG[0][1], dG[1][1]], axis=-1)
    dn = np.stack([dG[0][2], dG[1][2]], axis=-1)  # (N, 3, 2)
    Jb = np.stack([dG[0][3], dG[1][3]], axis=-1)  # (N, 2, 2): d b_i / d theta_a
    Jinv = np.linalg.inv(Jb)

    def aligned(beta):
        H, K, nrm, b = _geometry(beta, radius, F)
        if beta.ndim == 3:
            th = -np.einsum("nia,nka->nki", Jinv, b)
            H = H + np.einsum("na,nka->nk", dH, th)
            K = K + np.einsum("na,nka->nk", dK, th)
            nrm = nrm + np.einsum("nja,nka->nkj", dn, th)
        else:
            th = -np.einsum("nia,na->ni", Jinv, b)
            H = H + np.einsum("na,na->n", dH, th)
            K = K + np.einsum("na,na->n", dK, th)
            nrm = nrm + np.einsum("nja,na->nj", dn, th)
        nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
        return H, K, nrm

    for c in range(3):
        dloc = delta * F[:, :, c]  # (N, 3): e_c in frame coordinates
        vals = {}
        for sgn in (1.0, -1.0):
            # neighbour slot perturbations: rank-two change of the normal equations
            locp = loc + sgn * dloc[:, None, :]
            relp = rel + sgn * delta * eye[c]
            wp = wendland(np.linalg.norm(relp, axis=2), r) * mask
            Xp = _design(locp[..., 0] / r, locp[..., 1] / r, deg)
            yp = locp[..., 2] / r
            Mp = (
                M[:, None]
                - (w[..., None, None] * X[..., :, None] * X[..., None, :])
                + (wp[..., None, None] * Xp[..., :, None] * Xp[..., None, :])
            )
            rp = rhs[:, None] - w[..., None] * X * y[..., None] + wp[..., None] * Xp * yp[..., None]
            beta_n = np.linalg.solve(Mp, rp[..., None])[..., 0]  # (N, k, P)
            # centre perturbation: every offset moves by -sgn delta e_c
            beta_c = _fit_frame(rel - sgn * delta * eye[c], mask, r, F, deg)
            vals[sgn] = (aligned(beta_n), aligned(beta_c))

        for ti, term in enumerate(terms):
            diff_n = 0.0
            diff_c = 0.0
            for sgn in (1.0, -1.0):
                (Hn, Kn, nn), (Hc, Kc, nc) = vals[sgn]
                # neighbour perturbed: x_i fixed
                e = term.integrand(np.repeat(xi, k, axis=0), nn.reshape(-1, 3), Hn.reshape(-1), Kn.reshape(-1))
                diff_n = diff_n + sgn * e.reshape(N, k)
                diff_c = diff_c + sgn * term.integrand(xi + sgn * delta * eye[c], nc, Hc, Kc)
            gn = diff_n * (Ai[:, None] / (2 * delta)) * mask
            np.add.at(grads[ti][:, c], idx[mask], gn[mask])
            np.add.at(grads[ti][:, c], rows, diff_c * Ai / (2 * delta))


def shape_gradient(mesh: TriangleMesh, field: CurvatureField | None, spec: FunctionalSpec, fd_step=None) -> np.ndarray:
    """Per-vertex gradient (V, 3) of ``evaluate(mesh, field, spec)``.

    ``fd_step`` defaults to 1e-6 times the bounding-box diagonal.
    """
    if spec.kind == "area":
        return area_gradient(mesh)
    if spec.kind == "volume":
        return volume_gradient(mesh)
    if field is None:
        raise DomainError(f"{spec.kind} needs a curvature field")
    delta = FD_REL_STEP * mesh.bbox_diagonal() if fd_step is None else float(fd_step)
    if not delta > 0:
        raise DomainError("fd_step must be positive")
    terms = _terms(spec)
    grads, base = _local_fd(mesh, field, terms, delta)
    total = np.zeros_like(mesh.vertices)
    for term, g, e in zip(terms, grads, base):
        g = g + lumped_area_weighted_gradient(mesh, e)
        if term.outer is not None:
            _, d = term.outer(float(np.sum(e * field.lumped_area)))
            g = d * g
        total += g
    return total


def fd_gradient_bruteforce(fn, vertices, delta):
    """Plain central differences of ``fn(vertices)``; O(V) evaluations. Test oracle."""
    v = np.array(vertices, dtype=float)
    g = np.zeros_like(v)
    for i in range(len(v)):
        for c in range(3):
            old = v[i, c]
            v[i, c] = old + delta
            fp = fn(v)
            v[i, c] = old - delta
            fm = fn(v)
            v[i, c] = old
            g[i, c] = (fp - fm) / (2 * delta)
    return g
