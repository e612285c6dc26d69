"""Constrained shape minimization over meshes satisfying the ball condition.

The working mesh keeps its connectivity (so the genus never changes) and
only vertex positions move. Equality constraints are handled by an
augmented Lagrangian

    L(x) = E(x) - sum_k lam_k c_k(x) + mu / 2 * sum_k c_k(x)^2,

inequalities by the quadratic penalty mu / 2 * max(0, c_k)^2. Each iteration
takes a smoothed, normal-projected descent direction, then backtracks until
the Armijo condition holds *and* the trial mesh certifies the ball condition
at eps (1 - reach_slack). Multipliers are updated every ``al_update_every``
iterations; chart neighbourhoods are rebuilt at the same moments so that the
augmented energy is a fixed function between updates.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import factorized

from .certifier import certify_ball_condition
from .charts import (
    CurvatureField,
    adaptive_neighborhoods,
    curvature_field,
)
from .errors import (
    BallShapeError,
    ChartError,
    DegenerateFace,
    DomainError,
    InfeasibleConstraints,
    InitialMeshNotCertified,
    Stalled,
)
from .functionals import (
    ConstraintSpec,
    Feasibility,
    FunctionalSpec,
    Relation,
    diameter_diagnostic,
    evaluate,
    gauss_integral,
    isoperimetric_check,
)
from .gradients import area_gradient, shape_gradient, volume_gradient
from .mesh import TriangleMesh
from .primitives import Ellipsoid, Icosphere, PerturbedSphere, Torus, generate  # noqa: F401

logger = logging.getLogger(__name__)

GRAD_TOL = 1e-6
MAX_SHRINKS = 25
DIAMETER_CAP = 10.0
GAUSS_BONNET_DRIFT = 0.02
RESTORE_DAMPING = 1e-6
TANGENT_RELAX = 0.25


@dataclass
class OptimizerConfig:
    """Tuning of :func:`minimize`.

    ``step`` is the largest vertex displacement of the first trial step;
    ``fd_step`` defaults to 1e-6 times the bounding-box diagonal.
    ``smoothing`` is the Sobolev length (in mean edge lengths) used to
    smooth the descent direction.
    """

    epsilon: float = 0.3
    step: float = 0.02
    max_iters: int = 500
    fd_step: float | None = None
    al_mu: float = 10.0
    al_mu_growth: float = 2.0
    al_update_every: int = 10
    reach_slack: float = 0.02
    armijo_c: float = 1e-4
    step_shrink: float = 0.5
    min_step: float = 1e-10
    seed: int = 0
    smoothing: float = 8.0
    target_energy: float | None = None
    time_limit: float | None = None

    def __post_init__(self):
        for name in ("epsilon", "step", "al_mu", "al_mu_growth", "armijo_c", "step_shrink", "min_step"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.fd_step is not None and not self.fd_step > 0:
            raise DomainError("fd_step must be positive")
        if not (0 < self.reach_slack < 0.5):
            raise DomainError("reach_slack must lie in (0, 0.5)")
        if not self.step_shrink < 1:
            raise DomainError("step_shrink must be below 1")
        if self.max_iters < 0 or self.al_update_every < 1:
            raise DomainError("max_iters >= 0 and al_update_every >= 1 required")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise DomainError(f"bad optimizer config: {exc}") from None


@dataclass
class TraceRecord:
    iteration: int
    energy: float
    augmented_energy: float
    violations: list
    multipliers: dict
    step: float
    accepted: bool
    certified_epsilon_margin: float
    epoch: int = 0


@dataclass
class OptimizationTrace:
    """Per-iteration records plus the termination reason."""

    records: list = field(default_factory=list)
    reason: str = ""
    elapsed: float = 0.0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def accepted(self):
        return [r for r in self.records if r.accepted]

    def to_list(self):
        return [asdict(r) for r in self.records]


# ------------------------------------------------------------------ pieces
class _Problem:
    """Objective, constraints and multipliers evaluated on a fixed chart topology."""

    def __init__(self, objective, constraints, mu):
        self.objective = objective
        self.constraints = list(constraints)
        self.lam = np.zeros(len(self.constraints))
        self.mu = float(mu)
        self.needs_field = objective.needs_curvature or any(c.functional.needs_curvature for c in self.constraints)

    def values(self, mesh, fld):
        e = evaluate(mesh, fld, self.objective)
        c = np.array([evaluate(mesh, fld, k.functional) for k in self.constraints])
        return e, c

    def residuals(self, cvals):
        r = np.empty(len(self.constraints))
        for i, (k, v) in enumerate(zip(self.constraints, cvals)):
            r[i] = k.violation(v)
        return r

    def augmented(self, e, cvals):
        L = e
        for i, k in enumerate(self.constraints):
            r = cvals[i] - k.target
            if k.relation is Relation.EQUAL:
                L += -self.lam[i] * r + 0.5 * self.mu * r * r
            else:
                L += 0.5 * self.mu * max(0.0, r) ** 2
        return L

    def weights(self, cvals):
        """d L / d c_k at the current multipliers."""
        w = np.zeros(len(self.constraints))
        for i, k in enumerate(self.constraints):
            r = cvals[i] - k.target
            w[i] = -self.lam[i] + self.mu * r if k.relation is Relation.EQUAL else self.mu * max(0.0, r)
        return w

    def active(self, cvals):
        """Constraints that bind: all equalities and violated inequalities."""
        return np.array(
            [k.relation is Relation.EQUAL or cvals[i] > k.target for i, k in enumerate(self.constraints)], dtype=bool
        )

    def gradients(self, mesh, fld, fd_step):
        gE = shape_gradient(mesh, fld, self.objective, fd_step)
        gC = [shape_gradient(mesh, fld, k.functional, fd_step) for k in self.constraints]
        return gE, gC

    def feasible(self, cvals):
        return all(k.satisfied(v) for k, v in zip(self.constraints, cvals))

    def multipliers(self):
        return {"lambda": [float(v) for v in self.lam], "mu": self.mu}


def _smoother(mesh: TriangleMesh, length: float):
    """Factorized K = I + l^2 L (graph Laplacian in mean-edge units) and the lumped areas."""
    A = mesh.vertex_adjacency.astype(float)
    deg = np.asarray(A.sum(axis=1)).ravel()
    K = sparse.identity(mesh.n_vertices) + length**2 * (sparse.diags(deg) - A)
    return factorized(K.tocsc()), mesh.lumped_areas


def _apply(smoother, x):
    """x -> M^-1/2 K^-2 M^-1/2 x, column-wise."""
    solve, area = smoother
    sq = np.sqrt(area)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return solve(solve(x / sq)) / sq
    return np.column_stack([solve(solve(c / sq)) / sq for c in x.T])


def _direction(prob, fld, gE, gC, cvals, smoother, max_restore=np.inf):
    """Normal descent direction for the augmented Lagrangian.

    Scalar normal speeds are smoothed by S = M^-1/2 K^-2 M^-1/2, with
    K = I + l^2 L the graph Laplacian in mean-edge units. S is symmetric
    positive definite and applies K twice: a single H1 solve in two
    dimensions still leaves a logarithmic peak at every spike of the
    gradient, and the discrete gradient of a curvature energy is spiky at
    irregular vertices.

    The objective part is projected (in the S metric) onto the tangent space
    of the binding constraints and combined with a Gauss-Newton restoration
    step that zeroes the residuals to first order. Should that combination
    not descend L, the Gauss-Newton preconditioned gradient
    (S^-1 + mu C^T C)^-1 grad L is used instead, which always does.

    Returns (direction as (V, 3), its restoration part as (V, 3), projected
    objective gradient norm). The objective part is scaled to unit max
    displacement; the restoration part is in natural units, capped at
    ``max_restore``.
    """
    n = fld.normal
    ge = np.einsum("ij,ij->i", gE, n)
    act = prob.active(cvals)
    C = np.array([np.einsum("ij,ij->i", g, n) for g, a in zip(gC, act) if a]).reshape(-1, len(ge))
    r = np.array([cvals[i] - k.target for i, k in enumerate(prob.constraints) if act[i]])
    w = prob.weights(cvals)
    gl = ge + sum((w[i] * np.einsum("ij,ij->i", gC[i], n) for i in range(len(gC))), np.zeros_like(ge))

    Sge = _apply(smoother, ge)
    if len(C):
        SC = _apply(smoother, C.T)
        G = C @ SC
        # Levenberg-Marquardt damping: area and volume gradients are parallel on a sphere
        Gd = G + RESTORE_DAMPING * np.trace(G) * np.eye(len(G))
        try:
            lam_e = np.linalg.solve(Gd, C @ Sge)
            proj = Sge - SC @ lam_e
            rest = -SC @ np.linalg.solve(Gd, r)
        except np.linalg.LinAlgError:
            proj, rest = Sge, np.zeros_like(ge)
        big = np.abs(rest).max()
        if big > max_restore:
            rest *= max_restore / big
    else:
        SC = G = None
        proj, rest = Sge, np.zeros_like(ge)
    pnorm = float(np.sqrt(max(float(ge @ proj), 0.0)))
    pmax = np.abs(proj).max()
    dn = -proj / pmax if pmax > 0 else np.zeros_like(ge)
    if float(gl @ (dn + rest)) < 0 or not np.any(dn + rest):
        return dn[:, None] * n, rest[:, None] * n, pnorm
    # fallback: preconditioned gradient of L, via the Woodbury identity
    Sgl = _apply(smoother, gl)
    if len(C):
        Sgl = Sgl - SC @ np.linalg.solve(np.eye(len(C)) / prob.mu + G, C @ Sgl)
    m = np.abs(Sgl).max()
    dn = -Sgl / m if m > 0 else Sgl
    return dn[:, None] * n, np.zeros_like(n), pnorm


_MESH_MEASURES = {"area": (TriangleMesh.area, area_gradient), "volume": (TriangleMesh.volume, volume_gradient)}
PROJECT_ITERS = 4


def _project(prob, mesh, normal, smoother):
    """Pull binding area/volume equalities back onto their targets.

    Gauss-Newton along smoothed normal speeds, using the exact mesh measures
    and their analytic gradients. Returns the new mesh (unchanged when some
    binding constraint is not a mesh measure).
    """
    cons = [k for k in prob.constraints if k.relation is Relation.EQUAL]
    if not cons or any(k.functional.kind not in _MESH_MEASURES or k.functional.params for k in cons):
        return mesh
    for _ in range(PROJECT_ITERS):
        r = np.array([_MESH_MEASURES[k.functional.kind][0](mesh) - k.target for k in cons])
        if all(abs(ri) <= 1e-12 * max(1.0, abs(k.target)) for ri, k in zip(r, cons)):
            break
        C = np.array([np.einsum("ij,ij->i", _MESH_MEASURES[k.functional.kind][1](mesh), normal) for k in cons])
        SC = _apply(smoother, C.T)
        G = C @ SC
        try:
            beta = np.linalg.solve(G + RESTORE_DAMPING * np.trace(G) * np.eye(len(G)), r)
        except np.linalg.LinAlgError:
            break
        mesh = mesh.with_vertices(mesh.vertices - (SC @ beta)[:, None] * normal)
    return mesh


def _tangential_drift(mesh: TriangleMesh, normal):
    """Tangential part of the uniform Laplacian: pulls vertices towards their ring centroids.

    Normal-only motion stretches the sampling wherever the surface retracts
    (ellipsoid tips, say) until the frozen charts there overfit.
    """
    A = mesh.vertex_adjacency
    deg = np.asarray(A.sum(axis=1)).ravel()
    lap = (A @ mesh.vertices) / deg[:, None] - mesh.vertices
    return lap - np.einsum("ij,ij->i", lap, normal)[:, None] * normal


def _try_field(mesh, candidates, degrees=None):
    nb, _ = adaptive_neighborhoods(mesh, candidates=candidates)
    return curvature_field(mesh, neighborhoods=nb, degrees=degrees)


def _certify(mesh, fld, eps):
    cert = certify_ball_condition(mesh, fld, eps)
    return cert.passed, cert.min_clearance + cert.tolerance


# --------------------------------------------------------------- minimize
def minimize(mesh0: TriangleMesh, objective: FunctionalSpec, constraints=None, config: OptimizerConfig | None = None, callback=None):
    """Minimize ``objective`` under ``constraints`` over certified meshes.

    Parameters
    ----------
    callback : callable, optional
        Called as ``callback(iteration, mesh, field)`` after every accepted step.

    Returns
    -------
    (TriangleMesh, OptimizationTrace)
        The last accepted mesh and the per-iteration trace.

    Raises
    ------
    InfeasibleConstraints
        Area and volume equality targets violate the isoperimetric inequality
        (or force the round ball); raised before any iteration.
    InitialMeshNotCertified
        ``mesh0`` fails the ball condition at ``config.epsilon``.
    Stalled
        A line search shrank 25 times without finding a certified trial mesh.
    """
    config = config or OptimizerConfig()
    constraints = constraints if constraints is not None else ConstraintSpec()
    if not isinstance(constraints, ConstraintSpec):
        constraints = ConstraintSpec(tuple(constraints))
    A0, V0 = constraints.area_volume_targets()
    if A0 is not None and V0 is not None:
        verdict = isoperimetric_check(A0, V0)
        if verdict is not Feasibility.FEASIBLE:
            raise InfeasibleConstraints(f"area {A0} and volume {V0} are {verdict.value} under the isoperimetric inequality")

    t_start = time.perf_counter()
    eps = float(config.epsilon)
    eps_acc = eps * (1.0 - config.reach_slack)
    _, cand = adaptive_neighborhoods(mesh0)
    fld = _try_field(mesh0, cand)
    if not certify_ball_condition(mesh0, fld, eps).passed:
        raise InitialMeshNotCertified(f"initial mesh does not certify at epsilon = {eps}")

    prob = _Problem(objective, constraints, config.al_mu)
    fd_step = config.fd_step if config.fd_step is not None else 1e-6 * mesh0.bbox_diagonal()
    diam0 = mesh0.diameter()
    genus = mesh0.genus()
    gb_target = 4 * math.pi * (1 - genus)

    mesh = mesh0
    e, cvals = prob.values(mesh, fld)
    L = prob.augmented(e, cvals)
    _, margin = _certify(mesh, fld, eps_acc)
    smoother = _smoother(mesh, config.smoothing)
    trace = OptimizationTrace()
    alpha = config.step
    last_viol = np.abs(prob.residuals(cvals))
    reason = "max_iters"

    epoch = 0

    def rebuild(m):
        _, n_ = adaptive_neighborhoods(m)
        f_ = _try_field(m, n_)
        e_, c_ = prob.values(m, f_)
        return n_, f_, e_, c_, prob.augmented(e_, c_), _smoother(m, config.smoothing)

    for it in range(config.max_iters):
        if config.time_limit is not None and time.perf_counter() - t_start > config.time_limit:
            reason = "time_limit"
            break
        if config.target_energy is not None and e <= config.target_energy and prob.feasible(cvals):
            # confirm on charts built for the current mesh, not the epoch's frozen ones
            cand, fld, e, cvals, L, smoother = rebuild(mesh)
            epoch += 1
            if e <= config.target_energy and prob.feasible(cvals):
                reason = "target_energy"
                break
        if it > 0 and it % config.al_update_every == 0:
            # multiplier step, penalty growth on stalled violation, fresh chart topology
            viol = np.abs(prob.residuals(cvals))
            for i, k in enumerate(prob.constraints):
                if k.relation is Relation.EQUAL:
                    prob.lam[i] -= prob.mu * (cvals[i] - k.target)
            if not prob.feasible(cvals) and np.any(viol > 0.25 * last_viol):
                prob.mu *= config.al_mu_growth
            last_viol = viol
            cand, fld, e, cvals, L, smoother = rebuild(mesh)
            epoch += 1

        gE, gC = prob.gradients(mesh, fld, fd_step)
        d, rest, pnorm = _direction(prob, fld, gE, gC, cvals, smoother, config.step)
        if pnorm < GRAD_TOL and prob.feasible(cvals):
            reason = "gradient"
            break
        grad = gE + sum((wk * g for wk, g in zip(prob.weights(cvals), gC)), np.zeros_like(gE))
        # at alpha = config.step the restoration part is taken in full
        d = d + rest / config.step
        slope = float(np.sum(grad * d))
        tang = TANGENT_RELAX * _tangential_drift(mesh, fld.normal) / config.step
        tslope = float(np.sum(grad * tang))
        if slope < 0 and tslope <= 0.5 * abs(slope):
            d = d + tang
            slope += tslope
        if not slope < 0:
            reason = "gradient"
            break
        accepted = False
        shrinks = 0
        cert_fail = 0
        alpha = min(2.0 * alpha, config.step)
        while alpha >= config.min_step and shrinks < MAX_SHRINKS:
            try:
                trial = _project(prob, mesh.with_vertices(mesh.vertices + alpha * d), fld.normal, smoother)
                tfld = _try_field(trial, cand, fld.degree)  # jet degrees stay fixed within an epoch
                te, tc = prob.values(trial, tfld)
            except (ChartError, DegenerateFace, BallShapeError) as exc:
                logger.debug("trial rejected: %s", exc)
                alpha *= config.step_shrink
                shrinks += 1
                cert_fail += 1
                continue
            tL = prob.augmented(te, tc)
            if tL <= L + config.armijo_c * alpha * slope:
                ok, tmargin = _certify(trial, tfld, eps_acc)
                if ok:
                    accepted = True
                    break
                logger.debug("alpha %.3g: certification margin %.3g", alpha, tmargin)
                cert_fail += 1
            else:
                logger.debug("alpha %.3g: Armijo dL=%.3g wanted %.3g", alpha, tL - L, config.armijo_c * alpha * slope)
            alpha *= config.step_shrink
            shrinks += 1

        if accepted:
            mesh, fld, e, cvals, L, margin = trial, tfld, te, tc, tL, tmargin
            if callback is not None:
                callback(it, mesh, fld)
        trace.records.append(
            TraceRecord(
                iteration=it,
                energy=float(e),
                augmented_energy=float(L),
                violations=[float(v) for v in prob.residuals(cvals)],
                multipliers=prob.multipliers(),
                step=float(alpha),
                accepted=accepted,
                certified_epsilon_margin=float(margin),
                epoch=epoch,
            )
        )
        logger.info("iter %d E=%.6g L=%.6g step=%.3g %s", it, e, L, alpha, "ok" if accepted else "rejected")
        if not accepted:
            if shrinks >= MAX_SHRINKS and cert_fail == shrinks:
                trace.reason = "stalled"
                trace.elapsed = time.perf_counter() - t_start
                raise Stalled(f"no certifiable step after {MAX_SHRINKS} shrinks at iteration {it}")
            reason = "min_step"
            break
        if prob.needs_field:
            drift = abs(gauss_integral(mesh, fld) - gb_target)
            if drift > GAUSS_BONNET_DRIFT * 4 * math.pi:
                logger.warning("Gauss-Bonnet drift %.3g at iteration %d", drift, it)
        if mesh.diameter() > DIAMETER_CAP * diam0:
            reason = "diameter"
            break
    trace.reason = reason
    trace.elapsed = time.perf_counter() - t_start
    return mesh, trace


# ------------------------------------------------------- continuity table
@dataclass
class ContinuityRow:
    index: int
    hausdorff: float
    char_fn: float
    value: float
    gap: float


def continuity_experiment(sequence, spec: FunctionalSpec, limit: TriangleMesh | None = None, grid_res=48):
    """Distances to the limit mesh and functional gaps along a sequence.

    The last element is the limit unless ``limit`` is given.
    """
    from .mesh import char_fn_distance, hausdorff_distance

    seq = list(sequence)
    if len(seq) < 2 and limit is None:
        raise DomainError("need at least two meshes")
    lim = limit if limit is not None else seq[-1]
    lim_field = curvature_field(lim) if spec.needs_curvature else None
    lim_val = evaluate(lim, lim_field, spec)
    rows = []
    for i, m in enumerate(seq):
        f = curvature_field(m) if spec.needs_curvature else None
        v = evaluate(m, f, spec)
        rows.append(
            ContinuityRow(
                index=i,
                hausdorff=hausdorff_distance(m, lim),
                char_fn=char_fn_distance(m, lim, grid_res=grid_res),
                value=v,
                gap=abs(v - lim_val),
            )
        )
    return rows
