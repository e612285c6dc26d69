"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict (see conftest.py) before
asserting, so the summary lists every criterion even when some fail.
"""

import math
import time

import numpy as np
import pytest

from ballshape import (
    Constraint,
    ConstraintSpec,
    Ellipsoid,
    Feasibility,
    FunctionalSpec,
    Icosphere,
    OptimizerConfig,
    PerturbationDecay,
    PerturbedSphere,
    SequenceSpec,
    Torus,
    certify_ball_condition,
    curvature_field,
    estimate_reach,
    evaluate,
    generate,
    isoperimetric_check,
    minimize,
    run_sequence,
)
from ballshape.certifier import curvature_bound_check, lipschitz_ratio
from ballshape.constants import f_eta, f_eta_inverse, f_inverse, f_of_alpha, g_inverse, g_of_eta, radii_table
from ballshape.errors import InfeasibleConstraints
from ballshape.gradients import area_gradient, fd_gradient_bruteforce, volume_gradient
from ballshape.mesh import TriangleMesh

FOUR_PI = 4 * math.pi
WILLMORE = FunctionalSpec.willmore()


def _field(shape):
    m = generate(shape)
    return m, curvature_field(m)


def test_criterion_01_sphere_geometry(acceptance):
    t0 = time.perf_counter()
    m, f = _field(Icosphere(1.0, 4))
    elapsed = time.perf_counter() - t0
    area_err = abs(m.area() / FOUR_PI - 1)
    vol_err = abs(m.volume() / (FOUR_PI / 3) - 1)
    dH = float(np.abs(f.H - 2).max())
    dK = float(np.abs(f.K - 1).max())
    ok = area_err <= 0.01 and vol_err <= 0.01 and dH <= 0.05 and dK <= 0.05 and elapsed <= 10
    acceptance(1, ok, f"area err {area_err:.2e}, volume err {vol_err:.2e}, max|H-2| {dH:.2e}, max|K-1| {dK:.2e}, {elapsed:.2f} s")
    assert ok


def test_criterion_02_gauss_bonnet(acceptance):
    s, fs = _field(Icosphere(1.0, 4))
    t, ft = _field(Torus(2.0, 0.5, 128, 64))
    G = FunctionalSpec.gauss_integral()
    gs, gt = evaluate(s, fs, G), evaluate(t, ft, G)
    ok = abs(gs / FOUR_PI - 1) <= 0.02 and abs(gt) <= 0.3 and s.genus() == 0 and t.genus() == 1
    acceptance(2, ok, f"sphere intK/4pi {gs / FOUR_PI:.5f}, torus intK {gt:.4f}, genus {s.genus()} and {t.genus()}")
    assert ok


def test_criterion_03_willmore(acceptance):
    s, fs = _field(Icosphere(1.0, 4))
    w_s = evaluate(s, fs, WILLMORE)
    scale_err = 0.0
    excess = []
    for shape in (Ellipsoid(1.5, 1.0, 0.8, 4), PerturbedSphere(1.0, 0.2, 2, 4), PerturbedSphere(1.0, 0.15, 3, 4)):
        m, f = _field(shape)
        w = evaluate(m, f, WILLMORE)
        assert m.genus() == 0
        excess.append(w / FOUR_PI)
        for lam in (0.5, 2.0, 10.0):
            ml = m.transformed(scale=lam)
            scale_err = max(scale_err, abs(evaluate(ml, curvature_field(ml), WILLMORE) - w) / w)
    ok = abs(w_s / FOUR_PI - 1) <= 0.02 and scale_err <= 1e-6 and all(x > 1 for x in excess)
    acceptance(
        3, ok, f"W(sphere)/4pi {w_s / FOUR_PI:.5f}, scale err {scale_err:.1e}, W/4pi on non-spheres {', '.join(f'{x:.4f}' for x in excess)}"
    )
    assert ok


def test_criterion_04_reach(acceptance):
    s, fs = _field(Icosphere(1.0, 4))
    t0 = time.perf_counter()
    r_s = estimate_reach(s, fs)
    dt_s = time.perf_counter() - t0
    t, ft = _field(Torus(2.0, 0.5, 128, 64))
    t0 = time.perf_counter()
    r_t = estimate_reach(t, ft)
    dt_t = time.perf_counter() - t0
    t0 = time.perf_counter()
    pass09 = certify_ball_condition(s, fs, 0.9).passed
    pass11 = certify_ball_condition(s, fs, 1.1).passed
    dt_c = time.perf_counter() - t0
    ok = 0.95 <= r_s <= 1.05 and 0.45 <= r_t <= 0.55 and pass09 and not pass11 and max(dt_s, dt_t, dt_c) <= 30
    acceptance(
        4, ok, f"reach sphere {r_s:.4f} ({dt_s:.1f} s), torus {r_t:.4f} ({dt_t:.1f} s), certify 0.9 {pass09}, 1.1 {pass11}"
    )
    assert ok


# ------------------------------------------------------- optimizer runs
@pytest.fixture(scope="module")
def willmore_descent():
    """Willmore descent from Ellipsoid(1.5, 1, 0.8) at epsilon 0.3; accepted iterates re-certified on fresh charts."""
    eps_acc = 0.3 * 0.98
    checks = []

    def recheck(it, mesh, _fld):
        f = curvature_field(mesh)
        checks.append(
            (it, certify_ball_condition(mesh, f, eps_acc).passed, curvature_bound_check(f, eps_acc), lipschitz_ratio(mesh, f, eps_acc))
        )

    mesh0 = generate(Ellipsoid(1.5, 1.0, 0.8, 3))
    cfg = OptimizerConfig(epsilon=0.3, max_iters=500, target_energy=1.03 * FOUR_PI, time_limit=600.0)
    t0 = time.perf_counter()
    out, trace = minimize(mesh0, WILLMORE, None, cfg, callback=recheck)
    elapsed = time.perf_counter() - t0
    w_fresh = evaluate(out, curvature_field(out), WILLMORE)
    return out, trace, checks, w_fresh, elapsed


def _sphere_like_area_volume():
    m = generate(Ellipsoid(1.5, 1.0, 0.8, 3))
    return m.transformed(scale=math.sqrt(FOUR_PI / m.area()))


@pytest.fixture(scope="module")
def helfrich_run():
    A0, V0 = FOUR_PI, 0.95 * FOUR_PI / 3
    cons = ConstraintSpec(
        (Constraint(FunctionalSpec.area(), "Equal", A0), Constraint(FunctionalSpec.volume(), "Equal", V0))
    )
    mesh0 = _sphere_like_area_volume()
    cfg = OptimizerConfig(epsilon=0.3, max_iters=40)
    out, trace = minimize(mesh0, FunctionalSpec.helfrich(0.0), cons, cfg)
    return mesh0, out, trace, (A0, V0)


def test_criterion_05_certified_bounds(acceptance, willmore_descent):
    worst_k = worst_l = 0.0
    n = 0
    cases = [
        (Icosphere(1.0, 4), 0.9),
        (Torus(2.0, 0.5, 128, 64), 0.45),
        (Ellipsoid(1.5, 1.0, 0.8, 4), None),
        (PerturbedSphere(1.0, 0.1, 2, 4), None),
        (Ellipsoid(1.5, 1.0, 0.8, 3), 0.3),
    ]
    for shape, eps in cases:
        m, f = _field(shape)
        eps = 0.98 * estimate_reach(m, f) if eps is None else eps
        c = certify_ball_condition(m, f, eps)
        assert c.passed, shape
        worst_k = max(worst_k, c.kappa_bound_max)
        worst_l = max(worst_l, c.lipschitz_max)
        n += 1
    # every accepted optimizer iterate that certified at 0.294
    _, _, checks, _, _ = willmore_descent
    for _, passed, kb, lr in checks:
        if passed:
            worst_k, worst_l, n = max(worst_k, kb), max(worst_l, lr), n + 1
    ok = worst_k <= 1.05 and worst_l <= 1.1
    acceptance(5, ok, f"{n} certified meshes: max eps*|kappa| {worst_k:.4f}, max eps*Lipschitz {worst_l:.4f}")
    assert ok


def test_criterion_06_constants(acceptance):
    worst_rt = 0.0
    bounds = True
    for eps in (0.01, 0.1, 1.0, 10.0):
        tab = radii_table(eps)
        worst_rt = max(
            worst_rt,
            abs(f_of_alpha(tab.f_inv) - eps) / eps,
            abs(g_of_eta(tab.g_inv) - eps) / eps,
            abs(f_eta(tab.f_eta_inv, eps, tab.g_inv) - eps) / eps,
        )
        a = f_inverse(eps)
        worst_rt = max(worst_rt, abs(f_inverse(f_of_alpha(a)) - a) / a)
        e = g_inverse(eps)
        worst_rt = max(worst_rt, abs(g_inverse(g_of_eta(e)) - e) / e)
        b = f_eta_inverse(eps, eps, e)
        worst_rt = max(worst_rt, abs(f_eta_inverse(f_eta(b, eps, e), eps, e) - b) / b)
        bounds &= tab.f_inv < eps / 2 and tab.g_inv < eps / 32 and tab.chart_radius > 0
    ok = worst_rt <= 1e-10 and bounds
    acceptance(6, ok, f"max round-trip error {worst_rt:.1e}, bounds hold {bounds}")
    assert ok


def test_criterion_07_isoperimetric_gate(acceptance):
    v1 = isoperimetric_check(FOUR_PI, FOUR_PI / 3)
    v2 = isoperimetric_check(FOUR_PI, 0.9 * FOUR_PI / 3)
    v3 = isoperimetric_check(1.0, 1.0)
    calls = []
    # the coarse mesh cannot certify at epsilon 5: refusal must come before that check
    mesh = generate(Icosphere(1.0, 1))
    refused = 0
    for A0, V0 in ((1.0, 1.0), (FOUR_PI, FOUR_PI / 3)):
        cons = ConstraintSpec((Constraint(FunctionalSpec.area(), "Equal", A0), Constraint(FunctionalSpec.volume(), "Equal", V0)))
        try:
            minimize(mesh, WILLMORE, cons, OptimizerConfig(epsilon=5.0), callback=lambda *a: calls.append(a))
        except InfeasibleConstraints:
            refused += 1
    ok = v1 is Feasibility.ONLY_BALL and v2 is Feasibility.FEASIBLE and v3 is Feasibility.INFEASIBLE and refused == 2 and not calls
    acceptance(7, ok, f"verdicts {v1.value}, {v2.value}, {v3.value}; minimize refused {refused}/2 before iterating")
    assert ok


def test_criterion_08_willmore_descent(acceptance, willmore_descent):
    out, trace, checks, w_fresh, elapsed = willmore_descent
    accepted = trace.accepted
    all_cert = bool(checks) and all(c[1] for c in checks)
    w_trace = accepted[-1].energy if accepted else float("inf")
    ok = (
        trace.reason == "target_energy"
        and len(trace) <= 500
        and w_fresh <= 1.03 * FOUR_PI
        and all_cert
        and len(checks) == len(accepted)
        and elapsed <= 600
    )
    acceptance(
        8,
        ok,
        f"W/4pi {w_fresh / FOUR_PI:.5f} (trace {w_trace / FOUR_PI:.5f}) after {len(trace)} iterations, "
        f"{sum(c[1] for c in checks)}/{len(checks)} accepted iterates certify at 0.294, {elapsed:.0f} s, stop {trace.reason}",
    )
    assert ok


def test_criterion_09_constrained_helfrich(acceptance, helfrich_run):
    mesh0, out, trace, (A0, V0) = helfrich_run
    ra = abs(out.area() - A0) / A0
    rv = abs(out.volume() - V0) / V0
    L = np.array([r.augmented_energy for r in trace.accepted])
    mono = bool(np.all(np.diff(L) <= 1e-12 * np.abs(L[:-1]).max())) if len(L) > 1 else True
    ok = ra <= 1e-3 and rv <= 1e-3 and mono and out.genus() == mesh0.genus() and len(L) > 0
    acceptance(
        9,
        ok,
        f"area viol {ra:.1e}, volume viol {rv:.1e}, augmented energy nonincreasing over {len(L)} accepted steps {mono}, "
        f"genus {mesh0.genus()} -> {out.genus()}",
    )
    assert ok


def test_criterion_10_perturbation_decay(acceptance):
    funcs = [
        FunctionalSpec.area(),
        FunctionalSpec.volume(),
        FunctionalSpec.mean_integral(),
        WILLMORE,
        FunctionalSpec.gauss_integral(),
    ]
    spec = SequenceSpec(PerturbationDecay.geometric(0.1, 7, 0.5, subdiv=3), funcs, epsilon=0.5)
    rep = run_sequence(spec)
    monotone = {}
    for name in ("area", "volume", "mean_integral", "willmore"):
        gaps = np.array([r.gaps[name] for r in rep.rows if r.hausdorff > 0])
        monotone[name] = bool(np.all(np.diff(gaps) < 0))
    g_dev = max(abs(r.values["gauss_integral"] / FOUR_PI - 1) for r in rep.rows)
    ok = all(monotone.values()) and g_dev <= 0.02
    acceptance(10, ok, f"strictly decreasing gaps {monotone}, max |intK/4pi - 1| {g_dev:.4f}")
    assert ok


def _random_mesh(rng):
    kind = rng.integers(3)
    if kind == 0:
        m = generate(Ellipsoid(*rng.uniform(0.5, 2.0, 3), int(rng.integers(1, 4))))
    elif kind == 1:
        m = generate(PerturbedSphere(rng.uniform(0.5, 2), rng.uniform(0, 0.5), int(rng.integers(1, 5)), int(rng.integers(1, 4))))
    else:
        r = rng.uniform(0.1, 0.5)
        m = generate(Torus(rng.uniform(0.6, 3.0), r, int(rng.integers(8, 40)), int(rng.integers(6, 20))))
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return m.transformed(rotation=q, translation=rng.normal(size=3) * 3, scale=rng.uniform(0.2, 5))


def test_criterion_11_oracle_equivalence(acceptance):
    rng = np.random.default_rng(20241015)
    vol_err = 0.0
    for _ in range(20):
        m = _random_mesh(rng)
        vol_err = max(vol_err, abs(m.volume() - m.signed_volume()) / abs(m.signed_volume()))
    grad_err = 0.0
    for shape in (Ellipsoid(1.3, 1.0, 0.7, 2), PerturbedSphere(1.0, 0.3, 3, 2), Torus(2.0, 0.6, 16, 10)):
        m = generate(shape)
        t = m.triangles
        for analytic, fn in (
            (area_gradient, lambda v: TriangleMesh(v, t).area()),
            (volume_gradient, lambda v: TriangleMesh(v, t).volume()),
        ):
            g = analytic(m)
            fd = fd_gradient_bruteforce(fn, m.vertices, 1e-5)
            grad_err = max(grad_err, np.linalg.norm(g - fd) / np.linalg.norm(g))
    ok = vol_err <= 1e-10 and grad_err <= 1e-6
    acceptance(11, ok, f"max divergence vs tetra-fan {vol_err:.1e} over 20 meshes, max analytic vs FD gradient {grad_err:.1e}")
    assert ok
