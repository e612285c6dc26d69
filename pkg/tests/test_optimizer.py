import json
import math

import numpy as np
import pytest

from ballshape.errors import DomainError, InfeasibleConstraints, InitialMeshNotCertified
from ballshape.functionals import Constraint, ConstraintSpec, FunctionalSpec
from ballshape.optimizer import OptimizerConfig, continuity_experiment, minimize
from ballshape.primitives import Ellipsoid, Icosphere, PerturbedSphere, generate

FOUR_PI = 4 * math.pi


@pytest.fixture(scope="module")
def short_run():
    calls = []
    m = generate(Ellipsoid(1.5, 1.0, 0.8, 3))
    out, trace = minimize(m, FunctionalSpec.willmore(), None, OptimizerConfig(epsilon=0.3, max_iters=4), callback=lambda *a: calls.append(a))
    return m, out, trace, calls


def test_descent_decreases_energy(short_run):
    m, out, trace, calls = short_run
    E = [r.energy for r in trace.accepted]
    assert len(E) >= 2
    assert np.all(np.diff(E) <= 0)
    assert E[-1] < 1.16 * FOUR_PI
    assert len(calls) == len(trace.accepted)
    assert out.genus() == m.genus() and out.n_vertices == m.n_vertices


def test_trace_serializable(short_run):
    _, _, trace, _ = short_run
    rows = json.loads(json.dumps(trace.to_list()))
    assert rows[0].keys() >= {"iteration", "energy", "augmented_energy", "violations", "multipliers", "step", "accepted", "certified_epsilon_margin"}
    assert all(r["certified_epsilon_margin"] >= 0 for r in rows if r["accepted"])
    assert trace.reason == "max_iters"


def test_refuses_before_certifying():
    m = generate(Icosphere(1.0, 1))
    cons = ConstraintSpec((Constraint(FunctionalSpec.area(), "Equal", 1.0), Constraint(FunctionalSpec.volume(), "Equal", 1.0)))
    with pytest.raises(InfeasibleConstraints):
        minimize(m, FunctionalSpec.willmore(), cons, OptimizerConfig(epsilon=50.0))


def test_initial_mesh_not_certified():
    m = generate(Icosphere(1.0, 2))
    with pytest.raises(InitialMeshNotCertified):
        minimize(m, FunctionalSpec.willmore(), None, OptimizerConfig(epsilon=1.5))


def test_zero_iterations_returns_input():
    m = generate(Icosphere(1.0, 2))
    out, trace = minimize(m, FunctionalSpec.area(), None, OptimizerConfig(epsilon=0.5, max_iters=0))
    assert out is m and len(trace) == 0


def test_area_descent_respects_volume():
    # shrink area at fixed volume: the ellipsoid rounds off and volume is held
    m = generate(Ellipsoid(1.3, 1.0, 0.9, 2))
    V0 = m.volume()
    cons = ConstraintSpec((Constraint(FunctionalSpec.volume(), "Equal", V0),))
    out, trace = minimize(m, FunctionalSpec.area(), cons, OptimizerConfig(epsilon=0.3, max_iters=6))
    assert out.area() < m.area()
    assert abs(out.volume() - V0) <= 1e-3 * V0


def test_config_validation():
    with pytest.raises(DomainError):
        OptimizerConfig(epsilon=0)
    with pytest.raises(DomainError):
        OptimizerConfig(step_shrink=1.5)
    with pytest.raises(DomainError):
        OptimizerConfig.from_dict({"nope": 1})
    assert OptimizerConfig.from_dict({"epsilon": 0.2}).epsilon == 0.2


def test_continuity_experiment():
    seq = [generate(PerturbedSphere(1.0, a, 2, 2)) for a in (0.2, 0.1, 0.05)]
    limit = generate(PerturbedSphere(1.0, 0.0, 2, 2))
    rows = continuity_experiment(seq, FunctionalSpec.area(), limit=limit, grid_res=24)
    assert len(rows) == 3
    d = [r.hausdorff for r in rows]
    assert d[0] > d[1] > d[2] > 0
