import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballshape.charts import curvature_field
from ballshape.errors import DomainError, ExpressionError, ParseError
from ballshape.functionals import (
    Constraint,
    ConstraintSpec,
    Feasibility,
    FunctionalSpec,
    Relation,
    diameter_diagnostic,
    evaluate,
    isoperimetric_check,
    parse_expression,
)
from ballshape.primitives import Icosphere, Torus, generate

FOUR_PI = 4 * math.pi


@pytest.fixture(scope="module")
def sphere():
    m = generate(Icosphere(2.0, 3))
    return m, curvature_field(m)


def test_sphere_values(sphere):
    m, f = sphere
    R = 2.0
    assert evaluate(m, f, FunctionalSpec.willmore()) == pytest.approx(FOUR_PI, rel=0.02)
    assert evaluate(m, f, FunctionalSpec.mean_integral()) == pytest.approx(2 / R * FOUR_PI * R * R, rel=0.02)
    assert evaluate(m, f, FunctionalSpec.gauss_integral()) == pytest.approx(FOUR_PI, rel=0.02)
    # (H - H0)^2 vanishes for H0 = 2 / R
    assert evaluate(m, f, FunctionalSpec.helfrich(1.0)) < 1e-2
    ch = evaluate(m, f, FunctionalSpec.canham_helfrich(k_b=2.0, H0=0.0, k_G=-1.0))
    assert ch == pytest.approx(evaluate(m, f, FunctionalSpec.helfrich()) - evaluate(m, f, FunctionalSpec.gauss_integral()))


def test_generic_matches_willmore(sphere):
    m, f = sphere
    g = FunctionalSpec.generic(j1="(* 0.25 (pow t 2))")
    assert evaluate(m, f, g) == pytest.approx(evaluate(m, f, FunctionalSpec.willmore()), rel=1e-12)
    # j0 = 1 integrates to the lumped area
    assert evaluate(m, f, FunctionalSpec.generic(j0="1")) == pytest.approx(f.lumped_area.sum())


def test_vesicle_energy_penalty(sphere):
    m, f = sphere
    M = evaluate(m, f, FunctionalSpec.mean_integral())
    base = evaluate(m, f, FunctionalSpec.canham_helfrich())
    v = evaluate(m, f, FunctionalSpec.vesicle_energy(k_m=3.0, M0=M - 1.0))
    assert v == pytest.approx(base + 3.0)


def test_kG_warning(sphere):
    m, f = sphere
    with pytest.warns(RuntimeWarning):
        evaluate(m, f, FunctionalSpec.canham_helfrich(k_G=1.0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        evaluate(m, f, FunctionalSpec.canham_helfrich(k_G=-1.0))


def test_torus_gauss_integral():
    m = generate(Torus(2.0, 0.5, 64, 32))
    assert abs(evaluate(m, curvature_field(m), FunctionalSpec.gauss_integral())) < 0.3


def test_spec_validation():
    with pytest.raises(DomainError):
        FunctionalSpec("bending")
    with pytest.raises(DomainError):
        FunctionalSpec("helfrich", {"k_b": 1.0})
    with pytest.raises(DomainError):
        FunctionalSpec.canham_helfrich(k_b=0.0)
    with pytest.raises(DomainError):
        FunctionalSpec("willmore", j0="1")
    with pytest.raises(ParseError):
        FunctionalSpec.from_dict({"params": {}})
    assert FunctionalSpec("GaussIntegral").kind == "gauss_integral"


@settings(max_examples=50)
@given(st.sampled_from(["helfrich", "canham_helfrich", "vesicle_energy"]), st.floats(-5, 5))
def test_spec_dict_roundtrip(kind, H0):
    s = FunctionalSpec(kind, {"H0": H0})
    assert FunctionalSpec.from_dict(s.to_dict()) == s


@pytest.mark.parametrize(
    "text",
    ["", "(", "(+ 1", "(foo 1 2)", "(/ 1)", "x9", "+", "(+ 1 2) 3", "inf"],
)
def test_bad_expressions(text):
    with pytest.raises(ExpressionError):
        parse_expression(text)


@settings(max_examples=100)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_expression_arithmetic(a, b):
    env = {"t": np.array([a]), "x0": np.array([b])}
    e = parse_expression("(- (* 2 t) (abs x0))")
    assert e(env)[0] == pytest.approx(2 * a - abs(b))
    assert set(e.variables) == {"t", "x0"}


def test_division_by_zero_reports_vertex():
    e = parse_expression("(/ 1 t)")
    with pytest.raises(ExpressionError) as info:
        e({"t": np.array([1.0, 0.0, 2.0])})
    assert info.value.vertex == 1


def test_isoperimetric_verdicts():
    assert isoperimetric_check(FOUR_PI, FOUR_PI / 3) is Feasibility.ONLY_BALL
    assert isoperimetric_check(FOUR_PI, 0.9 * FOUR_PI / 3) is Feasibility.FEASIBLE
    assert isoperimetric_check(1.0, 1.0) is Feasibility.INFEASIBLE
    with pytest.raises(DomainError):
        isoperimetric_check(-1.0, 1.0)


@settings(max_examples=100)
@given(st.floats(1e-3, 1e3), st.floats(0.01, 0.99))
def test_isoperimetric_scale_free(R, frac):
    A = FOUR_PI * R * R
    V = 4 / 3 * math.pi * R**3
    assert isoperimetric_check(A, V * frac) is Feasibility.FEASIBLE
    assert isoperimetric_check(A, V / frac) is Feasibility.INFEASIBLE


def test_constraints():
    c = Constraint(FunctionalSpec.volume(), "<=", 2.0)
    assert c.relation is Relation.LESS_EQUAL
    assert c.violation(1.0) == 0 and c.violation(2.5) == 0.5
    e = Constraint(FunctionalSpec.area(), "Equal", 10.0, tolerance=1e-3)
    assert e.satisfied(10.005) and not e.satisfied(10.02)
    spec = ConstraintSpec((c, e))
    back = ConstraintSpec.from_list(spec.to_list())
    assert back == spec
    assert spec.area_volume_targets() == (10.0, None)
    with pytest.raises(ParseError):
        ConstraintSpec.from_list({"a": 1})
    with pytest.raises(DomainError):
        Constraint(FunctionalSpec.area(), "sometimes", 1.0)


def test_diameter_diagnostic(sphere):
    m, f = sphere
    d, ratio = diameter_diagnostic(m, f)
    assert d == pytest.approx(4.0, rel=1e-3)
    assert ratio == pytest.approx(4.0 / math.sqrt(FOUR_PI * 4 * FOUR_PI), rel=0.02)
