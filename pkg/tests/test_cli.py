import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballshape.cli import dumps, main


@pytest.fixture(scope="module")
def sphere_off(tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "s.off"
    assert main(["generate", "icosphere", "--radius", "1", "--subdiv", "3", "--out", str(p), "--quiet"]) == 0
    return p


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_eval_willmore(sphere_off, capsys):
    assert main(["eval", "--mesh", str(sphere_off), "--kind", "willmore"]) == 0
    assert _json(capsys)["value"] == pytest.approx(4 * math.pi, rel=0.02)


def test_certify_exit_codes(sphere_off, capsys, tmp_path):
    assert main(["certify", "--mesh", str(sphere_off), "--epsilon", "1.1"]) == 1
    assert _json(capsys)["passed"] is False
    out = tmp_path / "c.json"
    assert main(["certify", "--mesh", str(sphere_off), "--epsilon", "0.9", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["passed"] is True


def test_radii(capsys):
    assert main(["radii", "--epsilon", "1"]) == 0
    assert _json(capsys)["f_inv"] < 0.5
    assert main(["radii", "--epsilon", "1", "--epsilon", "0.1"]) == 0
    assert len(_json(capsys)) == 2


def test_reach(sphere_off, capsys):
    assert main(["reach", "--mesh", str(sphere_off)]) == 0
    assert _json(capsys)["reach"] == pytest.approx(1.0, abs=0.05)


def test_eval_spec_and_field(sphere_off, tmp_path, capsys):
    spec = tmp_path / "f.json"
    spec.write_text(json.dumps({"kind": "helfrich", "H0": 2.0}))
    field = tmp_path / "field.csv"
    assert main(["eval", "--mesh", str(sphere_off), "--spec", str(spec), "--field", str(field)]) == 0
    assert _json(capsys)["value"] < 0.05
    lines = field.read_text().splitlines()
    assert lines[0] == "vertex,H,K,kappa1,kappa2,area" and len(lines) == 643


def test_error_exit_codes(tmp_path, capsys):
    assert main(["eval", "--mesh", str(tmp_path / "missing.off"), "--kind", "area"]) == 2
    assert main(["radii", "--epsilon", "-1"]) == 2
    assert main(["bogus"]) == 2
    bad = tmp_path / "bad.off"
    bad.write_text("OFF\n1 1 0\n0 0\n")
    assert main(["eval", "--mesh", str(bad), "--kind", "area"]) == 2
    assert main(["eval", "--mesh", str(tmp_path / "x.off"), "--kind", "nonsense"]) == 2
    capsys.readouterr()


def test_domain_error_exit(sphere_off, capsys):
    assert main(["eval", "--mesh", str(sphere_off), "--kind", "nonsense"]) == 1
    assert "DomainError" in capsys.readouterr().err


def test_minimize_infeasible(sphere_off, tmp_path, capsys):
    obj = tmp_path / "w.json"
    obj.write_text(json.dumps({"kind": "willmore"}))
    cons = tmp_path / "c.json"
    cons.write_text(json.dumps([
        {"functional": {"kind": "area"}, "relation": "Equal", "target": 1.0},
        {"functional": {"kind": "volume"}, "relation": "Equal", "target": 1.0},
    ]))
    rc = main(["minimize", "--mesh", str(sphere_off), "--objective", str(obj), "--constraints", str(cons), "--out", str(tmp_path / "o.off")])
    assert rc == 1
    assert "InfeasibleConstraints" in capsys.readouterr().err


def test_minimize_and_converge(tmp_path, capsys):
    mesh = tmp_path / "e.off"
    main(["generate", "ellipsoid", "--a", "1.5", "--b", "1", "--c", "0.8", "--subdiv", "3", "--out", str(mesh), "--quiet"])
    obj = tmp_path / "w.json"
    obj.write_text(json.dumps({"kind": "willmore"}))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilon": 0.3, "max_iters": 2}))
    trace = tmp_path / "trace.json"
    capsys.readouterr()
    rc = main(["minimize", "--mesh", str(mesh), "--objective", str(obj), "--config", str(cfg), "--out", str(tmp_path / "o.obj"), "--trace", str(trace), "--quiet"])
    assert rc == 0
    assert _json(capsys)["iterations"] == 2
    assert len(json.loads(trace.read_text())) == 2
    spec = tmp_path / "seq.json"
    spec.write_text(json.dumps({"family": {"type": "PerturbationDecay", "amp0": 0.1, "n": 3, "subdiv": 2}, "functionals": ["area"], "char_fn_res": 16}))
    out = tmp_path / "rep.json"
    assert main(["converge", "--spec", str(spec), "--out", str(out), "--quiet"]) == 0
    assert len(json.loads(out.read_text())["rows"]) == 3
    assert (tmp_path / "rep.csv").exists()


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("BALLSHAPE_THREADS", "1")
    assert main(["radii", "--epsilon", "0.5"]) == 0
    monkeypatch.setenv("BALLSHAPE_THREADS", "many")
    assert main(["radii", "--epsilon", "0.5"]) == 2
    capsys.readouterr()


@settings(max_examples=300)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_dumps_roundtrips_floats(x):
    assert json.loads(dumps({"v": [x, 1]}))["v"][0] == x


def test_dumps_nonfinite():
    assert json.loads(dumps({"a": float("nan"), "b": [float("inf")]})) == {"a": None, "b": [None]}
