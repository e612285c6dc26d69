"""Geometric energies on a mesh with a curvature field.

All curvature integrals use vertex-lumped quadrature
``sum_v e(v) * A_v`` with barycentric areas ``A_v``. Area and Volume are the
exact measures of the triangle mesh.

Generic functionals take three prefix (s-expression) strings::

    j0(x, n)   e.g. "(* 0.5 (pow x2 2))"
    j1(x, n, t) with t = H
    j2(x, n, t) with t = K

over the variables ``x0 x1 x2 n0 n1 n2 t`` and constants (numbers, ``pi``,
``e``). Operators: ``+ - * / pow abs min max``. No convexity check is made;
lower semicontinuity needs convexity in ``t`` and is the caller's
responsibility.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import re
import warnings
from dataclasses import dataclass, field

import numpy as np

from .charts import CurvatureField
from .errors import DomainError, ExpressionError, ParseError
from .mesh import TriangleMesh

logger = logging.getLogger(__name__)

KINDS = (
    "area",
    "volume",
    "willmore",
    "helfrich",
    "canham_helfrich",
    "gauss_integral",
    "mean_integral",
    "vesicle_energy",
    "generic",
)

_PARAM_DEFAULTS = {
    "helfrich": {"H0": 0.0},
    "canham_helfrich": {"k_b": 1.0, "H0": 0.0, "k_G": 0.0},
    "vesicle_energy": {"k_b": 1.0, "H0": 0.0, "k_G": 0.0, "k_m": 0.0, "M0": 0.0},
}


def _normalize_kind(kind: str) -> str:
    k = re.sub(r"(?<!^)(?=[A-Z])", "_", str(kind)).lower().replace("-", "_")
    aliases = {"gauss": "gauss_integral", "mean": "mean_integral", "vesicle": "vesicle_energy", "canham": "canham_helfrich"}
    k = aliases.get(k, k)
    if k not in KINDS:
        raise DomainError(f"unknown functional kind {kind!r}")
    return k


# -------------------------------------------------------------- expressions
_VARS_J0 = ("x0", "x1", "x2", "n0", "n1", "n2")
_VARS_JT = _VARS_J0 + ("t",)
_CONSTS = {"pi": math.pi, "e": math.e}
_ARITY = {"+": (1, None), "-": (1, 2), "*": (1, None), "/": (2, 2), "pow": (2, 2), "abs": (1, 1), "min": (1, None), "max": (1, None)}


@dataclass(frozen=True)
class Expr:
    """Parsed prefix expression; ``tree`` is a nested tuple."""

    source: str
    tree: object
    variables: tuple

    def __call__(self, env: dict) -> np.ndarray:
        n = len(next(iter(env.values())))
        with np.errstate(all="ignore"):
            out = _eval(self.tree, env, n)
        out = np.broadcast_to(np.asarray(out, dtype=float), (n,))
        bad = np.flatnonzero(~np.isfinite(out))
        if len(bad):
            raise ExpressionError(f"expression {self.source!r} is not finite", vertex=bad[0])
        return out


def _tokenize(text):
    return re.findall(r"\(|\)|[^\s()]+", text)


def parse_expression(text: str, variables=_VARS_JT) -> Expr:
    """Parse a prefix expression such as ``"(+ (* 0.25 (pow t 2)) x0)"``."""
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    toks = _tokenize(text)
    pos = 0

    def atom(tok):
        if tok in variables:
            return ("var", tok)
        if tok in _CONSTS:
            return ("num", _CONSTS[tok])
        try:
            v = float(tok)
        except ValueError:
            raise ExpressionError(f"unknown symbol {tok!r} in {text!r}") from None
        if not math.isfinite(v):
            raise ExpressionError(f"non-finite constant {tok!r}")
        return ("num", v)

    def node():
        nonlocal pos
        if pos >= len(toks):
            raise ExpressionError(f"unexpected end of {text!r}")
        tok = toks[pos]
        pos += 1
        if tok == ")":
            raise ExpressionError(f"unexpected ')' in {text!r}")
        if tok != "(":
            if tok in _ARITY:
                raise ExpressionError(f"operator {tok!r} must be parenthesized in {text!r}")
            return atom(tok)
        if pos >= len(toks):
            raise ExpressionError(f"unexpected end of {text!r}")
        op = toks[pos]
        pos += 1
        if op not in _ARITY:
            raise ExpressionError(f"unknown operator {op!r} in {text!r}")
        args = []
        while pos < len(toks) and toks[pos] != ")":
            args.append(node())
        if pos >= len(toks):
            raise ExpressionError(f"missing ')' in {text!r}")
        pos += 1
        lo, hi = _ARITY[op]
        if len(args) < lo or (hi is not None and len(args) > hi):
            raise ExpressionError(f"wrong number of arguments for {op!r} in {text!r}")
        return ("op", op, tuple(args))

    tree = node()
    if pos != len(toks):
        raise ExpressionError(f"trailing tokens in {text!r}")
    used = tuple(sorted(_collect_vars(tree)))
    return Expr(text, tree, used)


def _collect_vars(tree):
    if tree[0] == "var":
        return {tree[1]}
    if tree[0] == "num":
        return set()
    out = set()
    for a in tree[2]:
        out |= _collect_vars(a)
    return out


def _eval(tree, env, n):
    kind = tree[0]
    if kind == "num":
        return np.full(n, tree[1])
    if kind == "var":
        return env[tree[1]]
    op, args = tree[1], [_eval(a, env, n) for a in tree[2]]
    if op == "+":
        out = args[0]
        for a in args[1:]:
            out = out + a
        return out
    if op == "-":
        return -args[0] if len(args) == 1 else args[0] - args[1]
    if op == "*":
        out = args[0]
        for a in args[1:]:
            out = out * a
        return out
    if op == "/":
        zero = np.flatnonzero(args[1] == 0)
        if len(zero):
            raise ExpressionError("division by zero", vertex=zero[0])
        return args[0] / args[1]
    if op == "pow":
        return np.power(args[0], args[1])
    if op == "abs":
        return np.abs(args[0])
    if op == "min":
        return np.minimum.reduce(args)
    return np.maximum.reduce(args)


# ------------------------------------------------------------------- specs
@dataclass(frozen=True)
class FunctionalSpec:
    """Which energy to evaluate, with its parameters.

    ``params`` holds ``H0``, ``k_b``, ``k_G``, ``k_m``, ``M0`` as relevant;
    ``j0``, ``j1``, ``j2`` are expression strings for the generic kind.
    """

    kind: str
    params: dict = field(default_factory=dict)
    j0: str | None = None
    j1: str | None = None
    j2: str | None = None

    def __post_init__(self):
        kind = _normalize_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        params = dict(_PARAM_DEFAULTS.get(kind, {}))
        for k, v in dict(self.params).items():
            if k not in params:
                raise DomainError(f"parameter {k!r} is not used by {kind}")
            params[k] = float(v)
            if not math.isfinite(params[k]):
                raise DomainError(f"parameter {k} must be finite")
        object.__setattr__(self, "params", params)
        if "k_b" in params and not params["k_b"] > 0:
            raise DomainError("k_b must be positive")
        if kind == "generic":
            if not any((self.j0, self.j1, self.j2)):
                raise DomainError("generic functional needs at least one of j0, j1, j2")
            # validate eagerly
            self.compiled()
        elif any((self.j0, self.j1, self.j2)):
            raise DomainError("j0/j1/j2 only apply to the generic kind")

    # convenience constructors
    @classmethod
    def area(cls):
        return cls("area")

    @classmethod
    def volume(cls):
        return cls("volume")

    @classmethod
    def willmore(cls):
        return cls("willmore")

    @classmethod
    def helfrich(cls, H0=0.0):
        return cls("helfrich", {"H0": H0})

    @classmethod
    def canham_helfrich(cls, k_b=1.0, H0=0.0, k_G=0.0):
        return cls("canham_helfrich", {"k_b": k_b, "H0": H0, "k_G": k_G})

    @classmethod
    def gauss_integral(cls):
        return cls("gauss_integral")

    @classmethod
    def mean_integral(cls):
        return cls("mean_integral")

    @classmethod
    def vesicle_energy(cls, k_b=1.0, H0=0.0, k_G=0.0, k_m=0.0, M0=0.0):
        return cls("vesicle_energy", {"k_b": k_b, "H0": H0, "k_G": k_G, "k_m": k_m, "M0": M0})

    @classmethod
    def generic(cls, j0=None, j1=None, j2=None):
        return cls("generic", {}, j0, j1, j2)

    def compiled(self):
        return (
            None if self.j0 is None else parse_expression(self.j0, _VARS_J0),
            None if self.j1 is None else parse_expression(self.j1, _VARS_JT),
            None if self.j2 is None else parse_expression(self.j2, _VARS_JT),
        )

    @property
    def needs_curvature(self):
        return self.kind not in ("area", "volume")

    def to_dict(self):
        d = {"kind": self.kind, **self.params}
        for k in ("j0", "j1", "j2"):
            if getattr(self, k) is not None:
                d[k] = getattr(self, k)
        return d

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "kind" not in d:
            raise ParseError("functional spec must be an object with a 'kind' field")
        d = dict(d)
        kind = d.pop("kind")
        js = {k: d.pop(k) for k in ("j0", "j1", "j2") if k in d}
        params = d.pop("params", {})
        params.update(d)
        return cls(kind, params, **js)


class Relation(enum.Enum):
    EQUAL = "Equal"
    LESS_EQUAL = "LessEqual"


@dataclass(frozen=True)
class Constraint:
    functional: FunctionalSpec
    relation: Relation
    target: float
    tolerance: float = 1e-3

    def __post_init__(self):
        rel = self.relation
        if not isinstance(rel, Relation):
            names = {"equal": Relation.EQUAL, "=": Relation.EQUAL, "lessequal": Relation.LESS_EQUAL, "<=": Relation.LESS_EQUAL}
            key = str(rel).replace("_", "").lower()
            if key not in names:
                raise DomainError(f"unknown relation {rel!r}")
            object.__setattr__(self, "relation", names[key])
        if not math.isfinite(self.target):
            raise DomainError("constraint target must be finite")
        if not self.tolerance > 0:
            raise DomainError("constraint tolerance must be positive")

    def violation(self, value: float) -> float:
        """Signed residual: ``value - target`` for equalities, ``max(0, value - target)`` otherwise."""
        r = value - self.target
        return r if self.relation is Relation.EQUAL else max(0.0, r)

    def satisfied(self, value: float) -> bool:
        """Violation within ``tolerance`` relative to max(1, |target|)."""
        return abs(self.violation(value)) <= self.tolerance * max(1.0, abs(self.target))

    def to_dict(self):
        return {
            "functional": self.functional.to_dict(),
            "relation": self.relation.value,
            "target": self.target,
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(
                FunctionalSpec.from_dict(d["functional"]),
                d.get("relation", "Equal"),
                float(d["target"]),
                float(d.get("tolerance", 1e-3)),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad constraint record: {exc}") from None


@dataclass(frozen=True)
class ConstraintSpec:
    constraints: tuple = ()

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)

    def to_list(self):
        return [c.to_dict() for c in self.constraints]

    @classmethod
    def from_list(cls, items):
        if not isinstance(items, list):
            raise ParseError("constraints must be a JSON array")
        return cls(tuple(Constraint.from_dict(d) for d in items))

    def area_volume_targets(self):
        a = v = None
        for c in self.constraints:
            if c.relation is Relation.EQUAL and c.functional.kind == "area":
                a = c.target
            if c.relation is Relation.EQUAL and c.functional.kind == "volume":
                v = c.target
        return a, v


def load_spec(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return data


# -------------------------------------------------------------- evaluation
def _lumped(values, area):
    return float(np.sum(values * area))


def willmore(mesh: TriangleMesh, field: CurvatureField) -> float:
    return 0.25 * _lumped(field.H**2, field.lumped_area)


def helfrich(mesh: TriangleMesh, field: CurvatureField, H0=0.0) -> float:
    return _lumped((field.H - H0) ** 2, field.lumped_area)


def gauss_integral(mesh: TriangleMesh, field: CurvatureField) -> float:
    return _lumped(field.K, field.lumped_area)


def mean_integral(mesh: TriangleMesh, field: CurvatureField) -> float:
    return _lumped(field.H, field.lumped_area)


def _warn_kG(k_G):
    if k_G > 0:
        warnings.warn(
            "k_G > 0: the Canham-Helfrich energy is not bounded from below over all shapes",
            RuntimeWarning,
            stacklevel=3,
        )


def canham_helfrich(mesh: TriangleMesh, field: CurvatureField, k_b=1.0, H0=0.0, k_G=0.0) -> float:
    """(k_b / 2) int (H - H0)^2 dA + k_G int K dA."""
    if not k_b > 0:
        raise DomainError("k_b must be positive")
    _warn_kG(k_G)
    return 0.5 * k_b * helfrich(mesh, field, H0) + k_G * gauss_integral(mesh, field)


def vesicle_energy(mesh: TriangleMesh, field: CurvatureField, k_b=1.0, H0=0.0, k_G=0.0, k_m=0.0, M0=0.0) -> float:
    """Canham-Helfrich energy plus k_m (int H dA - M0)^2."""
    e = canham_helfrich(mesh, field, k_b, H0, k_G)
    if k_m == 0:
        return e
    return e + k_m * (mean_integral(mesh, field) - M0) ** 2


def generic_integrand(mesh: TriangleMesh, field: CurvatureField, spec: FunctionalSpec) -> np.ndarray:
    j0, j1, j2 = spec.compiled()
    x, n = mesh.vertices, field.normal
    env = {f"x{i}": x[:, i] for i in range(3)}
    env.update({f"n{i}": n[:, i] for i in range(3)})
    e = np.zeros(mesh.n_vertices)
    if j0 is not None:
        e = e + j0(env)
    if j1 is not None:
        e = e + j1({**env, "t": field.H})
    if j2 is not None:
        e = e + j2({**env, "t": field.K})
    return e


def evaluate(mesh: TriangleMesh, field: CurvatureField | None, spec: FunctionalSpec) -> float:
    """Value of ``spec`` on ``mesh``; ``field`` may be None for Area and Volume."""
    k, p = spec.kind, spec.params
    if k == "area":
        return mesh.area()
    if k == "volume":
        return mesh.volume()
    if field is None:
        raise DomainError(f"{k} needs a curvature field")
    if k == "willmore":
        return willmore(mesh, field)
    if k == "helfrich":
        return helfrich(mesh, field, p["H0"])
    if k == "canham_helfrich":
        return canham_helfrich(mesh, field, p["k_b"], p["H0"], p["k_G"])
    if k == "gauss_integral":
        return gauss_integral(mesh, field)
    if k == "mean_integral":
        return mean_integral(mesh, field)
    if k == "vesicle_energy":
        return vesicle_energy(mesh, field, p["k_b"], p["H0"], p["k_G"], p["k_m"], p["M0"])
    return _lumped(generic_integrand(mesh, field, spec), field.lumped_area)


# ------------------------------------------------------------------- gates
class Feasibility(enum.Enum):
    FEASIBLE = "Feasible"
    ONLY_BALL = "OnlyBall"
    INFEASIBLE = "Infeasible"


def isoperimetric_check(A0: float, V0: float, rel_tol=1e-10) -> Feasibility:
    """Classify (A0, V0) by the sign of A0^3 - 36 pi V0^2."""
    if not (A0 > 0 and V0 > 0):
        raise DomainError("area and volume targets must be positive")
    lhs, rhs = A0**3, 36.0 * math.pi * V0**2
    if abs(lhs - rhs) <= rel_tol * max(lhs, rhs):
        return Feasibility.ONLY_BALL
    return Feasibility.FEASIBLE if lhs > rhs else Feasibility.INFEASIBLE


def diameter_diagnostic(mesh: TriangleMesh, field: CurvatureField) -> tuple[float, float]:
    """Mesh diameter and the scale-free ratio diameter / sqrt(area * willmore)."""
    d = mesh.diameter()
    return d, d / math.sqrt(mesh.area() * willmore(mesh, field))
