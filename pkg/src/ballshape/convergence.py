"""Converging mesh sequences and the distances/functional gaps along them.

Two families are built in: a perturbation that decays towards its base
shape, and uniform refinement of a primitive. Every element must satisfy the
ball condition at the sequence's epsilon; the report lists, per element, the
Hausdorff and characteristic-function distances to the limit mesh, the
largest normal deviation over nearest-vertex pairs, and each functional's
value and gap to its limit value.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .certifier import certify_ball_condition
from .charts import curvature_field
from .errors import DomainError, ElementNotCertified
from .functionals import FunctionalSpec, evaluate
from .mesh import TriangleMesh, char_fn_distance, hausdorff_distance
from .primitives import Ellipsoid, Icosphere, PerturbedSphere, generate

logger = logging.getLogger(__name__)

MIN_ELEMENTS = 3


@dataclass(frozen=True)
class PerturbationDecay:
    """PerturbedSphere(R, amp_i, mode, subdiv) for a strictly decreasing amp schedule; limit amp = 0."""

    amps: tuple
    R: float = 1.0
    mode: int = 2
    subdiv: int = 3

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=float)
        if len(a) < MIN_ELEMENTS:
            raise DomainError(f"need at least {MIN_ELEMENTS} amplitudes")
        if np.any(np.diff(a) >= 0) or a[-1] < 0:
            raise DomainError("amplitude schedule must be strictly decreasing and nonnegative")

    @classmethod
    def geometric(cls, amp0=0.1, n=6, ratio=0.5, **kw):
        return cls(tuple(amp0 * ratio**i for i in range(n)), **kw)

    def meshes(self):
        return [generate(PerturbedSphere(self.R, float(a), self.mode, self.subdiv)) for a in self.amps]

    def limit(self):
        return generate(PerturbedSphere(self.R, 0.0, self.mode, self.subdiv))

    def to_dict(self):
        return {"type": "PerturbationDecay", "amps": list(self.amps), "R": self.R, "mode": self.mode, "subdiv": self.subdiv}


_PRIMITIVES = {"icosphere": Icosphere, "ellipsoid": Ellipsoid}


@dataclass(frozen=True)
class Refinement:
    """A primitive at strictly increasing subdivision levels; the finest one is the limit."""

    primitive: str = "icosphere"
    params: tuple = (1.0,)
    levels: tuple = (1, 2, 3, 4)

    def __post_init__(self):
        if self.primitive not in _PRIMITIVES:
            raise DomainError(f"refinement supports {sorted(_PRIMITIVES)}")
        lv = np.asarray(self.levels)
        if len(lv) < MIN_ELEMENTS or np.any(np.diff(lv) <= 0) or lv[0] < 0:
            raise DomainError(f"need at least {MIN_ELEMENTS} strictly increasing subdivision levels")

    def meshes(self):
        cls = _PRIMITIVES[self.primitive]
        return [generate(cls(*self.params, int(s))) for s in self.levels]

    def limit(self):
        return None  # the last element

    def to_dict(self):
        return {"type": "Refinement", "primitive": self.primitive, "params": list(self.params), "levels": list(self.levels)}


@dataclass
class SequenceSpec:
    family: object
    functionals: list = field(default_factory=lambda: [FunctionalSpec.area()])
    epsilon: float = 0.5
    char_fn_res: int = 48

    def __post_init__(self):
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not self.functionals:
            raise DomainError("at least one functional is required")

    @classmethod
    def from_dict(cls, d):
        fam = dict(d["family"])
        kind = fam.pop("type")
        if kind == "PerturbationDecay":
            if "amps" not in fam:
                family = PerturbationDecay.geometric(**fam)
            else:
                fam["amps"] = tuple(fam["amps"])
                family = PerturbationDecay(**fam)
        elif kind == "Refinement":
            fam["params"] = tuple(fam.get("params", (1.0,)))
            fam["levels"] = tuple(fam.get("levels", (1, 2, 3, 4)))
            family = Refinement(**fam)
        else:
            raise DomainError(f"unknown sequence family {kind!r}")
        funcs = [FunctionalSpec.from_dict(f) if isinstance(f, dict) else FunctionalSpec(f) for f in d.get("functionals", ["area"])]
        return cls(family, funcs, float(d.get("epsilon", 0.5)), int(d.get("char_fn_res", 48)))

    def to_dict(self):
        return {
            "family": self.family.to_dict(),
            "functionals": [f.to_dict() for f in self.functionals],
            "epsilon": self.epsilon,
            "char_fn_res": self.char_fn_res,
        }


@dataclass
class ConvergenceRow:
    index: int
    hausdorff: float
    char_fn: float
    normal_deviation: float
    values: dict
    gaps: dict


@dataclass
class SequenceReport:
    rows: list
    limit_values: dict
    trends: dict  # functional -> gap column decreasing over the last half of the rows

    def to_dict(self):
        return {
            "rows": [
                {
                    "index": r.index,
                    "hausdorff": r.hausdorff,
                    "char_fn": r.char_fn,
                    "normal_deviation": r.normal_deviation,
                    "values": r.values,
                    "gaps": r.gaps,
                }
                for r in self.rows
            ],
            "limit_values": self.limit_values,
            "trends": self.trends,
        }

    def to_csv(self):
        names = list(self.limit_values)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "hausdorff", "char_fn", "normal_deviation"] + [f"{n}_value" for n in names] + [f"{n}_gap" for n in names])
        for r in self.rows:
            w.writerow(
                [r.index] + [repr(float(x)) for x in (r.hausdorff, r.char_fn, r.normal_deviation)]
                + [repr(float(r.values[n])) for n in names]
                + [repr(float(r.gaps[n])) for n in names]
            )
        return buf.getvalue()


def _label(spec: FunctionalSpec, seen):
    name = spec.kind
    k = 2
    while name in seen:
        name = f"{spec.kind}_{k}"
        k += 1
    return name


def normal_deviation(a: TriangleMesh, na, b: TriangleMesh, nb) -> float:
    """max |n_a(v) - n_b(w)| over vertices v of ``a`` paired with their nearest vertex w of ``b``."""
    _, j = b.kdtree.query(a.vertices)
    return float(np.linalg.norm(na - nb[j], axis=1).max())


def decreasing_trend(gaps, rel_tol=1e-12) -> bool:
    """Gap column nonincreasing over its last half (at least two entries)."""
    g = np.asarray(gaps, dtype=float)
    tail = g[len(g) // 2 :] if len(g) >= 4 else g
    slack = rel_tol * max(1.0, float(np.abs(g).max()))
    return bool(np.all(np.diff(tail) <= slack))


def run_sequence(spec: SequenceSpec) -> SequenceReport:
    """Build the sequence, certify every element and tabulate distances and gaps.

    Raises
    ------
    ElementNotCertified
        An element fails the ball condition at ``spec.epsilon``; the message
        carries its index.
    """
    meshes = spec.family.meshes()
    limit = spec.family.limit()
    if limit is None:
        limit = meshes[-1]
    fields = []
    for i, m in enumerate(meshes):
        f = curvature_field(m)
        cert = certify_ball_condition(m, f, spec.epsilon)
        if not cert.passed:
            raise ElementNotCertified(i, f"sequence element {i} fails the ball condition at epsilon = {spec.epsilon}")
        fields.append(f)
    lim_field = curvature_field(limit) if limit is not meshes[-1] else fields[-1]

    names = []
    for s in spec.functionals:
        names.append(_label(s, names))
    lim_vals = {n: float(evaluate(limit, lim_field, s)) for n, s in zip(names, spec.functionals)}

    rows = []
    for i, (m, f) in enumerate(zip(meshes, fields)):
        vals = {n: float(evaluate(m, f, s)) for n, s in zip(names, spec.functionals)}
        same = m is limit
        rows.append(
            ConvergenceRow(
                index=i,
                hausdorff=0.0 if same else hausdorff_distance(m, limit),
                char_fn=0.0 if same else char_fn_distance(m, limit, grid_res=spec.char_fn_res),
                normal_deviation=normal_deviation(m, f.normal, limit, lim_field.normal),
                values=vals,
                gaps={n: abs(vals[n] - lim_vals[n]) for n in names},
            )
        )
        logger.info("element %d: d_H = %.3g", i, rows[-1].hausdorff)
    scored = [r for r in rows if r.hausdorff > 0] or rows
    trends = {n: decreasing_trend([r.gaps[n] for r in scored]) for n in names}
    return SequenceReport(rows, lim_vals, trends)


__all__ = [
    "PerturbationDecay",
    "Refinement",
    "SequenceSpec",
    "ConvergenceRow",
    "SequenceReport",
    "run_sequence",
    "normal_deviation",
    "decreasing_trend",
]
