"""Triangulated surfaces under the uniform epsilon-ball condition.

Curvature from local graph charts, a certifier for the ball condition,
curvature functionals, a constrained shape optimizer and convergence
experiments for mesh sequences.
"""

__version__ = "0.1.0"

from .certifier import Certificate, certify_ball_condition, estimate_reach
from .charts import CurvatureField, curvature_field
from .constants import RadiiTable, radii_table
from .convergence import PerturbationDecay, Refinement, SequenceReport, SequenceSpec, run_sequence
from .errors import BallShapeError
from .functionals import Constraint, ConstraintSpec, Feasibility, FunctionalSpec, Relation, evaluate, isoperimetric_check
from .mesh import TriangleMesh, load_mesh, save_mesh
from .optimizer import OptimizationTrace, OptimizerConfig, minimize
from .primitives import Ellipsoid, Icosphere, PerturbedSphere, Torus, generate

__all__ = [
    "__version__",
    "BallShapeError",
    "Certificate",
    "Constraint",
    "ConstraintSpec",
    "CurvatureField",
    "Ellipsoid",
    "Feasibility",
    "FunctionalSpec",
    "Icosphere",
    "OptimizationTrace",
    "OptimizerConfig",
    "PerturbationDecay",
    "PerturbedSphere",
    "RadiiTable",
    "Refinement",
    "Relation",
    "SequenceReport",
    "SequenceSpec",
    "Torus",
    "TriangleMesh",
    "certify_ball_condition",
    "curvature_field",
    "estimate_reach",
    "evaluate",
    "generate",
    "isoperimetric_check",
    "load_mesh",
    "minimize",
    "radii_table",
    "run_sequence",
    "save_mesh",
]
