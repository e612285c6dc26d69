"""Explicit epsilon-dependent constants of the uniform ball condition.

``f(a) = 2a / cos a`` controls the cone opening, ``f_eta(a) = (3a + 2 sqrt(2 eps eta)) / cos a``
its perturbed version along a converging sequence, and ``g(eta) = 32 eta / cos^2(4 eta)``
the admissible perturbation. Their inverses, obtained by bisection, give the
common chart radius ``r~ = f_eta^{-1}(eps) / 4 - eta`` with ``eta = g^{-1}(eps)`` and
the graph Lipschitz constant ``1 / tan f^{-1}(eps)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import DomainError

REL_TOL = 1e-12
MAX_ITER = 200
_F_BRACKET = (1e-18, math.pi / 2 - 1e-12)
_G_BRACKET = (1e-18, math.pi / 8 - 1e-12)


def _bisect(fn, target, lo, hi):
    """Root of the increasing function ``fn(x) = target`` on [lo, hi]."""
    tol = REL_TOL * max(1.0, abs(target))
    flo = fn(lo) - target
    if flo >= 0:
        return lo
    if fn(hi) - target <= 0:
        return hi
    mid = 0.5 * (lo + hi)
    for _ in range(MAX_ITER):
        mid = 0.5 * (lo + hi)
        fm = fn(mid) - target
        if abs(fm) <= tol or hi - lo <= 2 * math.ulp(mid):
            break
        if fm < 0:
            lo = mid
        else:
            hi = mid
    return mid


def _check_alpha(alpha):
    if not (0.0 < alpha < math.pi / 2):
        raise DomainError(f"alpha must lie in (0, pi/2), got {alpha}")


def f_of_alpha(alpha: float) -> float:
    _check_alpha(alpha)
    return 2.0 * alpha / math.cos(alpha)


def f_inverse(epsilon: float) -> float:
    """Opening angle alpha with f(alpha) = epsilon; always below epsilon / 2."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    return _bisect(lambda a: 2.0 * a / math.cos(a), epsilon, *_F_BRACKET)


def f_eta(alpha: float, epsilon: float, eta: float) -> float:
    _check_alpha(alpha)
    if not (epsilon > 0 and eta > 0):
        raise DomainError("epsilon and eta must be positive")
    return (3.0 * alpha + 2.0 * math.sqrt(2.0 * epsilon * eta)) / math.cos(alpha)


def f_eta_inverse(value: float, epsilon: float, eta: float) -> float:
    """alpha with f_eta(alpha) = value; needs value > 2 sqrt(2 epsilon eta)."""
    if not (epsilon > 0 and eta > 0):
        raise DomainError("epsilon and eta must be positive")
    floor = 2.0 * math.sqrt(2.0 * epsilon * eta)
    if not value > floor:
        raise DomainError(f"f_eta takes values above {floor}, got {value}")
    return _bisect(lambda a: (3.0 * a + floor) / math.cos(a), value, *_F_BRACKET)


def g_of_eta(eta: float) -> float:
    if not (0.0 < eta < math.pi / 8):
        raise DomainError(f"eta must lie in (0, pi/8), got {eta}")
    return 32.0 * eta / math.cos(4.0 * eta) ** 2


def g_inverse(epsilon: float) -> float:
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    return _bisect(lambda e: 32.0 * e / math.cos(4.0 * e) ** 2, epsilon, *_G_BRACKET)


@dataclass(frozen=True)
class RadiiTable:
    epsilon: float
    f_inv: float
    g_inv: float
    f_eta_inv: float
    chart_radius: float
    lipschitz_L: float

    def to_dict(self):
        return asdict(self)


def chart_radius(epsilon: float) -> float:
    eta = g_inverse(epsilon)
    return 0.25 * f_eta_inverse(epsilon, epsilon, eta) - eta


def radii_table(epsilon: float) -> RadiiTable:
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    fi = f_inverse(epsilon)
    gi = g_inverse(epsilon)
    fei = f_eta_inverse(epsilon, epsilon, gi)
    return RadiiTable(
        epsilon=float(epsilon),
        f_inv=fi,
        g_inv=gi,
        f_eta_inv=fei,
        chart_radius=0.25 * fei - gi,
        lipschitz_L=1.0 / math.tan(fi),
    )
