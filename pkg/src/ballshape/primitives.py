"""Test-shape generators: icosphere, torus, ellipsoid, perturbed sphere."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_legendre

from .errors import DomainError
from .mesh import TriangleMesh


@dataclass(frozen=True)
class Icosphere:
    R: float = 1.0
    subdiv: int = 4


@dataclass(frozen=True)
class Torus:
    R: float = 2.0
    r: float = 0.5
    nu: int = 128
    nv: int = 64


@dataclass(frozen=True)
class Ellipsoid:
    a: float = 1.5
    b: float = 1.0
    c: float = 0.8
    subdiv: int = 4


@dataclass(frozen=True)
class PerturbedSphere:
    R: float = 1.0
    amp: float = 0.1
    mode: int = 2
    subdiv: int = 4


def _icosahedron():
    t = (1.0 + 5.0**0.5) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(v, f):
    """Split every triangle in four, placing midpoints on the unit sphere."""
    e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    edges, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = v[edges].mean(axis=1)
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    m = inv.reshape(3, -1).T + len(v)  # midpoints of edges (01, 12, 20)
    a, b, c = f.T
    m01, m12, m20 = m.T
    nf = np.concatenate(
        [
            np.stack([a, m01, m20], 1),
            np.stack([b, m12, m01], 1),
            np.stack([c, m20, m12], 1),
            np.stack([m01, m12, m20], 1),
        ]
    )
    return np.vstack([v, mid]), nf


def unit_icosphere_arrays(subdiv):
    v, f = _icosahedron()
    for _ in range(subdiv):
        v, f = _subdivide(v, f)
    return v, f


def icosphere(R=1.0, subdiv=4) -> TriangleMesh:
    if R <= 0 or subdiv < 0:
        raise DomainError("icosphere needs R > 0 and subdiv >= 0")
    v, f = unit_icosphere_arrays(int(subdiv))
    return TriangleMesh(R * v, f)


def torus(R=2.0, r=0.5, nu=128, nv=64) -> TriangleMesh:
    """Torus of revolution about z; ``nu`` samples around z, ``nv`` around the tube."""
    if not (R > r > 0) or nu < 3 or nv < 3:
        raise DomainError("torus needs R > r > 0 and nu, nv >= 3")
    u = 2 * np.pi * np.arange(nu) / nu
    w = 2 * np.pi * np.arange(nv) / nv
    U, W = np.meshgrid(u, w, indexing="ij")
    x = (R + r * np.cos(W)) * np.cos(U)
    y = (R + r * np.cos(W)) * np.sin(U)
    z = r * np.sin(W)
    v = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    i, j = i.ravel(), j.ravel()
    p00 = i * nv + j
    p10 = ((i + 1) % nu) * nv + j
    p01 = i * nv + (j + 1) % nv
    p11 = ((i + 1) % nu) * nv + (j + 1) % nv
    f = np.concatenate([np.stack([p00, p10, p11], 1), np.stack([p00, p11, p01], 1)])
    return TriangleMesh(v, f)


def ellipsoid(a=1.5, b=1.0, c=0.8, subdiv=4) -> TriangleMesh:
    if min(a, b, c) <= 0:
        raise DomainError("ellipsoid semi-axes must be positive")
    v, f = unit_icosphere_arrays(int(subdiv))
    return TriangleMesh(v * np.array([a, b, c]), f)


def zonal_bump(unit_vertices, mode):
    """Legendre polynomial P_mode(z), max |P| = 1 on the sphere."""
    return eval_legendre(int(mode), unit_vertices[:, 2])


def perturbed_sphere(R=1.0, amp=0.1, mode=2, subdiv=4) -> TriangleMesh:
    """Sphere displaced radially: r = R (1 + amp * P_mode(cos theta)).

    ``amp`` must lie in [0, 1) so the radius stays positive.
    """
    if R <= 0 or not (0 <= amp < 1) or mode < 0:
        raise DomainError("perturbed sphere needs R > 0, 0 <= amp < 1, mode >= 0")
    v, f = unit_icosphere_arrays(int(subdiv))
    r = R * (1.0 + amp * zonal_bump(v, mode))
    return TriangleMesh(v * r[:, None], f)


def radial_surface(radius_fn, subdiv=4) -> TriangleMesh:
    """Star-shaped surface r = radius_fn(unit direction) over an icosphere."""
    v, f = unit_icosphere_arrays(int(subdiv))
    r = np.asarray(radius_fn(v), dtype=float)
    if np.any(r <= 0):
        raise DomainError("radius function must be positive")
    return TriangleMesh(v * r[:, None], f)


def generate(kind) -> TriangleMesh:
    """Build the mesh described by one of the shape records above."""
    if isinstance(kind, Icosphere):
        return icosphere(kind.R, kind.subdiv)
    if isinstance(kind, Torus):
        return torus(kind.R, kind.r, kind.nu, kind.nv)
    if isinstance(kind, Ellipsoid):
        return ellipsoid(kind.a, kind.b, kind.c, kind.subdiv)
    if isinstance(kind, PerturbedSphere):
        return perturbed_sphere(kind.R, kind.amp, kind.mode, kind.subdiv)
    raise DomainError(f"unknown shape {kind!r}")
