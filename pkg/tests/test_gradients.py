import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballshape.charts import adaptive_neighborhoods, curvature_field
from ballshape.errors import DomainError
from ballshape.functionals import FunctionalSpec, evaluate
from ballshape.gradients import area_gradient, fd_gradient_bruteforce, shape_gradient, volume_gradient
from ballshape.mesh import TriangleMesh
from ballshape.primitives import Ellipsoid, Icosphere, generate


def test_euler_homogeneity():
    # A and V are homogeneous of degree 2 and 3 in the vertex positions
    m = generate(Ellipsoid(1.4, 1.0, 0.6, 3)).transformed(translation=np.array([0.3, -1.0, 2.0]))
    x = m.vertices
    assert np.sum(area_gradient(m) * x) == pytest.approx(2 * m.area(), rel=1e-12)
    c = x.mean(axis=0)
    # volume is translation invariant, so use coordinates relative to any point
    assert np.sum(volume_gradient(m) * (x - c)) == pytest.approx(3 * m.volume(), rel=1e-12)
    assert np.abs(area_gradient(m).sum(axis=0)).max() < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_measure_gradients_match_fd(seed):
    rng = np.random.default_rng(seed)
    m0 = generate(Icosphere(1.0, 1))
    m = m0.with_vertices(m0.vertices * rng.uniform(0.8, 1.2, (m0.n_vertices, 1)))
    t = m.triangles
    for analytic, fn in ((area_gradient, lambda v: TriangleMesh(v, t).area()), (volume_gradient, lambda v: TriangleMesh(v, t).volume())):
        g = analytic(m)
        fd = fd_gradient_bruteforce(fn, m.vertices, 1e-5)
        assert np.linalg.norm(g - fd) <= 1e-7 * np.linalg.norm(g)


@pytest.mark.parametrize("spec", [FunctionalSpec.willmore(), FunctionalSpec.helfrich(0.7), FunctionalSpec.gauss_integral()])
def test_shape_gradient_directional_derivative(spec):
    # the gradient is taken with the chart neighbourhoods and jet degrees held fixed
    m = generate(Ellipsoid(1.3, 1.0, 0.8, 2))
    f = curvature_field(m)
    nb, _ = adaptive_neighborhoods(m)
    g = shape_gradient(m, f, spec)
    d = np.random.default_rng(0).normal(size=m.vertices.shape) * 0.1

    def E(v):
        mm = m.with_vertices(v)
        return evaluate(mm, curvature_field(mm, neighborhoods=nb, degrees=f.degree), spec)

    h = 1e-5
    fd = (E(m.vertices + h * d) - E(m.vertices - h * d)) / (2 * h)
    scale = max(1.0, abs(fd))
    assert abs(fd - np.sum(g * d)) <= 1e-5 * scale


def test_translation_invariance_of_gradient():
    m = generate(Ellipsoid(1.3, 1.0, 0.8, 2))
    g = shape_gradient(m, curvature_field(m), FunctionalSpec.willmore())
    assert np.abs(g.sum(axis=0)).max() <= 1e-6 * np.linalg.norm(g)


def test_errors():
    m = generate(Icosphere(1.0, 1))
    with pytest.raises(DomainError):
        shape_gradient(m, None, FunctionalSpec.willmore())
    with pytest.raises(DomainError):
        shape_gradient(m, curvature_field(m), FunctionalSpec.willmore(), fd_step=-1)
