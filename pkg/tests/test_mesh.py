import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballshape.errors import DegenerateFace, ParseError, TopologyError
from ballshape.mesh import TriangleMesh, char_fn_distance, hausdorff_distance, load_mesh, measures, save_mesh
from ballshape.primitives import Ellipsoid, Icosphere, PerturbedSphere, Torus, generate

TET_V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
TET_F = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])


def test_tetrahedron_measures():
    m = TriangleMesh(TET_V, TET_F)
    assert m.volume() == pytest.approx(1 / 6, rel=1e-14)
    assert m.signed_volume() == pytest.approx(1 / 6, rel=1e-14)
    assert m.area() == pytest.approx(1.5 + math.sqrt(3) / 2, rel=1e-14)
    assert m.genus() == 0
    assert m.euler_characteristic() == 2


def test_orientation_repaired():
    # all faces flipped: the mesh orients itself outward
    m = TriangleMesh(TET_V, TET_F[:, ::-1])
    assert m.volume() > 0


def test_open_surface_rejected():
    with pytest.raises(TopologyError):
        TriangleMesh(TET_V, TET_F[:3])


def test_disconnected_rejected():
    v = np.vstack([TET_V, TET_V + 5])
    with pytest.raises(TopologyError):
        TriangleMesh(v, np.vstack([TET_F, TET_F + 4]))


def test_degenerate_face_rejected():
    f = TET_F.copy()
    f[0] = [0, 0, 1]
    with pytest.raises(DegenerateFace):
        TriangleMesh(TET_V, f)


def test_unreferenced_vertex_rejected():
    with pytest.raises(TopologyError):
        TriangleMesh(np.vstack([TET_V, [[3, 3, 3]]]), TET_F)


def test_torus_genus():
    m = generate(Torus(2.0, 0.5, 32, 16))
    assert m.genus() == 1
    assert measures(m).genus == 1


@pytest.mark.parametrize("ext", ["off", "obj"])
def test_io_roundtrip_exact(tmp_path, ext):
    m = generate(PerturbedSphere(1.3, 0.2, 3, 2))
    p = tmp_path / f"m.{ext}"
    save_mesh(m, p)
    back = load_mesh(p)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.triangles, m.triangles)


def test_io_errors(tmp_path):
    p = tmp_path / "bad.off"
    p.write_text("OFF\n3 1 0\n0 0 0\n1 0\n")
    with pytest.raises(ParseError):
        load_mesh(p)
    with pytest.raises(ParseError):
        load_mesh(tmp_path / "x.stl")


def test_distances_concentric_spheres():
    a = generate(Icosphere(1.0, 3))
    b = generate(Icosphere(1.2, 3))
    assert hausdorff_distance(a, b) == pytest.approx(0.2, rel=0.05)
    exact = 4 / 3 * math.pi * (1.2**3 - 1)
    assert char_fn_distance(a, b, grid_res=48) == pytest.approx(exact, rel=0.1)
    assert hausdorff_distance(a, a) == 0.0


def test_inside():
    m = generate(Icosphere(1.0, 2))
    pts = np.array([[0, 0, 0], [0.3, -0.2, 0.1], [2, 0, 0], [0, 0, -1.5]])
    assert list(m.inside(pts)) == [True, True, False, False]


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    st.floats(0.1, 10),
    st.integers(0, 2**31 - 1),
)
def test_rigid_motion_and_scaling(t, s, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    m = generate(Ellipsoid(1.4, 1.0, 0.7, 2))
    mt = m.transformed(rotation=q, translation=np.array(t), scale=s)
    assert mt.area() == pytest.approx(s**2 * m.area(), rel=1e-12)
    assert mt.volume() == pytest.approx(s**3 * m.volume(), rel=1e-11)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.3))
def test_divergence_volume_matches_fan(seed, noise):
    rng = np.random.default_rng(seed)
    m = generate(Icosphere(1.0, 2))
    v = m.vertices * (1 + noise * rng.uniform(-1, 1, (m.n_vertices, 1))) + rng.normal(size=3)
    pm = m.with_vertices(v)
    assert abs(pm.volume() - pm.signed_volume()) <= 1e-12 * abs(pm.signed_volume())
