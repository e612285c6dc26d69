"""Curvature, Gauss-Bonnet and reach on the two reference surfaces."""

import math

import numpy as np

from ballshape import FunctionalSpec, Icosphere, Torus, curvature_field, estimate_reach, evaluate, generate

for shape in (Icosphere(1.0, 4), Torus(2.0, 0.5, 128, 64)):
    m = generate(shape)
    f = curvature_field(m)
    print(shape)
    print(f"  genus {m.genus()}, area {m.area():.5f}, volume {m.volume():.5f}")
    print(f"  H in [{f.H.min():.4f}, {f.H.max():.4f}], K in [{f.K.min():.4f}, {f.K.max():.4f}]")
    print(f"  int K dA / 4pi = {evaluate(m, f, FunctionalSpec.gauss_integral()) / (4 * math.pi):.5f}")
    print(f"  W / 4pi = {evaluate(m, f, FunctionalSpec.willmore()) / (4 * math.pi):.5f}")
    print(f"  reach = {estimate_reach(m, f):.4f}")
    print(f"  mean neighbours per chart {np.mean(f.neighbor_count):.1f}")
