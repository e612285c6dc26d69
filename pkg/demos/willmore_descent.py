"""Willmore descent from an ellipsoid at epsilon = 0.3 until W <= 1.03 * 4 pi."""

import logging
import math
import sys

from ballshape import Ellipsoid, FunctionalSpec, OptimizerConfig, generate, minimize, save_mesh

logging.basicConfig(level=logging.INFO, format="%(message)s")
mesh = generate(Ellipsoid(1.5, 1.0, 0.8, 3))
cfg = OptimizerConfig(epsilon=0.3, max_iters=500, target_energy=1.03 * 4 * math.pi)
out, trace = minimize(mesh, FunctionalSpec.willmore(), None, cfg)
for r in trace.records[:: max(1, len(trace) // 10)]:
    print(f"{r.iteration:4d}  W/4pi {r.energy / (4 * math.pi):.5f}  step {r.step:.3g}  margin {r.certified_epsilon_margin:.3g}")
print(f"stopped: {trace.reason} after {len(trace)} iterations, {trace.elapsed:.0f} s")
if len(sys.argv) > 1:
    save_mesh(out, sys.argv[1])
