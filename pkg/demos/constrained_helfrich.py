"""Helfrich energy (H0 = 0) at prescribed area 4 pi and reduced volume 0.95."""

import math

from ballshape import Constraint, ConstraintSpec, Ellipsoid, FunctionalSpec, OptimizerConfig, generate, minimize

A0, V0 = 4 * math.pi, 0.95 * 4 * math.pi / 3
m = generate(Ellipsoid(1.5, 1.0, 0.8, 3))
m = m.transformed(scale=math.sqrt(A0 / m.area()))
cons = ConstraintSpec((Constraint(FunctionalSpec.area(), "Equal", A0), Constraint(FunctionalSpec.volume(), "Equal", V0)))
out, trace = minimize(m, FunctionalSpec.helfrich(0.0), cons, OptimizerConfig(epsilon=0.3, max_iters=40))
first, last = trace.accepted[0], trace.accepted[-1]
print(f"Helfrich energy {first.energy:.5f} -> {last.energy:.5f} over {len(trace.accepted)} accepted steps")
print(f"area {out.area():.8f} (target {A0:.8f}), volume {out.volume():.8f} (target {V0:.8f})")
print(f"genus {out.genus()}, stop: {trace.reason}")
