"""Distances and functional gaps along PerturbedSphere(1, 0.1 / 2^i, 2, 3)."""

from ballshape import FunctionalSpec, PerturbationDecay, SequenceSpec, run_sequence

funcs = [FunctionalSpec.area(), FunctionalSpec.volume(), FunctionalSpec.mean_integral(), FunctionalSpec.willmore(), FunctionalSpec.gauss_integral()]
rep = run_sequence(SequenceSpec(PerturbationDecay.geometric(0.1, 7, 0.5, subdiv=3), funcs, epsilon=0.5))
names = list(rep.limit_values)
print("i  d_H        d_chi      " + "  ".join(f"{n[:10]:>10s}" for n in names))
for r in rep.rows:
    print(f"{r.index}  {r.hausdorff:.3e}  {r.char_fn:.3e}  " + "  ".join(f"{r.gaps[n]:10.3e}" for n in names))
print("gap trends decreasing:", rep.trends)
