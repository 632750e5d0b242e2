"""Linear sanity check: pole placement and the performance system.

For a double integrator the observer is linear, so its error follows
exp((A - K C) t) exactly, and the stacked plant-observer system loses
observability through e_y.
"""

import numpy as np

from ratobs.algebra import RationalFunction
from ratobs.inverse import find_observability_index
from ratobs.observer import make_observer, pole_place
from ratobs.parser import parse
from ratobs.realization import output_based_realization
from ratobs.simulate import SimConfig, eigenvalues, linearize, observability_rank, \
    performance_sim

A = np.array([[0.0, 1.0], [0.0, 0.0]])
C = np.array([[1.0, 0.0]])
K = pole_place(A, C, [-1, -2])
print("K =", K, " eig(A - KC) =", eigenvalues(A - np.outer(K, C)))

sys = parse("""
system di {
  states x1 = 1 x2 = -1;
  dx1 = x2;
  dx2 = 0;
  output y = x1;
}""")
m, chain, inv = find_observability_index(sys)
obs = make_observer(output_based_realization(sys, chain, inv), list(K))

d = np.array([0.5, -0.5])
res = performance_sim(sys, obs, SimConfig(horizon=8.0, sample_dt=1.0), perturbation=d)
w, V = np.linalg.eig(A - np.outer(K, C))
print("\n  t    simulated e_x1     closed form")
for t, z in zip(res.t, res.z):
    closed = (V @ np.diag(np.exp(w * t)) @ np.linalg.solve(V, -d)).real
    print(f"{t:4.1f}   {z[0] - z[2]: .6e}   {closed[0]: .6e}")

on = {y: h for y, h in zip(obs.y, sys.h)}
fields = list(sys.f) + [g.substitute(on) for g in obs.f_o]
variables = list(sys.state_vars) + list(obs.xo)
Ae = linearize(fields, variables, [0.0] * 4)
Ce = linearize([sys.h[0] - RationalFunction.var(sys.vt, obs.xo[0])], variables, [0.0] * 4)
print(f"\nperformance system: dimension {len(variables)}, "
      f"observability rank through e_y {observability_rank(Ae, Ce)}")
