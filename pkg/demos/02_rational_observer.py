"""Rational observers: an enzyme reaction and a saturating two-state system.

The first system is inverted twice, by triangular solving and by lex
Groebner elimination, and the two inverses are compared.  The second
needs a rational observer; its nonlinear gain is checked against a
difference quotient of the drift.
"""

from ratobs.builtin import k_o_fd_check, load_builtin
from ratobs.inverse import find_observability_index, groebner_inverse, triangular_inverse
from ratobs.lie import build_s_chain, chain_text
from ratobs.observer import make_observer
from ratobs.realization import output_based_realization, realization_selfcheck
from ratobs.simulate import SimConfig, integrate

mm = load_builtin("michaelis")
chain = build_s_chain(mm, 3)
print("Michaelis-Menten output derivatives:")
print(chain_text(chain))

two = build_s_chain(mm, 2)
tri = triangular_inverse(two)
gro = groebner_inverse(two)
print("\ntriangular inverse:", [str(r) for r in tri.r])
print("Groebner inverse:  ", [str(r) for r in gro.r])
print("same maps:", all(a.eq(b) for a, b in zip(tri.r, gro.r)))

# the realization must reproduce d/dt s(x(t)) along real trajectories
m, ch, inv = find_observability_index(mm)
real = output_based_realization(mm, ch, inv)
traj = integrate(mm.f, mm.state_vars, [1.0, 1.0], SimConfig(horizon=10.0, sample_dt=0.01))
rep = realization_selfcheck(real, traj.t, traj.z)
print(f"realization self-check: max deviation {rep.max_deviation:.2e} over {rep.samples} samples")

rs = load_builtin("ratsys")
m, ch, inv = find_observability_index(rs)
obs = make_observer(output_based_realization(rs, ch, inv))
size = sum(g.term_count() for g in obs.real.b_o)
print(f"\nrational system: m_o = {m}, realization kind {obs.real.kind}, "
      f"b_o has {size} terms with symbolic parameters")
worst, n = k_o_fd_check(obs, count=50)
print(f"k_o vs central differences of b_o at {n} random points: worst relative gap {worst:.1e}")

# with every rate set to one the same objects are short enough to read
ones = rs.bind({p: 1 for p in rs.free_params})
m, ch, inv = find_observability_index(ones)
obs = make_observer(output_based_realization(ones, ch, inv))
print("with unit rates:")
print("  b_o =", obs.real.b_o[0])
print("  k_o =", obs.k_o[-1][0])
