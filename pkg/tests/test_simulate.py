import dataclasses
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ratobs.errors import NonFinite, PoleCrossing, UndefinedAtPoint
from ratobs.observer import GainSpec, gain_search, make_observer
from ratobs.parser import parse, parse_expr
from ratobs.simulate import SimConfig, charpoly, eigenvalues, integrate, linearize, \
    observability_rank, performance_sim, write_csv
from conftest import pipeline

# parameter values for which every example is well posed near x0
BOUND = {
    "polsys": dict(a11=1, a12=1, a22=1),
    "higher": dict(a12=1, a13=2, a14=1, a21=1, a22=1),
    "ratsys": dict(a11=1, a12=1, a13=1, a14=1, a21=1, a22=1, a23=1),
    "twocomp": dict(a1=1, a2=1, a3=1, a4=1),
    "michaelis": {},
}
DOUBLE_INTEGRATOR = ("system di { states x1 = 1 x2 = -1; dx1 = x2; dx2 = 0; "
                     "output y = x1; }")


def one_state(rhs, x0=1):
    sys = parse(f"system s {{ states x = {x0}; dx = {rhs}; output y = x; }}")
    return sys.f, sys.state_vars


def test_exponential_decay():
    f, v = one_state("-x")
    res = integrate(f, v, [1.0], SimConfig(step=1e-3, horizon=5.0))
    assert abs(res.z[-1, 0] - math.exp(-5)) < 1e-9
    assert res.t[-1] == pytest.approx(5.0)
    assert np.all(np.diff(res.t) > 0)


def test_zero_field_is_constant():
    f, v = one_state("0", x0=3)
    res = integrate(f, v, [3.0], SimConfig(step=1e-2, horizon=1.0))
    assert np.all(res.z == 3.0)


def test_blowup_is_reported():
    f, v = one_state("x^2")
    res = integrate(f, v, [1.0], SimConfig(step=1e-3, horizon=2.0))
    assert res.status in ("diverged", "pole_crossing")
    # the guard stops at the first step that no longer resolves the escape,
    # so no state past the true blowup time t = 1 is produced
    assert res.t_fail <= 1.0
    assert res.t[-1] <= 1.0
    with pytest.raises((NonFinite, PoleCrossing)):
        integrate(f, v, [1.0], SimConfig(step=1e-3, horizon=2.0), raise_on_failure=True)


def test_pole_crossing():
    # x runs from 1 towards 0, where 1/x has its pole
    sys = parse("system p { states x = 1 z = 0; dx = -1; dz = 1/x; output y = x; }")
    res = integrate(sys.f, sys.state_vars, [1.0, 0.0], SimConfig(step=1e-3, horizon=2.0))
    assert res.status == "pole_crossing"
    assert 0.99 < res.t_fail <= 1.001


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(step=2.0, horizon=1.0)
    with pytest.raises(ValueError):
        SimConfig(step=0)
    with pytest.raises(ValueError):
        SimConfig(eps_den=0)


def test_escape_guard_leaves_stiff_but_stable_steps_alone():
    # h * lambda = -2.5 is inside the RK4 stability interval
    f, v = one_state("-25*x")
    res = integrate(f, v, [1.0], SimConfig(step=0.1, horizon=5.0))
    assert res.status == "ok" and abs(res.z[-1, 0]) < 1e-6


def test_step_halving_order():
    sys = parse("system l { states x1 = 1 x2 = 0; dx1 = x2; dx2 = -2*x1 - 3*x2; output y = x1; }")
    ends = []
    for h in (0.1, 0.05, 0.025):
        res = integrate(sys.f, sys.state_vars, [1.0, 0.0], SimConfig(step=h, horizon=2.0))
        ends.append(res.z[-1])
    d1 = np.linalg.norm(ends[0] - ends[1])
    d2 = np.linalg.norm(ends[1] - ends[2])
    assert math.log2(d1 / d2) >= 3.5


@pytest.mark.parametrize("name", list(BOUND))
def test_matched_start_keeps_error_at_zero(name):
    p = pipeline(name, **BOUND[name])
    obs = p.obs.with_gain([1] * p.obs.n_o)
    horizon = 2.0 if name == "higher" else 10.0
    res = performance_sim(p.sys, obs, SimConfig(horizon=horizon))
    assert res.status == "ok"
    assert np.max(np.abs(res.ey)) < 1e-6


def test_matched_start_linear_is_exact():
    p = parse(DOUBLE_INTEGRATOR)
    from ratobs.inverse import find_observability_index
    from ratobs.realization import output_based_realization
    m, chain, inv = find_observability_index(p)
    obs = make_observer(output_based_realization(p, chain, inv), [3, 2])
    res = performance_sim(p, obs, SimConfig(horizon=10.0))
    assert np.max(np.abs(res.ey)) < 1e-9


def test_searched_gain_beats_open_loop(polsys_unit):
    obs = polsys_unit.obs
    spec = GainSpec("grid", ranges=[(-4, 4, 1), (-4, 4, 1)], horizon=50.0)
    K, score, _ = gain_search(obs, spec)
    pert = [0.5, -0.5]
    good = performance_sim(polsys_unit.sys, obs.with_gain(K), perturbation=pert)
    assert good.converged
    # open loop: no k_o and K = 0 leaves the realization running on its own
    ren = dict(zip(obs.real.xh, obs.xo))
    bare = dataclasses.replace(obs, f_o=[g.rename(ren) for g in obs.real.f_or], K=[[0], [0]])
    bad = performance_sim(polsys_unit.sys, bare, perturbation=pert)
    assert bad.status != "ok" or bad.tail_error > 10 * good.tail_error


def test_linear_error_matches_closed_form():
    sys = parse(DOUBLE_INTEGRATOR)
    from ratobs.inverse import find_observability_index
    from ratobs.realization import output_based_realization
    m, chain, inv = find_observability_index(sys)
    obs = make_observer(output_based_realization(sys, chain, inv), [3, 2])
    d = np.array([0.5, -0.5])
    res = performance_sim(sys, obs, SimConfig(horizon=10.0, sample_dt=0.1), perturbation=d)
    # x^ = s(x) = x here, so x - x_o = exp((A - K C) t)(-d)
    F = np.array([[-3.0, 1.0], [-2.0, 0.0]])
    w, V = np.linalg.eig(F)
    for t, z in zip(res.t, res.z):
        want = (V @ np.diag(np.exp(w * t)) @ np.linalg.solve(V, -d)).real
        assert np.allclose(z[:2] - z[2:], want, atol=1e-6)


def test_csv_header(polsys_unit):
    obs = polsys_unit.obs.with_gain([1, 1])
    res = performance_sim(polsys_unit.sys, obs, SimConfig(horizon=1.0, sample_dt=0.5))
    buf = io.StringIO()
    write_csv(res, polsys_unit.sys, obs, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,x_1,x_2,xo_1,xo_2,ey_1"
    assert len(lines) == 4
    assert [float(v) for v in lines[1].split(",")[:3]] == [0.0, 1.0, 0.5]


def test_linearize_linear_field():
    sys = parse("system l { params a; states x = 1 y = 2; dx = 2*x - y; dy = 5*y; output o = x; }")
    J = linearize(sys.f, sys.state_vars, [7.0, -3.0])
    assert np.array_equal(J, [[2, -1], [0, 5]])
    with pytest.raises(ValueError):
        linearize(parse("system l { params a; states x = 1; dx = a*x; output o = x; }").f,
                  [1], [0.0])


def test_linearize_polsys_has_zero_mode():
    sys = pipeline("polsys", **BOUND["polsys"]).sys
    lam = eigenvalues(linearize(sys.f, sys.state_vars, [0.0, 0.0]))
    assert min(abs(z) for z in lam) < 1e-12


def test_linearize_undefined():
    sys = parse("system p { states x = 1; dx = 1/x; output y = x; }")
    with pytest.raises(UndefinedAtPoint):
        linearize(sys.f, sys.state_vars, [0.0])


def test_linearize_matches_finite_differences(rng):
    sys = pipeline("ratsys", **BOUND["ratsys"]).sys
    done = 0
    while done < 20:
        x = np.array([rng.uniform(0.1, 3), rng.uniform(0.1, 3)])
        J = linearize(sys.f, sys.state_vars, x)
        h = 1e-5
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            up = [g.evaluate_float(dict(zip(sys.state_vars, x + e))) for g in sys.f]
            dn = [g.evaluate_float(dict(zip(sys.state_vars, x - e))) for g in sys.f]
            fd = (np.array(up) - np.array(dn)) / (2 * h)
            assert np.allclose(J[:, j], fd, rtol=1e-6, atol=1e-9)
        done += 1


def test_eigenvalue_examples():
    assert np.allclose([z.real for z in eigenvalues(np.diag([1.0, -2.0, 3.0]))], [-2, 1, 3])
    assert np.allclose(eigenvalues([[0, 1], [-2, -3]]), [-2, -1])
    comp = [[0, 0, -1], [1, 0, 0], [0, 1, 0]]
    roots = sorted((complex(math.cos(a), math.sin(a)) for a in (math.pi / 3, math.pi, -math.pi / 3)),
                   key=lambda z: (z.real, z.imag))
    assert np.allclose(eigenvalues(comp), roots, atol=1e-8)
    assert eigenvalues(np.zeros((0, 0))) == []
    with pytest.raises(ValueError):
        eigenvalues([[1.0, math.nan], [0, 1]])


def test_charpoly():
    assert np.allclose(charpoly([[0, 1], [-2, -3]]), [1, 3, 2])


def _match(a, b, tol):
    rest = list(b)
    for z in a:
        k = min(range(len(rest)), key=lambda i: abs(rest[i] - z))
        if abs(rest[k] - z) > tol:
            return False
        rest.pop(k)
    return True


@given(st.integers(1, 6).flatmap(lambda n: st.lists(
    st.lists(st.integers(-9, 9), min_size=n, max_size=n), min_size=n, max_size=n)))
def test_eigenvalues_match_numpy(rows):
    M = np.array(rows, dtype=float)
    # perturb so that defective integer matrices do not dominate the check
    M = M + np.diag(np.arange(len(rows)) * 0.137)
    ours = eigenvalues(M)
    ref = np.linalg.eigvals(M)
    scale = 1.0 + np.linalg.norm(M)
    assert _match(ours, ref, 1e-6 * scale)


def test_observability_rank_examples():
    assert observability_rank([[0, 1], [0, 0]], [[1, 0]]) == 2
    assert observability_rank([[0, 1], [0, 0]], [[0, 0]]) == 0
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    C = np.array([[1.0, 0.0]])
    K = np.array([[3.0], [2.0]])
    # performance system (x, x_o) with output e_y = C x - C x_o
    Ae = np.block([[A, np.zeros((2, 2))], [K @ C, A - K @ C]])
    Ce = np.hstack([C, -C])
    assert observability_rank(Ae, Ce) == 2
