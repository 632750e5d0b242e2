import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from ratobs.algebra import RationalFunction
from ratobs.builtin import REFERENCE, k_o_fd_check
from ratobs.errors import NoStableCandidate, UnobservablePair
from ratobs.inverse import find_observability_index
from ratobs.observer import GainSpec, check_conjugate_closed, gain_names, grid_candidates, \
    gain_search, make_observer, pole_place
from ratobs.parser import parse, parse_expr
from ratobs.realization import output_based_realization
from ratobs.simulate import eigenvalues
from conftest import pipeline


def observer_for(src, K=None):
    sys = parse(src)
    m, chain, inv = find_observability_index(sys)
    return make_observer(output_based_realization(sys, chain, inv), K)


DOUBLE_INTEGRATOR = ("system di { states x1 = 1 x2 = -1; dx1 = x2; dx2 = 0; "
                     "output y = x1; }")


@pytest.mark.parametrize("name", ["polsys", "higher"])
def test_nonlinear_gain_closed_form(name):
    obs = pipeline(name).obs
    vt = obs.real.sys.vt
    assert obs.k_o[-1][0].eq(parse_expr(REFERENCE[name]["k_o"], vt))
    # only the last block is populated
    assert all(row[0].is_zero() for row in obs.k_o[:-1])


def test_drift_free_of_first_coordinate_gives_zero_gain():
    obs = observer_for(DOUBLE_INTEGRATOR)
    assert all(row[0].is_zero() for row in obs.k_o)
    vt = obs.real.sys.vt
    want = ["xo2 + k1*(y - xo1)", "k2*(y - xo1)"]
    for g, w in zip(obs.f_o, want):
        assert g.eq(parse_expr(w, vt))


@pytest.mark.parametrize("name", ["polsys", "higher", "ratsys", "twocomp", "michaelis"])
def test_injection_vanishes_on_matching_output(name):
    obs = pipeline(name).obs
    vt = obs.real.sys.vt
    on = {y: RationalFunction.var(vt, xo) for y, xo in zip(obs.y, obs.xo)}
    ren = dict(zip(obs.real.xh, obs.xo))
    for g, f in zip(obs.f_o, obs.real.f_or):
        assert g.substitute(on).eq(f.rename(ren))


@pytest.mark.parametrize("name", ["polsys", "higher", "ratsys", "twocomp", "michaelis"])
def test_gain_matches_finite_differences(name):
    worst, done = k_o_fd_check(pipeline(name).obs, count=100)
    assert done == 100
    assert worst < 1e-6


def test_numeric_gain_substitution(polsys_unit):
    obs = polsys_unit.obs.with_gain([3, 2])
    assert obs.K == [[3], [2]]
    names = {obs.real.sys.vt.name(v) for g in obs.f_o for v in g.variables()}
    assert not names & {"k1", "k2"}
    with pytest.raises(ValueError):
        polsys_unit.obs.with_gain([1, 2, 3])


def test_gain_names():
    assert gain_names(2, 1) == [["k1"], ["k2"]]
    assert gain_names(2, 2)[1] == ["k2_1", "k2_2"]


def test_pole_place_double_integrator():
    K = pole_place([[0, 1], [0, 0]], [[1, 0]], [-1, -2])
    assert np.allclose(K, [3, 2], atol=1e-12)


def test_pole_place_when_poles_are_already_there():
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    C = np.array([[1.0, 2.0]])
    K = pole_place(A, C, [-1, -2])
    lam = eigenvalues(A - np.outer(K, C))
    assert np.allclose([z.real for z in lam], [-2, -1], atol=1e-8)


def test_pole_place_unobservable():
    with pytest.raises(UnobservablePair):
        pole_place([[0, 1], [0, 0]], [[0, 0]], [-1, -2])
    with pytest.raises(UnobservablePair):
        pole_place([[-1, 0], [0, -2]], [[1, 0]], [-1, -2])


def test_conjugate_closure():
    check_conjugate_closed([-1 + 2j, -1 - 2j, -3])
    with pytest.raises(ValueError):
        check_conjugate_closed([-1 + 2j, -3])
    with pytest.raises(ValueError):
        GainSpec("poles", poles=[-1 + 1j])
    with pytest.raises(ValueError):
        GainSpec("magic")


@given(st.integers(2, 4).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.integers(-3, 3), min_size=n, max_size=n), min_size=n, max_size=n),
    st.lists(st.integers(-2, 2), min_size=n, max_size=n),
    st.lists(st.integers(1, 6), min_size=n, max_size=n, unique=True))))
def test_pole_place_hits_requested_poles(data):
    A, C, p = data
    A = np.array(A, dtype=float)
    C = np.array([C], dtype=float)
    n = len(p)
    O = np.vstack([C @ np.linalg.matrix_power(A, k) for k in range(n)])
    assume(np.linalg.cond(O) < 1e3)
    poles = sorted(-float(v) for v in p)
    K = pole_place(A, C, poles)
    lam = np.sort(np.real(eigenvalues(A - np.outer(K, C))))
    assert np.allclose(lam, poles, atol=1e-8)


def test_complex_poles():
    K = pole_place([[0, 1], [0, 0]], [[1, 0]], [-1 + 1j, -1 - 1j])
    assert np.allclose(K, [2, 2])


def test_grid_candidates_order():
    cands = grid_candidates([(0, 1, 1), (-1, 0, 1)])
    assert [[int(v) for v in c] for c in cands] == [[0, -1], [0, 0], [1, -1], [1, 0]]
    assert grid_candidates([(1, 0, 1)]) == []


def test_grid_search_polsys(polsys_unit):
    spec = GainSpec("grid", ranges=[(-4, 4, 1), (-4, 4, 1)], horizon=50.0)
    K, score, scores = gain_search(polsys_unit.obs, spec)
    assert score < 1e-6
    assert len(scores) == 81
    assert score == min(scores)


def test_grid_search_keeps_pole_placed_gain():
    obs = observer_for(DOUBLE_INTEGRATOR)
    K = pole_place([[0, 1], [0, 0]], [[1, 0]], [-1, -2])
    spec = GainSpec("grid", ranges=[(K[0], K[0], 1), (K[1], K[1], 1)], horizon=50.0)
    _, score, _ = gain_search(obs, spec)
    assert score < 1e-8


def test_grid_ties_go_to_first_candidate():
    # from a matched start the error is exactly zero for every gain
    obs = observer_for(DOUBLE_INTEGRATOR)
    spec = GainSpec("grid", ranges=[(-1, 1, 1), (-1, 1, 1)], horizon=5.0,
                    perturbations=[[0, 0]])
    K, score, scores = gain_search(obs, spec)
    assert score == 0.0 and all(s == 0.0 for s in scores)
    assert [int(v) for v in K] == [-1, -1]


def test_empty_grid():
    obs = observer_for(DOUBLE_INTEGRATOR)
    with pytest.raises(NoStableCandidate):
        gain_search(obs, GainSpec("grid", ranges=[(1, 0, 1), (0, 0, 1)]))


def test_all_divergent_grid():
    # dx = x^2 from x0 = 1 blows up at t = 1 whatever the gain
    obs = observer_for("system b { states x = 1; dx = x^2; output y = x; }")
    with pytest.raises(NoStableCandidate):
        gain_search(obs, GainSpec("grid", ranges=[(0, 1, 1)], horizon=5.0))
