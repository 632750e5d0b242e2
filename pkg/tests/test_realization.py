import dataclasses

import numpy as np
import pytest
from gmpy2 import mpq

from ratobs.builtin import REFERENCE, load_builtin
from ratobs.errors import ShiftStructureViolation
from ratobs.inverse import find_observability_index
from ratobs.lie import build_s_chain
from ratobs.parser import parse, parse_expr
from ratobs.realization import output_based_realization, realization_selfcheck
from ratobs.simulate import SimConfig, integrate
from conftest import pipeline


def test_polsys_drift():
    p = pipeline("polsys")
    vt = p.sys.vt
    assert p.real.n_o == 2 and p.real.m_y == 1
    assert p.real.b_o[0].eq(parse_expr(REFERENCE["polsys"]["b_o"], vt))
    assert str(p.real.f_or[0]) == "xh2"
    assert p.real.C_o == [[1, 0]]
    assert p.real.kind == "polynomial"


def test_polsys_initial_state_is_exact():
    p = pipeline("polsys")
    assert [str(g) for g in p.real.xh0] == ["1", "-a11 + 1/2*a12"]


def test_ratsys_drift_against_reference():
    # the reference display, read in x coordinates, must equal s3(x); as
    # printed its first term has the wrong power of (1 + a12 x1)
    p = pipeline("ratsys")
    vt = p.sys.vt
    s3 = p.chain.extended(3).entries[2]
    printed = REFERENCE["ratsys"]["b_o_in_x"]
    assert not s3.eq(parse_expr(printed, vt))
    fixed = printed.replace("a11^2*x1/(1+a12*x1)^2", "a11^2*x1/(1+a12*x1)^3")
    assert s3.eq(parse_expr(fixed, vt))
    # and b_o pulled back through x^ = s(x) is s3 again
    binds = dict(zip(p.real.xh, p.chain.entries))
    assert p.real.b_o[0].substitute(binds).eq(s3)
    assert p.real.kind == "rational"


def test_linear_system_gives_companion_drift():
    # char poly l^2 + 3 l + 2, so y'' = -2 y - 3 y' for any output
    sys = parse("system lin { states x1 = 1 x2 = 0; dx1 = x2; dx2 = -2*x1 - 3*x2; "
                "output y = x1 + 5*x2; }")
    m, chain, inv = find_observability_index(sys)
    real = output_based_realization(sys, chain, inv)
    assert real.b_o[0].eq(parse_expr("-2*xh1 - 3*xh2", sys.vt))
    assert real.kind == "polynomial"


def test_multi_output_block_shift():
    sys = parse("system mo { states x = 1 y = 0 z = 0; dx = y; dy = z; dz = -x - y*z; "
                "output p = x; output q = y; }")
    m, chain, inv = find_observability_index(sys)
    real = output_based_realization(sys, chain, inv)
    assert (m, real.n_o) == (2, 4)
    assert [str(g) for g in real.f_or[:2]] == ["xh3", "xh4"]
    assert real.C_o == [[1, 0, 0, 0], [0, 1, 0, 0]]
    binds = dict(zip(real.xh, chain.entries))
    nxt = chain.next_block()
    for b, s in zip(real.b_o, nxt):
        assert b.substitute(binds).eq(s)


@pytest.mark.parametrize("name", ["polsys", "higher", "ratsys", "twocomp", "michaelis"])
def test_outputs_are_first_entries(name):
    p = pipeline(name)
    for s, h in zip(p.chain.entries, p.sys.h):
        assert s.eq(h)
    # kind closure
    if p.sys.kind == "polynomial" and p.inv.kind == "polynomial":
        assert p.real.kind == "polynomial"


def test_higher_uses_three_coordinates():
    p = pipeline("higher")
    assert p.real.n_o == 3 > p.sys.n
    assert p.real.b_o[0].eq(parse_expr(REFERENCE["higher"]["b_o"], p.sys.vt))


def test_bogus_inverse_is_caught():
    sys = load_builtin("polsys")
    chain = build_s_chain(sys, 2)
    _, _, inv = find_observability_index(sys)
    wrong = dataclasses.replace(inv, r=[inv.r[0], parse_expr("T2", sys.vt)])
    with pytest.raises(ShiftStructureViolation):
        output_based_realization(sys, chain, wrong)


def _trajectory(sys, horizon):
    res = integrate(sys.f, sys.state_vars, [float(v) for v in sys.x0],
                    SimConfig(step=1e-3, horizon=horizon, sample_dt=1e-2))
    assert res.status == "ok"
    return res.t, res.z


def test_selfcheck_polsys(polsys_unit):
    t, z = _trajectory(polsys_unit.sys, 10.0)
    rep = realization_selfcheck(polsys_unit.real, t, z)
    assert rep.samples == len(t) - 2
    assert rep.ok(1e-3), rep


def test_selfcheck_constant_system():
    sys = parse("system c { states x = 1 y = 2; dx = 0; dy = 0; output o = x; output p = y; }")
    m, chain, inv = find_observability_index(sys)
    real = output_based_realization(sys, chain, inv)
    t, z = _trajectory(sys, 1.0)
    assert realization_selfcheck(real, t, z).max_deviation == 0.0


def test_selfcheck_michaelis():
    p = pipeline("michaelis")
    t, z = _trajectory(p.sys, 10.0)
    assert realization_selfcheck(p.real, t, z).ok(1e-3)


def test_selfcheck_sees_a_wrong_drift(polsys_unit):
    real = polsys_unit.real
    broken = dataclasses.replace(real, f_or=[real.f_or[0], real.f_or[1] * 2])
    t, z = _trajectory(polsys_unit.sys, 5.0)
    assert not realization_selfcheck(broken, t, z).ok(1e-3)


def test_initial_state_matches_numeric_chain(polsys_unit):
    sys = polsys_unit.sys
    pt = {v: float(c) for v, c in zip(sys.state_vars, sys.x0)}
    want = [s.evaluate_float(pt) for s in polsys_unit.chain.entries]
    got = [float(g.num.constant_value()) for g in polsys_unit.real.xh0]
    assert np.allclose(got, want, rtol=0, atol=0)
    assert polsys_unit.real.xh0[1].num.constant_value() == mpq(-1, 2)
