import pytest
from hypothesis import given
from hypothesis import strategies as st

from ratobs.algebra import poly_text
from ratobs.builtin import BUILTIN, builtin_source, load_builtin
from ratobs.errors import DenominatorZeroAtX0, DimensionMismatch, DSLSyntaxError, ParseError, \
    UndefinedSymbol
from ratobs.parser import parse, parse_expr, render
from strategies import polynomials

MICHAELIS_FORMS = ["-x1 + (x1 + x1^2)/(x1 + 2)", "x1/(x1 + 2)"]


def test_michaelis_source():
    sys = load_builtin("michaelis")
    assert sys.n == 2 and sys.m_y == 1
    assert sys.kind == "rational"
    for g, text in zip(sys.f, MICHAELIS_FORMS):
        assert g.eq(parse_expr(text, sys.vt))
    assert str(sys.h[0]) == "x2"
    assert [int(v) for v in sys.x0] == [1, 1]
    assert sys.free_params == []


def test_one_state_system():
    sys = parse("system s { states x1 = 0; dx1 = 0; output y = x1; }")
    assert sys.n == 1 and sys.kind == "polynomial"
    assert sys.f[0].is_zero()


def test_polsys_assumption():
    sys = load_builtin("polsys")
    assert sys.kind == "polynomial"
    assert [poly_text(a) for a in sys.assumptions] == ["a12"]
    assert sys.free_params == ["a11", "a12", "a22"]


def test_parameter_denominators_keep_polynomial_kind():
    sys = parse("system s { params a; states x = 1; dx = x/a; output y = x; }")
    assert sys.kind == "polynomial"


@pytest.mark.parametrize("name", BUILTIN)
def test_render_round_trip_builtin(name):
    sys = load_builtin(name)
    again = parse(render(sys))
    assert again.same_as(sys)
    assert render(again) == render(sys)
    for a, b in zip(again.f, sys.f):
        assert str(a) == str(b)


def test_render_zero():
    sys = parse("system s { states x = 1; dx = x - x; output y = x; }")
    assert "dx = 0;" in render(sys)


def test_binding_substitutes_parameters():
    sys = load_builtin("polsys").bind({"a11": 1, "a12": 2, "a22": "1/2"})
    assert sys.free_params == []
    assert str(sys.f[0]) == "-x1^3 + 2*x2"
    assert sys.assumptions == []
    with pytest.raises(ParseError):
        load_builtin("polsys").bind({"a12": 0})
    with pytest.raises(UndefinedSymbol):
        load_builtin("polsys").bind({"b": 1})


def test_comments_unicode_and_rationals():
    src = """# leading comment
    system u {
      params k = 3/2;   # bound
      states x = 0.25 y = -1;
      dx = −k·x + y;
      dy = x^2;
      output out = x;
      assume k ≠ 0;
    }"""
    sys = parse(src)
    assert str(sys.f[0]) == "-3/2*x + y"
    assert [str(v) for v in sys.x0] == ["1/4", "-1"]


@pytest.mark.parametrize("src, exc, where", [
    ("", DSLSyntaxError, "1:1"),
    ("system s { states x = 1; dx = x + ; output y = x; }", DSLSyntaxError, "1:35"),
    ("system s { states x = 1; dx = z; output y = x; }", UndefinedSymbol, "1:31"),
    ("system s { states x = 1 y = 2; dx = y; output o = x; }", DimensionMismatch, None),
    ("system s { states x = 1; dx = x; }", DimensionMismatch, None),
    ("system s { states x = 1; dx = 1/(x - 1); output y = x; }", DenominatorZeroAtX0, None),
    ("system s { states x = 1; dx = x^(1/2); output y = x; }", DSLSyntaxError, None),
    ("system s { states x = 1; dx = x^0; output y = x; }", DSLSyntaxError, None),
    ("system s { states x = 1; dx = x; dx = 2; output y = x; }", DSLSyntaxError, None),
    ("system s { params x; states x = 1; dx = x; output y = x; }", DSLSyntaxError, None),
    ("system s { states x = 1; dx = x; output y = x; } trailing", DSLSyntaxError, None),
])
def test_rejections_carry_positions(src, exc, where):
    with pytest.raises(exc) as info:
        parse(src)
    if where:
        assert str(info.value).startswith(where)


@given(st.text(alphabet="systemparamsoutput{}();=+-*/^!0123456789 xy#\n", max_size=80))
def test_fuzz_rejection_is_total(text):
    try:
        parse(text)
    except ParseError:
        pass


@given(st.integers(0, 200), st.text(alphabet="{};=+-*/^()!x1a ", min_size=1, max_size=4))
def test_mutated_sources_never_crash(pos, junk):
    src = builtin_source("ratsys")
    pos = pos % len(src)
    try:
        parse(src[:pos] + junk + src[pos:])
    except ParseError:
        pass


@given(polynomials(), polynomials(nonzero=True))
def test_parse_render_round_trip(num, den):
    # build a system from random expressions rendered in the DSL
    rf_text = f"({num})/({den})" if not den.is_constant() else str(num)
    src = ("system r { params a; states x = 0 y = 0 z = 0; "
           f"dx = {rf_text}; dy = {num}; dz = 1; output o = y; }}")
    try:
        sys = parse(src)
    except DenominatorZeroAtX0:
        return
    again = parse(render(sys))
    assert again.same_as(sys)
    assert all(a.eq(b) for a, b in zip(
        again.f, [parse_expr(str(g), again.vt) for g in sys.f]))
