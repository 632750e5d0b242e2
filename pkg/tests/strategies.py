"""Hypothesis strategies for small polynomials and rational functions."""

from gmpy2 import mpq
from hypothesis import strategies as st

from ratobs.algebra import Polynomial, RationalFunction, VarTable

VT = VarTable([("a", "parameter"), ("x", "state"), ("y", "state"), ("z", "state")])
NVARS = len(VT)

coefficients = st.builds(mpq, st.integers(-6, 6).filter(bool), st.integers(1, 4))
monomials = st.tuples(*[st.integers(0, 2) for _ in range(NVARS)])


@st.composite
def polynomials(draw, max_terms=4, nonzero=False):
    terms = draw(st.lists(st.tuples(monomials, coefficients),
                          min_size=1 if nonzero else 0, max_size=max_terms))
    p = Polynomial.const(VT, 0)
    for exps, c in terms:
        t = Polynomial.const(VT, c)
        for i, e in enumerate(exps):
            if e:
                t = t * Polynomial.var(VT, i, e)
        p = p + t
    if nonzero and p.is_zero():
        p = Polynomial.const(VT, 1)
    return p


@st.composite
def rationals(draw, nonzero=False):
    num = draw(polynomials(nonzero=nonzero))
    den = draw(polynomials(max_terms=3, nonzero=True))
    return RationalFunction(num, den)


points = st.lists(st.builds(mpq, st.integers(-30, 30), st.integers(1, 7)),
                  min_size=NVARS, max_size=NVARS)
