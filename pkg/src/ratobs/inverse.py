"""Inverting the chain map x -> s(x): observability index and s^-1.

Two solvers are provided.  :func:`triangular_inverse` works symbolically in
the parameters and handles chains that can be solved one state at a time.
:func:`groebner_inverse` eliminates over Q with the parameters fixed to
numbers and finds inverses the triangular scan misses.
"""

import logging
import random
from dataclasses import dataclass, field

from gmpy2 import mpq

from .algebra import MonomialOrder, Polynomial, RationalFunction, determinant, \
    gcd_poly, jacobian, poly_text, squarefree
from .errors import NonPolynomialMap, NotInvertibleAtOrder, NotObservableUpTo, \
    NotTriangular, ResourceExceeded, ZeroDenominatorAfterSubstitution
from .groebner import DEFAULT_MAX_STEPS, buchberger
from .lie import build_s_chain

log = logging.getLogger(__name__)


@dataclass
class InverseMap:
    """``x_i = r[i](T_1, ..., T_{n_o})`` valid where ``side_conditions`` hold."""

    r: list
    m_used: int
    tags: list
    side_conditions: list = field(default_factory=list)
    kind: str = "rational"
    method: str = "triangular"
    param_values: dict = None

    def substitute_chain(self, chain):
        """r(s(x)) as rational functions in x."""
        binds = {t: s for t, s in zip(self.tags, chain.entries)}
        return [ri.substitute(binds) for ri in self.r]

    def text(self, sys):
        return "\n".join(f"{name} = {ri}" for name, ri in zip(sys.state_names, self.r))


def tag_vars(vt, count):
    """Indices of tag variables T1..T_count, created on demand."""
    return [vt.fresh(f"T{k}", "tag") for k in range(1, count + 1)]


def _param_content(c, params):
    """Squarefree parameter factors of ``c``: monomial factors split off."""
    parts = c.split_vars(set(params))
    g = None
    for coeff in parts.values():
        g = coeff if g is None else gcd_poly(g, coeff)
        if g.is_constant():
            return []
    if g is None or g.is_constant():
        return []
    out = []
    mono = g.min_monomial()
    for i, _ in mono:
        out.append(Polynomial.var(g.vt, i))
    rest = g.div_monomial(mono)
    if not rest.is_constant():
        out.append(squarefree(rest).monic())
    return out


def _add_condition(conds, c):
    for d in conds:
        if d == c:
            return
    conds.append(c)


def _kind(r, sys):
    params = set(sys.param_vars)
    return "polynomial" if all(ri.den.variables() <= params for ri in r) else "rational"


def triangular_inverse(chain):
    """Solve ``T_k = s_k(x)`` one state at a time.

    Equations are scanned in order, repeatedly, until no further state can
    be solved.  An equation is usable when, after substituting the states
    solved so far, it is of degree 1 in exactly one unsolved state.
    """
    sys = chain.sys
    vt = sys.vt
    tags = tag_vars(vt, chain.n_o)
    params = sys.param_vars
    unsolved = list(sys.state_vars)
    solution = {}
    used = set()
    conds = []
    progress = True
    while unsolved and progress:
        progress = False
        for k, s in enumerate(chain.entries):
            if k in used:
                continue
            e = s.substitute(solution) if solution else s
            eq = Polynomial.var(vt, tags[k]) * e.den - e.num
            vs = [v for v in unsolved if v in eq.variables()]
            if not vs:
                used.add(k)
                continue
            if len(vs) != 1 or eq.degree(vs[0]) != 1:
                continue
            v = vs[0]
            co = eq.coeffs_in(v)
            c1 = co[1]
            c0 = co.get(0, Polynomial(vt))
            solution[v] = RationalFunction(-c0, c1)
            for c in _param_content(c1, params):
                _add_condition(conds, c)
            unsolved.remove(v)
            used.add(k)
            progress = True
            break
    if unsolved:
        index, profile = _first_unusable(chain, solution, unsolved, tags, used)
        raise NotTriangular(index, profile)
    r = [solution[v] for v in sys.state_vars]
    kind = _kind(r, sys) if sys.kind == "polynomial" else "rational"
    return InverseMap(r, chain.m, tags, conds, kind, "triangular")


def _first_unusable(chain, solution, unsolved, tags, used):
    vt = chain.sys.vt
    for k, s in enumerate(chain.entries):
        if k in used:
            continue
        e = s.substitute(solution) if solution else s
        eq = Polynomial.var(vt, tags[k]) * e.den - e.num
        profile = {vt.name(v): eq.degree(v) for v in unsolved if eq.degree(v)}
        if profile:
            return k + 1, profile
    return chain.n_o, {vt.name(v): 0 for v in unsolved}


# -- Groebner route ------------------------------------------------------------

def _instantiate(chain, param_values):
    vals = {chain.sys.vt.index(k): mpq(v) for k, v in (param_values or {}).items()}
    return [s.partial_eval(vals) if vals else s for s in chain.entries]


def groebner_inverse(chain, param_values=None, max_steps=DEFAULT_MAX_STEPS):
    """Inverse by lex elimination at fixed numeric parameter values.

    The ideal ``<q_k T_k - p_k, 1 - Z prod q_k>`` is built from the chain
    with denominators saturated through the auxiliary ``Z``.  For each state
    a lex basis ranks ``Z`` and the other states first, then the state, then
    the tags; an element ``c(T) x_i - d(T)`` gives ``x_i = d/c``.
    """
    sys = chain.sys
    vt = sys.vt
    entries = _instantiate(chain, param_values)
    free = set(sys.param_vars) - {vt.index(k) for k in (param_values or {})}
    if any(e.variables() & free for e in entries):
        raise ValueError("groebner_inverse needs every parameter bound to a number")
    tags = tag_vars(vt, chain.n_o)
    z = vt.fresh("Z", "auxiliary")
    gens = []
    dens = []
    for t, s in zip(tags, entries):
        gens.append(Polynomial.var(vt, t) * s.den - s.num)
        if not s.den.is_constant() and all(s.den != d for d in dens):
            dens.append(s.den)
    if dens:
        prod = Polynomial.const(vt, 1)
        for d in dens:
            prod = prod * d
        gens.append(Polynomial.const(vt, 1) - Polynomial.var(vt, z) * prod)
    states = sys.state_vars
    tagset = set(tags)
    r = []
    steps = 0
    for xi in states:
        others = [x for x in reversed(states) if x != xi]
        order = MonomialOrder("lex", [z] + others + [xi] + list(reversed(tags)))
        gb = buchberger(gens, order, max_steps=max_steps - steps)
        steps += gb.steps
        found = None
        for g in gb.generators:
            vs = g.variables()
            if xi in vs and vs <= tagset | {xi} and g.degree(xi) == 1:
                co = g.coeffs_in(xi)
                found = RationalFunction(-co.get(0, Polynomial(vt)), co[1])
                break
        if found is None:
            raise NotInvertibleAtOrder(chain.m, vt.name(xi))
        r.append(found)
    # sanity: r(s(x)) = x at the numeric instance
    binds = dict(zip(tags, entries))
    for xi, ri in zip(states, r):
        try:
            back = ri.substitute(binds)
        except ZeroDenominatorAfterSubstitution:
            raise NotInvertibleAtOrder(chain.m, vt.name(xi)) from None
        if not back.eq(RationalFunction.var(vt, xi)):
            raise NotInvertibleAtOrder(chain.m, vt.name(xi))
    kind = "polynomial" if sys.kind == "polynomial" and all(ri.den.is_constant() for ri in r) \
        else "rational"
    pv = {k: mpq(v) for k, v in (param_values or {}).items()}
    # parameters are numbers here, so there is no symbolic side condition
    return InverseMap(r, chain.m, tags, [], kind, "groebner", pv or None)


def random_admissible_params(sys, rng, chain=None, attempts=100):
    """Random nonzero rationals in [-10, 10] for the free parameters.

    Values that make an assumption vanish, or a chain denominator vanish
    identically, are rejected and redrawn.
    """
    names = sys.free_params
    for _ in range(attempts):
        vals = {}
        for p in names:
            d = rng.randint(1, 10)
            num = 0
            while num == 0:
                num = rng.randint(-10 * d, 10 * d)
            vals[p] = mpq(num, d)
        sub = {sys.vt.index(k): v for k, v in vals.items()}
        ok = all(not a.partial_eval(sub).is_zero() for a in sys.assumptions)
        if ok and chain is not None:
            ok = all(not s.den.partial_eval(sub).is_zero() for s in chain.entries)
        if ok:
            return vals
    raise ValueError("could not draw admissible parameter values")


def groebner_inverse_randomized(chain, seed=0, trials=3, max_steps=DEFAULT_MAX_STEPS):
    """Majority vote of Groebner trials at random admissible parameters."""
    sys = chain.sys
    if not sys.free_params:
        return groebner_inverse(chain, None, max_steps)
    rng = random.Random(seed)
    wins, first, last_err = 0, None, None
    for _ in range(trials):
        vals = random_admissible_params(sys, rng, chain)
        try:
            inv = groebner_inverse(chain, vals, max_steps)
        except NotInvertibleAtOrder as exc:
            last_err = exc
            continue
        wins += 1
        if first is None:
            first = inv
    if wins * 2 > trials:
        return first
    raise last_err or NotInvertibleAtOrder(chain.m)


def default_m_max(sys):
    return max(2 * sys.n, sys.n + 2)


def find_observability_index(sys, m_max=None, seed=0, max_steps=DEFAULT_MAX_STEPS,
                             use_groebner=True):
    """Least order ``m <= m_max`` at which an inverse is found.

    Returns ``(m, chain, inverse)``.  Failure raises NotObservableUpTo,
    which does not prove that the system is unobservable.
    """
    if m_max is None:
        m_max = default_m_max(sys)
    if m_max < 1:
        raise ValueError("m_max must be at least 1")
    chain = None
    for m in range(1, m_max + 1):
        chain = build_s_chain(sys, m, chain)
        if chain.n_o < sys.n:
            continue
        try:
            inv = triangular_inverse(chain)
            log.info("order %d: triangular inverse found", m)
            return m, chain, inv
        except NotTriangular as exc:
            log.info("order %d: %s", m, exc)
        if not use_groebner:
            continue
        try:
            inv = groebner_inverse_randomized(chain, seed, max_steps=max_steps)
            log.info("order %d: Groebner inverse found", m)
            return m, chain, inv
        except NotInvertibleAtOrder as exc:
            log.info("order %d: %s", m, exc)
        except ResourceExceeded as exc:
            log.warning("order %d: %s", m, exc)
    raise NotObservableUpTo(m_max)


def round_trip_ok(inv, chain):
    """Symbolic check ``r(s(x)) = x``."""
    entries = _instantiate(chain, inv.param_values)
    binds = dict(zip(inv.tags, entries))
    vt = chain.sys.vt
    return all(ri.substitute(binds).eq(RationalFunction.var(vt, x))
               for ri, x in zip(inv.r, chain.sys.state_vars))


@dataclass
class JacobiVerdict:
    status: str            # holds / fails / indeterminate
    det: RationalFunction = None
    side_conditions: list = field(default_factory=list)

    def text(self):
        if self.det is None:
            return f"{self.status} (map is not square)"
        s = f"{self.status}, det = {self.det}"
        if self.side_conditions:
            s += "; requires " + ", ".join(f"{poly_text(c)} != 0" for c in self.side_conditions)
        return s


def jacobi_condition(funcs, sys):
    """Jacobian determinant of a polynomial map in the system's states.

    Holds when the determinant is a nonzero constant in the states; any
    parameter dependence becomes a side condition.  Non-square maps are
    reported as indeterminate.
    """
    states = sys.state_vars
    sset = set(states)
    for g in funcs:
        if g.den.variables() & sset:
            raise NonPolynomialMap(f"{g} has a state-dependent denominator")
    if len(funcs) != len(states):
        return JacobiVerdict("indeterminate")
    det = determinant(jacobian(funcs, states))
    if det.is_zero() or det.variables() & sset:
        return JacobiVerdict("fails", det)
    conds = []
    if not det.is_constant():
        for c in _param_content(det.num, sys.param_vars):
            _add_condition(conds, c)
        for c in _param_content(det.den, sys.param_vars):
            _add_condition(conds, c)
    return JacobiVerdict("holds", det, conds)
