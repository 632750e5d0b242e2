"""Exact sparse multivariate polynomials and rational functions over Q.

Polynomials are stored in distributed form: a dict mapping a monomial to a
nonzero ``gmpy2.mpq`` coefficient.  A monomial is a tuple of
``(variable_index, exponent)`` pairs sorted by index, with no zero exponents.
Variable indices refer to a :class:`VarTable`, which is append-only so that
values built earlier stay valid while a synthesis session introduces tag and
auxiliary variables.

All polynomial and rational-function values are immutable.
"""

import heapq
import math
import random
from fractions import Fraction
from numbers import Rational

from gmpy2 import mpq, mpz

from .errors import DivisionByZero, ZeroDenominatorAfterSubstitution

ROLES = ("state", "parameter", "tag", "auxiliary")

ONE_MONO = ()


def to_q(c):
    """Coerce an int/Fraction/mpq/float/decimal string to ``mpq`` (floats exactly)."""
    if isinstance(c, type(mpq())):
        return c
    if isinstance(c, float):
        if c != c or c in (float("inf"), float("-inf")):
            raise ValueError("non-finite value")
        return mpq(c)
    if isinstance(c, (int, Rational)):
        return mpq(c.numerator, c.denominator) if isinstance(c, Fraction) else mpq(c)
    if isinstance(c, str):
        return mpq(Fraction(c).numerator, Fraction(c).denominator)
    raise TypeError(f"cannot use {c!r} as an exact rational")


class VarTable:
    """Ordered, append-only table of variable names and roles."""

    def __init__(self, entries=()):
        self._names = []
        self._roles = []
        self._index = {}
        for name, role in entries:
            self.add(name, role)

    def add(self, name, role="state"):
        if role not in ROLES:
            raise ValueError(f"unknown variable role {role!r}")
        if name in self._index:
            i = self._index[name]
            if self._roles[i] != role:
                raise ValueError(
                    f"variable {name!r} already declared as {self._roles[i]}")
            return i
        self._index[name] = len(self._names)
        self._names.append(name)
        self._roles.append(role)
        return len(self._names) - 1

    def fresh(self, base, role):
        """Add ``base`` (or ``base_``, ``base__`` ...) with the given role."""
        name = base
        while name in self._index and self._roles[self._index[name]] != role:
            name += "_"
        return self.add(name, role)

    def index(self, name):
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def name(self, i):
        return self._names[i]

    def role(self, i):
        return self._roles[i]

    def indices(self, role):
        return [i for i, r in enumerate(self._roles) if r == role]

    @property
    def names(self):
        return tuple(self._names)

    def __contains__(self, name):
        return name in self._index

    def __len__(self):
        return len(self._names)

    def var(self, name):
        return Polynomial.var(self, name)

    def __repr__(self):
        items = ", ".join(f"{n}:{r}" for n, r in zip(self._names, self._roles))
        return f"VarTable({items})"


# -- monomials ---------------------------------------------------------------

def mono_mul(a, b):
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for i, e in b:
        d[i] = d.get(i, 0) + e
    return tuple(sorted(d.items()))


def mono_div(a, b):
    """a / b, or None if b does not divide a."""
    if not b:
        return a
    d = dict(a)
    for i, e in b:
        k = d.get(i, 0) - e
        if k < 0:
            return None
        if k:
            d[i] = k
        else:
            del d[i]
    return tuple(sorted(d.items()))


def mono_gcd(a, b):
    db = dict(b)
    return tuple((i, min(e, db[i])) for i, e in a if i in db)


def mono_lcm(a, b):
    d = dict(a)
    for i, e in b:
        if d.get(i, 0) < e:
            d[i] = e
    return tuple(sorted(d.items()))


def mono_deg(m):
    return sum(e for _, e in m)


def grevlex_key(m):
    """Sort key for graded reverse lexicographic order (larger is greater).

    Variable order follows table index: index 0 is the most significant.
    """
    return (sum(e for _, e in m), tuple((-i, -e) for i, e in reversed(m)))


# sorts below every (-index, exponent) pair
_LEX_END = (-(1 << 62), 0)


class MonomialOrder:
    """A total monomial order: ``grevlex`` or ``lex`` over a variable ranking.

    ``ranking`` lists variable indices from most to least significant.  For
    ``lex`` an elimination order is obtained by ranking the variables to be
    eliminated first.  Variables missing from the ranking are treated as
    least significant, in index order.
    """

    def __init__(self, kind="grevlex", ranking=None):
        if kind not in ("grevlex", "lex"):
            raise ValueError(f"unknown monomial order {kind!r}")
        self.kind = kind
        self.ranking = tuple(ranking) if ranking is not None else None

    def _rank(self):
        return {v: k for k, v in enumerate(self.ranking)}

    def key(self, m):
        if self.ranking is None:
            if self.kind == "grevlex":
                return grevlex_key(m)
            return tuple((-i, e) for i, e in m) + (_LEX_END,)
        rank = self._rank()
        n = len(rank)
        dense = [0] * n
        extra = []
        for i, e in m:
            r = rank.get(i)
            if r is None:
                extra.append((i, e))
            else:
                dense[r] = e
        if self.kind == "lex":
            return tuple(dense) + tuple((-i, e) for i, e in extra) + (_LEX_END,)
        return (sum(e for _, e in m), tuple((-i, -e) for i, e in reversed(extra)),
                tuple(-e for e in reversed(dense)))

    def __repr__(self):
        return f"MonomialOrder({self.kind!r}, {self.ranking!r})"


GREVLEX = MonomialOrder("grevlex")
LEX = MonomialOrder("lex")


# -- polynomials -------------------------------------------------------------

class Polynomial:
    """Sparse polynomial with exact rational coefficients."""

    __slots__ = ("vt", "terms")

    def __init__(self, vt, terms=None):
        self.vt = vt
        self.terms = terms if terms is not None else {}

    # construction
    @classmethod
    def const(cls, vt, c):
        c = to_q(c)
        return cls(vt, {ONE_MONO: c} if c else {})

    @classmethod
    def var(cls, vt, name_or_index, power=1):
        i = vt.index(name_or_index) if isinstance(name_or_index, str) else name_or_index
        return cls(vt, {((i, power),) if power else ONE_MONO: mpq(1)})

    @classmethod
    def from_dict(cls, vt, terms):
        """Build from ``{monomial: coefficient}`` with arbitrary coefficients."""
        out = {}
        for m, c in terms.items():
            c = to_q(c)
            if c:
                m = tuple(sorted((i, e) for i, e in m if e))
                out[m] = out.get(m, 0) + c
                if not out[m]:
                    del out[m]
        return cls(vt, out)

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.vt is not self.vt:
                raise ValueError("polynomials live in different variable tables")
            return other
        return Polynomial.const(self.vt, other)

    # predicates
    def is_zero(self):
        return not self.terms

    def is_constant(self):
        return not self.terms or (len(self.terms) == 1 and ONE_MONO in self.terms)

    def constant_value(self):
        """The value of a constant polynomial (raises if not constant)."""
        if not self.is_constant():
            raise ValueError("polynomial is not constant")
        return self.terms.get(ONE_MONO, mpq(0))

    def is_monomial(self):
        return len(self.terms) == 1

    def __bool__(self):
        return bool(self.terms)

    def variables(self):
        out = set()
        for m in self.terms:
            out.update(i for i, _ in m)
        return out

    def degree(self, var=None):
        """Total degree, or the degree in ``var`` (index); -1 for zero."""
        if not self.terms:
            return -1
        if var is None:
            return max(mono_deg(m) for m in self.terms)
        return max(dict(m).get(var, 0) for m in self.terms)

    def __len__(self):
        return len(self.terms)

    # arithmetic
    def __add__(self, other):
        other = self._coerce(other)
        if not other.terms:
            return self
        if not self.terms:
            return other
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m)
            if v is None:
                out[m] = c
            else:
                v = v + c
                if v:
                    out[m] = v
                else:
                    del out[m]
        return Polynomial(self.vt, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.vt, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def scale(self, c, mono=ONE_MONO):
        """c * mono * self."""
        c = to_q(c)
        if not c or not self.terms:
            return Polynomial(self.vt)
        if mono:
            return Polynomial(self.vt, {mono_mul(m, mono): v * c
                                        for m, v in self.terms.items()})
        return Polynomial(self.vt, {m: v * c for m, v in self.terms.items()})

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return self.scale(other)
        other = self._coerce(other)
        if not self.terms or not other.terms:
            return Polynomial(self.vt)
        a, b = self.terms, other.terms
        if len(a) < len(b):
            a, b = b, a
        if len(b) == 1:
            (mb, cb), = b.items()
            return self.scale(cb, mb) if b is other.terms else other.scale(cb, mb)
        out = {}
        for ma, ca in a.items():
            for mb, cb in b.items():
                m = mono_mul(ma, mb)
                v = out.get(m)
                c = ca * cb
                if v is None:
                    out[m] = c
                else:
                    v = v + c
                    if v:
                        out[m] = v
                    else:
                        del out[m]
        return Polynomial(self.vt, out)

    __rmul__ = __mul__

    def __pow__(self, k):
        if not isinstance(k, int) or k < 0:
            raise ValueError("polynomial powers must be nonnegative integers")
        if k == 0:
            return Polynomial.const(self.vt, 1)
        if len(self.terms) == 1:
            (m, c), = self.terms.items()
            return Polynomial(self.vt, {tuple((i, e * k) for i, e in m): c ** k})
        result = Polynomial.const(self.vt, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self.vt is other.vt and self.terms == other.terms
        if isinstance(other, (int, Rational, type(mpq()))):
            return self.is_constant() and self.constant_value() == other
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    # structure
    def lead(self, order=GREVLEX):
        """(monomial, coefficient) of the leading term."""
        m = max(self.terms, key=order.key)
        return m, self.terms[m]

    def lc(self, order=GREVLEX):
        return self.lead(order)[1]

    def monic(self, order=GREVLEX):
        if not self.terms:
            return self
        c = self.lc(order)
        return self if c == 1 else self.scale(1 / c)

    def coeffs_in(self, var):
        """Coefficients as a univariate polynomial in ``var``: {deg: Polynomial}."""
        out = {}
        for m, c in self.terms.items():
            e = 0
            rest = m
            for k, (i, ei) in enumerate(m):
                if i == var:
                    e = ei
                    rest = m[:k] + m[k + 1:]
                    break
            out.setdefault(e, {})[rest] = c
        return {e: Polynomial(self.vt, t) for e, t in out.items()}

    def split_vars(self, keep):
        """Coefficients w.r.t. the variables not in ``keep``.

        Returns {monomial in other variables: Polynomial in ``keep``}.
        """
        out = {}
        for m, c in self.terms.items():
            inner = tuple(p for p in m if p[0] in keep)
            outer = tuple(p for p in m if p[0] not in keep)
            out.setdefault(outer, {})[inner] = c
        return {m: Polynomial(self.vt, t) for m, t in out.items()}

    def min_monomial(self):
        """The largest monomial dividing every term."""
        it = iter(self.terms)
        g = next(it, ONE_MONO)
        for m in it:
            if not g:
                break
            g = mono_gcd(g, m)
        return g

    def div_monomial(self, mono):
        return Polynomial(self.vt, {mono_div(m, mono): c for m, c in self.terms.items()})

    def exact_div(self, other):
        """self / other if the division is exact, else None."""
        other = self._coerce(other)
        if not other.terms:
            raise DivisionByZero("polynomial division by zero")
        if not self.terms:
            return self
        if other.is_constant():
            return self.scale(1 / other.constant_value())
        if len(other.terms) == 1:
            (mo, co), = other.terms.items()
            out = {}
            for m, c in self.terms.items():
                q = mono_div(m, mo)
                if q is None:
                    return None
                out[q] = c / co
            return Polynomial(self.vt, out)
        # cheap degree screen
        for v in other.variables():
            if other.degree(v) > self.degree(v):
                return None
        # division by a single divisor is exact iff the remainder vanishes, in
        # any monomial order; use lex on dense exponent vectors with a heap
        vs = sorted(self.variables() | other.variables())
        pos = {v: k for k, v in enumerate(vs)}
        nv = len(vs)

        def dense(m):
            d = [0] * nv
            for i, e in m:
                d[pos[i]] = e
            return tuple(d)

        div = [(dense(m), c) for m, c in other.terms.items()]
        lm_o, lc_o = max(div)
        rest = {dense(m): c for m, c in self.terms.items()}
        heap = [tuple(-e for e in k) for k in rest]
        heapq.heapify(heap)
        quot = {}
        while rest:
            neg = heapq.heappop(heap)
            m = tuple(-e for e in neg)
            c = rest.get(m)
            if c is None:
                continue
            q = tuple(a - b for a, b in zip(m, lm_o))
            if min(q) < 0:
                return None
            c = c / lc_o
            quot[q] = c
            for mo, co in div:
                mm = tuple(a + b for a, b in zip(mo, q))
                old = rest.get(mm)
                if old is None:
                    rest[mm] = -co * c
                    heapq.heappush(heap, tuple(-e for e in mm))
                else:
                    v = old - co * c
                    if v:
                        rest[mm] = v
                    else:
                        del rest[mm]
        return Polynomial(self.vt, {
            tuple((vs[k], e) for k, e in enumerate(q) if e): c
            for q, c in quot.items()})

    # calculus and evaluation
    def diff(self, var):
        out = {}
        for m, c in self.terms.items():
            for k, (i, e) in enumerate(m):
                if i == var:
                    nm = m[:k] + ((i, e - 1),) + m[k + 1:] if e > 1 else m[:k] + m[k + 1:]
                    out[nm] = c * e
                    break
        return Polynomial(self.vt, out)

    def evaluate(self, point):
        """Evaluate with ``point`` a mapping or sequence indexed by variable.

        Works for any numeric type that supports ``+``, ``*`` and ``**``.
        """
        total = 0
        for m, c in self.terms.items():
            t = c
            for i, e in m:
                t = t * point[i] ** e
            total = total + t
        return total

    def evaluate_float(self, point):
        total = 0.0
        for m, c in self.terms.items():
            t = float(c)
            for i, e in m:
                t *= point[i] ** e
            total += t
        return total

    def partial_eval(self, values):
        """Substitute exact numbers for some variables: {index: number}."""
        vals = {i: to_q(v) for i, v in values.items()}
        out = {}
        for m, c in self.terms.items():
            keep = []
            for i, e in m:
                if i in vals:
                    c = c * vals[i] ** e
                else:
                    keep.append((i, e))
            if c:
                k = tuple(keep)
                v = out.get(k, 0) + c
                if v:
                    out[k] = v
                else:
                    out.pop(k, None)
        return Polynomial(self.vt, out)

    def compose(self, bindings):
        """Substitute polynomials for variables: {index: Polynomial}."""
        if not bindings:
            return self
        cache = {}
        result = Polynomial(self.vt)
        acc = {}
        for m, c in self.terms.items():
            t = None
            keep = []
            for i, e in m:
                b = bindings.get(i)
                if b is None:
                    keep.append((i, e))
                    continue
                key = (i, e)
                p = cache.get(key)
                if p is None:
                    p = cache[key] = b ** e
                t = p if t is None else t * p
            if t is None:
                k = tuple(keep)
                v = acc.get(k, 0) + c
                if v:
                    acc[k] = v
                else:
                    acc.pop(k, None)
            else:
                result = result + t.scale(c, tuple(keep))
        return result + Polynomial(self.vt, acc)

    def rename(self, mapping):
        """Rename variables by index: {old: new}."""
        out = {}
        for m, c in self.terms.items():
            nm = {}
            for i, e in m:
                j = mapping.get(i, i)
                nm[j] = nm.get(j, 0) + e
            k = tuple(sorted(nm.items()))
            v = out.get(k, 0) + c
            if v:
                out[k] = v
            else:
                out.pop(k, None)
        return Polynomial(self.vt, out)

    # rendering
    def sorted_terms(self, order=GREVLEX):
        return sorted(self.terms.items(), key=lambda t: order.key(t[0]), reverse=True)

    def to_text(self):
        return poly_text(self)

    def __str__(self):
        return poly_text(self)

    def __repr__(self):
        return f"Polynomial({poly_text(self)!r})"


def mono_text(vt, m):
    parts = []
    for i, e in m:
        name = vt.name(i)
        parts.append(name if e == 1 else f"{name}^{e}")
    return "*".join(parts)


def poly_text(p):
    """Stable text: grevlex-descending terms, ``*`` products, ``^`` powers."""
    if not p.terms:
        return "0"
    out = []
    for k, (m, c) in enumerate(p.sorted_terms()):
        neg = c < 0
        a = -c if neg else c
        body = mono_text(p.vt, m)
        if not body:
            s = str(a)
        elif a == 1:
            s = body
        else:
            s = f"{a}*{body}"
        if k == 0:
            out.append(f"-{s}" if neg else s)
        else:
            out.append(f" - {s}" if neg else f" + {s}")
    return "".join(out)


# -- gcd ---------------------------------------------------------------------

def _one(vt):
    return Polynomial(vt, {ONE_MONO: mpq(1)})


def gcd_poly(p, q):
    """Greatest common divisor, monic under grevlex.

    A modular image test first proves most gcds trivial; nontrivial ones go
    to a heuristic integer gcd whose answer is confirmed by exact division,
    and to a recursive primitive pseudo-remainder sequence when that fails.
    ``gcd(p, 0) = monic(p)``; the gcd of two zeros is zero.
    """
    if p.vt is not q.vt:
        raise ValueError("polynomials live in different variable tables")
    if not p.terms:
        return q.monic()
    if not q.terms:
        return p.monic()
    if p.is_constant() or q.is_constant():
        return _one(p.vt)
    mp, mq = p.min_monomial(), q.min_monomial()
    mono = mono_gcd(mp, mq)
    if mp:
        p = p.div_monomial(mp)
    if mq:
        q = q.div_monomial(mq)
    if _surely_coprime(p, q):
        g = _one(p.vt)
    else:
        g = _heu_gcd_poly(p, q)
        if g is None:
            g = _gcd_rec(p, q)
    if mono:
        g = g.scale(1, mono)
    return g.monic()


# -- modular coprimality test ------------------------------------------------

_PRIME = (1 << 61) - 1


def _integer_terms(p):
    """Terms of ``p`` scaled to coprime integer coefficients."""
    den = 1
    for c in p.terms.values():
        den = den * c.denominator // math.gcd(den, c.denominator)
    out = {m: int(c.numerator) * (den // int(c.denominator)) for m, c in p.terms.items()}
    g = 0
    for c in out.values():
        g = math.gcd(g, c)
    return {m: c // g for m, c in out.items()}


def _image(terms, v, point):
    """Univariate image mod _PRIME in ``v``: list of coefficients, low first."""
    coeffs = {}
    for m, c in terms.items():
        val = c % _PRIME
        e = 0
        for i, k in m:
            if i == v:
                e = k
            else:
                val = val * pow(point[i], k, _PRIME) % _PRIME
        coeffs[e] = (coeffs.get(e, 0) + val) % _PRIME
    deg = max(coeffs)
    return [coeffs.get(k, 0) for k in range(deg + 1)]


def _gcd_degree_mod(a, b):
    """Degree of gcd of two univariate polynomials mod _PRIME."""
    while a and a[-1] == 0:
        a.pop()
    while b and b[-1] == 0:
        b.pop()
    while b:
        if len(a) < len(b):
            a, b = b, a
            continue
        inv = pow(b[-1], _PRIME - 2, _PRIME)
        while len(a) >= len(b) and a:
            f = a[-1] * inv % _PRIME
            shift = len(a) - len(b)
            for k in range(len(b)):
                a[shift + k] = (a[shift + k] - f * b[k]) % _PRIME
            while a and a[-1] == 0:
                a.pop()
        a, b = b, a
    return len(a) - 1


def _surely_coprime(p, q, tries=2):
    """True only when gcd(p, q) is provably constant.

    For each common variable v the images of p and q at a random point of
    the other variables, reduced mod a prime, have a gcd whose degree bounds
    deg_v gcd(p, q) from above, provided the leading coefficient of p in v
    survives.  Degree 0 for every v proves coprimality.
    """
    common = p.variables() & q.variables()
    if not common:
        return True
    tp, tq = _integer_terms(p), _integer_terms(q)
    rng = random.Random(len(tp) * 1000003 + len(tq))
    allv = p.variables() | q.variables()
    for v in sorted(common):
        dp = p.degree(v)
        for _ in range(tries):
            point = {i: rng.randrange(2, _PRIME - 1) for i in allv}
            a = _image(tp, v, point)
            if len(a) - 1 != dp or a[-1] == 0:
                continue
            if _gcd_degree_mod(a, _image(tq, v, point)) == 0:
                break
        else:
            return False
    return True


# -- heuristic integer gcd ---------------------------------------------------
# Polynomials are dicts from dense exponent tuples to ints; the last
# coordinate is evaluated at a large integer and recovered by its
# balanced-base expansion, following Char, Geddes and Gonnet.

_HEU_DIGITS = 60000        # beyond this the images get too large to be worth it


def _heu_gcd_poly(p, q):
    vs = sorted(p.variables() | q.variables())
    pos = {v: k for k, v in enumerate(vs)}

    def dense(terms):
        out = {}
        for m, c in terms.items():
            e = [0] * len(vs)
            for i, k in m:
                e[pos[i]] = k
            out[tuple(e)] = mpz(c)
        return out

    f, g = dense(_integer_terms(p)), dense(_integer_terms(q))
    # the images grow like the dense size times the digits of the base
    size = 1
    for k in range(len(vs)):
        size *= 1 + min(max(e[k] for e in f), max(e[k] for e in g))
    digits = max(len(str(abs(c))) for c in list(f.values()) + list(g.values()))
    if size * (digits + 2) > _HEU_DIGITS:
        return None
    h = _heu(f, g, len(vs))
    if h is None:
        return None
    return Polynomial(p.vt, {tuple((vs[k], e) for k, e in enumerate(m) if e): mpq(c)
                             for m, c in h.items()})


def _content_int(f):
    g = mpz(0)
    for c in f.values():
        g = math.gcd(g, c)
        if g == 1:
            break
    return g


def _primitive_int(f):
    g = _content_int(f)
    if f[max(f)] < 0:
        g = -g
    return f if g == 1 else {m: c // g for m, c in f.items()}


def _heu(f, g, nv):
    """gcd of integer polynomials f, g in nv variables, or None."""
    if nv == 0:
        return {(): mpz(math.gcd(f.get((), 0), g.get((), 0)))}
    # only the common integer content may go; it is part of the gcd image
    common = math.gcd(_content_int(f), _content_int(g))
    if common != 1:
        f = {m: c // common for m, c in f.items()}
        g = {m: c // common for m, c in g.items()}
    fn = max(abs(c) for c in f.values())
    gn = max(abs(c) for c in g.values())
    lf, lg = abs(f[max(f)]), abs(g[max(g)])
    b = 2 * min(fn, gn) + 29
    x = max(min(b, 99 * math.isqrt(b)), 2 * min(fn // lf, gn // lg) + 2)
    for _ in range(6):
        ff, gg = _eval_last(f, x), _eval_last(g, x)
        if ff and gg:
            h = _heu(ff, gg, nv - 1)
            if h is not None:
                h = _primitive_int(_interpolate(h, x))
                if all(e == 0 for m in h for e in m):
                    return {(0,) * nv: mpz(common)}
                if _divides(h, f) and _divides(h, g):
                    return {m: c * common for m, c in h.items()}
        x = 73794 * x * math.isqrt(math.isqrt(x)) // 27011
    return None


def _eval_last(f, x):
    out = {}
    powers = {}
    for m, c in f.items():
        e = m[-1]
        xe = powers.get(e)
        if xe is None:
            xe = powers[e] = x ** e
        k = m[:-1]
        v = out.get(k, 0) + c * xe
        if v:
            out[k] = v
        else:
            out.pop(k, None)
    return out


def _interpolate(h, x):
    out = {}
    half = x // 2
    i = 0
    while h:
        nxt = {}
        for m, c in h.items():
            r = c % x
            if r > half:
                r -= x
            if r:
                out[m + (i,)] = r
            c = (c - r) // x
            if c:
                nxt[m] = c
        h = nxt
        i += 1
    return out


def _divides(h, f):
    """Exact division test for integer polynomials (lex on dense exponents)."""
    nv = len(next(iter(h)))
    for k in range(nv):
        if max(m[k] for m in h) > max(m[k] for m in f):
            return False
    lm = max(h)
    lc = h[lm]
    hs = list(h.items())
    rest = dict(f)
    heap = [tuple(-e for e in m) for m in rest]
    heapq.heapify(heap)
    while rest:
        m = tuple(-e for e in heapq.heappop(heap))
        c = rest.get(m)
        if c is None:
            continue
        q = tuple(a - b for a, b in zip(m, lm))
        if min(q) < 0:
            return False
        qc, r = divmod(c, lc)
        if r:
            return False
        for mh, ch in hs:
            mm = tuple(a + b for a, b in zip(mh, q))
            old = rest.get(mm)
            if old is None:
                rest[mm] = -ch * qc
                heapq.heappush(heap, tuple(-e for e in mm))
            else:
                v = old - ch * qc
                if v:
                    rest[mm] = v
                else:
                    del rest[mm]
    return True


def _gcd_rec(p, q):
    vt = p.vt
    if p.is_constant() or q.is_constant():
        return _one(vt)
    if len(p) < len(q):
        p, q = q, p
    if p.exact_div(q) is not None:
        return q
    vp, vq = p.variables(), q.variables()
    common = vp & vq
    if not common:
        return _one(vt)
    if vp != common:
        g = _gcd_content(p, common, q)
        return g
    if vq != common:
        return _gcd_content(q, common, p)
    # main variable: lowest maximal degree
    v = min(common, key=lambda i: (max(p.degree(i), q.degree(i)), i))
    cp = _content(p, v)
    cq = _content(q, v)
    c = _gcd_rec(cp, cq) if not (cp.is_constant() or cq.is_constant()) else _one(vt)
    if not cp.is_constant():
        p = p.exact_div(cp)
    if not cq.is_constant():
        q = q.exact_div(cq)
    g = _prs(p, q, v)
    return g if c.is_constant() else g * c


def _gcd_content(p, keep, q):
    """gcd(p, q) where q only involves variables in ``keep``."""
    g = q
    for coeff in sorted(p.split_vars(keep).values(), key=len):
        g = gcd_poly(g, coeff)
        if g.is_constant():
            return _one(p.vt)
    return g


def _content(p, v):
    coeffs = sorted(p.coeffs_in(v).values(), key=len)
    g = coeffs[0].monic()
    for c in coeffs[1:]:
        if g.is_constant():
            break
        g = gcd_poly(g, c)
    return g if not g.is_constant() else _one(p.vt)


def _prem(a, b, v):
    db = b.degree(v)
    lcb = b.coeffs_in(v)[db]
    r = a
    while r.terms:
        dr = r.degree(v)
        if dr < db:
            break
        lcr = r.coeffs_in(v)[dr]
        shift = ((v, dr - db),) if dr > db else ONE_MONO
        r = r * lcb - (lcr * b).scale(1, shift)
    return r


def _primitive(p, v):
    c = _content(p, v)
    if c.is_constant():
        return p.monic()
    return p.exact_div(c).monic()


def _prs(a, b, v):
    if a.degree(v) < b.degree(v):
        a, b = b, a
    while True:
        r = _prem(a, b, v)
        if not r.terms:
            return _primitive(b, v)
        if r.degree(v) == 0:
            return _one(a.vt)
        a, b = b, _primitive(r, v)


def squarefree(p):
    """Squarefree part ``p / gcd(p, dp/dv_1, ..., dp/dv_k)``.

    Over Q every repeated factor f^e of p leaves f^(e-1) in each partial, so
    the gcd with all partials is exactly the repeated part.
    """
    if p.is_constant():
        return p.monic() if p.terms else p
    g = p
    for v in sorted(p.variables()):
        g = gcd_poly(g, p.diff(v))
        if g.is_constant():
            return p.monic()
    return p.exact_div(g).monic()


# -- rational functions ------------------------------------------------------

class RationalFunction:
    """Quotient ``num/den`` of polynomials; kept in lowest terms, monic ``den``."""

    __slots__ = ("num", "den")

    def __init__(self, num, den=None, normalize=True):
        if not isinstance(num, Polynomial):
            raise TypeError("numerator must be a Polynomial")
        if den is None:
            den = _one(num.vt)
        elif not isinstance(den, Polynomial):
            den = Polynomial.const(num.vt, den)
        if not den.terms:
            raise DivisionByZero("rational function with zero denominator")
        self.num = num
        self.den = den
        if normalize:
            self._normalize()

    def _normalize(self):
        num, den = self.num, self.den
        if not num.terms:
            self.den = _one(num.vt)
            return
        if den.is_constant():
            c = den.constant_value()
            if c != 1:
                num = num.scale(1 / c)
            self.num, self.den = num, _one(num.vt)
            return
        g = gcd_poly(num, den)
        if not g.is_constant():
            num = num.exact_div(g)
            den = den.exact_div(g)
        c = den.lc()
        if c != 1:
            num = num.scale(1 / c)
            den = den.scale(1 / c)
        self.num, self.den = num, den

    @property
    def vt(self):
        return self.num.vt

    @classmethod
    def const(cls, vt, c):
        return cls(Polynomial.const(vt, c), normalize=False)

    @classmethod
    def var(cls, vt, name_or_index):
        return cls(Polynomial.var(vt, name_or_index), normalize=False)

    @classmethod
    def lift(cls, x, vt=None):
        if isinstance(x, RationalFunction):
            return x
        if isinstance(x, Polynomial):
            return cls(x, normalize=False)
        return cls.const(vt, x)

    def _coerce(self, other):
        if isinstance(other, RationalFunction):
            return other
        if isinstance(other, Polynomial):
            return RationalFunction(other, normalize=False)
        return RationalFunction.const(self.vt, other)

    # predicates
    def is_zero(self):
        return not self.num.terms

    def is_polynomial(self):
        return self.den.is_constant()

    def is_constant(self):
        return self.num.is_constant() and self.den.is_constant()

    def variables(self):
        return self.num.variables() | self.den.variables()

    def as_polynomial(self):
        if not self.is_polynomial():
            raise ValueError("rational function has a nontrivial denominator")
        return self.num.scale(1 / self.den.constant_value())

    # arithmetic
    def __add__(self, other):
        o = self._coerce(other)
        if not o.num.terms:
            return self
        if not self.num.terms:
            return o
        a, b, c, d = self.num, self.den, o.num, o.den
        if b.is_constant() and d.is_constant():
            return RationalFunction(a + c, normalize=False)
        if b == d:
            return RationalFunction(a + c, b)
        q = b.exact_div(d) if len(b) >= len(d) else None
        if q is not None:
            return RationalFunction(a + c * q, b)
        q = d.exact_div(b) if len(d) >= len(b) else None
        if q is not None:
            return RationalFunction(a * q + c, d)
        g = gcd_poly(b, d)
        if g.is_constant():
            return RationalFunction(a * d + c * b, b * d)
        bg, dg = b.exact_div(g), d.exact_div(g)
        return RationalFunction(a * dg + c * bg, b * dg)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.num, self.den, normalize=False)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        if not self.num.terms or not o.num.terms:
            return RationalFunction.const(self.vt, 0)
        a, b, c, d = self.num, self.den, o.num, o.den
        if b.is_constant() and d.is_constant():
            return RationalFunction(a * c, normalize=False)
        g1 = gcd_poly(a, d) if not d.is_constant() else None
        g2 = gcd_poly(c, b) if not b.is_constant() else None
        if g1 is not None and not g1.is_constant():
            a, d = a.exact_div(g1), d.exact_div(g1)
        if g2 is not None and not g2.is_constant():
            c, b = c.exact_div(g2), b.exact_div(g2)
        r = RationalFunction(a * c, b * d, normalize=False)
        r._fix_lc()
        return r

    __rmul__ = __mul__

    def _fix_lc(self):
        if self.den.is_constant():
            c = self.den.constant_value()
            self.num, self.den = self.num.scale(1 / c), _one(self.vt)
            return
        c = self.den.lc()
        if c != 1:
            self.num, self.den = self.num.scale(1 / c), self.den.scale(1 / c)

    def inverse(self):
        if not self.num.terms:
            raise DivisionByZero("division by the zero rational function")
        r = RationalFunction(self.den, self.num, normalize=False)
        r._fix_lc()
        return r

    def __truediv__(self, other):
        return self * self._coerce(other).inverse()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.inverse()

    def __pow__(self, k):
        if not isinstance(k, int):
            raise ValueError("only integer powers are supported")
        if k < 0:
            return self.inverse() ** (-k)
        r = RationalFunction(self.num ** k, self.den ** k, normalize=False)
        r._fix_lc()
        return r

    # comparison
    def eq(self, other):
        """Exact equality by cross-multiplication."""
        o = self._coerce(other)
        if self.den == o.den:
            return self.num == o.num
        return (self.num * o.den - o.num * self.den).is_zero()

    def __eq__(self, other):
        if isinstance(other, (RationalFunction, Polynomial, int, Rational, type(mpq()))):
            return self.eq(other)
        return NotImplemented

    def __hash__(self):
        return hash((self.num, self.den))

    # calculus
    def partial(self, var):
        """Exact partial derivative with respect to variable index ``var``."""
        p, q = self.num, self.den
        if q.is_constant():
            return RationalFunction(p.diff(var), q, normalize=False)
        dq = q.diff(var)
        if not dq.terms:
            return RationalFunction(p.diff(var), q, normalize=False)
        # d(p/q) = (p' q - p q') / q^2; cancel gcd(q, q') first
        g = gcd_poly(q, dq)
        qg = q.exact_div(g)
        num = p.diff(var) * qg - p * dq.exact_div(g)
        return RationalFunction(num, q * qg)

    def substitute(self, bindings):
        """Compose with ``{variable index: RationalFunction | Polynomial | number}``.

        Raises ZeroDenominatorAfterSubstitution if the denominator becomes 0.
        """
        vt = self.vt
        binds = {}
        for i, b in bindings.items():
            if isinstance(i, str):
                i = vt.index(i)
            binds[i] = RationalFunction.lift(b, vt)
        involved = self.variables() & set(binds)
        if not involved:
            return self
        p, q = self.num, self.den
        nums = {i: binds[i].num for i in involved}
        dens = {i: binds[i].den for i in involved}
        maxdeg = {i: max(p.degree(i), q.degree(i)) for i in involved}
        newp = _compose_homog(p, nums, dens, maxdeg)
        newq = _compose_homog(q, nums, dens, maxdeg)
        if not newq.terms:
            raise ZeroDenominatorAfterSubstitution(
                "denominator vanishes identically after substitution")
        return RationalFunction(newp, newq)

    def rename(self, mapping):
        return RationalFunction(self.num.rename(mapping), self.den.rename(mapping),
                                normalize=False)

    def evaluate(self, point):
        """Exact evaluation at a point (sequence or mapping by index)."""
        d = self.den.evaluate(point)
        if d == 0:
            raise DivisionByZero("denominator vanishes at the evaluation point")
        return self.num.evaluate(point) / d

    def evaluate_float(self, point):
        return self.num.evaluate_float(point) / self.den.evaluate_float(point)

    def partial_eval(self, values):
        """Substitute exact numbers for some variables."""
        if not values:
            return self
        den = self.den.partial_eval(values)
        if not den.terms:
            raise ZeroDenominatorAfterSubstitution(
                "denominator vanishes after numeric substitution")
        return RationalFunction(self.num.partial_eval(values), den)

    def term_count(self):
        return len(self.num) + len(self.den)

    # rendering
    def to_text(self):
        return rf_text(self)

    def __str__(self):
        return rf_text(self)

    def __repr__(self):
        return f"RationalFunction({rf_text(self)!r})"


def _compose_homog(p, nums, dens, maxdeg):
    """sum c * prod n_i^e * d_i^(D_i - e) over the terms of p."""
    vt = p.vt
    cache = {}

    def power(i, e, which):
        key = (i, e, which)
        r = cache.get(key)
        if r is None:
            base = nums[i] if which == 0 else dens[i]
            r = cache[key] = base ** e
        return r

    result = Polynomial(vt)
    loose = {}
    for m, c in p.terms.items():
        keep = []
        t = None
        seen = set()
        for i, e in m:
            if i in nums:
                seen.add(i)
                f = power(i, e, 0)
                if maxdeg[i] - e:
                    f = f * power(i, maxdeg[i] - e, 1)
                t = f if t is None else t * f
            else:
                keep.append((i, e))
        for i in nums:
            if i not in seen and maxdeg[i]:
                f = power(i, maxdeg[i], 1)
                t = f if t is None else t * f
        if t is None:
            k = tuple(keep)
            v = loose.get(k, 0) + c
            if v:
                loose[k] = v
            else:
                loose.pop(k, None)
        else:
            result = result + t.scale(c, tuple(keep))
    return result + Polynomial(vt, loose)


def rf_text(r):
    num = poly_text(r.num)
    if r.den.is_constant():
        return num
    den = poly_text(r.den)
    if len(r.num) > 1:
        num = f"({num})"
    single_var = (len(r.den) == 1 and len(next(iter(r.den.terms))) == 1
                  and next(iter(r.den.terms.values())) == 1)
    if not single_var:
        den = f"({den})"
    return f"{num}/{den}"


def jacobian(funcs, variables):
    """Symbolic Jacobian matrix [[d f_i / d x_j]]."""
    return [[f.partial(v) for v in variables] for f in funcs]


def determinant(rows):
    """Determinant of a square matrix of RationalFunction by cofactor expansion."""
    n = len(rows)
    if n == 0:
        raise ValueError("empty matrix")
    if n == 1:
        return rows[0][0]
    if n == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    total = None
    for j in range(n):
        a = rows[0][j]
        if a.is_zero():
            continue
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        t = a * determinant(minor)
        if j % 2:
            t = -t
        total = t if total is None else total + t
    return total if total is not None else rows[0][0] * 0
