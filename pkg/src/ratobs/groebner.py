"""Buchberger's algorithm over Q with a step budget and a self-check.

Internally polynomials are dicts from dense exponent tuples (ordered by the
monomial order's variable ranking) to ``mpq``; conversion to and from
:class:`~ratobs.algebra.Polynomial` happens at the boundary.
"""

import heapq
from dataclasses import dataclass, field

from gmpy2 import mpq

from .algebra import MonomialOrder, Polynomial
from .errors import ResourceExceeded

DEFAULT_MAX_STEPS = 200_000


@dataclass
class GroebnerBasis:
    generators: list
    order: MonomialOrder
    steps: int = 0
    verified: bool = False
    ranking: tuple = field(default=(), repr=False)

    def __len__(self):
        return len(self.generators)

    def __iter__(self):
        return iter(self.generators)

    def reduce(self, p, max_steps=DEFAULT_MAX_STEPS):
        """Normal form of ``p`` modulo the basis."""
        ring = _Ring(self.ranking, self.order.kind)
        basis = [(d, *ring.lead(d)) for d in map(ring.to_dense, self.generators)]
        r, _ = ring.normal_form(ring.to_dense(p), basis, max_steps)
        return ring.from_dense(p.vt, r)

    def contains(self, p):
        return self.reduce(p).is_zero()


class _Ring:
    def __init__(self, ranking, kind):
        self.ranking = tuple(ranking)
        self.pos = {v: k for k, v in enumerate(self.ranking)}
        self.n = len(self.ranking)
        self.kind = kind
        if kind == "lex":
            self.key = lambda e: e
            self.negkey = lambda e: tuple(-x for x in e)
        else:
            self.key = lambda e: (sum(e), tuple(-x for x in reversed(e)))
            self.negkey = lambda e: (-sum(e), tuple(reversed(e)))

    def to_dense(self, p):
        out = {}
        for m, c in p.terms.items():
            d = [0] * self.n
            for i, e in m:
                d[self.pos[i]] = e
            out[tuple(d)] = c
        return out

    def from_dense(self, vt, f):
        return Polynomial(vt, {
            tuple(sorted((self.ranking[k], e) for k, e in enumerate(d) if e)): c
            for d, c in f.items()})

    def lead(self, f):
        m = max(f, key=self.key)
        return m, f[m]

    def normal_form(self, f, basis, budget):
        """Full reduction of f by ``basis`` (list of (dict, lm, lc)); returns (r, steps)."""
        p = dict(f)
        heap = [self.negkey(m) for m in p]
        heapq.heapify(heap)
        inv = {self.negkey(m): m for m in p}
        r = {}
        steps = 0
        while p:
            nk = heapq.heappop(heap)
            m = inv.get(nk)
            if m is None or m not in p:
                continue
            c = p[m]
            for g, lm, lc in basis:
                if all(a >= b for a, b in zip(m, lm)):
                    break
            else:
                r[m] = c
                del p[m]
                continue
            steps += 1
            if steps > budget:
                raise ResourceExceeded(f"Groebner reduction exceeded {budget} steps")
            q = tuple(a - b for a, b in zip(m, lm))
            f_c = c / lc
            for mg, cg in g.items():
                mm = tuple(a + b for a, b in zip(mg, q))
                old = p.get(mm)
                if old is None:
                    p[mm] = -cg * f_c
                    k = self.negkey(mm)
                    inv[k] = mm
                    heapq.heappush(heap, k)
                else:
                    v = old - cg * f_c
                    if v:
                        p[mm] = v
                    else:
                        del p[mm]
        return r, steps

    def spoly(self, f, lmf, lcf, g, lmg, lcg):
        lcm = tuple(max(a, b) for a, b in zip(lmf, lmg))
        qf = tuple(a - b for a, b in zip(lcm, lmf))
        qg = tuple(a - b for a, b in zip(lcm, lmg))
        out = {}
        for m, c in f.items():
            out[tuple(a + b for a, b in zip(m, qf))] = c / lcf
        for m, c in g.items():
            mm = tuple(a + b for a, b in zip(m, qg))
            v = out.get(mm, 0) - c / lcg
            if v:
                out[mm] = v
            else:
                out.pop(mm, None)
        return out


def _monic(f, ring):
    m, c = ring.lead(f)
    return {k: v / c for k, v in f.items()} if c != 1 else f


def _coef_size(f):
    return sum(int(c.numerator).bit_length() + int(c.denominator).bit_length()
               for c in f.values())


def _ranking_for(order, generators):
    used = set()
    for g in generators:
        used |= g.variables()
    ranking = list(order.ranking) if order.ranking is not None else []
    ranking += sorted(used - set(ranking))
    return tuple(ranking)


def buchberger(generators, order, max_steps=DEFAULT_MAX_STEPS, selfcheck=True):
    """Reduced Groebner basis of the ideal spanned by ``generators``.

    Normal pair selection (smallest lcm first), ties broken by coefficient
    size and then pair index, so the result is deterministic for a given
    order.  Buchberger's coprime and chain criteria prune pairs.  Raises
    ResourceExceeded once ``max_steps`` reduction steps have been spent.
    """
    generators = [g for g in generators if not g.is_zero()]
    if not generators:
        return GroebnerBasis([], order, 0, True, ())
    vt = generators[0].vt
    for g in generators:
        if g.vt is not vt:
            raise ValueError("generators live in different variable tables")
    ranking = _ranking_for(order, generators)
    ring = _Ring(ranking, order.kind)
    key = ring.key

    G = []          # list of [dict, lm, lc]
    pairs = []      # heap of (key(lcm), size, i, j)
    steps = 0

    def add(f):
        f = _monic(f, ring)
        lm, lc = ring.lead(f)
        k = len(G)
        G.append((f, lm, lc))
        for i in range(k):
            gi = G[i]
            lcm = tuple(max(a, b) for a, b in zip(gi[1], lm))
            heapq.heappush(pairs, (key(lcm), _coef_size(gi[0]) + _coef_size(f), i, k))

    alive = set()
    for g in generators:
        d = ring.to_dense(g)
        current = [G[i] for i in sorted(alive)]
        r, s = ring.normal_form(d, current, max_steps - steps)
        steps += s
        if r:
            add(r)
            alive.add(len(G) - 1)

    done = set()
    while pairs:
        _, _, i, j = heapq.heappop(pairs)
        if i not in alive or j not in alive:
            done.add((i, j))
            continue
        fi, lmi, lci = G[i]
        fj, lmj, lcj = G[j]
        lcm = tuple(max(a, b) for a, b in zip(lmi, lmj))
        # coprime leading monomials
        if all(a == 0 or b == 0 for a, b in zip(lmi, lmj)):
            done.add((i, j))
            continue
        # chain criterion
        skip = False
        for k in alive:
            if k in (i, j):
                continue
            if (all(a >= b for a, b in zip(lcm, G[k][1]))
                    and (min(i, k), max(i, k)) in done and (min(j, k), max(j, k)) in done):
                skip = True
                break
        done.add((i, j))
        if skip:
            continue
        s = ring.spoly(fi, lmi, lci, fj, lmj, lcj)
        current = [G[k] for k in sorted(alive)]
        r, used = ring.normal_form(s, current, max_steps - steps)
        steps += used
        if r:
            add(r)
            new = len(G) - 1
            alive.add(new)

    basis = _reduce_basis([G[k][0] for k in sorted(alive)], ring, max_steps - steps)
    polys = [ring.from_dense(vt, f) for f in basis]
    polys.sort(key=lambda p: key(ring.lead(ring.to_dense(p))[0]))
    gb = GroebnerBasis(polys, order, steps, False, ranking)
    if selfcheck:
        gb.verified = _selfcheck(basis, ring, max_steps)
        if not gb.verified:
            raise AssertionError("Buchberger self-check failed: an S-polynomial "
                                 "does not reduce to zero")
    return gb


def _reduce_basis(fs, ring, budget):
    fs = [_monic(f, ring) for f in fs]
    leads = [ring.lead(f)[0] for f in fs]
    keep = []
    for i, lm in enumerate(leads):
        redundant = False
        for j, other in enumerate(leads):
            if j == i:
                continue
            if all(a >= b for a, b in zip(lm, other)) and (lm != other or j < i):
                redundant = True
                break
        if not redundant:
            keep.append(fs[i])
    out = []
    for i, f in enumerate(keep):
        others = [(g, *ring.lead(g)) for j, g in enumerate(keep) if j != i]
        r, _ = ring.normal_form(f, others, budget)
        out.append(_monic(r, ring))
    return out


def _selfcheck(basis, ring, budget):
    items = [(f, *ring.lead(f)) for f in basis]
    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            s = ring.spoly(*items[a], *items[b])
            r, _ = ring.normal_form(s, items, budget)
            if r:
                return False
    return True


def is_groebner_basis(polys, order, max_steps=DEFAULT_MAX_STEPS):
    """Independent check: every S-polynomial reduces to zero."""
    if not polys:
        return True
    ring = _Ring(_ranking_for(order, polys), order.kind)
    return _selfcheck([_monic(ring.to_dense(p), ring) for p in polys], ring, max_steps)


def lex_order(ranking):
    return MonomialOrder("lex", ranking)


__all__ = ["GroebnerBasis", "buchberger", "is_groebner_basis", "lex_order", "mpq"]
