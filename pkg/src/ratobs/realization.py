"""Output-based realization: the system rewritten in the coordinates x^ = s(x).

In those coordinates the dynamics are a block shift ``dx^_k/dt = x^_{k+m_y}``
followed by a last block ``b_o(x^) = s_{n_o+1..}(r(x^))``, with r the
inverse of s.
"""

import math
from dataclasses import dataclass

from gmpy2 import mpq

from .algebra import RationalFunction
from .errors import DivisionByZero, ShiftStructureViolation, ZeroDenominatorAfterSubstitution
from .inverse import round_trip_ok
from .lie import lie_derivative


def hat_vars(vt, count, base="xh"):
    return [vt.fresh(f"{base}{k}", "auxiliary") for k in range(1, count + 1)]


@dataclass
class OutputRealization:
    sys: object
    chain: object
    inverse: object
    xh: list            # variable indices of x^_1..x^_{n_o}
    f_or: list
    b_o: list           # last block of f_or
    xh0: list           # s(x0), exact (RationalFunction in the free parameters)
    kind: str

    @property
    def n_o(self):
        return len(self.xh)

    @property
    def m_y(self):
        return self.sys.m_y

    @property
    def C_o(self):
        return [[1 if j == i else 0 for j in range(self.n_o)] for i in range(self.m_y)]

    def names(self):
        return [self.sys.vt.name(v) for v in self.xh]

    def text(self):
        lines = [f"d{name} = {g}" for name, g in zip(self.names(), self.f_or)]
        return "\n".join(lines)


def _kind_in(funcs, variables):
    vs = set(variables)
    return "polynomial" if all(not (g.den.variables() & vs) for g in funcs) else "rational"


def output_based_realization(sys, chain, inv, check=True):
    """Build ``f_or = (ds/dx f) o s^-1`` for a chain and its inverse.

    The shift part is checked by pulling back through ``x^ = s(x)``: the
    Lie derivative of each entry must equal the entry one block later, and
    ``r(s(x)) = x`` must hold.  A direct comparison in x^ coordinates would
    be wrong when n_o > n, where the identity only holds on the image of s.
    """
    vt = sys.vt
    my = sys.m_y
    n_o = chain.n_o
    xh = hat_vars(vt, n_o)
    ren = dict(zip(inv.tags, xh))
    r_hat = [ri.rename(ren) for ri in inv.r]
    binds = dict(zip(sys.state_vars, r_hat))
    if inv.param_values:
        pv = {vt.index(k): v for k, v in inv.param_values.items()}
        binds_params = pv
    else:
        binds_params = {}

    ext = chain.extended(chain.m + 1)
    if check:
        for k in range(n_o - my):
            lk = lie_derivative(chain.entries[k], sys, chain.term_ceiling)
            if not lk.eq(ext.entries[k + my]):
                raise ShiftStructureViolation(
                    f"L_f s{k + 1} differs from s{k + 1 + my}")
        if not round_trip_ok(inv, chain):
            raise ShiftStructureViolation("r(s(x)) != x")

    nxt = ext.entries[n_o:n_o + my]
    b_o = []
    for g in nxt:
        if binds_params:
            g = g.partial_eval(binds_params)
        b_o.append(g.substitute(binds))
    f_or = [RationalFunction.var(vt, xh[k + my]) for k in range(n_o - my)] + b_o

    xh0 = []
    point = {x: mpq(v) for x, v in zip(sys.state_vars, sys.x0)}
    point.update(binds_params)
    for s in chain.entries:
        try:
            xh0.append(s.partial_eval(point))
        except ZeroDenominatorAfterSubstitution as exc:
            raise DivisionByZero("chain denominator vanishes at x0") from exc

    kind = _kind_in(f_or, xh)
    if check and inv.kind == sys.kind and sys.kind == "polynomial" and kind != "polynomial":
        raise ShiftStructureViolation("realization of a polynomial system is not polynomial")
    return OutputRealization(sys, chain, inv, xh, f_or, b_o, xh0, kind)


@dataclass
class SelfCheckReport:
    max_deviation: float
    samples: int
    worst_component: int = None
    worst_time: float = None

    def ok(self, tol=1e-3):
        return self.max_deviation < tol


def realization_selfcheck(real, times, states):
    """Compare d/dt s(x(t)) by central differences with f_or(s(x(t))).

    ``times`` is an increasing sequence and ``states`` the matching system
    states (rows).  The deviation of component k is scaled by the largest
    magnitude of that component of f_or along the trajectory.
    """
    sys = real.sys
    chain = real.chain
    svars = sys.state_vars
    xs = []
    for row in states:
        pt = {v: float(c) for v, c in zip(svars, row)}
        xs.append([s.evaluate_float(pt) for s in chain.entries])
    fs = []
    for k in range(1, len(times) - 1):
        pt = {v: c for v, c in zip(real.xh, xs[k])}
        fs.append([g.evaluate_float(pt) for g in real.f_or])
    if not fs:
        return SelfCheckReport(0.0, 0)
    n_o = len(real.f_or)
    scale = [max(abs(f[j]) for f in fs) for j in range(n_o)]
    worst = (0.0, None, None)
    for k in range(1, len(times) - 1):
        dt = times[k + 1] - times[k - 1]
        for j in range(n_o):
            fd = (xs[k + 1][j] - xs[k - 1][j]) / dt
            dev = abs(fd - fs[k - 1][j])
            rel = dev / scale[j] if scale[j] > 0 else dev
            if not math.isfinite(rel):
                rel = math.inf
            if rel > worst[0]:
                worst = (rel, j, times[k])
    return SelfCheckReport(worst[0], len(times) - 2, worst[1], worst[2])
