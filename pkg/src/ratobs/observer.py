"""Observer by output injection and the choice of its constant gain.

The observer is ``dx_o/dt = f_or(x_o) + (k_o(x_o) + K)(y - C_o x_o)`` where
the nonlinear gain ``k_o`` is zero except in the last block, which holds
the derivative of ``b_o`` with respect to the first block of ``x_o``.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
from gmpy2 import mpq

from .algebra import RationalFunction, to_q
from .errors import NoStableCandidate, UnobservablePair
from .realization import hat_vars


@dataclass
class Observer:
    real: object
    xo: list                # variable indices of x_o
    y: list                 # variable indices of the measured outputs
    K_vars: list            # n_o x m_y variable indices of the constant gain
    k_o: list               # n_o x m_y RationalFunction in x_o
    f_o: list               # observer dynamics in (x_o, y, K)
    K: list = None          # numeric gain, if fixed

    @property
    def n_o(self):
        return len(self.xo)

    @property
    def m_y(self):
        return len(self.y)

    @property
    def b_o(self):
        ren = dict(zip(self.real.xh, self.xo))
        return [g.rename(ren) for g in self.real.b_o]

    def names(self):
        vt = self.real.sys.vt
        return [vt.name(v) for v in self.xo]

    def k_o_last(self):
        return [row for row in self.k_o[self.n_o - self.m_y:]]

    def with_gain(self, K):
        """A copy with K substituted by numbers (n_o x m_y, or flat if m_y = 1)."""
        K = _gain_matrix(K, self.n_o, self.m_y)
        vals = {v: to_q(c) for row_v, row_c in zip(self.K_vars, K) for v, c in zip(row_v, row_c)}
        f_o = [g.partial_eval(vals) for g in self.f_o]
        return Observer(self.real, self.xo, self.y, self.K_vars, self.k_o, f_o, K)

    def text(self):
        vt = self.real.sys.vt
        lines = [f"d{vt.name(v)} = {g}" for v, g in zip(self.xo, self.f_o)]
        for i, row in enumerate(self.k_o):
            for j, g in enumerate(row):
                if not g.is_zero():
                    lines.append(f"k_o[{i + 1},{j + 1}] = {g}")
        return "\n".join(lines)


def _gain_matrix(K, n_o, m_y):
    K = list(K)
    if K and not isinstance(K[0], (list, tuple, np.ndarray)):
        if len(K) != n_o * m_y:
            raise ValueError(f"gain needs {n_o * m_y} entries, got {len(K)}")
        return [list(K[i * m_y:(i + 1) * m_y]) for i in range(n_o)]
    if len(K) != n_o or any(len(row) != m_y for row in K):
        raise ValueError(f"gain must be {n_o} x {m_y}")
    return [list(row) for row in K]


def gain_names(n_o, m_y):
    if m_y == 1:
        return [[f"k{i}"] for i in range(1, n_o + 1)]
    return [[f"k{i}_{j}" for j in range(1, m_y + 1)] for i in range(1, n_o + 1)]


def make_observer(real, K=None):
    """Assemble the observer; K = None keeps the gain symbolic."""
    sys = real.sys
    vt = sys.vt
    n_o, my = real.n_o, real.m_y
    xo = hat_vars(vt, n_o, "xo")
    y = [vt.fresh(name, "auxiliary") for name in sys.output_names]
    K_vars = [[vt.fresh(nm, "auxiliary") for nm in row] for row in gain_names(n_o, my)]
    ren = dict(zip(real.xh, xo))
    f_or = [g.rename(ren) for g in real.f_or]
    zero = RationalFunction.const(vt, 0)
    k_o = [[zero] * my for _ in range(n_o - my)]
    for i in range(my):
        b = f_or[n_o - my + i]
        k_o.append([b.partial(xo[j]) for j in range(my)])
    innov = [RationalFunction.var(vt, y[j]) - RationalFunction.var(vt, xo[j]) for j in range(my)]
    f_o = []
    for i in range(n_o):
        g = f_or[i]
        for j in range(my):
            g = g + (k_o[i][j] + RationalFunction.var(vt, K_vars[i][j])) * innov[j]
        f_o.append(g)
    obs = Observer(real, xo, y, K_vars, k_o, f_o)
    return obs if K is None else obs.with_gain(K)


# -- gain selection --------------------------------------------------------------

@dataclass
class GainSpec:
    """How to pick K: ``explicit``, ``poles`` or ``grid``."""

    mode: str
    K: list = None
    poles: list = None
    ranges: list = None         # one (lo, hi, step) per gain entry
    horizon: float = 50.0
    step: float = 1e-3
    perturbations: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in ("explicit", "poles", "grid"):
            raise ValueError(f"unknown gain mode {self.mode!r}")
        if self.mode == "poles" and self.poles is not None:
            check_conjugate_closed(self.poles)


def check_conjugate_closed(poles, tol=1e-12):
    rest = [complex(p) for p in poles]
    while rest:
        p = rest.pop()
        if abs(p.imag) <= tol:
            continue
        for k, q in enumerate(rest):
            if abs(q - p.conjugate()) <= tol * max(1.0, abs(p)):
                rest.pop(k)
                break
        else:
            raise ValueError(f"pole {p} has no conjugate partner")


def observability_matrix(A, C):
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    rows = [C]
    for _ in range(A.shape[0] - 1):
        rows.append(rows[-1] @ A)
    return np.vstack(rows)


def pole_place(A, C, poles):
    """Single-output gain K with eig(A - K C) = poles (dual Ackermann)."""
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if C.shape != (1, n):
        raise ValueError("pole placement handles a single output only")
    if len(poles) != n:
        raise ValueError(f"need {n} poles, got {len(poles)}")
    check_conjugate_closed(poles)
    O = observability_matrix(A, C)
    from .simulate import observability_rank
    if observability_rank(A, C) < n:
        raise UnobservablePair("(A, C) is not observable")
    coeffs = np.real(np.poly(np.asarray(poles, dtype=complex)))
    phi = np.zeros_like(A)
    for c in coeffs:
        phi = phi @ A + c * np.eye(n)
    e_n = np.zeros(n)
    e_n[-1] = 1.0
    return phi @ np.linalg.solve(O, e_n)


def grid_values(lo, hi, step):
    lo, hi, step = mpq(to_q(lo)), mpq(to_q(hi)), mpq(to_q(step))
    if step <= 0:
        raise ValueError("grid step must be positive")
    out = []
    v = lo
    while v <= hi:
        out.append(v)
        v += step
    return out


def grid_candidates(ranges):
    """Cartesian product of the per-entry grids, in lexicographic grid order."""
    axes = [grid_values(*r) for r in ranges]
    if not axes or any(not a for a in axes):
        return []
    return [list(c) for c in itertools.product(*axes)]


def gain_search(obs, spec, tol=1e-6):
    """Best constant gain on a grid by simulated tail error.

    Every candidate is simulated from ``s(x0) + d`` for each perturbation
    ``d`` in ``spec.perturbations``; its score is the worst tail error.  The
    lowest score wins, earlier grid points winning ties.  Returns
    ``(K, score, scores)``.
    """
    from .simulate import SimConfig, batch_tail_errors
    cands = grid_candidates(spec.ranges or [])
    if not cands:
        raise NoStableCandidate("empty gain grid")
    cfg = SimConfig(step=spec.step, horizon=spec.horizon)
    perts = spec.perturbations or [default_perturbation(obs.n_o)]
    scores = batch_tail_errors(obs, cands, perts, cfg)
    best = None
    for idx, s in enumerate(scores):
        if np.isfinite(s) and (best is None or s < scores[best]):
            best = idx
    if best is None:
        raise NoStableCandidate("every candidate diverged or hit a pole")
    return cands[best], float(scores[best]), scores


def default_perturbation(n_o):
    return [0.5 if k % 2 == 0 else -0.5 for k in range(n_o)]
