"""End-to-end synthesis: chain, inverse, realization, observer, gain, simulation.

:func:`synthesize` runs the whole pipeline on a parsed system and collects
everything into a :class:`SynthesisReport` whose JSON form is stable:
expressions are rendered text, floats are rounded to 12 significant
digits and keys keep a fixed order.
"""

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from gmpy2 import mpq

from .algebra import poly_text, to_q
from .errors import NoConvergence, UndefinedAtPoint
from .inverse import default_m_max, find_observability_index, jacobi_condition
from .observer import GainSpec, default_perturbation, gain_search, make_observer, pole_place
from .realization import output_based_realization
from .simulate import SimConfig, eigenvalues, linearize, performance_sim

log = logging.getLogger(__name__)

SECTIONS = ("system", "chain", "inverse", "jacobi", "realization", "observer",
            "stability", "simulation", "timings")


def _f(x):
    return float(f"{float(x):.12g}")


def _q(v):
    """Exact rational as text ('1/2'), or None."""
    if v is None:
        return None
    v = mpq(v)
    return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


def _cplx(z):
    return [_f(z.real) + 0.0, _f(z.imag) + 0.0]


@dataclass
class SynthesisReport:
    system: dict
    chain: dict = None
    inverse: dict = None
    jacobi: dict = None
    realization: dict = None
    observer: dict = None
    stability: dict = None
    simulation: dict = None
    timings: dict = field(default_factory=dict)

    def to_dict(self):
        return {k: getattr(self, k) for k in SECTIONS}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        missing = [k for k in SECTIONS if k not in d]
        if missing:
            raise ValueError(f"report lacks sections: {', '.join(missing)}")
        return cls(**{k: d[k] for k in SECTIONS})


@dataclass
class Pipeline:
    """Intermediate objects of a synthesis run, for callers that need more
    than the report."""

    sys: object
    m_o: int = None
    chain: object = None
    inverse: object = None
    realization: object = None
    observer: object = None
    K: list = None
    report: SynthesisReport = None


def system_section(sys):
    return {
        "name": sys.name,
        "kind": sys.kind,
        "n": sys.n,
        "m_y": sys.m_y,
        "states": list(sys.state_names),
        "outputs": list(sys.output_names),
        "params": {k: _q(v) for k, v in sys.params.items()},
        "x0": [_q(v) for v in sys.x0],
        "f": [str(g) for g in sys.f],
        "h": [str(g) for g in sys.h],
        "assumptions": [poly_text(a) for a in sys.assumptions],
    }


def _numeric(sys):
    return not sys.free_params


def find_equilibria(sys, guesses=None, tol=1e-12, iters=50):
    """Equilibria of f found by Newton's method from a few starting points."""
    svars = sys.state_vars
    if guesses is None:
        guesses = [[0.0] * sys.n, [float(v) for v in sys.x0]]
    found = []
    for g in guesses:
        x = np.array(g, dtype=float)
        ok = False
        for _ in range(iters):
            pt = dict(zip(svars, x))
            try:
                fx = np.array([f.evaluate_float(pt) for f in sys.f])
                J = linearize(sys.f, svars, x)
            except (UndefinedAtPoint, ZeroDivisionError):
                break
            if not np.all(np.isfinite(fx)):
                break
            if np.max(np.abs(fx)) < tol:
                ok = True
                break
            try:
                dx = np.linalg.lstsq(J, -fx, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            x = x + dx
        if not ok:
            continue
        # Newton crawls towards degenerate equilibria; snap tiny residue to 0
        snapped = np.where(np.abs(x) < 1e-3, 0.0, x)
        if _is_equilibrium(sys, snapped, tol):
            x = snapped
        if not any(np.allclose(x, y, atol=1e-3) for y in found):
            found.append(x + 0.0)
    return found


def _is_equilibrium(sys, x, tol):
    pt = dict(zip(sys.state_vars, x))
    try:
        return max(abs(f.evaluate_float(pt)) for f in sys.f) < tol
    except ZeroDivisionError:
        return False


def error_matrix(obs, xh_point):
    """Linearized observer error dynamics at x^: J_for - (k_o + K) C_o."""
    real = obs.real
    A = linearize(real.f_or, real.xh, xh_point)
    pt = {v: mpq(float(c)) for v, c in zip(real.xh, xh_point)}
    ren = dict(zip(obs.xo, real.xh))
    n_o, my = obs.n_o, obs.m_y
    L = np.zeros((n_o, my))
    for i in range(n_o):
        for j in range(my):
            L[i, j] = float(obs.k_o[i][j].rename(ren).evaluate(pt))
    C = np.zeros((my, n_o))
    for j in range(my):
        C[j, j] = 1.0
    return A - L @ C, A, L, C


def _xh_at(real, x):
    pt = {v: mpq(float(c)) for v, c in zip(real.sys.state_vars, x)}
    return [float(s.evaluate(pt)) for s in real.chain.entries]


def default_poles(sys, point):
    """Poles 1.5 times faster than the slowest system mode at ``point``."""
    try:
        lam = eigenvalues(linearize(sys.f, sys.state_vars, point))
        slow = max(lam, key=lambda z: z.real)
        sigma = 1.5 * abs(slow.real)
    except (UndefinedAtPoint, NoConvergence):
        sigma = 0.0
    if sigma < 1e-6:
        sigma = 1.0
    return sigma


def synthesize(sys, gain=None, cfg=None, seed=0, m_max=None, simulate=True,
               perturbation=None, wall=False):
    """Run the whole pipeline; returns a :class:`Pipeline` with its report.

    ``gain`` is a :class:`GainSpec` or None (pole placement with default
    poles for single-output systems, zero gain otherwise).  Numeric steps
    are skipped while parameters remain unbound.
    """
    cfg = cfg or SimConfig()
    clock = {}
    t0 = time.perf_counter()
    pl = Pipeline(sys)
    rep = SynthesisReport(system_section(sys))
    pl.report = rep
    m_max = default_m_max(sys) if m_max is None else m_max

    m, chain, inv = find_observability_index(sys, m_max, seed=seed)
    clock["observability"] = time.perf_counter() - t0
    pl.m_o, pl.chain, pl.inverse = m, chain, inv
    rep.chain = {"m_o": m, "n_o": chain.n_o,
                 "entries": [str(s) for s in chain.entries]}
    rep.inverse = {
        "method": inv.method,
        "kind": inv.kind,
        "seed": seed,
        "r": {name: str(ri) for name, ri in zip(sys.state_names, inv.r)},
        "tags": [sys.vt.name(t) for t in inv.tags],
        "side_conditions": [poly_text(c) for c in inv.side_conditions],
        "param_values": None if not inv.param_values
        else {k: _q(v) for k, v in inv.param_values.items()},
    }
    if sys.kind == "polynomial" and all(not (s.den.variables() & set(sys.state_vars))
                                         for s in chain.entries):
        jv = jacobi_condition(list(chain.entries), sys)
        rep.jacobi = {"status": jv.status,
                      "det": None if jv.det is None else str(jv.det),
                      "side_conditions": [poly_text(c) for c in jv.side_conditions]}
    else:
        rep.jacobi = {"status": "not_applicable", "det": None, "side_conditions": []}

    t1 = time.perf_counter()
    real = output_based_realization(sys, chain, inv)
    pl.realization = real
    rep.realization = {
        "kind": real.kind,
        "states": real.names(),
        "f_or": [str(g) for g in real.f_or],
        "b_o": [str(g) for g in real.b_o],
        "xh0": [str(g) for g in real.xh0],
    }
    obs = make_observer(real)
    pl.observer = obs
    clock["realization"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    counters = {"chain_terms": sum(s.term_count() for s in chain.entries),
                "grid_candidates": 0}
    K, mode, extra = None, "symbolic", {}
    numeric = _numeric(sys)
    if gain is not None and gain.mode == "explicit":
        K, mode = gain.K, "explicit"
    elif numeric:
        eqs = find_equilibria(sys)
        x_lin = eqs[0] if eqs else np.array([float(v) for v in sys.x0])
        xh_lin = _xh_at(real, x_lin)
        if gain is not None and gain.mode == "grid":
            mode = "grid"
            spec = GainSpec("grid", ranges=gain.ranges, horizon=cfg.horizon, step=cfg.step,
                            perturbations=gain.perturbations or [perturbation or
                                                                 default_perturbation(obs.n_o)])
            K, score, scores = gain_search(obs, spec, tol=cfg.tol)
            counters["grid_candidates"] = len(scores)
            extra = {"score": _f(score)}
        elif obs.m_y == 1:
            mode = "poles"
            if gain is not None and gain.poles is not None:
                poles = list(gain.poles)
            else:
                sigma = default_poles(sys, x_lin)
                poles = [-(sigma + k) for k in range(obs.n_o)]
            Aerr, _, _, C = error_matrix(obs, xh_lin)
            Kv = pole_place(Aerr, C, poles)
            K = [_f(v) for v in Kv]
            extra = {"poles": [_cplx(complex(p)) for p in poles],
                     "linearized_at": [_f(v) for v in xh_lin]}
        else:
            mode = "zero"
            K = [0] * (obs.n_o * obs.m_y)
    clock["gain"] = time.perf_counter() - t2
    if K is not None:
        K = [to_q(k) for k in _flatten(K)]
        pl.K = K
        pl.observer = obs = obs.with_gain(K)
    rep.observer = {
        "states": obs.names(),
        "f_o": [str(g) for g in obs.f_o],
        "k_o": [[str(g) for g in row] for row in obs.k_o],
        "gain_mode": mode,
        "K": None if K is None else [_f(k) if mode == "poles" else _q(k) for k in K],
        **extra,
    }

    t3 = time.perf_counter()
    rep.stability = _stability(sys, obs, real, K) if numeric else \
        {"skipped": "unbound parameters: " + ", ".join(sys.free_params)}
    if simulate and numeric and K is not None:
        pert = perturbation or default_perturbation(obs.n_o)
        res = performance_sim(sys, obs, cfg, perturbation=pert)
        matched = performance_sim(sys, obs, cfg)
        rep.simulation = {
            "step": _f(cfg.step), "horizon": _f(cfg.horizon),
            "perturbation": [_f(p) for p in pert],
            **res.summary(),
            "matched_start_max_error": _f(np.max(np.abs(matched.ey))) if len(matched.ey)
            else None,
            "matched_start_status": matched.status,
        }
        pl.sim = res
    else:
        reason = "unbound parameters: " + ", ".join(sys.free_params) if not numeric \
            else ("no gain" if K is None else "disabled")
        rep.simulation = {"status": "skipped", "reason": reason}
    clock["simulation"] = time.perf_counter() - t3
    clock["total"] = time.perf_counter() - t0

    rep.timings = {"counters": counters}
    if wall:
        rep.timings["wall_seconds"] = {k: round(v, 4) for k, v in clock.items()}
    return pl


def _flatten(K):
    out = []
    for row in K:
        if isinstance(row, (list, tuple, np.ndarray)):
            out.extend(row)
        else:
            out.append(row)
    return out


def _stability(sys, obs, real, K):
    eqs = find_equilibria(sys)
    out = []
    for x in eqs:
        entry = {"x": [_f(v) + 0.0 for v in x]}
        try:
            entry["system_eigenvalues"] = [_cplx(z) for z in
                                           eigenvalues(linearize(sys.f, sys.state_vars, x))]
        except (UndefinedAtPoint, NoConvergence) as exc:
            entry["system_eigenvalues"] = str(exc)
        if K is not None:
            try:
                xh = _xh_at(real, x)
                Aerr, _, _, C = error_matrix(obs, xh)
                Kmat = np.array([float(k) for k in K]).reshape(obs.n_o, obs.m_y)
                lam = eigenvalues(Aerr - Kmat @ C)
                entry["error_eigenvalues"] = [_cplx(z) for z in lam]
                entry["error_stable"] = bool(all(z.real < 0 for z in lam))
            except (UndefinedAtPoint, NoConvergence, ZeroDivisionError) as exc:
                entry["error_eigenvalues"] = str(exc)
        out.append(entry)
    return {"equilibria": out}
