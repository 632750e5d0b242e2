"""Fixed-step RK4 simulation, linearization and small dense eigenproblems.

Right-hand sides are turned into Python source, compiled with numba and
cached by source text, so a gain grid is integrated in one compiled loop.
Every denominator is checked against ``eps_den`` before it is divided by,
and a step that no longer resolves the dynamics counts as divergence.
"""

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from gmpy2 import mpq

from .errors import NoConvergence, NonFinite, PoleCrossing, UndefinedAtPoint

EPS_DEN = 1e-9

ST_OK, ST_POLE, ST_NONFINITE, ST_ORTHANT = 0, 1, 2, 3
STATUS_NAMES = {ST_OK: "ok", ST_POLE: "pole_crossing", ST_NONFINITE: "diverged",
                ST_ORTHANT: "left_orthant"}


@dataclass
class SimConfig:
    step: float = 1e-3
    horizon: float = 50.0
    eps_den: float = EPS_DEN
    tol: float = 1e-6
    sample_dt: float = None       # trajectory spacing; default: every step up to 5000 rows
    positive_orthant: bool = False

    def __post_init__(self):
        self.step = float(self.step)
        self.horizon = float(self.horizon)
        if self.step <= 0 or self.horizon <= 0:
            raise ValueError("step and horizon must be positive")
        if self.step > self.horizon:
            raise ValueError("step exceeds horizon")
        if self.eps_den <= 0:
            raise ValueError("eps_den must be positive")

    @property
    def nsteps(self):
        return int(round(self.horizon / self.step))

    @property
    def sample_every(self):
        if self.sample_dt is not None:
            return max(1, int(round(self.sample_dt / self.step)))
        return max(1, -(-self.nsteps // 5000))


@dataclass
class SimResult:
    t: np.ndarray
    z: np.ndarray             # sampled state rows
    ey: np.ndarray            # sampled outputs / output errors
    tail_error: float
    status: str
    t_fail: float = None
    tol: float = 1e-6

    @property
    def converged(self):
        return self.status == "ok" and self.tail_error < self.tol

    def summary(self):
        if self.status != "ok":
            st = self.status
        else:
            st = "converged" if self.converged else "not_converged"
        out = {"status": st, "tail_error": _fmt(self.tail_error), "tol": _fmt(self.tol)}
        if self.t_fail is not None:
            out["t_fail"] = _fmt(self.t_fail)
        return out


def _fmt(x):
    return float(f"{x:.12g}")


# -- code generation ----------------------------------------------------------------

def _num(c):
    return repr(float(c))


def _poly_src(p, names):
    if not p.terms:
        return "0.0"
    terms = []
    for m, c in sorted(p.terms.items()):
        factors = []
        for i, e in m:
            factors.append(names[i] if e == 1 else f"{names[i]}**{e}")
        if c == 1 and factors:
            terms.append("*".join(factors))
        elif c == -1 and factors:
            terms.append("-" + "*".join(factors))
        else:
            terms.append("*".join([f"({_num(c)})"] + factors))
    return " + ".join(terms)


def _gen_source(lets, outs, zslots, kslots, guard_vars=()):
    """Source of ``fn(z, k, out) -> status``.

    ``lets`` are (variable, expression) pairs evaluated in order and usable
    by later expressions, ``outs`` fills ``out``.  ``guard_vars`` are slots
    of z that must stay nonnegative (positive orthant check).
    """
    names = {}
    lines = ["def fn(z, k, out):"]
    for v, pos in sorted(zslots.items(), key=lambda t: t[1]):
        names[v] = f"v{v}"
        lines.append(f"    v{v} = z[{pos}]")
    for v, pos in sorted(kslots.items(), key=lambda t: t[1]):
        names[v] = f"v{v}"
        lines.append(f"    v{v} = k[{pos}]")
    for pos in guard_vars:
        lines.append(f"    if z[{pos}] < 0.0:")
        lines.append(f"        return {ST_ORTHANT}")
    dens = {}

    def emit(g):
        num = _poly_src(g.num, names)
        if g.den.is_constant():
            c = g.den.constant_value()
            return num if c == 1 else f"({num}) / {_num(c)}"
        key = _poly_src(g.den, names)
        d = dens.get(key)
        if d is None:
            d = dens[key] = f"d{len(dens)}"
            lines.append(f"    {d} = {key}")
            lines.append(f"    if abs({d}) < EPS:")
            lines.append(f"        return {ST_POLE}")
        return f"({num}) / {d}"

    for v, g in lets:
        expr = emit(g)
        names[v] = f"v{v}"
        lines.append(f"    v{v} = {expr}")
    for j, g in enumerate(outs):
        expr = emit(g)
        lines.append(f"    out[{j}] = {expr}")
    lines.append("    return 0")
    return "\n".join(lines)


_COMPILED = {}


def compile_source(src, eps_den=EPS_DEN):
    key = (src, eps_den)
    fn = _COMPILED.get(key)
    if fn is None:
        scope = {"EPS": eps_den}
        exec(compile(src, "<ratobs-rhs>", "exec"), scope)
        fn = _COMPILED[key] = numba.njit(cache=False)(scope["fn"])
    return fn


# RK4 is stable for real h*lambda down to about -2.785
RK4_REAL_LIMIT = 2.785


@numba.njit(cache=False)
def _unresolved(z, k1, k2, h, d):
    """True when the step no longer resolves the dynamics (finite-time escape).

    k2 - k1 ~ (h/2) J k1, so 2|k2 - k1| / |k1| estimates h |J| along k1.
    Slopes at roundoff level are ignored.
    """
    n1 = 0.0
    n21 = 0.0
    nz = 0.0
    for j in range(d):
        n1 = max(n1, abs(k1[j]))
        n21 = max(n21, abs(k2[j] - k1[j]))
        nz = max(nz, abs(z[j]))
    if h * n1 <= 1e-8 * (1.0 + nz):
        return False
    return 2.0 * n21 > RK4_REAL_LIMIT * n1


@numba.njit(cache=False)
def _rk4_kernel(rhs, outf, Z0, K, h, nsteps, tail_from, every, record, m, traj):
    B, d = Z0.shape
    status = np.zeros(B, dtype=np.int64)
    tfail = np.full(B, -1.0)
    tail = np.zeros(B)
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    tmp = np.empty(d)
    ey = np.empty(max(m, 1))
    for b in range(B):
        z = Z0[b].copy()
        kb = K[b]
        for i in range(nsteps + 1):
            t = i * h
            if m > 0:
                st = outf(z, kb, ey)
                if st != 0:
                    status[b] = st
                    tfail[b] = t
                    break
                if i >= tail_from:
                    for j in range(m):
                        a = abs(ey[j])
                        if a > tail[b]:
                            tail[b] = a
            if record and b == 0 and i % every == 0:
                r = i // every
                traj[r, 0] = t
                for j in range(d):
                    traj[r, 1 + j] = z[j]
                for j in range(m):
                    traj[r, 1 + d + j] = ey[j]
            if i == nsteps:
                break
            st = rhs(z, kb, k1)
            if st == 0:
                for j in range(d):
                    tmp[j] = z[j] + 0.5 * h * k1[j]
                st = rhs(tmp, kb, k2)
            if st == 0 and _unresolved(z, k1, k2, h, d):
                st = ST_NONFINITE
            if st == 0:
                for j in range(d):
                    tmp[j] = z[j] + 0.5 * h * k2[j]
                st = rhs(tmp, kb, k3)
            if st == 0:
                for j in range(d):
                    tmp[j] = z[j] + h * k3[j]
                st = rhs(tmp, kb, k4)
            if st != 0:
                status[b] = st
                tfail[b] = t
                break
            finite = True
            for j in range(d):
                z[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
                if not np.isfinite(z[j]):
                    finite = False
            if not finite:
                status[b] = 2
                tfail[b] = t + h
                break
    return status, tfail, tail


@dataclass
class CompiledField:
    """A compiled right-hand side with outputs over a flat state vector."""

    rhs: object
    outf: object
    dim: int
    m: int
    n_gain: int
    names: list = field(default_factory=list)
    out_names: list = field(default_factory=list)


def compile_field(fields, variables, outputs=(), lets=(), gains=(), eps_den=EPS_DEN,
                  guard=()):
    """Compile ``dz/dt = fields(z)`` with ``z`` the given variable indices."""
    zslots = {v: k for k, v in enumerate(variables)}
    kslots = {v: k for k, v in enumerate(gains)}
    _check_closed(list(fields) + list(outputs) + [g for _, g in lets],
                  set(zslots) | set(kslots) | {v for v, _ in lets})
    gpos = [zslots[v] for v in guard]
    rhs = compile_source(_gen_source(list(lets), list(fields), zslots, kslots, gpos), eps_den)
    outf = compile_source(_gen_source(list(lets), list(outputs), zslots, kslots), eps_den)
    return CompiledField(rhs, outf, len(variables), len(outputs), len(gains))


def _check_closed(exprs, allowed):
    for g in exprs:
        extra = g.variables() - allowed
        if extra:
            vt = g.vt
            names = ", ".join(sorted(vt.name(v) for v in extra))
            raise ValueError(f"unbound symbols in simulated field: {names}")


def run_batch(cf, Z0, K, cfg, record=False):
    Z0 = np.ascontiguousarray(np.atleast_2d(np.asarray(Z0, dtype=float)))
    B = Z0.shape[0]
    K = np.asarray(K, dtype=float).reshape(B, -1) if cf.n_gain else np.zeros((B, 1))
    K = np.ascontiguousarray(K)
    n = cfg.nsteps
    every = cfg.sample_every
    rows = n // every + 1 if record else 1
    traj = np.zeros((rows, 1 + cf.dim + cf.m))
    tail_from = int(math.ceil(0.8 * n))
    status, tfail, tail = _rk4_kernel(cf.rhs, cf.outf, Z0, K, cfg.step, n, tail_from,
                                      every, record, cf.m, traj)
    return status, tfail, tail, traj


def _result(cf, cfg, status, tfail, tail, traj):
    st = int(status)
    t_fail = float(tfail) if st else None
    if st:
        upto = int(t_fail / cfg.step) // cfg.sample_every + 1
        traj = traj[:upto]
        tail = math.inf
    return SimResult(traj[:, 0].copy(), traj[:, 1:1 + cf.dim].copy(),
                     traj[:, 1 + cf.dim:].copy(), float(tail), STATUS_NAMES[st], t_fail,
                     cfg.tol)


def integrate(fields, variables, z0, cfg=None, outputs=(), raise_on_failure=False):
    """Integrate one trajectory of ``dz/dt = fields(z)`` from ``z0``."""
    cfg = cfg or SimConfig()
    cf = compile_field(fields, variables, outputs, eps_den=cfg.eps_den)
    status, tfail, tail, traj = run_batch(cf, [z0], None, cfg, record=True)
    res = _result(cf, cfg, status[0], tfail[0], tail[0], traj)
    if raise_on_failure and res.status == "pole_crossing":
        raise PoleCrossing(res.t_fail)
    if raise_on_failure and res.status == "diverged":
        raise NonFinite(res.t_fail)
    return res


# -- performance system ---------------------------------------------------------------

@dataclass
class PerformanceSystem:
    """Plant and observer stacked: z = (x, x_o), e_y = h(x) - x_o[:m_y]."""

    sys: object
    obs: object
    compiled: CompiledField

    @property
    def dim(self):
        return self.sys.n + self.obs.n_o


def performance_system(sys, obs, cfg=None):
    cfg = cfg or SimConfig()
    vt = sys.vt
    from .algebra import RationalFunction
    lets = list(zip(obs.y, sys.h))
    ey = [RationalFunction.var(vt, y) - RationalFunction.var(vt, xo)
          for y, xo in zip(obs.y, obs.xo)]
    gains = [] if obs.K is not None else [v for row in obs.K_vars for v in row]
    variables = list(sys.state_vars) + list(obs.xo)
    guard = sys.state_vars if cfg.positive_orthant else ()
    cf = compile_field(list(sys.f) + list(obs.f_o), variables, ey, lets, gains,
                       cfg.eps_den, guard)
    return PerformanceSystem(sys, obs, cf)


def _x0_float(sys):
    return [float(v) for v in sys.x0]


def observer_start(obs, perturbation=None):
    xh0 = []
    for g in obs.real.xh0:
        if not g.is_constant():
            raise ValueError("s(x0) depends on unbound parameters")
        xh0.append(float(g.num.constant_value() / g.den.constant_value()))
    if perturbation is not None:
        xh0 = [a + float(b) for a, b in zip(xh0, perturbation)]
    return xh0


def performance_sim(sys, obs, cfg=None, xo0=None, K=None, perturbation=None):
    """Simulate plant and observer together; x_o starts at s(x0) unless given."""
    cfg = cfg or SimConfig()
    ps = performance_system(sys, obs, cfg)
    if xo0 is None:
        xo0 = observer_start(obs, perturbation)
    z0 = _x0_float(sys) + [float(v) for v in xo0]
    if ps.compiled.n_gain and K is None:
        raise ValueError("observer gain is symbolic; pass K")
    Kb = None if K is None else [float(c) for row in _flat(K) for c in row]
    status, tfail, tail, traj = run_batch(ps.compiled, [z0], Kb, cfg, record=True)
    return _result(ps.compiled, cfg, status[0], tfail[0], tail[0], traj)


def _flat(K):
    K = list(K)
    return [list(r) if isinstance(r, (list, tuple, np.ndarray)) else [r] for r in K]


def batch_tail_errors(obs, candidates, perturbations, cfg):
    """Worst tail error of each gain candidate over the perturbed starts.

    Failed runs (pole, divergence) score ``inf``.
    """
    sys = obs.real.sys
    ps = performance_system(sys, obs, cfg)
    x0 = _x0_float(sys)
    starts = [x0 + observer_start(obs, p) for p in perturbations]
    Z0 = []
    Kb = []
    for c in candidates:
        for s in starts:
            Z0.append(s)
            Kb.append([float(v) for v in c])
    status, _, tail, _ = run_batch(ps.compiled, Z0, Kb, cfg)
    tail = np.where(status == 0, tail, np.inf)
    return tail.reshape(len(candidates), len(starts)).max(axis=1)


def write_csv(res, sys, obs, path_or_file):
    """Trajectory CSV with columns t, x_*, xo_*, ey_*."""
    cols = ["t"] + [f"x_{k}" for k in range(1, sys.n + 1)] \
        + [f"xo_{k}" for k in range(1, obs.n_o + 1)] \
        + [f"ey_{k}" for k in range(1, sys.m_y + 1)]
    lines = [",".join(cols)]
    for t, z, e in zip(res.t, res.z, res.ey):
        lines.append(",".join(repr(float(v)) for v in [t, *z, *e]))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)


# -- linear algebra -----------------------------------------------------------------

def linearize(fields, variables, point):
    """Jacobian of ``fields`` at ``point`` (values for ``variables``), as floats.

    Partial derivatives are exact; evaluation is exact at the (float) point
    and rounded once.
    """
    pt = {v: mpq(c) for v, c in zip(variables, point)}
    J = np.zeros((len(fields), len(variables)))
    for i, g in enumerate(fields):
        extra = g.variables() - set(variables)
        if extra:
            raise ValueError("field has symbols besides the linearization variables")
        if g.den.evaluate(pt) == 0:
            raise UndefinedAtPoint(f"denominator of component {i + 1} vanishes")
        for j, v in enumerate(variables):
            d = g.partial(v)
            J[i, j] = float(d.evaluate(pt))
    return J


def _hessenberg(a):
    n = len(a)
    for k in range(n - 2):
        x = [a[i][k] for i in range(k + 1, n)]
        alpha = math.sqrt(sum(v * v for v in x))
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = list(x)
        v[0] -= alpha
        vn = sum(t * t for t in v)
        if vn == 0.0:
            continue
        # a <- H a H with H = I - 2 v v^T / (v^T v)
        for j in range(n):
            s = sum(v[i] * a[k + 1 + i][j] for i in range(len(v))) * 2.0 / vn
            for i in range(len(v)):
                a[k + 1 + i][j] -= s * v[i]
        for i in range(n):
            s = sum(a[i][k + 1 + j] * v[j] for j in range(len(v))) * 2.0 / vn
            for j in range(len(v)):
                a[i][k + 1 + j] -= s * v[j]
        for i in range(k + 2, n):
            a[i][k] = 0.0
    return a


def _hqr(a, max_iter=60):
    """Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR."""
    n = len(a)
    wr = [0.0] * n
    wi = [0.0] * n
    anorm = sum(abs(a[i][j]) for i in range(n) for j in range(max(i - 1, 0), n))
    nn = n - 1
    t = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1][l - 1]) + abs(a[l][l])
                if s == 0.0:
                    s = anorm
                if abs(a[l][l - 1]) + s == s:
                    a[l][l - 1] = 0.0
                    break
                l -= 1
            x = a[nn][nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1][nn - 1]
            w = a[nn][nn - 1] * a[nn - 1][nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if its == max_iter:
                raise NoConvergence("QR iteration did not converge")
            if its in (10, 20):
                # exceptional shift
                t += x
                for i in range(nn + 1):
                    a[i][i] -= x
                s = abs(a[nn][nn - 1]) + abs(a[nn - 1][nn - 2])
                y = x = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            m = nn - 2
            while m >= l:
                z = a[m][m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1]
                q = a[m + 1][m + 1] - z - r - s
                r = a[m + 2][m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m][m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1][m - 1]) + abs(z) + abs(a[m + 1][m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i][i - 2] = 0.0
                if i != m + 2:
                    a[i][i - 3] = 0.0
            k = m
            while k <= nn - 1:
                if k != m:
                    p = a[k][k - 1]
                    q = a[k + 1][k - 1]
                    r = a[k + 2][k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s != 0.0:
                    if k == m:
                        if l != m:
                            a[k][k - 1] = -a[k][k - 1]
                    else:
                        a[k][k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    for j in range(k, nn + 1):
                        p = a[k][j] + q * a[k + 1][j]
                        if k != nn - 1:
                            p += r * a[k + 2][j]
                            a[k + 2][j] -= p * z
                        a[k + 1][j] -= p * y
                        a[k][j] -= p * x
                    mmin = nn if nn < k + 3 else k + 3
                    for i in range(l, mmin + 1):
                        p = x * a[i][k] + y * a[i][k + 1]
                        if k != nn - 1:
                            p += z * a[i][k + 2]
                            a[i][k + 2] -= p * r
                        a[i][k + 1] -= p * q
                        a[i][k] -= p
                k += 1
    return [complex(r, i) for r, i in zip(wr, wi)]


def charpoly(M):
    """Characteristic polynomial coefficients (leading 1), exact over the
    rational values of the float entries (Faddeev-LeVerrier)."""
    n = len(M)
    A = [[mpq(float(v)) for v in row] for row in M]
    coeffs = [mpq(1)]
    Mk = [[mpq(0)] * n for _ in range(n)]
    for k in range(1, n + 1):
        # Mk = A (M_{k-1} + c_{k-1} I)
        prev = [[Mk[i][j] + (coeffs[-1] if i == j else 0) for j in range(n)] for i in range(n)]
        Mk = [[sum(A[i][l] * prev[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        c = -sum(Mk[i][i] for i in range(n)) / k
        coeffs.append(c)
    return coeffs


def _residual_ok(coeffs, lam, tol):
    # Horner in exact complex rationals at the float eigenvalue
    lr, li = mpq(lam.real), mpq(lam.imag)
    sr, si = mpq(0), mpq(0)
    for c in coeffs:
        sr, si = sr * lr - si * li + c, sr * li + si * lr
    res = math.hypot(float(sr), float(si))
    r = abs(lam)
    scale = sum(abs(float(c)) * r ** (len(coeffs) - 1 - k) for k, c in enumerate(coeffs))
    return res <= tol * max(scale, 1e-300)


def eigenvalues(M, max_iter=60, residual_tol=1e-6):
    """Eigenvalues of a small real matrix (Hessenberg reduction + shifted QR).

    Each eigenvalue is checked against the characteristic polynomial, with a
    tolerance relative to the polynomial's magnitude at that point.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("matrix must be square")
    if n == 0:
        return []
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    a = [list(map(float, row)) for row in M]
    lam = _hqr(_hessenberg(a), max_iter)
    coeffs = charpoly(M)
    for l in lam:
        if not _residual_ok(coeffs, l, residual_tol):
            raise NoConvergence(f"eigenvalue {l} fails the residual check")
    return sorted(lam, key=lambda z: (z.real, z.imag))


def observability_rank(A, C):
    """Numeric rank of [C; CA; ...; CA^(n-1)]."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    rows = [C]
    for _ in range(n - 1):
        rows.append(rows[-1] @ A)
    O = np.vstack(rows)
    sv = np.linalg.svd(O, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    tol = max(O.shape) * sv[0] * 1e-12
    return int(np.sum(sv > tol))
