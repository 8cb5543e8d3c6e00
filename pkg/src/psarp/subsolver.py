"""Inner solvers: Taylor-model minimization and the model-descent step.

``minimize_taylor`` minimizes a linear or quadratic model over
``{c + d in F, ||d|| <= delta, d in range(Q)}`` and powers the
criticality measures. ``compute_step`` runs projected gradient on the full
model, freezing hard residuals that enter the ``eps``-ball, until the step
is long enough or the trial point is model-critical.
"""
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.optimize import brentq

from . import criticality as crit
from . import feasible as fs
from .errors import ConvergenceError, DomainError, UnsupportedOrderError
from .tensor_calc import SINGULAR_TOL

PG_TOL = 1e-9
PG_MAXITER = 100_000
N_STARTS = 8
EIG_TOL = 1e-12
NOISE_RTOL = 1e-13


@dataclass
class TaylorSubproblem:
    """``min g.d + 1/2 d.H.d`` s.t. ``center + d in F``, ``||d|| <= delta``, ``d in range(Q)``.

    ``H = None`` means a linear model. ``free`` marks a coordinate basis.
    """

    g: np.ndarray
    H: np.ndarray
    center: np.ndarray
    delta: float
    Q: np.ndarray
    fset: fs.FeasibleSet
    free: np.ndarray = None

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise DomainError(f"radius delta={self.delta} must lie in (0, 1]")

    def value(self, d):
        out = float(self.g @ d)
        if self.H is not None:
            out += 0.5 * float(d @ self.H @ d)
        return out


# --------------------------------------------------------------------------
# building blocks


def box_ball_linmin(g, lo, hi, delta):
    """Exact minimizer of ``g.d`` over ``{lo <= d <= hi, ||d|| <= delta}``.

    Requires ``lo <= 0 <= hi``. The solution is ``clip(-tau g, lo, hi)`` for
    the smallest ``tau`` reaching the sphere (or ``tau = inf``); found by a
    sweep over the breakpoints of the piecewise-quadratic ``||d(tau)||^2``.
    """
    g = np.asarray(g, dtype=float)
    nz = g != 0
    if not np.any(nz):
        return np.zeros_like(g)
    bound = np.where(g < 0, hi, -lo)  # distance to the face hit along -g
    tau_k = np.full(g.size, np.inf)
    tau_k[nz] = bound[nz] / np.abs(g[nz])
    free = nz.copy()
    sat = 0.0
    d2 = delta * delta
    for k in np.flatnonzero(nz)[np.argsort(tau_k[nz], kind="stable")]:
        gsum = float(np.sum(g[free] ** 2))
        if sat + tau_k[k] ** 2 * gsum >= d2:
            break
        sat += bound[k] ** 2
        free[k] = False
    if not np.any(free):
        return np.where(g < 0, hi, np.where(g > 0, lo, 0.0))
    tau = np.sqrt(max(d2 - sat, 0.0) / float(np.sum(g[free] ** 2)))
    return np.clip(-tau * g, lo, hi)


def project_box_ball(y, lo, hi, delta):
    """Exact projection onto ``{lo <= d <= hi, ||d|| <= delta}`` (``lo <= 0 <= hi``)."""
    d = np.clip(y, lo, hi)
    if np.linalg.norm(d) <= delta:
        return d

    def excess(mu):
        return np.linalg.norm(np.clip(y / (1.0 + mu), lo, hi)) - delta

    top = 1.0
    while excess(top) > 0:
        top *= 2.0
    mu = brentq(excess, 0.0, top, xtol=1e-15, rtol=1e-15)
    d = np.clip(y / (1.0 + mu), lo, hi)
    nd = np.linalg.norm(d)
    return d * (delta / nd) if nd > delta else d


def trs(g, H, delta):
    """Global minimizer of ``g.z + 1/2 z.H.z`` on ``||z|| <= delta``.

    Eigen-decomposition based, including the hard case. Returns ``(z, value)``.
    """
    lam, V = np.linalg.eigh(0.5 * (H + H.T))
    gam = V.T @ g
    scale = max(1.0, float(np.max(np.abs(lam))) if lam.size else 1.0)
    gnorm = float(np.linalg.norm(g))
    lam1 = float(lam[0]) if lam.size else 0.0

    def znorm(shift):
        return float(np.linalg.norm(gam / (lam + shift)))

    lo = max(0.0, -lam1)
    den = lam + lo
    near = np.abs(den) <= EIG_TOL * scale
    if np.any(near & (np.abs(gam) > EIG_TOL * max(gnorm, 1.0))):
        singular_norm = np.inf
    else:
        w = np.zeros_like(gam)
        w[~near] = -gam[~near] / den[~near]
        singular_norm = float(np.linalg.norm(w))
    if singular_norm <= delta:
        if lo == 0.0 or not np.any(near):
            z = V @ w  # interior (or boundary with zero multiplier)
        else:
            # hard case: move along the leftmost eigenvector to the boundary
            tau = np.sqrt(max(delta * delta - singular_norm ** 2, 0.0))
            w[np.flatnonzero(near)[0]] += tau
            z = V @ w
    else:
        hi = lo + gnorm / delta + 1.0
        while znorm(hi) > delta:
            hi = lo + 2.0 * (hi - lo)
        a = lo
        # step off the pole
        eps = max(EIG_TOL * scale, 1e-300)
        while not znorm(a + eps) > delta:
            eps *= 0.5
            if eps < 1e-300:
                break
        shift = brentq(lambda t: znorm(t) - delta, a + eps, hi, xtol=1e-15, rtol=1e-15)
        z = V @ (-gam / (lam + shift))
        # near the pole one ulp of shift moves ||z|| visibly; the root is on the sphere
        z *= delta / float(np.linalg.norm(z))
    val = float(g @ z + 0.5 * z @ H @ z)
    return z, val


def _projector(sub):
    """Projection onto the subproblem's feasible region (in ``d``)."""
    if isinstance(sub.fset, fs.WholeSpace):
        return lambda y: fs._ball_subspace(y, sub.Q, sub.delta)
    lo, hi = sub.fset.bounds()
    lo, hi = lo - sub.center, hi - sub.center
    lo, hi = np.minimum(lo, 0.0), np.maximum(hi, 0.0)
    if sub.free is not None:
        free = sub.free

        def proj(y):
            d = np.zeros_like(y)
            d[free] = project_box_ball(y[free], lo[free], hi[free], sub.delta)
            return d
        return proj
    return lambda y: fs.project_intersection(sub.fset, sub.Q, sub.center, sub.delta,
                                             sub.center + y) - sub.center


def _projected_gradient(sub, d0, proj, step):
    d = proj(d0)
    best = d
    for _ in range(PG_MAXITER):
        grad = sub.g if sub.H is None else sub.g + sub.H @ d
        nd = proj(d - step * grad)
        if np.linalg.norm(nd - d) < PG_TOL:
            return nd, True
        d = nd
        if sub.value(d) < sub.value(best):
            best = d
    return best, False


def minimize_taylor(sub):
    """Minimize the Taylor subproblem.

    Returns ``(d, value, status)``; ``status`` is ``"exact"`` or
    ``"approximate"`` (multi-start projected gradient with box faces active).

    Raises
    ------
    ConvergenceError
        If projected gradient hits its iteration cap on a linear model.
    """
    n = sub.g.size
    if sub.H is None:
        gq = sub.Q @ (sub.Q.T @ sub.g)
        if sub.free is not None:
            gq = np.zeros(n)
            gq[sub.free] = sub.g[sub.free]
        if isinstance(sub.fset, fs.WholeSpace):
            ng = np.linalg.norm(gq)
            d = np.zeros(n) if ng == 0 else -sub.delta * gq / ng
            return d, sub.value(d), "exact"
        lo, hi = sub.fset.bounds()
        lo, hi = np.minimum(lo - sub.center, 0.0), np.maximum(hi - sub.center, 0.0)
        if sub.free is not None:
            d = np.zeros(n)
            f = sub.free
            d[f] = box_ball_linmin(sub.g[f], lo[f], hi[f], sub.delta)
            return d, sub.value(d), "exact"
        ng = np.linalg.norm(gq)
        if ng == 0:
            return np.zeros(n), 0.0, "exact"
        d, ok = _projected_gradient(sub, np.zeros(n), _projector(sub), sub.delta / ng)
        if not ok:
            raise ConvergenceError("projected gradient did not converge", best=d,
                                   residual=None)
        return d, sub.value(d), "exact"
    # quadratic model, solved in subspace coordinates
    Q = sub.Q
    if Q.shape[1] == 0:
        return np.zeros(n), 0.0, "exact"
    z, _ = trs(Q.T @ sub.g, Q.T @ sub.H @ Q, sub.delta)
    d = Q @ z
    if sub.fset.contains(sub.center + d, 1e-12):
        return d, sub.value(d), "exact"
    proj = _projector(sub)
    L = max(float(np.max(np.abs(np.linalg.eigvalsh(Q.T @ sub.H @ Q)))), 1e-12)
    rng = np.random.default_rng(0)
    starts = [np.zeros(n), d]
    while len(starts) < N_STARTS:
        z0 = rng.standard_normal(Q.shape[1])
        starts.append(Q @ (z0 * sub.delta / np.linalg.norm(z0)))
    best, bval = None, np.inf
    for d0 in starts:
        dd, _ = _projected_gradient(sub, d0, proj, 1.0 / L)
        v = sub.value(dd)
        if v < bval:
            best, bval = dd, v
    return best, bval, "approximate"


# --------------------------------------------------------------------------
# step computation


@dataclass
class StepResult:
    """Outcome of the model-descent loop.

    ``exit`` is ``"LongStep"``, ``"ModelCritical"`` or ``"NoDescentStep"``
    (the model is stationary at ``s = 0``; ``s`` is then zero). ``frozen``
    lists hard indices whose residual was fixed during the computation.
    """

    s: np.ndarray
    exit: str
    delta: float
    frozen: list
    increment: float
    psi_m: float = None
    inner_iterations: int = 0
    dim: int = 0
    history: dict = field(default_factory=dict)


@dataclass
class StepOptions:
    eps: float
    p: int = 3
    q: int = 1
    theta: float = 0.5
    varpi: float = 0.5
    delta: float = 1.0
    armijo: float = 1e-4
    max_inner: int = 10_000
    step_floor: float = 1e-16
    step_cap: float = 1e4


class _Domain:
    """Feasible displacements ``{s : x + s in F, s in base + range(Q)}``."""

    def __init__(self, problem, x, cls):
        self.problem = problem
        self.x = x
        self.C = list(cls.C)
        self.Q, self.free = cls.Q, cls.free
        self.base = np.zeros(problem.n)
        self.fset = problem.feasible
        if not isinstance(self.fset, fs.WholeSpace):
            lo, hi = self.fset.bounds()
            self.lo = np.minimum(lo - x, 0.0)
            self.hi = np.maximum(hi - x, 0.0)

    def project(self, y):
        if self.free is not None:
            out = self.base.copy()
            f = self.free
            if isinstance(self.fset, fs.WholeSpace):
                out[f] = y[f]
            else:
                out[f] = np.clip(y[f], self.lo[f], self.hi[f])
            return out
        if isinstance(self.fset, fs.WholeSpace):
            return self.base + self.Q @ (self.Q.T @ (y - self.base))
        c = self.x + self.base
        return fs.project_intersection(self.fset, self.Q, c, np.inf, self.x + y) - self.x

    def freeze(self, hard_index, s):
        """Restrict to ``ker(U_i)`` through ``s`` (whose residual ``i`` is zero)."""
        self.C.append(hard_index)
        self.Q, self.free = crit.kernel_basis(self.problem, self.C)
        self.base = s - self.Q @ (self.Q.T @ s)

    @property
    def dim(self):
        return self.Q.shape[1]


def _term_bound(model, s, norms, opts, chi_val):
    k = opts.p - opts.q + 1
    first = opts.theta * float(np.linalg.norm(s)) ** k / factorial(k)
    act = model.mask.astype(bool)
    second = np.inf
    if np.any(act):
        second = float(np.min(model.lam * model.a[act] * norms[act]))
    return min(first, second) * chi_val


def _pg_residual(dom, s, g):
    return float(np.linalg.norm(dom.project(s - g) - s))


def _no_descent(model, x, s, inc, noise, dom, opts, chi_val):
    """True when the model cannot be decreased: stalled with no decrease at
    a point where the model measure is below the termination threshold."""
    if inc < -noise:
        return False
    pm = crit.psi_model_measure(model, x, s, opts.eps, opts.delta, opts.q,
                                basis=(dom.Q, dom.free))
    return pm.value <= opts.eps * chi_val


def compute_step(model, x, cls, opts):
    """Projected-gradient descent on ``s -> m(x, s)`` with freezing.

    Parameters
    ----------
    model : FullModel
        Model built at ``x`` over the active set ``cls.A``.
    x : ndarray
    cls : Classification
    opts : StepOptions

    Raises
    ------
    ConvergenceError
        If the inner iteration cap is reached or the line search stalls.
    UnsupportedOrderError
        For ``q > 2``.
    """
    if opts.q not in (1, 2):
        raise UnsupportedOrderError(f"q={opts.q} is not supported")
    problem = model.problem
    dom = _Domain(problem, x, cls)
    chi_val = crit.chi(opts.q, opts.delta)
    long_len = opts.varpi * opts.eps ** (1.0 / (opts.p - opts.q + 1))
    frozen, nonzero = [], []
    dims = [dom.dim]
    n = problem.n
    s = np.zeros(n)
    inc, g = model.increment_and_grad(s)
    noise = NOISE_RTOL * abs(model.m0)
    t = 1.0
    for it in range(1, opts.max_inner + 1):
        # trial with backtracking; entering the eps-ball freezes a residual
        while True:
            st = dom.project(s - t * g)
            ds = st - s
            step2 = float(ds @ ds)
            if step2 == 0.0:
                if _no_descent(model, x, s, inc, noise, dom, opts, chi_val):
                    return StepResult(np.zeros(n), "NoDescentStep", opts.delta, frozen, 0.0, None,
                                      it, dom.dim, {"dims": dims, "nonzero_frozen": nonzero})
                raise ConvergenceError(
                    "step computation stalled at a model-stationary point without an exit",
                    best=s, residual=None,
                    diagnostics={"iteration": it, "increment": inc, "dim": dom.dim})
            norms = model.hard_norms(st)
            hit = [gi for gi in range(model.n_groups) if model.mask[gi] and norms[gi] <= opts.eps]
            if hit:
                # pin the residuals to zero; kept only if the model still decreases enough
                v = model.hard_residuals(st)
                snapped = st.copy()
                for gi in hit:
                    snapped -= model.UA[model.group_rows(gi)].T @ v[model.group_rows(gi)]
                for gi in hit:
                    model.freeze(gi)
                dsn = snapped - s
                inc_t = model.increment(snapped)
                if inc_t <= inc - opts.armijo * float(dsn @ dsn) / t:
                    st = snapped
                    fixed = {}
                else:
                    for gi in hit:
                        model.unfreeze(gi)
                    # fall back to fixing the residuals at their current nonzero value
                    fixed = {gi: float(norms[gi]) for gi in hit}
                    inc_t = np.inf
                    if all(norms[gi] >= SINGULAR_TOL for gi in hit):
                        inc_t = model.increment(st)
                    if not inc_t <= inc - opts.armijo * step2 / t:
                        t *= 0.5
                        if t < opts.step_floor:
                            raise ConvergenceError("line search step fell below its floor", best=s,
                                                   residual=None, diagnostics={"iteration": it})
                        continue
                    for gi in hit:
                        model.freeze(gi, fixed[gi])
                for gi in hit:
                    dom.freeze(model.active[gi], st)
                    frozen.append(model.active[gi])
                if fixed:
                    nonzero.extend(model.active[gi] for gi in hit)
                dims.append(dom.dim)
                inc_t, g_t = model.increment_and_grad(st)
                break
            inc_t = model.increment(st)
            if inc_t <= inc - opts.armijo * step2 / t:
                inc_t, g_t = model.increment_and_grad(st)
                break
            if inc_t - inc <= noise:
                # model differences are at rounding level: accept if the
                # projected-gradient residual still decreases
                inc_t, g_t = model.increment_and_grad(st)
                if _pg_residual(dom, st, g_t) < _pg_residual(dom, s, g):
                    break
            t *= 0.5
            if t < opts.step_floor:
                if _no_descent(model, x, s, inc, noise, dom, opts, chi_val):
                    return StepResult(np.zeros(n), "NoDescentStep", opts.delta, frozen, 0.0, None,
                                      it, dom.dim, {"dims": dims, "nonzero_frozen": nonzero})
                raise ConvergenceError("line search step fell below its floor", best=s,
                                       residual=None, diagnostics={"iteration": it})
        if not hit:
            # Barzilai-Borwein trial step for the next iteration
            dg = g_t - g
            sy = float(ds @ dg)
            t = step2 / sy if sy > 0 else 2.0 * t
            t = min(max(t, opts.step_floor), opts.step_cap)
        s, inc, g = st, inc_t, g_t
        if not inc < -noise:
            continue
        ns = float(np.linalg.norm(s))
        if ns >= long_len:
            return StepResult(s, "LongStep", opts.delta, frozen, inc, None, it, dom.dim,
                              {"dims": dims, "nonzero_frozen": nonzero})
        norms = model.hard_norms(s)
        pm = crit.psi_model_measure(model, x, s, opts.eps, opts.delta, opts.q,
                                    basis=(dom.Q, dom.free))
        if pm.value <= _term_bound(model, s, norms, opts, chi_val):
            return StepResult(s, "ModelCritical", opts.delta, frozen, inc, pm.value, it,
                              dom.dim, {"dims": dims, "nonzero_frozen": nonzero})
    raise ConvergenceError("inner iteration cap reached", best=s, residual=None,
                           diagnostics={"increment": inc, "norm_s": float(np.linalg.norm(s)),
                                        "dim": dom.dim})
