"""Partially-separable adaptive regularization: the outer loop.

Each iteration tests approximate q-th order criticality at ``x_k``, computes
a step on the regularized isotropic model, accepts it on sufficient
agreement between actual and predicted decrease, and adapts one
regularization weight per smooth element.
"""
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import criticality as crit
from .errors import ConvergenceError, DomainError, SingularityError, UnsupportedOrderError
from .ledger import IterationRecord, Ledger, compute_omega
from .model import FullModel
from .problem import EvalCounter
from .subsolver import StepOptions, compute_step

log = logging.getLogger("psarp")

__all__ = ["SolverConfig", "SolverState", "SolverReport", "solve", "accept_step",
           "update_sigmas", "overestimates", "compute_omega", "add_observer", "remove_observer"]

_observers = []


def add_observer(fn):
    """Call ``fn(report)`` after every :func:`solve` (instrumentation hook)."""
    _observers.append(fn)


def remove_observer(fn):
    if fn in _observers:
        _observers.remove(fn)


@dataclass
class SolverConfig:
    """Algorithm constants; ranges are checked at construction."""

    eps: float = 1e-4
    p: int = 3
    q: int = 1
    delta: float = 1.0
    gamma0: float = 0.5
    gamma1: float = 2.0
    gamma2: float = 4.0
    eta: float = 0.1
    theta: float = 0.5
    sigma0: float = 1.0
    sigma_min: float = 1e-8
    kappa_big: float = 2.0
    varpi: float = 0.5
    max_iter: int = 10_000
    max_inner: int = 10_000
    upcond_rtol: float = 1e-12

    def __post_init__(self):
        bad = []
        if not 0 < self.eps <= 1:
            bad.append("eps must lie in (0, 1]")
        if self.q not in (1, 2):
            if isinstance(self.q, int) and self.q > 2:
                raise UnsupportedOrderError(f"q={self.q}: only q in {{1, 2}} is supported")
            bad.append("q must be 1 or 2")
        if self.p not in (1, 2, 3):
            bad.append("p must be 1, 2 or 3")
        elif self.q > self.p:
            bad.append("q must not exceed p")
        if not 0 < self.delta <= 1:
            bad.append("delta must lie in (0, 1]")
        if not 0 < self.gamma0 < 1 < self.gamma1 <= self.gamma2:
            bad.append("need 0 < gamma0 < 1 < gamma1 <= gamma2")
        if not 0 < self.eta < 1:
            bad.append("eta must lie in (0, 1)")
        if not 0 < self.theta <= 1:
            bad.append("theta must lie in (0, 1]")
        if not 0 < self.sigma_min <= self.sigma0:
            bad.append("need 0 < sigma_min <= sigma0")
        if not self.kappa_big > 1:
            bad.append("kappa_big must exceed 1")
        if not 0 < self.varpi <= 1:
            bad.append("varpi must lie in (0, 1]")
        if self.max_iter < 0 or self.max_inner < 1:
            bad.append("iteration caps must be positive")
        if bad:
            raise DomainError("invalid solver configuration: " + "; ".join(bad))


@dataclass
class SolverState:
    k: int
    x: np.ndarray
    sigma: np.ndarray
    frozen: list
    delta_prev: float
    counter: EvalCounter = field(default_factory=EvalCounter)


@dataclass
class SolverReport:
    x: np.ndarray
    status: str
    psi: float
    f: float
    iterations: int
    successes: int
    evals_f: int
    evals_der: int
    sigma: np.ndarray
    ledger: Ledger
    message: str = ""

    def to_dict(self):
        out = {"status": self.status, "psi": self.psi, "f": self.f, "x": self.x.tolist(),
               "iterations": self.iterations, "successes": self.successes,
               "evals_f": self.evals_f, "evals_der": self.evals_der,
               "sigma": self.sigma.tolist(), "message": self.message,
               "ledger": self.ledger.diagnostics(),
               "violations": self.ledger.violations()}
        return out


def accept_step(df, dT, eta):
    """Accept iff ``df / dT >= eta``; ``dT`` must be positive.

    >>> accept_step(0.9, 1.0, 0.25)
    True
    """
    assert dT > 0, f"predicted decrease must be positive, got {dT}"
    return bool(df / dT >= eta)


def update_sigmas(sigma, df_elem, dm_elem, df_total, rho, config):
    """New regularization weights and the per-element up-condition flags.

    An element whose value at the trial point exceeds its model gets
    ``(gamma1 + gamma2)/2 * sigma``; on successful iterations an element
    whose model is far off (relative to ``kappa_big |df_total|``) gets
    ``max(sigma_min, gamma0 * sigma)``; otherwise sigma is kept.
    """
    sigma = np.asarray(sigma, dtype=float)
    new = sigma.copy()
    up = []
    for i, (dfi, dmi) in enumerate(zip(df_elem, dm_elem)):
        tol = config.upcond_rtol * (abs(dfi) + abs(dmi) + 1e-300)
        u = dmi - dfi > tol
        up.append(bool(u))
        if u:
            new[i] = 0.5 * (config.gamma1 + config.gamma2) * sigma[i]
        elif overestimates(dfi, dmi, df_total, rho, config):
            new[i] = max(config.sigma_min, config.gamma0 * sigma[i])
    return new, up


def overestimates(dfi, dmi, df_total, rho, config):
    """Decrease test: successful iteration and element model far off.

    Only consulted when the up-condition fails; with ``dfi <= 0`` the
    second clause implies ``dfi < dmi``, which is the up-condition, so in
    practice only the ``dfi > 0`` clause can trigger a decrease.

    >>> overestimates(-1.0, 0.5, 0.1, 1.0, SolverConfig())
    True
    """
    if rho < config.eta:
        return False
    slack = config.kappa_big * abs(df_total)
    return bool((dfi <= 0 and dfi < dmi - slack) or (dfi > 0 and dfi > dmi + slack))


def _log_level():
    return os.environ.get("PSARP_LOG", "off").lower()


def _snap(problem, x, eps):
    """Move every residual with ``||r_i|| <= eps`` exactly to zero."""
    x = x.copy()
    for el in problem.hard:
        r = el.residual(x)
        if np.linalg.norm(r) <= eps:
            x -= el.U.T @ r
    return x


def _kappa_n(problem, x, p):
    vals = [0.0]
    for el in problem.smooth:
        vals += el.derivative_norms(el.U @ x, p)
    return max(vals)


def solve(problem, config=None, x0=None, validate=True):
    """Run the algorithm from ``x0`` (default: problem x0, else projected ones).

    Returns
    -------
    SolverReport
        ``status`` is ``"Converged"``, ``"ModelCriticalStop"`` (no model
        decrease exists, Step 2), ``"IterationCap"`` or ``"InnerFailure"``.
    """
    config = config or SolverConfig()
    if validate:
        problem.check()
    if problem.hard and config.p not in (1, 3):
        raise DomainError("p must be odd (1 or 3) when hard elements are present")
    level = _log_level()
    if x0 is None:
        x0 = problem.x0 if problem.x0 is not None else np.ones(problem.n)
    x = problem.feasible.project(np.asarray(x0, dtype=float))
    eps = config.eps
    x = _snap(problem, x, eps)
    nN = len(problem.smooth)
    state = SolverState(0, x, np.full(nN, float(config.sigma0)), [], 1.0)
    counter = state.counter
    ledger = Ledger(eps, config.p, config.q, nN, len(problem.hard),
                    min(problem.exponents()) if problem.hard else 0.5, problem.lam,
                    config.gamma0, config.gamma1, config.gamma2, config.eta, config.theta,
                    config.sigma_min, list(state.sigma), problem.sigma_equiv_constant(),
                    [el.lipschitz(config.p) for el in problem.smooth], config.upcond_rtol)
    opts = StepOptions(eps=eps, p=config.p, q=config.q, theta=config.theta, varpi=config.varpi,
                       delta=config.delta, max_inner=config.max_inner)
    fx = problem.evaluate_f(x, counter=counter)
    ledger.f0 = fx
    counter.der += 1
    kappa_n = _kappa_n(problem, x, config.p)
    taylors = None
    status, message, psi = "IterationCap", "", None
    snap_tried = set()
    while True:
        # residuals fixed at a nonzero value inside the eps-ball are pinned to
        # zero once, if that does not increase f (one counted evaluation)
        near = [i for i, t in enumerate(problem.residual_norms(x))
                if 0 < t <= eps and i not in snap_tried]
        if near:
            snap_tried.update(near)
            xs = _snap(problem, x, eps)
            fs_ = problem.evaluate_f(xs, counter=counter)
            ok = fs_ <= fx
            ledger.snaps.append({"k": state.k, "groups": near, "f_before": fx, "f_after": fs_,
                                 "accepted": bool(ok)})
            if ok:
                x, fx = xs, fs_
                counter.der += 1
                taylors = None
        cls = crit.classify(problem, x, eps)
        ledger.dims.append(cls.dim)
        state.frozen = list(cls.C)
        psi = crit.psi_measure(problem, x, eps, state.delta_prev, config.q, cls).value
        if psi <= eps * crit.chi(config.q, state.delta_prev):
            status = "Converged"
            break
        if state.k >= config.max_iter:
            break
        if taylors is None:
            taylors = [el.taylor(el.U @ x, config.p) for el in problem.smooth]
        model = FullModel(problem, x, state.sigma, config.p, cls.A, taylors)
        try:
            step = compute_step(model, x, cls, opts)
        except ConvergenceError as exc:
            status, message = "InnerFailure", str(exc)
            break
        if step.exit == "NoDescentStep":
            # the model admits no decrease on R_k; what is left of psi is the
            # constant carried by residuals fixed at nonzero values
            stuck = [i for i in cls.C if problem.residual_norms(x)[i] > 0]
            if stuck:
                status = "ModelCriticalStop"
                message = f"no model decrease exists; nonzero fixed residuals {stuck}"
            else:
                status, message = "InnerFailure", "model stationary at s=0 but psi above threshold"
            break
        s = step.s
        xt = x + s
        # element-wise actual and predicted decreases over N and A_k
        smooth_parts = model.smooth_parts(s)
        df_elem, dm_elem, dT = [], [], 0.0
        for el, (tinc, reg) in zip(problem.smooth, smooth_parts):
            df_elem.append(el.decrease(el.U @ x, el.U @ s))
            dm_elem.append(-(tinc + reg))
            dT += -tinc
        hard_inc = model.hard_increments(s)
        norms_before = problem.residual_norms(x)
        norms_after = problem.residual_norms(xt)
        df_hard = [problem.lam * (norms_before[i] ** problem.hard[i].a
                                  - norms_after[i] ** problem.hard[i].a) for i in cls.A]
        dT += float(-np.sum(hard_inc))
        df = float(sum(df_elem) + sum(df_hard))
        f_trial = problem.evaluate_f(xt, counter=counter)
        if not dT > 0:
            raise AssertionError(f"non-positive predicted decrease {dT} at k={state.k}")
        rho = df / dT
        success = accept_step(df, dT, config.eta)
        sigma_before = state.sigma.copy()
        state.sigma, up = update_sigmas(state.sigma, df_elem, dm_elem, df, rho, config)
        f_before = fx
        if success:
            x, fx = xt, f_trial
            counter.der += 1
            taylors = None
            kappa_n = max(kappa_n, _kappa_n(problem, x, config.p))
        rec = IterationRecord(
            state.k, success, float(rho), float(np.linalg.norm(s)), float(fx), float(psi),
            float(np.max(state.sigma)) if nN else 0.0,
            [int(i) for i in np.flatnonzero(problem.residual_norms(x) <= eps)],
            step.exit, float(dT), float(df), sigma_before.tolist(), state.sigma.tolist(), up,
            [float(v) for v in df_elem], [float(v) for v in dm_elem],
            norms_before.tolist(), norms_after.tolist(), cls.dim, list(step.frozen),
            step.inner_iterations, float(f_before))
        ledger.records.append(rec)
        if level in ("iter", "debug"):
            log.info("k=%d success=%s rho=%.3e |s|=%.3e f=%.10e psi=%.3e exit=%s",
                     state.k, success, rho, rec.norm_s, fx, psi, step.exit)
        if level == "debug":
            log.debug("sigma=%s frozen=%s inner=%d", state.sigma, rec.frozen, step.inner_iterations)
        state.delta_prev = step.delta
        state.k += 1
    ledger.kappa_n = kappa_n
    ledger.evals_f = counter.f
    ledger.evals_der = counter.der
    successes = sum(r.success for r in ledger.records)
    report = SolverReport(x, status, float(psi), float(fx), state.k, successes,
                          counter.f, counter.der, state.sigma.copy(), ledger, message)
    if level in ("iter", "debug") and ledger.records:
        log.info("run log\n%s", ledger.jsonl())
    for fn in list(_observers):
        fn(report)
    return report
