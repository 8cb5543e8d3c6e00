"""Problem generators, epsilon sweeps and complexity-slope fitting."""
import csv
import io
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import feasible as fs
from .errors import DomainError, PsarpError
from .problem import HardElement, Problem, QuadraticElement, QuarticWellElement
from .solver import SolverConfig, solve

TERMINATED = ("Converged", "ModelCriticalStop")
CSV_COLUMNS = ("eps", "succ", "unsucc", "evals_f", "evals_der", "psi_final")


def _well_conditioned(rng, m, n, cond=10.0):
    """Random ``m x n`` matrix (m >= n) with singular values in ``[1, cond]``."""
    A, _ = np.linalg.qr(rng.standard_normal((m, n)))
    B, _ = np.linalg.qr(rng.standard_normal((n, n)))
    sv = np.geomspace(1.0, cond, n)
    rng.shuffle(sv)
    return (A * sv) @ B.T


def _selector(idx, n):
    U = np.zeros((len(idx), n))
    U[np.arange(len(idx)), idx] = 1.0
    return U


def gen_group_lasso(groups=5, gsize=4, n=None, lam=0.5, seed=0, box=(-2.0, 2.0), a=0.5,
                    cond=10.0, noise=0.1):
    """Group-lasso instance ``1/2||Hx - y||^2 + lam sum ||x_G||^a`` on a box.

    Groups are consecutive coordinate blocks; half of them (rounded down)
    are zero in the planted solution. ``x0`` is drawn uniformly in the box.
    """
    n = groups * gsize if n is None else int(n)
    if groups * gsize > n or groups < 1 or gsize < 1:
        raise DomainError(f"invalid partition: {groups} groups of {gsize} in R^{n}")
    lo, hi = float(box[0]), float(box[1])
    if not lo < 0 < hi:
        raise DomainError("box must satisfy lo < 0 < hi")
    rng = np.random.default_rng(seed)
    H = _well_conditioned(rng, n, n, cond)
    x_true = np.zeros(n)
    for g in range(groups):
        if g % 2 == 0:
            x_true[g * gsize:(g + 1) * gsize] = rng.uniform(-1.0, 1.0, gsize)
    x_true[groups * gsize:] = rng.uniform(-1.0, 1.0, n - groups * gsize)
    y = H @ x_true + noise * rng.standard_normal(n)
    smooth = [QuadraticElement(np.eye(n), H, y)]
    hard = [HardElement(_selector(np.arange(g * gsize, (g + 1) * gsize), n), np.zeros(gsize), a)
            for g in range(groups)]
    feas = fs.Box(np.full(n, lo), np.full(n, hi))
    x0 = rng.uniform(0.5 * lo, 0.5 * hi, n)
    return Problem(n, smooth, hard, feas, float(lam), x0)


def gen_row_sparse_regression(nu=2, gamma=2, kappa=None, lam=0.1, seed=0, a=0.5, noise=0.0,
                              x_bar=None):
    """Row-sparse regression ``sum_j 1/2||H X_j - B_j||^2 + lam sum_i ||X_(i,:)||^a``.

    ``X`` is ``nu x gamma``, stored column by column in ``x``; smooth
    elements act on columns, hard elements on rows. ``x_bar`` (default: a
    random matrix with its last row zero) generates ``B = H x_bar``.
    """
    if nu < 1 or gamma < 1:
        raise DomainError("dimensions must be positive")
    kappa = nu if kappa is None else int(kappa)
    rng = np.random.default_rng(seed)
    n = nu * gamma
    H = _well_conditioned(rng, max(kappa, nu), nu)[:kappa]
    if x_bar is None:
        x_bar = rng.uniform(-1.0, 1.0, (nu, gamma))
        x_bar[-1] = 0.0
    x_bar = np.asarray(x_bar, dtype=float)
    B = H @ x_bar + noise * rng.standard_normal((kappa, gamma))
    smooth = [QuadraticElement(_selector(j * nu + np.arange(nu), n), H, B[:, j])
              for j in range(gamma)]
    hard = [HardElement(_selector(i + nu * np.arange(gamma), n), np.zeros(gamma), a)
            for i in range(nu)]
    x0 = rng.uniform(-1.0, 1.0, n)
    return Problem(n, smooth, hard, fs.WholeSpace(n), float(lam), x0)


def gen_nonconvex(groups=5, gsize=4, lam=0.5, seed=7, a=0.5, c=2.0, box=(-2.0, 2.0)):
    """Group lasso plus a separable double well ``c/4 sum (x_k^2 - 1)^2`` (nonconvex)."""
    base = gen_group_lasso(groups, gsize, None, lam, seed, box, a)
    smooth = base.smooth + [QuarticWellElement(np.eye(base.n), c)]
    return Problem(base.n, smooth, base.hard, base.feasible, base.lam, base.x0)


GENERATORS = {
    "group-lasso": gen_group_lasso,
    "row-sparse": gen_row_sparse_regression,
    "nonconvex": gen_nonconvex,
}


@dataclass
class Experiment:
    """A problem, a strictly decreasing list of accuracies and solver overrides."""

    problem: Problem
    eps: list
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = [float(e) for e in self.eps]
        if any(not 0 < e <= 1 for e in eps):
            raise DomainError("eps values must lie in (0, 1]")
        if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
            raise DomainError("eps values must be strictly decreasing")
        self.eps = eps


@dataclass
class SweepReport:
    rows: list
    p: int
    q: int
    slope: float = None
    exponent: float = None
    kappa_S: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    def csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([f"{r['eps']:.6e}", r["succ"], r["unsucc"], r["evals_f"], r["evals_der"],
                        "nan" if r["psi_final"] is None else f"{r['psi_final']:.12e}"])
        return buf.getvalue()

    def to_dict(self):
        out = {"p": self.p, "q": self.q, "exponent": self.exponent, "rows": self.rows,
               "kappa_S": self.kappa_S, "violations": self.violations}
        if self.slope is not None:
            out["slope"] = self.slope
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def fit_slope(eps, succ):
    """OLS slope of ``log max(|S|, 1)`` against ``log(1/eps)``."""
    X = np.log(1.0 / np.asarray(eps, dtype=float))
    Y = np.log(np.maximum(np.asarray(succ, dtype=float), 1.0))
    return float(np.polyfit(X, Y, 1)[0])


def run_sweep(experiment):
    """Fresh solve per accuracy from the same starting point.

    Solver failures are recorded in the row (``status``) and the sweep
    continues. Runtimes go to the JSON report only, so the CSV is
    reproducible byte for byte. The slope is fitted only when at least three solves terminated normally.
    """
    prob = experiment.problem
    base = SolverConfig(**{**experiment.config, "eps": experiment.eps[0]})
    rows, kS, viol = [], [], []
    for eps in experiment.eps:
        cfg = replace(base, eps=eps)
        t0 = time.perf_counter()
        try:
            rep = solve(prob, cfg)
        except PsarpError as exc:
            rows.append({"eps": eps, "succ": 0, "unsucc": 0, "evals_f": 0, "evals_der": 0,
                         "psi_final": None, "status": f"error: {exc}",
                         "runtime": time.perf_counter() - t0})
            continue
        rows.append({"eps": eps, "succ": rep.successes, "unsucc": rep.iterations - rep.successes,
                     "evals_f": rep.evals_f, "evals_der": rep.evals_der, "psi_final": rep.psi,
                     "status": rep.status, "runtime": time.perf_counter() - t0})
        kS.append(rep.ledger.kappa_s())
        viol += [f"eps={eps:g}: {m}" for m in rep.ledger.violations()]
    conv = [r for r in rows if r["status"] in TERMINATED]
    report = SweepReport(rows, base.p, base.q, exponent=(base.p + 1) / (base.p - base.q + 1),
                         kappa_S=kS, violations=viol)
    if len(conv) >= 3:
        report.slope = fit_slope([r["eps"] for r in conv], [r["succ"] for r in conv])
    return report
