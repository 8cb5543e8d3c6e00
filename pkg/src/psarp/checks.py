"""Property suites for the tensor formulas, models, measures and ledger.

Each suite returns a list of :class:`CheckResult`. The suites use oracles
that are independent of the code under test: nested finite differences,
exact rational arithmetic, direct sampling and brute-force grids.
"""
import time
from dataclasses import dataclass
from fractions import Fraction
from math import factorial

import numpy as np

from . import criticality as crit
from . import feasible as fs
from .model import MuModel, mu_derivative, mu_value
from .problem import HardElement, Problem, QuadraticElement
from .tensor_calc import (finite_difference_oracle, mu_table, normpow_derivative,
                          normpow_induced_norm, normpow_tensor_norm)

EXPONENTS = (0.1, 0.5, 0.9)
# relative central-difference step per derivative order (times ||r||)
FD_STEP = {1: 1e-3, 2: 1e-3, 3: 2e-3, 4: 3e-3}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _random_point(rng, m, lo=0.1, hi=10.0):
    r = rng.standard_normal(m)
    return r * np.exp(rng.uniform(np.log(lo), np.log(hi))) / np.linalg.norm(r)


# tensors ----------------------------------------------------------------------

def _normpow_ld(a):
    a = np.longdouble(a)
    return lambda y: np.sqrt(np.sum(y * y)) ** a


def fd_agreement(cases=200, seed=0, rtol=1e-5):
    """Closed-form multilinear forms against a Richardson-extrapolated FD oracle.

    The error is measured relative to ``max(|exact|, 1e-2 * induced tensor norm)`` so
    that forms which nearly cancel are not judged on a vanishing scale. The
    stencil runs in extended precision with steps proportional to ``||r||``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for c in range(cases):
        a = EXPONENTS[c % 3]
        j = 1 + (c // 3) % 4
        m = int(rng.integers(1, 5))
        r = _random_point(rng, m)
        dirs = rng.standard_normal((j, m))
        if c % 2:
            dirs[:] = dirs[0]
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        h = FD_STEP[j] * float(np.linalg.norm(r))
        est, _ = finite_difference_oracle(_normpow_ld(a), r, j, dirs, (h, h / 2), np.longdouble)
        exact = normpow_derivative(r, a, j, dirs)
        scale = max(abs(exact), 1e-2 * normpow_induced_norm(r, a, j))
        worst = max(worst, abs(est - exact) / scale)
    return CheckResult("fd_agreement", worst <= rtol, f"{cases} cases, max rel err {worst:.2e} (tol {rtol:g})")


def phi_sum_identity(max_order=8):
    """``sum_i phi[i, j] = pi(a - j)`` in exact rational arithmetic."""
    bad = []
    for a in EXPONENTS:
        af = Fraction(a).limit_denominator(1000)
        for j in range(1, max_order + 1):
            nu, total = Fraction(1), Fraction(0)
            for i, m in enumerate(mu_table(j), start=1):
                nu *= af + 2 - 2 * i
                total += m * nu
            target = af
            for i in range(1, j):
                target *= af - i
            if total != target:
                bad.append((a, j))
    return CheckResult("phi_sum_identity", not bad,
                       f"orders 1..{max_order}, exponents {EXPONENTS}, mismatches {bad}")


def _sampled_max(rng, r, a, j, samples, dense=0):
    """Max over random unit directions plus ``+-r/||r||``; with ``dense`` a
    uniform grid of attainable cosines is added (any cosine is attainable
    when ``r`` has at least two components)."""
    V = rng.standard_normal((samples, r.size))
    V[0], V[1] = r, -r
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    nr = np.linalg.norm(r)
    cosv = V @ r / nr
    if dense and r.size > 1:
        cosv = np.concatenate([cosv, np.linspace(-1.0, 1.0, dense)])
    return float(np.max(np.abs(_quadform_reference(nr, cosv, a, j))))


def tensor_norm_sampling(cases=30, samples=10_000, seed=1, tol=1e-8, dims=(1, 2, 3)):
    """Sampled ``max |D^j ||r||^a [v]^j|`` over unit ``v`` (plus ``+-r/||r||``)
    against the closed form ``|pi(a-j)| ||r||^(a-j)``.

    The sampled maximum is computed from an independent one-dimensional
    restriction. Results are broken down by the dimension of ``r``.
    """
    rng = np.random.default_rng(seed)
    gaps = {m: 0.0 for m in dims}
    for c in range(cases):
        a = EXPONENTS[c % 3]
        j = 1 + c % 4
        for m in dims:
            r = _random_point(rng, m)
            ref = normpow_tensor_norm(r, a, j)
            gaps[m] = max(gaps[m], abs(_sampled_max(rng, r, a, j, samples) - ref) / ref)
    ok = all(g <= tol for g in gaps.values())
    detail = ", ".join(f"dim {m}: max rel gap {g:.1e}" for m, g in gaps.items())
    return CheckResult("tensor_norm", ok, f"{cases} cases x {samples} samples; {detail}")


def induced_norm_sampling(cases=30, samples=10_000, seed=5, tol=1e-8, dense=1_000_001):
    """:func:`normpow_induced_norm` bounds every sample and matches the sampled
    maximum (random directions plus a dense cosine grid)."""
    rng = np.random.default_rng(seed)
    worst_excess, worst_gap = -np.inf, 0.0
    for c in range(cases):
        a = EXPONENTS[c % 3]
        j = 1 + c % 4
        r = _random_point(rng, 1 + c % 3)
        ref = normpow_induced_norm(r, a, j)
        smax = _sampled_max(rng, r, a, j, samples, dense)
        worst_excess = max(worst_excess, (smax - ref) / ref)
        worst_gap = max(worst_gap, (ref - smax) / ref)
    ok = worst_excess <= 1e-12 and worst_gap <= tol
    return CheckResult("induced_norm", ok,
                       f"{cases} cases, max excess {worst_excess:.1e}, max gap {worst_gap:.1e}")


def _quadform_reference(nr, cosv, a, j):
    """``D^j ||r||^a [v]^j`` for unit ``v`` from the 1-D restriction.

    Along ``t -> ||r + t v||^a = (nr^2 + 2 nr c t + t^2)^(a/2)`` the j-th
    derivative at 0 is ``j!`` times a Taylor coefficient of a power of a
    quadratic, obtained by Miller's recurrence.
    """
    c = np.asarray(cosv, dtype=float)
    g = [nr * nr, 2.0 * nr * c, 1.0]
    e = a / 2.0
    f = [np.full(c.shape, g[0] ** e)]
    for n in range(1, j + 1):
        acc = 0.0
        for k in range(1, min(n, 2) + 1):
            acc = acc + (e * k - (n - k)) * g[k] * f[n - k]
        f.append(acc / (n * g[0]))
    return f[j] * factorial(j)


def suite_tensors():
    t0 = time.perf_counter()
    out = [fd_agreement(), phi_sum_identity(), tensor_norm_sampling(), induced_norm_sampling()]
    dt = time.perf_counter() - t0
    out.append(CheckResult("tensors_runtime", dt < 10.0, f"{dt:.2f} s (limit 10 s)"))
    return out


# model ------------------------------------------------------------------------

def overestimation(pairs=10_000, seed=2, slack=1e-12):
    """``mu(||r||, ||r+s|| - ||r||) >= ||r+s||^a`` for odd degrees."""
    rng = np.random.default_rng(seed)
    out = []
    for p in (1, 3):
        bad = 0
        for k in range(pairs):
            a = EXPONENTS[k % 3] if k % 2 else float(rng.uniform(0.01, 0.99))
            m = int(rng.integers(1, 5))
            r = _random_point(rng, m, 1e-3, 1e2)
            s = rng.standard_normal(m) * np.linalg.norm(r) * np.exp(rng.uniform(-5, 2))
            rho = float(np.linalg.norm(r))
            t = float(np.linalg.norm(r + s))
            if mu_value(MuModel(rho, a, p), t - rho) < t ** a - slack:
                bad += 1
        out.append(CheckResult(f"overestimation_p{p}", bad == 0, f"{pairs} pairs, {bad} violations"))
    return out


def concavity(points=100, tol=1e-12):
    """Second derivative of the model is non-positive on ``[-rho, 0]``."""
    worst = -np.inf
    cases = 0
    for p in (1, 3):
        if p < 2:
            continue
        for a in EXPONENTS + (0.01, 0.99):
            for rho in (1e-3, 0.1, 1.0, 10.0):
                mod = MuModel(rho, a, p)
                cases += 1
                for z in np.linspace(-rho, 0.0, points):
                    worst = max(worst, mu_derivative(mod, z, 2) / max(1.0, rho ** (a - 2)))
    return CheckResult("concavity", worst <= tol, f"{cases} cases x {points} points, max scaled mu'' {worst:.2e}")


def suite_model():
    return overestimation() + [concavity()]


# criticality ------------------------------------------------------------------

def _selector(idx, n):
    U = np.zeros((len(idx), n))
    U[np.arange(len(idx)), idx] = 1.0
    return U


def random_measure_instance(rng, n, groups, box=False):
    """Least squares plus coordinate groups; the first group has zero residual."""
    H = rng.standard_normal((n, n)) + 2 * np.eye(n)
    y = rng.standard_normal(n)
    sizes = np.array_split(np.arange(n), groups)
    hard = [HardElement(_selector(g, n), np.zeros(g.size), float(rng.choice(EXPONENTS)))
            for g in sizes]
    feas = fs.Box(np.full(n, -1.0), np.full(n, 1.0)) if box else fs.WholeSpace(n)
    prob = Problem(n, [QuadraticElement(np.eye(n), H, y)], hard, feas, float(rng.uniform(0.1, 1)))
    x = rng.uniform(-0.9, 0.9, n)
    x[sizes[0]] = 0.0
    return prob, x


def closed_form_q1(instances=100, seed=3, tol=1e-9):
    """``psi = delta ||Q Q^T grad f_W||`` on the whole space when ``C`` residuals vanish."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        n = int(rng.integers(3, 9))
        prob, x = random_measure_instance(rng, n, int(rng.integers(2, min(n, 4) + 1)))
        delta = float(rng.uniform(0.05, 1.0))
        cls = crit.classify(prob, x, 1e-3)
        g, _ = crit.local_taylor(prob, x, cls, 1)
        ref = delta * np.linalg.norm(cls.Q @ (cls.Q.T @ g))
        val = crit.psi_measure(prob, x, 1e-3, delta, 1, cls).value
        worst = max(worst, abs(val - ref) / max(1.0, ref))
    return CheckResult("psi_closed_form", worst <= tol, f"{instances} instances, max err {worst:.1e}")


def grid_minimum(g, H, Q, center, delta, fset, points=1_000_000, levels=3, keep=4):
    """Brute-force ``min g.d + 1/2 d.H.d`` over ``center + Q z`` in ``F``, ``||z|| <= delta``.

    A uniform grid of about ``points`` nodes on the cube around the ball is
    refined twice around the ``keep`` best nodes. Only feasible nodes are
    evaluated, so the result is an upper bound on the true minimum.
    """
    k = Q.shape[1]
    per = int(round(points ** (1.0 / k)))
    gz = Q.T @ g
    Hz = None if H is None else Q.T @ H @ Q
    lo, hi = (None, None) if isinstance(fset, fs.WholeSpace) else fset.bounds()

    def evaluate(Z):
        ok = np.einsum("ij,ij->i", Z, Z) <= delta * delta * (1 + 1e-12)
        if lo is not None:
            X = center + Z @ Q.T
            ok &= np.all((X >= lo - 1e-12) & (X <= hi + 1e-12), axis=1)
        Z = Z[ok]
        v = Z @ gz
        if Hz is not None:
            v += 0.5 * np.einsum("ij,jk,ik->i", Z, Hz, Z)
        return Z, v

    boxes = [(np.zeros(k), delta)]
    best = np.inf
    for _ in range(levels):
        cands = []
        for mid, half in boxes:
            axes = [np.linspace(c - half, c + half, per) for c in mid]
            Z = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, k)
            Z, v = evaluate(Z)
            if v.size:
                order = np.argsort(v)[:keep]
                cands += [(float(v[i]), Z[i], 2.0 * half / (per - 1)) for i in order]
        if not cands:
            break
        cands.sort(key=lambda c: c[0])
        best = min(best, cands[0][0])
        boxes = [(z, 2.0 * h) for _, z, h in cands[:keep]]
        per = max(2, int(round((points / len(boxes)) ** (1.0 / k))))
    return best


def grid_oracle(instances=6, seed=4, tol=1e-4):
    """``psi`` for q = 1, 2 against :func:`grid_minimum` on low-dimensional ``R``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    ran = 0
    for c in range(instances):
        n = 5
        prob, x = random_measure_instance(rng, n, 3 if c % 2 else 2, box=bool(c % 3))
        cls = crit.classify(prob, x, 1e-3)
        if cls.dim > 3 or cls.dim == 0:
            continue
        delta = float(rng.uniform(0.3, 1.0))
        for q in (1, 2):
            g, H = crit.local_taylor(prob, x, cls, q)
            res = crit.psi_measure(prob, x, 1e-3, delta, q, cls, (g, H))
            grid = grid_minimum(g, H, cls.Q, x, delta, prob.feasible)
            worst = max(worst, abs(res.value - (-grid)))
            ran += 1
    return CheckResult("psi_grid_oracle", worst <= tol and ran > 0,
                       f"{ran} measures (q=1,2), max |psi - grid| {worst:.1e} (tol {tol:g})")


def suite_criticality():
    return [closed_form_q1(), grid_oracle()]


# ledger -------------------------------------------------------------------------

def benchmark_runs():
    """Solve the shipped benchmark instances; returns ``[(label, report)]``."""
    from .harness import gen_group_lasso, gen_nonconvex, gen_row_sparse_regression
    from .solver import SolverConfig, solve
    runs = []
    for eps in (1e-2, 1e-3, 1e-4):
        runs.append((f"group-lasso eps={eps:g}", solve(gen_group_lasso(seed=7), SolverConfig(eps=eps))))
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        runs.append((f"nonconvex eps={eps:g}", solve(gen_nonconvex(), SolverConfig(eps=eps))))
    runs.append(("row-sparse eps=1e-4", solve(gen_row_sparse_regression(seed=0), SolverConfig(eps=1e-4))))
    runs.append(("group-lasso q=2", solve(gen_group_lasso(seed=7), SolverConfig(eps=1e-3, q=2))))
    return runs


def suite_ledger(runs=None):
    runs = benchmark_runs() if runs is None else runs
    laws, forbidden = [], []
    for label, rep in runs:
        for law, msgs in rep.ledger.laws().items():
            tgt = forbidden if law == "forbidden_interval" else laws
            tgt += [f"{label}: {m}" for m in msgs]
    return [CheckResult("ledger_laws", not laws, f"{len(runs)} runs, {len(laws)} violations"
                        + (f"; first: {laws[0]}" if laws else "")),
            CheckResult("forbidden_interval", not forbidden,
                        f"{len(runs)} runs, {len(forbidden)} violations"
                        + (f"; first: {forbidden[0]}" if forbidden else ""))]


SUITES = {
    "tensors": suite_tensors,
    "model": suite_model,
    "criticality": suite_criticality,
    "ledger": suite_ledger,
}
