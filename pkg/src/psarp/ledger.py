"""Per-iteration records of a solve and the complexity laws checked on them."""
import json
from dataclasses import asdict, dataclass, field
from math import factorial, log

import numpy as np

from .tensor_calc import normpow_induced_norm

LAW_SLACK = 1e-10


@dataclass
class IterationRecord:
    k: int
    success: bool
    rho: float
    norm_s: float
    f: float
    psi: float
    sigma_max: float
    frozen: list
    exit: str
    dT: float
    df: float
    sigma_before: list
    sigma_after: list
    upcond: list
    df_elem: list
    dm_elem: list
    norms_before: list
    norms_after: list
    dim: int
    step_frozen: list
    inner_iterations: int
    f_before: float
    cls: str = "U"

    def log_entry(self):
        return {"k": self.k, "success": self.success, "rho": self.rho, "norm_s": self.norm_s,
                "f": self.f, "psi": self.psi, "sigma_max": self.sigma_max,
                "frozen": list(self.frozen), "class": self.cls}


def compute_omega(a, n_smooth, kappa_n, sigma_max, p, q):
    """``min[a/16, (a / (12 |N| (kappa_N + sigma_max/(p-q+1)!)))^(1/(1-a))]``.

    >>> round(compute_omega(0.5, 1, 1.0, 1.0, 3, 1), 10)
    0.0012755102
    """
    second = (a / (12.0 * n_smooth * (kappa_n + sigma_max / factorial(p - q + 1)))) ** (1.0 / (1.0 - a))
    return float(min(a / 16.0, second))


@dataclass
class Ledger:
    """Iteration ledger with the diagnostics of the complexity analysis.

    ``kappa_n`` and ``sigma_max`` are estimated from the run; they only feed
    diagnostics, never the algorithm.
    """

    eps: float
    p: int
    q: int
    n_smooth: int
    n_hard: int
    a: float
    lam: float
    gamma0: float
    gamma1: float
    gamma2: float
    eta: float
    theta: float
    sigma_min: float
    sigma0: list
    varsigma: float
    lipschitz: list
    upcond_rtol: float
    records: list = field(default_factory=list)
    kappa_n: float = 0.0
    dims: list = field(default_factory=list)
    evals_f: int = 0
    evals_der: int = 0
    f0: float = None
    snaps: list = field(default_factory=list)

    # constants ----------------------------------------------------------

    @property
    def sigma_observed(self):
        vals = list(self.sigma0)
        for r in self.records:
            vals += r.sigma_after
        return float(max(vals)) if vals else 0.0

    @property
    def sigma_max(self):
        return self.gamma2 * self.sigma_observed

    @property
    def omega(self):
        if not self.n_hard:
            return None
        # hard terms carry the weight lam; rescale the smooth part to weight 1
        return compute_omega(self.a, self.n_smooth, self.kappa_n / self.lam,
                             self.sigma_max / self.lam, self.p, self.q)

    @property
    def alpha(self):
        om = self.omega
        return None if om is None else 0.75 * om

    @property
    def kappa_a(self):
        return 1.0 + self.n_smooth * abs(log(self.gamma0)) / log(self.gamma1)

    @property
    def kappa_b(self):
        return self.n_smooth / log(self.gamma1) * log(self.sigma_max / self.sigma_min)

    def lipschitz_alpha(self):
        known = [L for L in self.lipschitz if L is not None]
        lmax = max(known) if known else 0.0
        if not self.n_hard:
            return lmax
        # induced norm of the (p+1)-th derivative of ||r||^a at radius alpha
        # (the radial value |pi(a-p-1)| alpha^(a-p-1) underestimates it)
        r = np.zeros(2)
        r[0] = self.alpha
        return max(normpow_induced_norm(r, self.a, self.p + 1), lmax)

    def kappa_heart(self):
        k = self.p - self.q + 1
        return (factorial(k) / (self.lipschitz_alpha() + self.theta + self.sigma_max)) ** (1.0 / k)

    def kappa_s(self):
        k = self.p - self.q + 1
        return (factorial(self.p + 1) / (self.eta * self.sigma_min * self.varsigma ** (self.p + 1))
                * self.kappa_heart() ** (-1.0))

    # classification -----------------------------------------------------

    def classify(self):
        """Assign ``S_eps``, ``S_s``, ``S_heart`` or ``U`` to every record."""
        om = self.omega
        for r in self.records:
            if not r.success:
                r.cls = "U"
            elif any(b > self.eps and c <= self.eps for b, c in zip(r.norms_before, r.norms_after)):
                r.cls = "S_eps"
            elif om is None or r.norm_s >= 0.25 * om:
                r.cls = "S_s"
            else:
                r.cls = "S_heart"
        return [r.cls for r in self.records]

    def counts(self):
        self.classify()
        out = {"S": 0, "U": 0, "S_eps": 0, "S_s": 0, "S_heart": 0}
        for r in self.records:
            if r.success:
                out["S"] += 1
                out[r.cls] += 1
            else:
                out["U"] += 1
        return out

    # laws ---------------------------------------------------------------

    def laws(self):
        """Return ``{law: [violation messages]}``; empty lists mean the law holds."""
        self.classify()
        out = {"seps_bound": [], "counting": [], "decrease": [], "mdecr": [],
               "sigma_bound": [], "upcond_replay": [], "dim_monotone": [],
               "evaluations": [], "forbidden_interval": []}
        n_seps = sum(r.cls == "S_eps" for r in self.records)
        if n_seps > self.n_hard:
            out["seps_bound"].append(f"|S_eps|={n_seps} > |H|={self.n_hard}")
        ka, kb = self.kappa_a, self.kappa_b
        succ = 0
        for r in self.records:
            succ += r.success
            if r.k > ka * succ + kb + LAW_SLACK:
                out["counting"].append(f"k={r.k} > {ka:.4g}*{succ} + {kb:.4g}")
            if r.success and r.f_before - r.f < self.eta * r.dT - LAW_SLACK * max(1.0, abs(r.f)):
                out["decrease"].append(f"k={r.k}: decrease {r.f_before - r.f:.6g} < eta*dT")
            low = (self.sigma_min * self.varsigma ** (self.p + 1) / factorial(self.p + 1)
                   * r.norm_s ** (self.p + 1))
            if not r.dT >= low * (1 - 1e-12):
                out["mdecr"].append(f"k={r.k}: dT={r.dT:.6g} < {low:.6g}")
            for i, L in enumerate(self.lipschitz):
                if L is None:
                    continue
                cap = self.gamma2 * max(L, self.sigma0[i])
                if r.sigma_after[i] > cap * (1 + 1e-12):
                    out["sigma_bound"].append(f"k={r.k}: sigma[{i}]={r.sigma_after[i]:.6g} > {cap:.6g}")
            for i in range(self.n_smooth):
                tol = self.upcond_rtol * (abs(r.df_elem[i]) + abs(r.dm_elem[i]) + 1e-300)
                up = r.dm_elem[i] - r.df_elem[i] > tol
                if up != r.upcond[i]:
                    out["upcond_replay"].append(f"k={r.k}: up-cond replay mismatch for element {i}")
                increased = r.sigma_after[i] > r.sigma_before[i]
                if increased != up:
                    out["upcond_replay"].append(f"k={r.k}: sigma[{i}] increase {increased} but up-cond {up}")
            om = self.omega
            if om is not None and r.exit == "ModelCritical":
                for b, c in zip(r.norms_before, r.norms_after):
                    if b < om and self.eps < c < om:
                        out["forbidden_interval"].append(
                            f"k={r.k}: residual {b:.3g} -> {c:.3g} inside ({self.eps:.3g}, {om:.3g})")
        if any(d2 > d1 for d1, d2 in zip(self.dims, self.dims[1:])):
            out["dim_monotone"].append(f"dimension sequence increased: {self.dims}")
        # one extra evaluation per (rare) snap of a residual fixed at a nonzero value
        budget = len(self.records) + 1 + len(self.snaps)
        if len(self.snaps) > self.n_hard:
            out["evaluations"].append(f"{len(self.snaps)} snap evaluations > |H|={self.n_hard}")
        if self.evals_f > budget:
            out["evaluations"].append(f"objective evaluations {self.evals_f} > {budget}")
        if self.evals_der > budget:
            out["evaluations"].append(f"derivative evaluations {self.evals_der} > {budget}")
        for sn in self.snaps:
            if sn["accepted"] and sn["f_after"] > sn["f_before"]:
                out["decrease"].append(f"snap at k={sn['k']} increased f")
        return out

    def violations(self):
        return [m for msgs in self.laws().values() for m in msgs]

    # output -------------------------------------------------------------

    def diagnostics(self):
        om = self.omega
        out = {"omega": om, "alpha": self.alpha, "kappa_N": self.kappa_n,
               "sigma_max": self.sigma_max, "kappa_a": self.kappa_a, "kappa_b": self.kappa_b,
               "varsigma": self.varsigma, "L_alpha": self.lipschitz_alpha(),
               "kappa_heart": self.kappa_heart(), "kappa_S": self.kappa_s(),
               "snaps": len(self.snaps)}
        out.update(self.counts())
        return out

    def jsonl(self):
        self.classify()
        return "\n".join(json.dumps(r.log_entry()) for r in self.records)

    def to_dict(self):
        self.classify()
        return {"records": [asdict(r) for r in self.records], "diagnostics": self.diagnostics()}
