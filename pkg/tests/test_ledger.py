from math import log

import pytest

from psarp.harness import gen_group_lasso, gen_nonconvex
from psarp.ledger import IterationRecord, Ledger, compute_omega
from psarp.solver import SolverConfig, solve

pytestmark = pytest.mark.no_ledger_check


def make_ledger(n_hard=1, lipschitz=(0.0,), **kw):
    args = dict(eps=1e-3, p=3, q=1, n_smooth=1, n_hard=n_hard, a=0.5, lam=1.0, gamma0=0.5,
                gamma1=2.0, gamma2=4.0, eta=0.1, theta=0.5, sigma_min=1e-8, sigma0=[1.0],
                varsigma=1.0, lipschitz=list(lipschitz), upcond_rtol=1e-12)
    args.update(kw)
    return Ledger(**args)


def record(k, success=True, norm_s=0.1, dT=1.0, df=0.5, f_before=10.0, f=None, before=(1.0,),
           after=(1.0,), exit="LongStep", sigma=(1.0, 1.0), df_e=(0.5,), dm_e=(0.4,), up=(False,)):
    f = f_before - df if f is None else f
    return IterationRecord(k, success, df / dT, norm_s, f, 1.0, max(sigma[1], 0.0), [], exit, dT, df,
                           [sigma[0]], [sigma[1]], list(up), list(df_e), list(dm_e), list(before),
                           list(after), 4, [], 3, f_before)


def test_compute_omega_matches_hand_value():
    assert compute_omega(0.5, 1, 1.0, 1.0, 3, 1) == pytest.approx(0.00127551, rel=1e-5)


def test_kappa_constants():
    led = make_ledger()
    assert led.kappa_a == pytest.approx(1 + log(2) / log(2))
    assert led.sigma_max == 4.0
    assert led.kappa_b == pytest.approx(log(4.0 / 1e-8) / log(2))


def test_clean_ledger_has_no_violations():
    led = make_ledger()
    led.records = [record(0), record(1, after=(1e-4,)), record(2, before=(0.0,), after=(0.0,))]
    led.dims = [4, 4, 3]
    led.evals_f = led.evals_der = 4
    assert led.violations() == []
    assert led.classify() == ["S_s", "S_eps", "S_s"]
    assert led.counts() == {"S": 3, "U": 0, "S_eps": 1, "S_s": 2, "S_heart": 0}


def test_seps_bound_violation():
    led = make_ledger()
    led.records = [record(0, after=(1e-4,)), record(1, after=(1e-4,))]
    assert led.laws()["seps_bound"]


def test_counting_violation():
    led = make_ledger(sigma0=[1.0], sigma_min=0.5, gamma2=2.0)
    led.records = [record(k, success=False, df=-1.0, sigma=(1.0, 1.0)) for k in range(10)]
    assert led.laws()["counting"]


def test_decrease_and_mdecr_violations():
    led = make_ledger()
    led.records = [record(0, df=0.5, f=9.99), record(1, dT=1e-12, df=1e-12, norm_s=10.0)]
    laws = led.laws()
    assert laws["decrease"] and laws["mdecr"]


def test_sigma_bound_and_upcond_replay():
    led = make_ledger(lipschitz=(0.5,))
    led.records = [record(0, sigma=(1.0, 5.0), df_e=(0.5,), dm_e=(0.4,), up=(False,))]
    laws = led.laws()
    assert laws["sigma_bound"]
    assert any("increase True but up-cond False" in m for m in laws["upcond_replay"])


def test_dimension_and_evaluation_laws():
    led = make_ledger()
    led.records = [record(0)]
    led.dims = [3, 4]
    led.evals_f = 5
    laws = led.laws()
    assert laws["dim_monotone"] and laws["evaluations"]


def test_forbidden_interval_detection():
    led = make_ledger(n_hard=1)
    om = led.omega
    assert om is not None and om > led.eps
    mid = 0.5 * (led.eps + om)
    led.records = [record(0, before=(0.9 * om,), after=(mid,), exit="ModelCritical")]
    assert led.laws()["forbidden_interval"]
    led.records = [record(0, before=(0.9 * om,), after=(mid,), exit="LongStep")]
    assert not led.laws()["forbidden_interval"]


def test_omega_none_without_hard_elements():
    led = make_ledger(n_hard=0)
    assert led.omega is None and led.alpha is None
    led.records = [record(0, norm_s=1e-9, before=(), after=())]
    assert led.classify() == ["S_s"]


def test_lipschitz_alpha_uses_induced_norm():
    led = make_ledger()
    led.kappa_n = 1.0
    alpha = led.alpha
    # order-4 form of ||r||^0.5: induced norm exceeds the radial value |pi(a-4)| alpha^(a-4)
    radial = 0.5 * 0.5 * 1.5 * 2.5 * alpha ** -3.5
    assert led.lipschitz_alpha() > radial


@pytest.mark.parametrize("gen, eps", [(gen_group_lasso, 1e-3), (gen_nonconvex, 1e-2)])
def test_real_runs_satisfy_laws(gen, eps):
    rep = solve(gen(seed=7), SolverConfig(eps=eps))
    assert rep.ledger.violations() == []
    diag = rep.ledger.diagnostics()
    for key in ("omega", "alpha", "kappa_N", "sigma_max", "kappa_a", "kappa_b", "L_alpha",
                "kappa_heart", "kappa_S"):
        assert diag[key] is not None and diag[key] > 0
    assert diag["S"] + diag["U"] == rep.iterations
    d = rep.ledger.to_dict()
    assert len(d["records"]) == rep.iterations
