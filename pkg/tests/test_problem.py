import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psarp import feasible as fs
from psarp.criticality import classify
from psarp.errors import DomainError, InvalidProblemError, RankDeficiencyError, SingularityError
from psarp.harness import gen_group_lasso
from psarp.problem import (EvalCounter, HardElement, Problem, QuadraticElement,
                           QuarticWellElement)


def sel(idx, n):
    U = np.zeros((len(idx), n))
    U[np.arange(len(idx)), idx] = 1.0
    return U


def lasso(n=4, lo=-1.0, hi=1.0):
    smooth = [QuadraticElement(np.eye(n), np.eye(n), np.ones(n))]
    hard = [HardElement(sel([0, 1], n), np.zeros(2)), HardElement(sel([2, 3], n), np.zeros(2))]
    return Problem(n, smooth, hard, fs.Box(np.full(n, lo), np.full(n, hi)), 0.5)


def test_validate_group_lasso_is_clean():
    assert lasso().validate() == []
    assert gen_group_lasso(seed=3).validate() == []


def test_validate_shared_coordinate():
    prob = lasso()
    prob.hard[1] = HardElement(sel([1, 2], 4), np.zeros(2))
    bad = prob.validate()
    assert any("hard[0], hard[1]" in v and "orthogonal" in v for v in bad)


def test_validate_zero_column():
    U = np.eye(3)[:2]
    prob = Problem(3, [QuadraticElement(U, np.eye(2), np.zeros(2))], [], fs.WholeSpace(3))
    assert any("span" in v for v in prob.validate())


def test_validate_reports_each_assumption():
    n = 2
    smooth = [QuadraticElement(2 * np.eye(n), np.eye(n), np.zeros(n))]
    hard = [HardElement(np.array([[1.0, 1.0]]), [0.0], a=1.5),
            HardElement(sel([0], n), [5.0])]
    prob = Problem(n, smooth, hard, fs.Box(np.full(n, -1.0), np.full(n, 1.0)), -1.0, x0=[3.0, 0.0])
    text = "\n".join(prob.validate())
    for key in ("lambda", "||U||", "exponent", "not orthonormal", "b is not in U F", "x0"):
        assert key in text
    with pytest.raises(InvalidProblemError):
        prob.check()


def test_hard_element_shape_mismatch():
    with pytest.raises(DomainError):
        HardElement(np.eye(2), np.zeros(3))


def test_sigma_identity():
    assert lasso().sigma_equiv_constant() == pytest.approx(1.0, abs=1e-14)


def test_sigma_two_identities():
    n = 3
    el = QuadraticElement(np.eye(n), np.eye(n), np.zeros(n))
    prob = Problem(n, [el, el], [])
    assert prob.sigma_equiv_constant() == pytest.approx(1.0, abs=1e-14)


def test_sigma_random_partition_is_certified(rng):
    n = 6
    perm = rng.permutation(n)
    parts = [perm[:1], perm[1:3], perm[3:]]
    smooth = []
    for p in parts:
        R, _ = np.linalg.qr(rng.standard_normal((len(p), len(p))))
        smooth.append(QuadraticElement(R @ sel(p, n), np.eye(len(p)), np.zeros(len(p))))
    prob = Problem(n, smooth, [])
    c = prob.sigma_equiv_constant()
    S = rng.standard_normal((10_000, n))
    ratio = sum(np.linalg.norm(S @ el.U.T, axis=1) for el in smooth) / np.linalg.norm(S, axis=1)
    assert c > 0 and ratio.min() >= c


def test_sigma_rank_deficient():
    prob = Problem(3, [QuadraticElement(np.eye(3)[:2], np.eye(2), np.zeros(2))], [])
    with pytest.raises(RankDeficiencyError):
        prob.sigma_equiv_constant()
    with pytest.raises(RankDeficiencyError):
        Problem(2, [], [HardElement(np.eye(2), np.zeros(2))]).sigma_equiv_constant()


def test_evaluate_quadratic_only():
    prob = Problem(2, [QuadraticElement(np.eye(2), np.sqrt(2) * np.eye(2), np.zeros(2))], [])
    assert prob.evaluate_f(np.zeros(2)) == 0.0
    assert prob.evaluate_f(np.array([1.0, 2.0])) == pytest.approx(5.0)


def test_evaluate_single_hard_element():
    prob = Problem(1, [], [HardElement(np.eye(1), [0.0], 0.5)])
    assert prob.evaluate_f(np.array([4.0]), hard=[0]) == pytest.approx(2.0, abs=1e-15)


def test_evaluate_group_lasso_matches_direct_formula(rng):
    prob = gen_group_lasso(groups=4, gsize=3, lam=0.7, seed=11)
    H, y = prob.smooth[0].H, prob.smooth[0].B
    for _ in range(20):
        x = rng.uniform(-2, 2, prob.n)
        direct = 0.5 * np.sum((H @ x - y) ** 2) + 0.7 * sum(
            np.linalg.norm(x[3 * g:3 * g + 3]) ** 0.5 for g in range(4))
        assert prob.evaluate_f(x) == pytest.approx(direct, rel=1e-13)


def test_evaluate_singular_working_set():
    prob = lasso()
    x = np.array([0.0, 0.0, 0.5, 0.5])
    with pytest.raises(SingularityError):
        prob.evaluate_f(x, hard=[0, 1])
    assert prob.evaluate_f(x, hard=[1]) == prob.evaluate_f(x)
    # the full objective accepts zero residuals
    assert np.isfinite(prob.evaluate_f(x))


def test_counter_increments_once_per_call():
    prob = lasso()
    c = EvalCounter()
    for k in range(1, 4):
        prob.evaluate_f(np.full(4, 0.3), counter=c)
        assert c.f == k
    assert c.der == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1e-1, 1e-2, 1e-3]))
def test_reduced_objective_sandwich(seed, eps):
    rng = np.random.default_rng(seed)
    prob = gen_group_lasso(groups=4, gsize=2, lam=0.5, seed=seed % 50)
    x = rng.uniform(-1, 1, prob.n)
    # push some groups into the near-singular set
    for g in range(4):
        if rng.random() < 0.5:
            x[2 * g:2 * g + 2] *= eps * rng.uniform(0, 1) / np.linalg.norm(x[2 * g:2 * g + 2])
    cls = classify(prob, x, eps)
    d = cls.Q @ rng.normal(0, 0.3, cls.dim)
    y = x + d
    fW = prob.evaluate_f(y, hard=[i for i in cls.A if np.linalg.norm(prob.hard[i].residual(y)) > 0])
    f = prob.evaluate_f(y)
    assert fW <= f + 1e-12
    assert f <= fW + eps ** 0.5 * len(prob.hard) + 1e-12


def test_json_roundtrip():
    prob = gen_group_lasso(groups=3, gsize=2, seed=4)
    prob.smooth.append(QuarticWellElement(np.eye(prob.n)[:2], c=0.3))
    doc = json.loads(json.dumps(prob.to_json()))
    back = Problem.from_json(doc)
    assert back.validate() == []
    x = np.linspace(-1, 1, prob.n)
    assert back.evaluate_f(x) == pytest.approx(prob.evaluate_f(x), rel=1e-15)
    assert np.array_equal(back.x0, prob.x0)
    assert back.to_json() == doc


@pytest.mark.parametrize("doc", [
    {"n": 1, "elements": [{"kind": "mystery", "U": [[1.0]]}]},
    {"n": 1, "elements": [{"kind": "smooth", "U": [[1.0]], "oracle": "sine"}]},
])
def test_from_json_rejects_unknown(doc):
    with pytest.raises(DomainError):
        Problem.from_json(doc)


@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_quartic_well_derivatives_match_fd(j, rng):
    from psarp.tensor_calc import finite_difference_oracle
    el = QuarticWellElement(np.eye(3), c=0.7)
    y = rng.standard_normal(3)
    dirs = rng.standard_normal((j, 3))
    est, _ = finite_difference_oracle(el.value, y, j, dirs, (1e-2, 5e-3))
    assert el.derivative(y, j, dirs) == pytest.approx(est, rel=1e-6, abs=1e-7)
    assert el.derivative(y, 5, rng.standard_normal((5, 3))) == 0.0
