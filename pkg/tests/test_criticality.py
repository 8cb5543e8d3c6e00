import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psarp import criticality as crit
from psarp import feasible as fs
from psarp.checks import closed_form_q1, grid_minimum, grid_oracle, random_measure_instance
from psarp.errors import DomainError, UnsupportedOrderError
from psarp.model import FullModel
from psarp.problem import HardElement, Problem, QuadraticElement


def sel(idx, n):
    U = np.zeros((len(idx), n))
    U[np.arange(len(idx)), idx] = 1.0
    return U


def quad_problem(H, B, hard=(), feas=None, lam=1.0):
    n = H.shape[1]
    return Problem(n, [QuadraticElement(np.eye(n), H, B)], list(hard), feas, lam)


@pytest.mark.parametrize("q, delta, expected", [(1, 1.0, 1.0), (2, 1.0, 1.5), (2, 0.5, 0.625)])
def test_chi_examples(q, delta, expected):
    assert crit.chi(q, delta) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("q, delta", [(0, 1.0), (1.5, 1.0), (1, 0.0), (1, 1.5)])
def test_chi_domain(q, delta):
    with pytest.raises(DomainError):
        crit.chi(q, delta)


def test_classify_no_hard():
    prob = quad_problem(np.eye(3), np.zeros(3))
    cls = crit.classify(prob, np.ones(3), 1e-3)
    assert cls.C == [] and cls.A == []
    assert np.array_equal(cls.Q, np.eye(3))


def test_classify_selector_kernel():
    n = 5
    hard = [HardElement(sel([0, 1], n), np.zeros(2)), HardElement(sel([2, 3], n), np.zeros(2))]
    prob = quad_problem(np.eye(n), np.zeros(n), hard)
    x = np.array([1e-4, 0.0, 1.0, 1.0, 1.0])
    cls = crit.classify(prob, x, 1e-3)
    assert cls.C == [0] and cls.A == [1]
    assert list(cls.free) == [2, 3, 4]
    P = cls.Q @ cls.Q.T
    assert np.allclose(P, np.diag([0, 0, 1, 1, 1.0]))
    assert cls.W == [("smooth", 0), ("hard", 1)]


def test_classify_boundary_goes_to_c():
    prob = quad_problem(np.eye(2), np.zeros(2), [HardElement(sel([0], 2), [0.0])])
    cls = crit.classify(prob, np.array([0.25, 1.0]), 0.25)
    assert cls.C == [0]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_classify_partition_and_kernel(seed):
    rng = np.random.default_rng(seed)
    n = 6
    R, _ = np.linalg.qr(rng.standard_normal((n, n)))
    hard = [HardElement(R[:2], np.zeros(2)), HardElement(R[2:3], np.zeros(1)), HardElement(R[3:5], np.zeros(2))]
    prob = quad_problem(np.eye(n), np.zeros(n), hard)
    x = R.T @ (rng.standard_normal(n) * rng.choice([1e-4, 1.0], n))
    cls = crit.classify(prob, x, 1e-2)
    assert sorted(cls.C + cls.A) == [0, 1, 2] and not set(cls.C) & set(cls.A)
    for i in cls.C:
        assert np.max(np.abs(prob.hard[i].U @ cls.Q)) <= 1e-10
    assert np.allclose(cls.Q.T @ cls.Q, np.eye(cls.dim), atol=1e-10)
    assert cls.dim == n - sum(prob.hard[i].size for i in cls.C)


def test_subspace_nesting(rng):
    n = 6
    R, _ = np.linalg.qr(rng.standard_normal((n, n)))
    hard = [HardElement(R[:2], np.zeros(2)), HardElement(R[2:4], np.zeros(2))]
    prob = quad_problem(np.eye(n), np.zeros(n), hard)
    x = R.T @ np.array([1e-3, 0, 5e-2, 0, 1, 1])
    c1 = crit.classify(prob, x, 1e-2)
    c2 = crit.classify(prob, x, 1e-1)
    assert set(c1.C) <= set(c2.C)
    P1, P2 = c1.Q @ c1.Q.T, c2.Q @ c2.Q.T
    # range(Q2) inside range(Q1)
    assert np.allclose(P1 @ P2, P2, atol=1e-10)


def test_psi_linear_unit_ball():
    prob = quad_problem(np.eye(2), np.array([-3.0, -4.0]))
    res = crit.psi_measure(prob, np.zeros(2), 1e-3, 1.0, 1)
    assert res.value == pytest.approx(5.0, abs=1e-12)
    assert np.allclose(res.d, [-0.6, -0.8])


@pytest.mark.parametrize("q", [1, 2])
def test_psi_zero_at_minimizer(q, rng):
    A = rng.standard_normal((4, 4)) + 3 * np.eye(4)
    xs = rng.standard_normal(4)
    prob = quad_problem(A, A @ xs)
    assert crit.psi_measure(prob, xs, 1e-3, 1.0, q).value == pytest.approx(0.0, abs=1e-9)


def test_psi_closed_form_q1():
    assert closed_form_q1().passed


def test_psi_grid_oracle():
    assert grid_oracle().passed


def test_psi_counts_frozen_contribution():
    prob = quad_problem(np.eye(2), np.zeros(2), [HardElement(sel([0], 2), [0.0])], lam=2.0)
    x = np.array([1e-4, 0.0])
    res = crit.psi_measure(prob, x, 1e-3, 1.0, 1)
    # gradient of the smooth part in R = span(e2) is zero
    assert res.value == pytest.approx(2.0 * 1e-4 ** 0.5, rel=1e-12)


def test_psi_rejects_high_order():
    prob = quad_problem(np.eye(2), np.zeros(2))
    with pytest.raises(UnsupportedOrderError):
        crit.psi_measure(prob, np.zeros(2), 1e-3, 1.0, 3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2]), st.booleans())
def test_psi_nonnegative_and_monotone_in_delta(seed, q, box):
    rng = np.random.default_rng(seed)
    prob, x = random_measure_instance(rng, 5, 2, box=box)
    d1, d2 = sorted(rng.uniform(0.05, 1.0, 2))
    v1 = crit.psi_measure(prob, x, 1e-3, d1, q).value
    v2 = crit.psi_measure(prob, x, 1e-3, d2, q).value
    assert v1 >= -1e-12
    assert v1 <= v2 + 1e-7


def test_grid_minimum_linear_ball():
    g = np.array([3.0, 4.0])
    v = grid_minimum(g, None, np.eye(2), np.zeros(2), 1.0, fs.WholeSpace(2), points=10_000)
    assert v == pytest.approx(-5.0, abs=1e-4)


def test_psi_model_at_zero_matches_model_taylor():
    rng = np.random.default_rng(8)
    prob, x = random_measure_instance(rng, 5, 2)
    cls = crit.classify(prob, x, 1e-3)
    model = FullModel(prob, x, np.ones(1), 3, cls.A)
    res = crit.psi_model_measure(model, x, np.zeros(5), 1e-3, 1.0, 1, (cls.Q, cls.free))
    ref = crit.psi_measure(prob, x, 1e-3, 1.0, 1, cls)
    frozen = prob.lam * sum(np.linalg.norm(prob.hard[i].residual(x)) ** prob.hard[i].a for i in cls.C)
    assert res.value == pytest.approx(ref.value - frozen, rel=1e-12)


def test_psi_model_zero_gradient():
    prob = quad_problem(np.eye(2), np.array([1.0, 2.0]))
    model = FullModel(prob, np.array([1.0, 2.0]), [1.0], 3, [])
    assert crit.psi_model_measure(model, model.x, np.zeros(2), 1e-3, 1.0, 1).value == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("q", [1, 2])
@pytest.mark.parametrize("seed", range(3))
def test_psi_model_grid_oracle(q, seed):
    rng = np.random.default_rng(40 + seed)
    prob, x = random_measure_instance(rng, 3, 2, box=True)
    cls = crit.classify(prob, x, 1e-3)
    model = FullModel(prob, x, np.ones(1), 3, cls.A)
    s = cls.Q @ rng.normal(0, 0.05, cls.dim)
    s = np.clip(x + s, -1, 1) - x
    res = crit.psi_model_measure(model, x, s, 1e-3, 0.7, q, (cls.Q, cls.free))
    H = model.hessian(s) if q == 2 else None
    grid = grid_minimum(model.gradient(s), H, cls.Q, x + s, 0.7, prob.feasible)
    assert res.value == pytest.approx(-grid, abs=1e-4)
