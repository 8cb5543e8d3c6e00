from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psarp import kernels
from psarp.checks import concavity, overestimation
from psarp.errors import DomainError, SingularityError
from psarp.harness import gen_group_lasso, gen_nonconvex
from psarp.model import (FullModel, MuModel, hard_model_value, mu_derivative, mu_value,
                         smooth_model_value)
from psarp.problem import HardElement, Problem, QuadraticElement, QuarticWellElement
from psarp.tensor_calc import normpow_derivative, pi_factor

# term-by-term sum 1 - 1/4 - 1/32 - 1/128, computed with exact fractions
MU_P3_HALF = 0.7109375


def test_mu_value_examples():
    assert mu_value(MuModel(1.0, 0.5, 3), 0.0) == 1.0
    assert mu_value(MuModel(1.0, 0.5, 1), -0.5) == pytest.approx(0.75, abs=1e-15)
    assert mu_value(MuModel(1.0, 0.5, 3), -0.5) == pytest.approx(MU_P3_HALF, abs=1e-15)


def test_mu_value_oracle_fraction():
    from fractions import Fraction
    a, z = Fraction(1, 2), Fraction(-1, 2)
    total, pi = Fraction(1), Fraction(1)
    for ell in range(1, 4):
        pi *= a - ell + 1
        total += pi / factorial(ell) * z ** ell
    assert float(total) == MU_P3_HALF


def test_mu_value_domain():
    m = MuModel(1.0, 0.5, 3)
    mu_value(m, -1.0 - 1e-13)
    with pytest.raises(DomainError):
        mu_value(m, -1.01)
    with pytest.raises(SingularityError):
        MuModel(0.0, 0.5, 3)
    with pytest.raises(DomainError):
        MuModel(1.0, 1.5, 3)


@given(st.floats(0.05, 5.0), st.floats(0.05, 0.95), st.sampled_from([1, 2, 3]))
def test_mu_coefficients(rho, a, p):
    m = MuModel(rho, a, p)
    c = m.coef
    assert c[0] == pytest.approx(rho ** a, rel=1e-14)
    for ell in range(1, p + 1):
        assert c[ell] == pytest.approx(pi_factor(a, ell) / factorial(ell) * rho ** (a - ell), rel=1e-12)
        assert np.sign(c[ell]) == (-1) ** (ell - 1)


def test_mu_derivative_examples():
    m = MuModel(1.0, 0.5, 3)
    assert mu_derivative(m, 0.0, 1) == pytest.approx(0.5, abs=1e-15)
    assert mu_derivative(m, 0.0, 2) == pytest.approx(-0.25, abs=1e-15)
    m2 = MuModel(2.3, 0.3, 3)
    assert mu_derivative(m2, 0.0, 1) == pytest.approx(0.3 * 2.3 ** -0.7, rel=1e-14)
    with pytest.raises(DomainError):
        mu_derivative(m, 0.0, 4)


@settings(max_examples=100)
@given(st.floats(0.05, 5.0), st.floats(0.05, 0.95), st.floats(0.0, 1.0))
def test_mu_derivative_odd_even_bounds(rho, a, frac):
    m = MuModel(rho, a, 3)
    z = -frac * rho
    for ell in (1, 3):
        assert mu_derivative(m, z, ell) >= mu_derivative(m, 0.0, ell) - 1e-12 * abs(mu_derivative(m, 0.0, ell))
    assert mu_derivative(m, z, 2) <= mu_derivative(m, 0.0, 2) + 1e-12
    assert mu_derivative(m, 0.0, 2) == pytest.approx(a * (a - 1) * rho ** (a - 2), rel=1e-12)


@settings(max_examples=50)
@given(st.floats(0.1, 3.0), st.integers(0, 2**31 - 1))
def test_mu_lipschitz_on_segment(rho_min, seed):
    rng = np.random.default_rng(seed)
    rho = rho_min * rng.uniform(1, 3)
    m = MuModel(rho, 0.5, 3)
    c = m.coef
    K = sum(ell * abs(c[ell]) * rho ** (ell - 1) for ell in range(1, 4))
    z1, z2 = rng.uniform(-rho, 0, 2)
    assert abs(mu_value(m, z1) - mu_value(m, z2)) <= K * abs(z1 - z2) + 1e-14


def test_overestimation_property():
    assert all(res.passed for res in overestimation())


def test_concavity_property():
    assert concavity().passed


def test_hard_model_at_zero_step():
    el = HardElement(np.eye(3)[:2], [0.5, -1.0], 0.4)
    x = np.array([1.0, 2.0, 3.0])
    assert hard_model_value(el, x, np.zeros(3), 3) == pytest.approx(np.linalg.norm(el.residual(x)) ** 0.4,
                                                                    rel=1e-15)


def test_hard_model_two_sided_one_dimensional():
    el = HardElement(np.eye(1), [0.0], 0.5)
    val = hard_model_value(el, np.array([1.0]), np.array([-1.5]), 3)
    # r + s = -0.5 has norm 0.5, so zeta = -0.5 regardless of the sign flip
    assert val == pytest.approx(MU_P3_HALF, abs=1e-15)
    assert hard_model_value(el, np.array([1.0]), np.array([-0.5]), 3) == pytest.approx(val, abs=1e-15)


def test_hard_model_singular():
    el = HardElement(np.eye(2), [1.0, 1.0], 0.5)
    with pytest.raises(SingularityError):
        hard_model_value(el, np.array([1.0, 1.0]), np.zeros(2), 3)


def test_hard_model_rotation_invariant(rng):
    el = HardElement(np.eye(3), np.zeros(3), 0.5)
    x = rng.standard_normal(3)
    s = rng.standard_normal(3)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    s2 = Q @ (x + s) - x
    assert hard_model_value(el, x, s2, 3) == pytest.approx(hard_model_value(el, x, s, 3), rel=1e-13)


def plane_rotation(u, w):
    """Rotation in span(u, w) taking the unit vector u to the unit vector w."""
    c = float(u @ w)
    v = w - c * u
    nv = np.linalg.norm(v)
    if nv < 1e-15:
        return np.eye(u.size)
    v /= nv
    sn = np.sqrt(max(0.0, 1 - c * c))
    return (np.eye(u.size) + (c - 1) * (np.outer(u, u) + np.outer(v, v))
            + sn * (np.outer(v, u) - np.outer(u, v)))


@pytest.mark.parametrize("p", [1, 3])
@pytest.mark.parametrize("seed", range(10))
def test_hard_model_matches_explicit_rotation(p, seed):
    rng = np.random.default_rng(seed)
    a = 0.5
    r = rng.standard_normal(4)
    s = rng.standard_normal(4) * rng.uniform(0.1, 2)
    rho, new = np.linalg.norm(r), r + s
    R = plane_rotation(r / rho, new / np.linalg.norm(new))
    y = R @ r
    d = new - y
    # Taylor polynomial of ||.||^a around the rotated residual, evaluated along d
    ref = rho ** a + sum(normpow_derivative(y, a, ell, [d] * ell) / factorial(ell) for ell in range(1, p + 1))
    el = HardElement(np.eye(4), np.zeros(4), a)
    assert np.allclose(R @ R.T, np.eye(4), atol=1e-12)
    assert hard_model_value(el, r, s, p) == pytest.approx(ref, abs=1e-10)


def test_smooth_model_examples(rng):
    quad = QuadraticElement(np.eye(2), rng.standard_normal((2, 2)), rng.standard_normal(2))
    x = rng.standard_normal(2)
    s = rng.standard_normal(2)
    assert smooth_model_value(quad, x, np.zeros(2), 1.0, 3) == pytest.approx(quad.value(x), rel=1e-15)
    reg = 2.0 / 24 * np.linalg.norm(s) ** 4
    assert smooth_model_value(quad, x, s, 2.0, 3) == pytest.approx(quad.value(x + s) + reg, rel=1e-12)
    zero = QuadraticElement(np.eye(2), np.zeros((1, 2)), [0.0])
    assert smooth_model_value(zero, x, np.array([0.6, 0.8]), 6.0, 3) == pytest.approx(0.25, abs=1e-15)


def test_quartic_taylor_is_exact_at_degree_four(rng):
    el = QuarticWellElement(np.eye(3), c=0.4)
    y, s = rng.standard_normal((2, 3))
    assert el.taylor(y, 4).value(s) == pytest.approx(el.value(y + s), rel=1e-12)


def test_full_model_at_zero_is_reduced_objective():
    prob = gen_group_lasso(groups=4, gsize=3, seed=2)
    x = prob.x0.copy()
    x[:3] = 0.0
    active = [1, 2, 3]
    model = FullModel(prob, x, np.ones(1), 3, active)
    assert model.value(np.zeros(prob.n)) == pytest.approx(prob.evaluate_f(x, hard=active), rel=1e-14)
    assert abs(model.increment(np.zeros(prob.n))) <= 1e-15


def test_full_model_without_hard_is_ar_model(rng):
    H = rng.standard_normal((3, 3))
    B = rng.standard_normal(3)
    prob = Problem(3, [QuadraticElement(np.eye(3), H, B)], [])
    x, s = rng.standard_normal((2, 3))
    model = FullModel(prob, x, [2.0], 3, [])
    ar = 0.5 * np.sum((H @ (x + s) - B) ** 2) + 2.0 / 24 * np.linalg.norm(s) ** 4
    assert model.value(s) == pytest.approx(ar, rel=1e-12)


@pytest.mark.parametrize("p", [1, 3])
@pytest.mark.parametrize("seed", range(6))
def test_full_model_gradient_and_hessian_fd(p, seed):
    rng = np.random.default_rng(seed)
    prob = gen_nonconvex(groups=3, gsize=2, seed=seed)
    x = rng.uniform(-1, 1, prob.n)
    model = FullModel(prob, x, rng.uniform(0.5, 3, len(prob.smooth)), p, [0, 1, 2])
    s = rng.normal(0, 0.1, prob.n)
    g = model.gradient(s)
    h = 1e-6
    E = np.eye(prob.n)
    fd = np.array([(model.increment(s + h * e) - model.increment(s - h * e)) / (2 * h) for e in E])
    assert np.linalg.norm(fd - g) <= 1e-6 * max(1.0, np.linalg.norm(g))
    Hm = model.hessian(s)
    fdH = np.array([(model.gradient(s + h * e) - model.gradient(s - h * e)) / (2 * h) for e in E])
    assert np.allclose(Hm, Hm.T, atol=1e-10)
    assert np.linalg.norm(fdH - Hm) <= 1e-5 * max(1.0, np.linalg.norm(Hm))


def test_full_model_freeze_and_unfreeze():
    prob = gen_group_lasso(groups=3, gsize=2, seed=5)
    x = prob.x0
    model = FullModel(prob, x, np.ones(1), 3, [0, 1, 2])
    s = np.zeros(prob.n)
    s[:2] = -x[:2]
    model.freeze(0)
    lam = prob.lam
    rho0 = np.linalg.norm(x[:2])
    # frozen at zero norm: constant lam * (mu(rho, -rho) - rho^a)
    expect = lam * (mu_value(MuModel(rho0, 0.5, 3), -rho0) - rho0 ** 0.5)
    assert model.hard_increments(s)[0] == pytest.approx(expect, rel=1e-13)
    before = model.increment(s)
    model.unfreeze(0)
    assert model.frozen_groups() == []
    with pytest.raises(SingularityError):
        model.increment(s)
    model.freeze(0)
    assert model.increment(s) == pytest.approx(before, rel=1e-14)


@pytest.mark.skipif(len(kernels.backends()) < 2, reason="compiled backend not built")
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_backend_parity_hard_groups(groups, size, seed):
    rng = np.random.default_rng(seed)
    p = 3
    v = rng.standard_normal(groups * size)
    offsets = np.arange(0, groups * size + 1, size, dtype=np.intp)
    rho = rng.uniform(0.2, 2.0, groups)
    py, cy = kernels.backends()["python"], kernels.backends()["cython"]
    out = []
    for mod in (py, cy):
        coef = np.zeros((groups, p + 1))
        for g in range(groups):
            mod.mu_coefficients(float(rho[g]), 0.5, p, coef[g])
        coef[:, 0] = 0.0
        mask = (rng.random(groups) < 0.8).astype(np.uint8) if mod is py else mask
        scale, norm = np.empty(groups), np.empty(groups)
        tot = mod.hard_groups(v, offsets, rho, coef, np.full(groups, 0.5), mask, scale, norm)
        out.append((tot, scale[mask.astype(bool)].copy(), coef.copy()))
    assert out[1][0] == pytest.approx(out[0][0], rel=1e-12, abs=1e-14)
    assert np.allclose(out[1][1], out[0][1], rtol=1e-12, atol=1e-14)
    assert np.allclose(out[1][2], out[0][2], rtol=1e-13)
    z = float(rng.uniform(-1, 1))
    assert np.allclose(cy.poly_eval(out[0][2][0], z), py.poly_eval(out[0][2][0], z), rtol=1e-12, atol=1e-14)
