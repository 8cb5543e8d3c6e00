"""Isotropic models of hard elements and the full regularized model.

A hard element ``||r + U s||**a`` is modelled by the one-dimensional
Taylor polynomial of ``t -> t**a`` around ``rho = ||r||``, evaluated at
``zeta = ||r + U s|| - rho``. For odd ``p`` this overestimates the element
and is concave on ``[-rho, 0]``. Smooth elements use their degree-p Taylor
polynomial plus ``sigma / (p+1)! ||U s||**(p+1)``.
"""
from dataclasses import dataclass
from math import factorial

import numpy as np

from . import kernels
from .errors import DomainError, SingularityError
from .tensor_calc import SINGULAR_TOL, pi_factor

ZETA_SLACK = 1e-12


@dataclass(frozen=True)
class MuModel:
    """One-dimensional isotropic model at base radius ``rho``."""

    rho: float
    a: float
    p: int

    def __post_init__(self):
        if not self.rho > 0:
            raise SingularityError("isotropic model needs a nonzero base residual")
        pi_factor(self.a, 1)  # exponent check

    @property
    def coef(self):
        out = np.empty(self.p + 1)
        return kernels.mu_coefficients(float(self.rho), float(self.a), int(self.p), out)


def _check_zeta(model, zeta):
    if zeta < -model.rho - ZETA_SLACK:
        raise DomainError(f"zeta={zeta} below -rho={-model.rho}")


def mu_value(model, zeta):
    """``rho^a + sum_l pi(a-l)/l! zeta^l rho^(a-l)``."""
    _check_zeta(model, zeta)
    return kernels.poly_eval(model.coef, float(zeta))[0]


def mu_derivative(model, zeta, order):
    """``order``-th derivative of the model polynomial in ``zeta``."""
    _check_zeta(model, zeta)
    if order < 1 or order > model.p:
        raise DomainError(f"derivative order {order} outside 1..{model.p}")
    c = model.coef
    out = 0.0
    for ell in range(order, model.p + 1):
        out += c[ell] * factorial(ell) / factorial(ell - order) * zeta ** (ell - order)
    return float(out)


def hard_model_value(element, x, s, p):
    """Isotropic model of ``||U(x+s) - b||**a`` built at ``x``."""
    r = element.residual(x)
    rho = float(np.linalg.norm(r))
    if rho < SINGULAR_TOL:
        raise SingularityError("hard model requested at a zero residual")
    zeta = float(np.linalg.norm(r + element.U @ s)) - rho
    return mu_value(MuModel(rho, element.a, p), zeta)


def smooth_model_value(element, x, s, sigma, p):
    """``T_p(U x; U s) + sigma/(p+1)! ||U s||**(p+1)``."""
    y = element.U @ x
    si = element.U @ s
    return element.taylor(y, p).value(si) + sigma / factorial(p + 1) * float(np.linalg.norm(si)) ** (p + 1)


def reg_value(sigma, nrm, p):
    return sigma / factorial(p + 1) * nrm ** (p + 1)


class FullModel:
    """Model ``m(x, s)`` over the working set ``N`` plus active hard elements.

    Values are handled as increments ``m(x, s) - m(x, 0)`` to avoid
    cancellation; ``m0`` is ``f_W(x)``. Hard groups can be frozen during a
    step computation: their contribution then becomes the constant model
    value at the fixed residual norm (normally zero, i.e. ``mu(rho, -rho)``).

    Parameters
    ----------
    problem : Problem
    x : ndarray
        Expansion point.
    sigma : array_like
        Regularization weights, one per smooth element.
    p : int
        Model degree.
    active : sequence of int
        Indices of hard elements in the model (all must have nonzero residual).
    taylors : list, optional
        Precomputed smooth Taylor expansions at ``x``.
    """

    def __init__(self, problem, x, sigma, p, active, taylors=None):
        self.problem = problem
        self.x = np.asarray(x, dtype=float)
        self.p = int(p)
        self.sigma = np.asarray(sigma, dtype=float).copy()
        self.smooth = problem.smooth
        ys = [el.U @ self.x for el in self.smooth]
        self.taylors = taylors if taylors is not None else [
            el.taylor(y, self.p) for el, y in zip(self.smooth, ys)]
        self.active = list(active)
        hard = [problem.hard[i] for i in self.active]
        self.lam = problem.lam
        n = problem.n
        self.UA = np.vstack([el.U for el in hard]) if hard else np.zeros((0, n))
        self.rA = np.concatenate([el.residual(self.x) for el in hard]) if hard else np.zeros(0)
        sizes = [el.size for el in hard]
        self.offsets = np.zeros(len(hard) + 1, dtype=np.intp)
        self.offsets[1:] = np.cumsum(sizes)
        self.group_of = np.repeat(np.arange(len(hard)), sizes)
        self.rho = np.array([np.linalg.norm(self.rA[self.offsets[g]:self.offsets[g + 1]])
                             for g in range(len(hard))])
        if np.any(self.rho < SINGULAR_TOL):
            raise SingularityError("active hard element with zero residual")
        self.a = np.array([el.a for el in hard])
        self.coef = np.zeros((len(hard), self.p + 1))
        for g in range(len(hard)):
            kernels.mu_coefficients(float(self.rho[g]), float(self.a[g]), self.p, self.coef[g])
        self.coef_inc = self.coef.copy()
        self.coef_inc[:, 0] = 0.0
        self.weight = np.full(len(hard), float(self.lam))
        self.mask = np.ones(len(hard), dtype=np.uint8)
        self.frozen_inc = 0.0
        self.frozen_zeta = np.zeros(len(hard))
        self.m0 = (sum(t.f0 for t in self.taylors)
                   + float(self.lam * np.sum(self.rho ** self.a)))
        self._scale = np.empty(len(hard))
        self._norm = np.empty(len(hard))

    # structure ----------------------------------------------------------

    @property
    def n_groups(self):
        return len(self.active)

    def group_rows(self, g):
        return slice(self.offsets[g], self.offsets[g + 1])

    def freeze(self, g, norm=0.0):
        """Fix group ``g`` at residual norm ``norm`` (constant contribution)."""
        if self.mask[g]:
            self.mask[g] = 0
            self.frozen_zeta[g] = norm - self.rho[g]
            self.frozen_inc += self.weight[g] * kernels.poly_eval(self.coef_inc[g], norm - self.rho[g])[0]

    def unfreeze(self, g):
        """Undo a tentative :meth:`freeze`."""
        if not self.mask[g]:
            self.mask[g] = 1
            self.frozen_inc = sum(self.weight[h] * kernels.poly_eval(self.coef_inc[h], self.frozen_zeta[h])[0]
                                  for h in self.frozen_groups())

    def frozen_groups(self):
        return [g for g in range(self.n_groups) if not self.mask[g]]

    def hard_residuals(self, s):
        return self.rA + self.UA @ s

    def hard_norms(self, s):
        v = self.hard_residuals(s)
        return np.sqrt(np.bincount(self.group_of, v * v, minlength=self.n_groups))

    # evaluation ---------------------------------------------------------

    def _smooth(self, s, grad):
        inc = 0.0
        g = np.zeros_like(s) if grad else None
        pf = factorial(self.p)
        for el, tay, sig in zip(self.smooth, self.taylors, self.sigma):
            y = el.U @ s
            ny = float(np.linalg.norm(y))
            inc += tay.increment(y) + sig / (pf * (self.p + 1)) * ny ** (self.p + 1)
            if grad:
                gy = tay.grad(y) + sig / pf * ny ** (self.p - 1) * y
                g += el.U.T @ gy
        return inc, g

    def _hard(self, s, grad):
        if not self.n_groups:
            return 0.0, (np.zeros_like(s) if grad else None)
        v = self.rA + self.UA @ s
        if np.any(self.mask):
            tot = kernels.hard_groups(v, self.offsets, self.rho, self.coef_inc, self.weight,
                                      self.mask, self._scale, self._norm)
            if np.any(self._norm[self.mask.astype(bool)] < SINGULAR_TOL):
                raise SingularityError("active hard residual reached zero inside the model")
        else:
            tot = 0.0
            self._scale[:] = 0.0
        tot += self.frozen_inc
        g = None
        if grad:
            g = self.UA.T @ (self._scale[self.group_of] * v)
        return tot, g

    def increment(self, s):
        """``m(x, s) - m(x, 0)``."""
        s = np.asarray(s, dtype=float)
        return self._smooth(s, False)[0] + self._hard(s, False)[0]

    def increment_and_grad(self, s):
        s = np.asarray(s, dtype=float)
        i1, g1 = self._smooth(s, True)
        i2, g2 = self._hard(s, True)
        return i1 + i2, g1 + g2

    def value(self, s):
        return self.m0 + self.increment(s)

    def gradient(self, s):
        return self.increment_and_grad(s)[1]

    def hessian(self, s):
        s = np.asarray(s, dtype=float)
        n = s.size
        Hm = np.zeros((n, n))
        pf = factorial(self.p)
        for el, tay, sig in zip(self.smooth, self.taylors, self.sigma):
            y = el.U @ s
            ny = float(np.linalg.norm(y))
            Hy = tay.hess(y)
            if self.p == 1:
                Hy = Hy + sig * np.eye(y.size)
            elif ny > 0:
                Hy = Hy + sig / pf * (ny ** (self.p - 1) * np.eye(y.size)
                                      + (self.p - 1) * ny ** (self.p - 3) * np.outer(y, y))
            Hm += el.U.T @ Hy @ el.U
        v = self.rA + self.UA @ s
        for g in range(self.n_groups):
            if not self.mask[g]:
                continue
            rows = self.group_rows(g)
            vg = v[rows]
            t = float(np.linalg.norm(vg))
            if t < SINGULAR_TOL:
                raise SingularityError("active hard residual reached zero inside the model")
            _, d1, d2 = kernels.poly_eval(self.coef_inc[g], t - self.rho[g])
            u = vg / t
            blk = d2 * np.outer(u, u) + d1 / t * (np.eye(u.size) - np.outer(u, u))
            Ug = self.UA[rows]
            Hm += self.weight[g] * Ug.T @ blk @ Ug
        return Hm

    # per-element pieces -------------------------------------------------

    def smooth_parts(self, s):
        """Per smooth element ``(taylor increment, regularization)`` at ``s``."""
        out = []
        for el, tay, sig in zip(self.smooth, self.taylors, self.sigma):
            y = el.U @ s
            out.append((tay.increment(y), reg_value(sig, float(np.linalg.norm(y)), self.p)))
        return out

    def hard_increments(self, s):
        """Per group ``weight * (model(s) - rho^a)``; frozen groups at their fixed value."""
        norms = self.hard_norms(s)
        out = np.empty(self.n_groups)
        for g in range(self.n_groups):
            zeta = self.frozen_zeta[g] if not self.mask[g] else norms[g] - self.rho[g]
            out[g] = self.weight[g] * kernels.poly_eval(self.coef_inc[g], zeta)[0]
        return out
