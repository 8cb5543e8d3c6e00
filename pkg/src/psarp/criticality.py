"""Classification of hard elements and high-order optimality measures.

At tolerance ``eps`` the hard elements split into the near-singular set
``C`` (``||r_i|| <= eps``) and the active set ``A``. Steps are restricted to
``R = intersection of ker(U_i), i in C``, and criticality is measured by the
decrease ``psi`` of the degree-q Taylor model of ``f_W`` over
``{x + d in F, ||d|| <= delta, d in R}``.
"""
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy.linalg import null_space

from . import feasible as fs
from . import subsolver
from .errors import DomainError, UnsupportedOrderError

KERNEL_RCOND = 1e-12


def chi(q, delta):
    """``sum_{l=1}^q delta^l / l!``.

    >>> chi(2, 0.5)
    0.625
    """
    if int(q) != q or q < 1:
        raise DomainError(f"order q={q} must be a positive integer")
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"radius delta={delta} must lie in (0, 1]")
    return float(sum(delta ** ell / factorial(ell) for ell in range(1, int(q) + 1)))


@dataclass
class Classification:
    """Near-singular (``C``) and active (``A``) hard sets with a basis of ``R``.

    ``free`` lists the coordinate indices spanning ``R`` when the basis is
    made of coordinate vectors (selector groups), else ``None``.
    """

    eps: float
    C: list
    A: list
    W_smooth: int
    Q: np.ndarray
    free: np.ndarray = None

    @property
    def W(self):
        return [("smooth", i) for i in range(self.W_smooth)] + [("hard", i) for i in self.A]

    @property
    def dim(self):
        return self.Q.shape[1]


def kernel_basis(problem, C):
    """Orthonormal basis of ``intersection ker(U_i)`` over ``i in C``.

    Returns ``(Q, free)``; ``free`` is set when the basis is coordinate.
    """
    n = problem.n
    if not C:
        return np.eye(n), np.arange(n)
    rows = problem.hard_stack(C)
    if fs._is_selector(rows):
        used = np.any(rows != 0, axis=0)
        free = np.flatnonzero(~used)
        return np.eye(n)[:, free], free
    return null_space(rows, rcond=KERNEL_RCOND), None


def classify(problem, x, eps):
    """Split hard elements at tolerance ``eps`` (boundary goes to ``C``)."""
    norms = problem.residual_norms(x)
    C = [i for i, t in enumerate(norms) if t <= eps]
    A = [i for i, t in enumerate(norms) if t > eps]
    Q, free = kernel_basis(problem, C)
    return Classification(float(eps), C, A, len(problem.smooth), Q, free)


@dataclass
class MeasureResult:
    """Optimality measure with its minimizing displacement.

    ``status`` is ``"exact"`` or ``"approximate"``; ``gap`` bounds the
    error when known.
    """

    value: float
    d: np.ndarray
    delta: float
    status: str = "exact"
    gap: float = None
    extra: dict = field(default_factory=dict)


def hard_taylor(r, a, q):
    """Gradient and (for ``q >= 2``) Hessian of ``||r||**a`` in ``r``."""
    t = float(np.linalg.norm(r))
    u = r / t
    g = a * t ** (a - 1) * u
    if q < 2:
        return g, None
    H = a * t ** (a - 2) * (np.eye(r.size) + (a - 2) * np.outer(u, u))
    return g, H


def local_taylor(problem, x, cls, q):
    """First and second derivatives of ``f_W`` at ``x`` (second only if q = 2)."""
    n = problem.n
    g = np.zeros(n)
    H = np.zeros((n, n)) if q >= 2 else None
    for el in problem.smooth:
        y = el.U @ x
        tay = el.taylor(y, q)
        zero = np.zeros(el.size)
        g += el.U.T @ tay.grad(zero)
        if q >= 2:
            H += el.U.T @ tay.hess(zero) @ el.U
    for i in cls.A:
        el = problem.hard[i]
        gi, Hi = hard_taylor(el.residual(x), el.a, q)
        g += problem.lam * el.U.T @ gi
        if q >= 2:
            H += problem.lam * el.U.T @ Hi @ el.U
    return g, H


def _check_order(q):
    if q not in (1, 2):
        raise UnsupportedOrderError(f"criticality order q={q} is not supported (only 1 and 2)")


def psi_measure(problem, x, eps, delta=1.0, q=1, cls=None, local=None):
    """``f(x) - min T_{f_W,q}(x, d)`` over the feasible ball in ``R(x, eps)``.

    Parameters
    ----------
    local : tuple, optional
        Precomputed ``(g, H)`` from :func:`local_taylor`.
    """
    _check_order(q)
    chi(q, delta)
    x = np.asarray(x, dtype=float)
    cls = classify(problem, x, eps) if cls is None else cls
    g, H = local_taylor(problem, x, cls, q) if local is None else local
    frozen = problem.lam * sum(np.linalg.norm(problem.hard[i].residual(x)) ** problem.hard[i].a
                               for i in cls.C)
    sub = subsolver.TaylorSubproblem(g, H, x, delta, cls.Q, problem.feasible, cls.free)
    d, val, status = subsolver.minimize_taylor(sub)
    return MeasureResult(float(frozen - val), d, delta, status)


def psi_model_measure(model, x, s, eps, delta=1.0, q=1, basis=None):
    """``m(x, s) - min T_{m,q}(x, s + d)`` over the feasible ball in ``R``.

    ``basis`` is ``(Q, free)`` for the current restricted subspace; by
    default it is recomputed from the classification at ``x + s``.
    """
    _check_order(q)
    chi(q, delta)
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    if basis is None:
        cls = classify(model.problem, x + s, eps)
        basis = (cls.Q, cls.free)
    Q, free = basis
    g = model.gradient(s)
    H = model.hessian(s) if q >= 2 else None
    sub = subsolver.TaylorSubproblem(g, H, x + s, delta, Q, model.problem.feasible, free)
    d, val, status = subsolver.minimize_taylor(sub)
    return MeasureResult(float(-val), d, delta, status)
