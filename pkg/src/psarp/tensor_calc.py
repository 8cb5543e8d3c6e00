"""Derivatives of ``r -> ||r||**a`` and a finite-difference oracle.

The j-th derivative tensor of ``||r||**a`` is a combination of the
(symmetrized) tensors ``r^(2i-j) (x) I^(j-i)`` with scalar weights
``phi[i, j] = m[j, i] * nu[i]``, where the integer table ``m`` does not
depend on the exponent. Only multilinear forms on given directions are
evaluated; no dense order-j tensor is ever built.
"""
from functools import lru_cache
from itertools import product
from math import factorial

import numpy as np

from . import kernels
from .errors import DomainError, SingularityError

SINGULAR_TOL = 1e-14


def _check_exponent(a):
    if not 0.0 < a < 1.0:
        raise DomainError(f"exponent a={a} must lie in (0, 1)")


def pi_factor(a, j):
    """Return ``a * prod_{i=1}^{j-1} (a - i)``.

    This is the scalar ``d^j/dt^j t**a`` at ``t = 1``; for ``a`` in (0, 1)
    its sign is ``(-1)**(j-1)``.

    >>> pi_factor(0.5, 3)
    0.375
    """
    _check_exponent(a)
    if int(j) != j or j < 1:
        raise DomainError(f"order j={j} must be a positive integer")
    out = a
    for i in range(1, int(j)):
        out *= a - i
    return out


@lru_cache(maxsize=None)
def mu_table(j):
    """Exponent-independent integer coefficients ``m[j, i]``, ``i = 1..j``.

    Built by ``m[1,1] = 1`` and ``m[j,i] = m[j-1,i-1] + (2i-j+1) m[j-1,i]``
    with ``m[., 0] = m[j-1, j] = 0``.
    """
    if j < 1:
        raise DomainError("order must be positive")
    row = (1,)
    for jj in range(2, j + 1):
        prev = (0,) + row + (0,)  # prev[i] = m[jj-1, i], i = 0..jj
        row = tuple(prev[i - 1] + (2 * i - jj + 1) * prev[i] for i in range(1, jj + 1))
    return row


def nu_factors(a, j):
    """``nu[i] = prod_{l=1}^{i} (a + 2 - 2l)`` for ``i = 1..j``."""
    out = np.empty(j)
    acc = 1.0
    for i in range(1, j + 1):
        acc *= a + 2.0 - 2.0 * i
        out[i - 1] = acc
    return out


def phi_coefficients(a, j):
    """Weights ``phi[i, j]``, ``i = 1..j``, of the closed-form derivative."""
    _check_exponent(a)
    return np.asarray(mu_table(j), dtype=float) * nu_factors(a, j)


def _as_dirs(dirs, j, m):
    arr = np.atleast_2d(np.asarray(dirs, dtype=float))
    if arr.shape != (j, m):
        raise DomainError(f"expected {j} directions of length {m}, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def normpow_derivative(r, a, j, dirs):
    """Evaluate ``D^j ||r||**a [dirs[0], ..., dirs[j-1]]``.

    Parameters
    ----------
    r : array_like
        Base point, must be nonzero.
    a : float
        Exponent in (0, 1).
    j : int
        Derivative order.
    dirs : sequence of array_like
        ``j`` directions.

    Raises
    ------
    SingularityError
        If ``||r|| < 1e-14``.
    """
    r = np.ascontiguousarray(r, dtype=float)
    if np.linalg.norm(r) < SINGULAR_TOL:
        raise SingularityError("derivative of ||r||^a requested at r = 0")
    d = _as_dirs(dirs, j, r.size)
    phi = phi_coefficients(a, j)
    if all(np.array_equal(d[0], d[k]) for k in range(1, j)):
        return kernels.normpow_quadform(r, d[0], a, j, phi)
    return kernels.normpow_multilinear(r, d, a, phi)


def normpow_tensor_norm(r, a, j):
    """Closed-form tensor norm ``|pi(a-j)| ||r||**(a-j)``.

    This is ``|D^j ||r||^a [u]^j|`` along ``u = r/||r||``. It is the induced
    norm when ``r`` is one-dimensional or ``j = 1``; otherwise the induced
    norm is larger, see :func:`normpow_induced_norm`.
    """
    nr = float(np.linalg.norm(r))
    if nr < SINGULAR_TOL:
        raise SingularityError("tensor norm requested at r = 0")
    return abs(pi_factor(a, j)) * nr ** (a - j)


def radial_polynomial(a, j):
    """Coefficients (lowest first) of ``P(c)`` with ``D^j ||r||^a [v]^j = ||r||^(a-j) P(cos)``.

    ``cos`` is the cosine of the angle between unit ``v`` and ``r``.
    """
    phi = phi_coefficients(a, j)
    coef = np.zeros(j + 1)
    for i in range(1, j + 1):
        if 2 * i - j >= 0:
            coef[2 * i - j] += phi[i - 1]
    return coef


def normpow_induced_norm(r, a, j):
    """Induced norm ``max_{||v||=1} |D^j ||r||^a [v]^j|`` of the derivative tensor.

    For a symmetric tensor the induced multilinear norm equals this maximum;
    it reduces to ``max |P(c)|`` over the attainable cosines (``c = +-1``
    only when ``r`` is one-dimensional).
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    nr = float(np.linalg.norm(r))
    if nr < SINGULAR_TOL:
        raise SingularityError("tensor norm requested at r = 0")
    P = np.polynomial.Polynomial(radial_polynomial(a, j))
    cands = [-1.0, 1.0]
    if r.size > 1:
        cands += [float(c.real) for c in P.deriv().roots()
                  if abs(c.imag) < 1e-12 and -1.0 <= c.real <= 1.0]
        cands.append(0.0)
    return float(max(abs(P(c)) for c in cands)) * nr ** (a - j)


def finite_difference_oracle(f, x, j, dirs, steps=(1e-3, 1e-4), dtype=float):
    """Nested central-difference estimate of ``D^j f(x)[dirs]``.

    Two step sizes are combined by Richardson extrapolation (the central
    stencil is second order). Returns ``(estimate, steps)``.

    ``dtype=np.longdouble`` runs the stencil in extended precision (``f``
    must then accept such arrays); rounding in the ``2^j``-point stencil
    grows like ``eps_mach / h^j``, which limits double precision at j = 4.
    """
    x = np.asarray(x, dtype=dtype)
    d = _as_dirs(dirs, j, x.size).astype(dtype)

    def stencil(h):
        total = dtype(0)
        for eps in product((1, -1), repeat=j):
            total += np.prod(eps) * f(x + h * (np.asarray(eps, dtype=dtype) @ d))
        return total / (2 * h) ** j

    h1, h2 = (dtype(h) for h in steps)
    d1, d2 = stencil(h1), stencil(h2)
    est = (d2 * h1 ** 2 - d1 * h2 ** 2) / (h1 ** 2 - h2 ** 2)
    return float(est), tuple(steps)


def taylor_coefficient(a, ell):
    """``pi(a-ell) / ell!`` (the 1-D Taylor weight of ``t**a`` at ``t = 1``)."""
    return pi_factor(a, ell) / factorial(ell)
