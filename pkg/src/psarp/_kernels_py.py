"""Pure-Python/numpy implementation of the hot kernels.

Same signatures as the compiled ``_ckernels`` module; used when the
extension is not built or when ``PSARP_PURE_PYTHON=1``.
"""
import numpy as np


def poly_eval(coef, z):
    """Return ``(p(z), p'(z), p''(z))`` for ``p(z) = sum_l coef[l] z**l``."""
    v = 0.0
    d1 = 0.0
    d2 = 0.0
    for c in coef[::-1]:
        d2 = d2 * z + 2.0 * d1
        d1 = d1 * z + v
        v = v * z + c
    return v, d1, d2


def mu_coefficients(rho, a, p, out):
    """Fill ``out[0..p]`` with the isotropic model coefficients at radius ``rho``."""
    out[0] = rho ** a
    pi = 1.0
    fact = 1.0
    for ell in range(1, p + 1):
        pi *= (a - ell + 1.0)
        fact *= ell
        out[ell] = pi / fact * rho ** (a - ell)
    return out


def hard_groups(v, offsets, rho, coef, weight, active, out_scale, out_norm):
    """Evaluate the active hard-element models on stacked residuals.

    ``v`` holds ``r_i + U_i s`` for every modelled group, concatenated; group
    ``g`` occupies ``v[offsets[g]:offsets[g+1]]``. Inactive (frozen) groups
    are skipped and get ``out_scale[g] = 0``; their norm is still reported.
    Returns the weighted sum of model values over active groups.
    """
    total = 0.0
    for g in range(len(rho)):
        seg = v[offsets[g]:offsets[g + 1]]
        t = float(np.sqrt(seg @ seg))
        out_norm[g] = t
        if not active[g]:
            out_scale[g] = 0.0
            continue
        val, d1, _ = poly_eval(coef[g], t - rho[g])
        total += weight[g] * val
        out_scale[g] = weight[g] * d1 / t
    return total


def normpow_quadform(r, v, a, j, phi):
    """``sum_i phi[i-1] |r|^(a-2i) (r.v)^(2i-j) (v.v)^(j-i)`` over ``2i >= j``."""
    rr = float(r @ r)
    nr = np.sqrt(rr)
    rv = float(r @ v)
    vv = float(v @ v)
    total = 0.0
    for i in range((j + 1) // 2, j + 1):
        total += phi[i - 1] * nr ** (a - 2 * i) * rv ** (2 * i - j) * vv ** (j - i)
    return total


def normpow_multilinear(r, dirs, a, phi):
    """Symmetric multilinear form from its quadratic form by polarization.

    ``dirs`` is a ``(j, m)`` array of directions. Uses
    ``T[v1..vj] = 1/(2^(j-1) j!) sum_eps (prod eps) q(v1 + sum eps_k v_k)``
    with the first sign fixed to +1.
    """
    j = dirs.shape[0]
    if j == 1:
        return normpow_quadform(r, dirs[0], a, 1, phi)
    total = 0.0
    nsign = 1 << (j - 1)
    for mask in range(nsign):
        w = dirs[0].copy()
        sign = 1.0
        for k in range(1, j):
            if (mask >> (k - 1)) & 1:
                w -= dirs[k]
                sign = -sign
            else:
                w += dirs[k]
        total += sign * normpow_quadform(r, w, a, j, phi)
    fact = 1.0
    for k in range(2, j + 1):
        fact *= k
    return total / (nsign * fact)
