# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``psarp._kernels_py`` exactly."""
from libc.math cimport sqrt, pow

import numpy as np


cdef inline void _horner(const double[:] coef, double z, double* v, double* d1, double* d2) noexcept nogil:
    cdef Py_ssize_t k
    cdef double pv = 0.0, p1 = 0.0, p2 = 0.0
    for k in range(coef.shape[0] - 1, -1, -1):
        p2 = p2 * z + 2.0 * p1
        p1 = p1 * z + pv
        pv = pv * z + coef[k]
    v[0] = pv
    d1[0] = p1
    d2[0] = p2


def poly_eval(const double[:] coef, double z):
    cdef double v, d1, d2
    _horner(coef, z, &v, &d1, &d2)
    return v, d1, d2


def mu_coefficients(double rho, double a, int p, double[:] out):
    cdef int ell
    cdef double pi = 1.0, fact = 1.0
    out[0] = pow(rho, a)
    for ell in range(1, p + 1):
        pi *= (a - ell + 1.0)
        fact *= ell
        out[ell] = pi / fact * pow(rho, a - ell)
    return np.asarray(out)


def hard_groups(const double[:] v, const Py_ssize_t[:] offsets, const double[:] rho,
                const double[:, :] coef, const double[:] weight, const unsigned char[:] active,
                double[:] out_scale, double[:] out_norm):
    cdef Py_ssize_t g, k
    cdef double t, val, d1, d2, total = 0.0
    with nogil:
        for g in range(rho.shape[0]):
            t = 0.0
            for k in range(offsets[g], offsets[g + 1]):
                t += v[k] * v[k]
            t = sqrt(t)
            out_norm[g] = t
            if not active[g]:
                out_scale[g] = 0.0
                continue
            _horner(coef[g], t - rho[g], &val, &d1, &d2)
            total += weight[g] * val
            out_scale[g] = weight[g] * d1 / t
    return total


cdef double _quadform(const double[:] r, const double[:] v, double a, int j, const double[:] phi) noexcept nogil:
    cdef Py_ssize_t k
    cdef int i
    cdef double rr = 0.0, rv = 0.0, vv = 0.0, nr, total = 0.0
    for k in range(r.shape[0]):
        rr += r[k] * r[k]
        rv += r[k] * v[k]
        vv += v[k] * v[k]
    nr = sqrt(rr)
    for i in range((j + 1) // 2, j + 1):
        total += phi[i - 1] * pow(nr, a - 2 * i) * pow(rv, 2 * i - j) * pow(vv, j - i)
    return total


def normpow_quadform(const double[:] r, const double[:] v, double a, int j, const double[:] phi):
    return _quadform(r, v, a, j, phi)


def normpow_multilinear(const double[:] r, const double[:, :] dirs, double a, const double[:] phi):
    cdef int j = dirs.shape[0]
    cdef Py_ssize_t m = dirs.shape[1], c
    cdef int mask, k, nsign
    cdef double sign, total = 0.0, fact = 1.0
    if j == 1:
        return _quadform(r, dirs[0], a, 1, phi)
    cdef double[:] w = np.empty(m)
    nsign = 1 << (j - 1)
    for mask in range(nsign):
        sign = 1.0
        for c in range(m):
            w[c] = dirs[0, c]
        for k in range(1, j):
            if (mask >> (k - 1)) & 1:
                for c in range(m):
                    w[c] -= dirs[k, c]
                sign = -sign
            else:
                for c in range(m):
                    w[c] += dirs[k, c]
        total += sign * _quadform(r, w, a, j, phi)
    for k in range(2, j + 1):
        fact *= k
    return total / (nsign * fact)
