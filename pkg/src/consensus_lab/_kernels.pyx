# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pairwise interaction sums.

Both routines visit each unordered pair once and use the antisymmetry of
``a(|x_j - x_i|)(x_j - x_i)`` to update the two agents together.

Influence codes: 0 constant ``value``, 1 ``(1 + s^2)^(-beta)``,
2 indicator of ``[0, radius]``.
"""

import numpy as np
from libc.math cimport fabs, pow, sqrt


cdef inline double _influence(double s, int kind, double p) nogil:
    if kind == 0:
        return p
    if kind == 1:
        if p == 1.0:
            return 1.0 / (1.0 + s * s)
        if p == 0.5:
            return 1.0 / sqrt(1.0 + s * s)
        return pow(1.0 + s * s, -p)
    return 1.0 if s <= p else 0.0


def alignment_rhs(const double[::1] x, int kind, double param):
    """``out_i = sum_j a(|x_j - x_i|) (x_j - x_i)`` (no ``1/N`` factor)."""
    cdef Py_ssize_t n = x.shape[0], i, j
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef double d, f
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d = x[j] - x[i]
                f = _influence(fabs(d), kind, param) * d
                out[i] += f
                out[j] -= f
    return out_arr


def weighted_alignment_rhs(const double[::1] x, const double[:, ::1] W, int kind, double param):
    """``out_i = sum_j W_ij a(|x_j - x_i|) (x_j - x_i)`` (no quadrature weight)."""
    cdef Py_ssize_t n = x.shape[0], i, j
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef double d, f
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d = x[j] - x[i]
                f = _influence(fabs(d), kind, param) * d
                out[i] += W[i, j] * f
                out[j] -= W[j, i] * f
    return out_arr
