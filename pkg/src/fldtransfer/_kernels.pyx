# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Mirrors :mod:`fldtransfer._kernels_py` exactly in
contract; callers go through :mod:`fldtransfer.kernels`."""

import numpy as np

cimport numpy as cnp
from libc.math cimport erfc, sqrt

cnp.import_array()

cdef double _INV_SQRT2 = 0.70710678118654752440


cdef inline double _phi(double x) noexcept nogil:
    return 0.5 * erfc(-x * _INV_SQRT2)


def projected_risks(const double[:, ::1] W, const double[::1] nu,
                    const double[:, ::1] sigma):
    cdef Py_ssize_t B = W.shape[0], d = W.shape[1]
    cdef Py_ssize_t b, i, j
    cdef double num, quad, row
    out = np.empty(B, dtype=np.float64)
    cdef double[::1] r = out
    with nogil:
        for b in range(B):
            num = 0.0
            quad = 0.0
            for i in range(d):
                num = num + W[b, i] * nu[i]
                row = 0.0
                for j in range(d):
                    row = row + sigma[i, j] * W[b, j]
                quad = quad + W[b, i] * row
            r[b] = _phi(-num / sqrt(quad))
    return out


def mean_projected_risk(const double[:, ::1] W, const double[::1] nu,
                        const double[:, ::1] sigma):
    cdef Py_ssize_t B = W.shape[0]
    cdef double[::1] r = projected_risks(W, nu, sigma)
    cdef double total = 0.0
    cdef Py_ssize_t b
    with nogil:
        for b in range(B):
            total = total + r[b]
    return total / B


def rule_balanced_accuracy(const double[:, ::1] X, const cnp.int64_t[::1] y,
                           const double[:, ::1] W):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], k = W.shape[0]
    cdef Py_ssize_t i, j, r
    cdef double xij
    cdef cnp.int64_t n1 = 0, n0
    for i in range(n):
        n1 += y[i]
    n0 = n - n1
    tp_arr = np.zeros(k, dtype=np.int64)
    tn_arr = np.zeros(k, dtype=np.int64)
    cdef cnp.int64_t[::1] tp = tp_arr
    cdef cnp.int64_t[::1] tn = tn_arr
    # rules along the fast axis so the inner loop vectorizes
    cdef double[:, ::1] Wt = np.ascontiguousarray(np.asarray(W).T)
    cdef double[::1] s = np.empty(k)
    with nogil:
        for i in range(n):
            for r in range(k):
                s[r] = 0.0
            for j in range(d):
                xij = X[i, j]
                for r in range(k):
                    s[r] += xij * Wt[j, r]
            if y[i] == 1:
                for r in range(k):
                    if s[r] > 0.0:
                        tp[r] += 1
            elif y[i] == 0:
                for r in range(k):
                    if not s[r] > 0.0:
                        tn[r] += 1
    return 0.5 * (tp_arr / <double>n1 + tn_arr / <double>n0)


def signed_rank_null_counts(const cnp.int64_t[::1] doubled_ranks):
    cdef Py_ssize_t n = doubled_ranks.shape[0], i, s
    cdef cnp.int64_t total = 0, rk, hi = 0
    for i in range(n):
        total += doubled_ranks[i]
    counts_arr = np.zeros(total + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    counts[0] = 1
    with nogil:
        for i in range(n):
            rk = doubled_ranks[i]
            hi += rk
            for s in range(hi, rk - 1, -1):
                counts[s] += counts[s - rk]
    return counts_arr
