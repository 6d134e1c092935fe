# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the AW-Fisher hot paths.

Semantics are defined by ``awfisher._fallback``; both must agree to
floating-point rounding.
"""
import numpy as np

from libc.math cimport log, exp, fabs, floor, INFINITY
from libc.stdlib cimport malloc, free


cdef inline double _log_sf_even(double t, Py_ssize_t h, const double* logfact) noexcept nogil:
    # log P(chi2_{2h} > t) = -t/2 + log sum_{i<h} (t/2)^i / i!
    cdef double x, lx, amax, acc
    cdef Py_ssize_t i, imax
    if t <= 0.0:
        return 0.0
    x = 0.5 * t
    lx = log(x)
    imax = <Py_ssize_t>floor(x)
    if imax > h - 1:
        imax = h - 1
    amax = imax * lx - logfact[imax]
    acc = 0.0
    for i in range(h):
        acc += exp(i * lx - logfact[i] - amax)
    return -x + amax + log(acc)


def chi2_even_log_sf(const double[::1] t, const long[::1] half_df, const double[::1] logfact):
    """Elementwise log survival of chi-square with ``2 * half_df`` degrees of freedom."""
    cdef Py_ssize_t n = t.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _log_sf_even(t[i], half_df[i], &logfact[0])
    return out


def aw_sorted_batch(const double[:, ::1] logp, const double[::1] logfact, double tie_rtol):
    """Prefix search over ascending p-values, one row per feature.

    Returns ``(log_level, weights, count)``.
    """
    cdef Py_ssize_t n = logp.shape[0], K = logp.shape[1]
    cdef Py_ssize_t r, j, a, b, best
    cdef double cum, m, thr, key
    cdef Py_ssize_t* order
    cdef double* levels

    log_level = np.empty(n, dtype=np.float64)
    weights = np.zeros((n, K), dtype=np.uint8)
    count = np.empty(n, dtype=np.int64)
    cdef double[::1] ll = log_level
    cdef unsigned char[:, ::1] w = weights
    cdef long long[::1] cnt = count

    if n == 0:
        return log_level, weights, count

    order = <Py_ssize_t*>malloc(K * sizeof(Py_ssize_t))
    levels = <double*>malloc(K * sizeof(double))
    if order == NULL or levels == NULL:
        free(order)
        free(levels)
        raise MemoryError()
    try:
        with nogil:
            for r in range(n):
                # insertion sort: log p ascending, ties -> larger index first
                for a in range(K):
                    b = a
                    key = logp[r, K - 1 - a]
                    while b > 0 and logp[r, order[b - 1]] > key:
                        order[b] = order[b - 1]
                        b -= 1
                    order[b] = K - 1 - a
                cum = 0.0
                m = INFINITY
                for j in range(K):
                    cum = cum + logp[r, order[j]]
                    levels[j] = _log_sf_even(-2.0 * cum, j + 1, &logfact[0])
                    if levels[j] < m:
                        m = levels[j]
                thr = m + tie_rtol * (fabs(m) if fabs(m) > 1.0 else 1.0)
                best = 0
                while levels[best] > thr:
                    best += 1
                ll[r] = levels[best]
                cnt[r] = best + 1
                for j in range(best + 1):
                    w[r, order[j]] = 1
    finally:
        free(order)
        free(levels)
    return log_level, weights, count
