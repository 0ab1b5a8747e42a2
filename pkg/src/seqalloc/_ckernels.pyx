# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: dual bisection and the shrinking-horizon episode.

Same contracts as ``_pykernels``; the quantile comes from scipy's
``cython_special.ndtri`` so both backends share one rational approximation.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, ceil, log2, isfinite
from scipy.special.cython_special cimport ndtri

cnp.import_array()

NAME = "cython"


cdef inline Py_ssize_t _n_iterations(double max_price, double eps) noexcept nogil:
    cdef double n = ceil(log2(max_price / eps))
    return <Py_ssize_t>n if n >= 1.0 else 1


def n_iterations(double max_price, double eps):
    return _n_iterations(max_price, eps)


cdef inline double _alloc_sum(const double[:] prices, const double[:] log_mean,
                              const double[:] log_std, double nu, double[:] out) noexcept nogil:
    cdef Py_ssize_t t, n = prices.shape[0]
    cdef double total = 0.0, a
    for t in range(n):
        if nu < prices[t]:
            a = exp(log_mean[t] + log_std[t] * ndtri(1.0 - nu / prices[t]))
        else:
            a = 0.0
        out[t] = a
        total += a
    return total


cdef double _bisect(const double[:] prices, const double[:] log_mean, const double[:] log_std,
                    double limit, Py_ssize_t n_iter, double[:] out, double[:] work) noexcept nogil:
    cdef Py_ssize_t k, t, n = prices.shape[0]
    cdef double lo = 0.0, hi = 0.0, mid, s_lo, s_hi, theta
    for t in range(n):
        if prices[t] > hi:
            hi = prices[t]
    for k in range(n_iter):
        mid = 0.5 * (lo + hi)
        if _alloc_sum(prices, log_mean, log_std, mid, out) >= limit:
            lo = mid
        else:
            hi = mid

    s_hi = _alloc_sum(prices, log_mean, log_std, hi, out)
    if lo > 0.0:
        s_lo = _alloc_sum(prices, log_mean, log_std, lo, work)
        if isfinite(s_lo) and s_lo > s_hi:
            theta = (limit - s_hi) / (s_lo - s_hi)
            for t in range(n):
                out[t] = out[t] + theta * (work[t] - out[t])
            return 0.5 * (lo + hi)
        if isfinite(s_lo) and s_hi == 0.0:
            for t in range(n):
                out[t] = work[t] * (limit / s_lo)
            return 0.5 * (lo + hi)
    if s_hi > 0.0:
        for t in range(n):
            out[t] = out[t] * (limit / s_hi)
    else:
        for t in range(n):
            out[t] = limit / n
    return 0.5 * (lo + hi)


def alloc_from_dual(prices, log_mean, log_std, double nu):
    cdef const double[::1] p = np.ascontiguousarray(prices, dtype=np.float64)
    cdef const double[::1] m = np.ascontiguousarray(log_mean, dtype=np.float64)
    cdef const double[::1] s = np.ascontiguousarray(log_std, dtype=np.float64)
    out = np.empty(p.shape[0])
    cdef double[::1] o = out
    with nogil:
        _alloc_sum(p, m, s, nu, o)
    return out


def bisect(prices, log_mean, log_std, double limit, Py_ssize_t n_iter):
    cdef const double[::1] p = np.ascontiguousarray(prices, dtype=np.float64)
    cdef const double[::1] m = np.ascontiguousarray(log_mean, dtype=np.float64)
    cdef const double[::1] s = np.ascontiguousarray(log_std, dtype=np.float64)
    out = np.empty(p.shape[0])
    cdef double[::1] o = out
    cdef double[::1] w = np.empty(p.shape[0])
    cdef double nu
    with nogil:
        nu = _bisect(p, m, s, limit, n_iter, o, w)
    return out, nu


def sequential_episode(prices, mu, chol, double limit, log_path, double eps):
    cdef const double[::1] p = np.ascontiguousarray(prices, dtype=np.float64)
    cdef double[::1] m = np.array(mu, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(chol, dtype=np.float64)
    cdef const double[::1] y = np.ascontiguousarray(log_path, dtype=np.float64)
    cdef Py_ssize_t T = p.shape[0]
    alloc = np.zeros(T)
    cdef double[::1] a = alloc
    cdef double[::1] var = np.empty(T)
    cdef double[::1] std = np.empty(T)
    cdef double[::1] out = np.empty(T)
    cdef double[::1] work = np.empty(T)
    cdef Py_ssize_t tau, t, j, n_iter
    cdef double remaining = limit, pivot, z, col, pmax, v, first

    for t in range(T):
        v = 0.0
        for j in range(t + 1):
            v += c[t, j] * c[t, j]
        var[t] = v

    with nogil:
        for tau in range(T):
            if tau > 0:
                j = tau - 1
                pivot = c[j, j]
                z = (y[j] - m[j]) / pivot if pivot > 0.0 else 0.0
                for t in range(tau, T):
                    col = c[t, j]
                    m[t] += col * z
                    var[t] -= col * col
            if remaining <= 0.0:
                continue
            if tau == T - 1:
                first = remaining
            else:
                pmax = 0.0
                for t in range(tau, T):
                    std[t] = sqrt(var[t]) if var[t] > 0.0 else 0.0
                    if p[t] > pmax:
                        pmax = p[t]
                n_iter = _n_iterations(pmax, eps)
                _bisect(p[tau:], m[tau:], std[tau:], remaining, n_iter, out[tau:], work[tau:])
                first = out[tau]
                if first > remaining:
                    first = remaining
            a[tau] = first
            remaining -= first
    return alloc
