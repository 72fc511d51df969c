# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython implementations of the hot numerical kernels.

Signatures and semantics mirror hawkcast._core._ref; the import-time switch
in hawkcast._core picks whichever is available.
"""

import numpy as np


def convolve_history(const double[:, ::1] history, const double[::1] phi):
    cdef Py_ssize_t n = history.shape[0]
    cdef Py_ssize_t t_len = history.shape[1]
    cdef Py_ssize_t lags = phi.shape[0]
    cdef Py_ssize_t i, t, l, lmax
    cdef double acc
    out = np.zeros((n, t_len), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for t in range(1, t_len):
                lmax = t if t < lags else lags
                acc = 0.0
                for l in range(1, lmax + 1):
                    acc += phi[l - 1] * history[i, t - l]
                o[i, t] = acc
    return out


def correlate_future(const double[:, ::1] values, const double[::1] phi):
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t t_len = values.shape[1]
    cdef Py_ssize_t lags = phi.shape[0]
    cdef Py_ssize_t i, t, l, lmax
    cdef double acc
    out = np.zeros((n, t_len), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for t in range(t_len - 1):
                lmax = t_len - 1 - t
                if lmax > lags:
                    lmax = lags
                acc = 0.0
                for l in range(1, lmax + 1):
                    acc += phi[l - 1] * values[i, t + l]
                o[i, t] = acc
    return out


def cd_sweep(const double[:, ::1] X, const double[::1] weights, double[::1] resid,
             double[::1] theta, double xi, const double[::1] denom, double beta0):
    cdef Py_ssize_t m = X.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t i, j
    cdef double rho, new, step, max_step, w_sum, shift
    max_step = 0.0
    with nogil:
        for j in range(p):
            if denom[j] <= 0.0:
                continue
            rho = 0.0
            for i in range(m):
                rho += weights[i] * X[i, j] * resid[i]
            rho = rho / m + denom[j] * theta[j]
            if rho > xi:
                new = (rho - xi) / denom[j]
            elif rho < -xi:
                new = (rho + xi) / denom[j]
            else:
                new = 0.0
            step = new - theta[j]
            if step != 0.0:
                for i in range(m):
                    resid[i] -= step * X[i, j]
                theta[j] = new
                if step < 0.0:
                    step = -step
                if step > max_step:
                    max_step = step
        w_sum = 0.0
        shift = 0.0
        for i in range(m):
            w_sum += weights[i]
            shift += weights[i] * resid[i]
        if w_sum > 0.0:
            shift /= w_sum
            if shift != 0.0:
                for i in range(m):
                    resid[i] -= shift
                beta0 += shift
                if shift < 0.0:
                    shift = -shift
                if shift > max_step:
                    max_step = shift
    return beta0, max_step
