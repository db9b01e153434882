# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dual coordinate descent kernel.

Mirrors ``svmpool._dcd_py.dcd`` statement for statement.
"""
import numpy as np

from libc.math cimport INFINITY, fabs


cdef double _primal(const double[:, ::1] X, const double[::1] y,
                    const double[::1] upper, const double[::1] diag,
                    const double[::1] w) noexcept nogil:
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1], i, k
    cdef double total = 0.0, m, slack
    for k in range(d):
        total += 0.5 * w[k] * w[k]
    for i in range(N):
        m = 0.0
        for k in range(d):
            m += w[k] * X[i, k]
        slack = 1.0 - y[i] * m
        if slack > 0.0:
            if diag[i] > 0.0:
                total += slack * slack / (2.0 * diag[i])
            else:
                total += upper[i] * slack
    return total


cdef double _dual(const double[::1] alpha, const double[::1] diag,
                  const double[::1] w) noexcept nogil:
    cdef Py_ssize_t N = alpha.shape[0], d = w.shape[0], i, k
    cdef double total = 0.0
    for i in range(N):
        total += alpha[i] - 0.5 * diag[i] * alpha[i] * alpha[i]
    for k in range(d):
        total -= 0.5 * w[k] * w[k]
    return total


def dcd(double[:, ::1] X, double[::1] y, double[::1] upper, double[::1] diag,
        double[::1] alpha, double[::1] w, double tol, long max_iter):
    """Run dual coordinate descent epochs in place.

    Returns ``(epochs, primal, dual, best_w, converged, dual_trace)``;
    ``best_w`` is the iterate with the lowest primal objective seen at an epoch
    boundary and ``dual_trace`` holds the dual objective after each epoch.
    """
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1], i, k
    cdef long epoch = 0
    cdef double G, PG, qii, a_old, a_new, delta, primal = INFINITY, dual = -INFINITY
    cdef double best_primal = INFINITY
    cdef bint converged = False
    qdiag_arr = np.empty(N, dtype=np.float64)
    best_arr = np.array(w, dtype=np.float64, copy=True)
    cdef double[::1] qdiag = qdiag_arr
    cdef double[::1] best_w = best_arr
    trace_arr = np.empty(max_iter if max_iter > 0 else 0, dtype=np.float64)
    cdef double[::1] trace = trace_arr

    with nogil:
        for i in range(N):
            qii = diag[i]
            for k in range(d):
                qii = qii + X[i, k] * X[i, k]
            qdiag[i] = qii

        while epoch < max_iter:
            epoch += 1
            for i in range(N):
                G = 0.0
                for k in range(d):
                    G += w[k] * X[i, k]
                G = y[i] * G - 1.0 + diag[i] * alpha[i]
                a_old = alpha[i]
                if a_old <= 0.0:
                    PG = G if G < 0.0 else 0.0
                elif a_old >= upper[i]:
                    PG = G if G > 0.0 else 0.0
                else:
                    PG = G
                if fabs(PG) <= 1e-14:
                    continue
                if qdiag[i] > 0.0:
                    a_new = a_old - G / qdiag[i]
                else:
                    a_new = upper[i]
                if a_new < 0.0:
                    a_new = 0.0
                elif a_new > upper[i]:
                    a_new = upper[i]
                delta = (a_new - a_old) * y[i]
                if delta != 0.0:
                    alpha[i] = a_new
                    for k in range(d):
                        w[k] += delta * X[i, k]

            primal = _primal(X, y, upper, diag, w)
            dual = _dual(alpha, diag, w)
            trace[epoch - 1] = dual
            if primal < best_primal:
                best_primal = primal
                for k in range(d):
                    best_w[k] = w[k]
            if primal - dual <= tol * (primal if primal > 1.0 else 1.0):
                converged = True
                break

    return epoch, best_primal, dual, best_arr, bool(converged), trace_arr[:epoch]
