"""Pure-Python dual coordinate descent, used when the compiled kernel is absent."""
import math

import numpy as np


def _primal(X, y, upper, diag, w):
    slack = 1.0 - y * (X @ w)
    active = slack > 0.0
    sq = diag > 0.0
    lin = np.where(sq, 0.0, upper)
    loss = np.where(sq, slack * slack / np.where(sq, 2.0 * diag, 1.0), lin * slack)
    return 0.5 * float(w @ w) + float(np.sum(loss[active]))


def _dual(alpha, diag, w):
    return float(np.sum(alpha - 0.5 * diag * alpha * alpha)) - 0.5 * float(w @ w)


def dcd(X, y, upper, diag, alpha, w, tol, max_iter):
    """Run dual coordinate descent epochs in place.

    Returns ``(epochs, primal, dual, best_w, converged, dual_trace)``;
    ``best_w`` is the iterate with the lowest primal objective seen at an epoch
    boundary and ``dual_trace`` holds the dual objective after each epoch.
    """
    N = X.shape[0]
    qdiag = diag + np.einsum("ij,ij->i", X, X)
    rows = [X[i] for i in range(N)]
    yl, ul, dl, ql = y.tolist(), upper.tolist(), diag.tolist(), qdiag.tolist()
    best_w = w.copy()
    best_primal = math.inf
    primal, dual = math.inf, -math.inf
    converged = False
    trace = []
    epoch = 0
    while epoch < max_iter:
        epoch += 1
        for i in range(N):
            xi = rows[i]
            a_old = alpha[i]
            G = yl[i] * float(w @ xi) - 1.0 + dl[i] * a_old
            if a_old <= 0.0:
                PG = min(G, 0.0)
            elif a_old >= ul[i]:
                PG = max(G, 0.0)
            else:
                PG = G
            if abs(PG) <= 1e-14:
                continue
            a_new = a_old - G / ql[i] if ql[i] > 0.0 else ul[i]
            a_new = min(max(a_new, 0.0), ul[i])
            delta = (a_new - a_old) * yl[i]
            if delta != 0.0:
                alpha[i] = a_new
                w += delta * xi
        primal = _primal(X, y, upper, diag, w)
        dual = _dual(alpha, diag, w)
        trace.append(dual)
        if primal < best_primal:
            best_primal = primal
            best_w[:] = w
        if primal - dual <= tol * max(primal, 1.0):
            converged = True
            break
    return epoch, best_primal, dual, best_w, converged, np.array(trace)
