"""Reference implementations used only by the tests.

Nothing here imports ``svmpool``: each oracle re-derives its answer from the
mathematical definition with a different method than the library uses.
"""
from __future__ import annotations

import itertools
import math

import cvxpy as cp
import numba
import numpy as np


@numba.njit(cache=True)
def _subgradient_hinge(X, y, c, radius, iters):
    N, d = X.shape
    w = np.zeros(d)
    avg = np.zeros(d)
    wsum = 0.0
    best = np.inf
    g = np.zeros(d)
    for t in range(1, iters + 1):
        f = 0.0
        for k in range(d):
            g[k] = w[k]
            f += 0.5 * w[k] * w[k]
        for i in range(N):
            m = 0.0
            for k in range(d):
                m += w[k] * X[i, k]
            s = 1.0 - y[i] * m
            if s > 0:
                f += c * s
                for k in range(d):
                    g[k] -= c * y[i] * X[i, k]
        if f < best:
            best = f
        step = 2.0 / (t + 1.0)
        nrm = 0.0
        for k in range(d):
            w[k] -= step * g[k]
            nrm += w[k] * w[k]
        nrm = np.sqrt(nrm)
        if nrm > radius:
            for k in range(d):
                w[k] *= radius / nrm
        wsum += t
        for k in range(d):
            avg[k] += (t / wsum) * (w[k] - avg[k])
    f = 0.0
    for k in range(d):
        f += 0.5 * avg[k] * avg[k]
    for i in range(N):
        m = 0.0
        for k in range(d):
            m += avg[k] * X[i, k]
        s = 1.0 - y[i] * m
        if s > 0:
            f += c * s
    return min(f, best)


def subgradient_svm_objective(points, labels, c, fit_bias=True, iters=300_000) -> float:
    """Minimum of 1/2 (|w|^2 + b^2) + c sum hinge by projected subgradient descent.

    The minimizer lies in the ball of radius sqrt(2 c N) because the objective
    at zero is c N. Steps 2/(t+1); the answer is the best of the iterates and
    their weighted average.
    """
    X = np.asarray(points, dtype=np.float64)
    if fit_bias:
        X = np.hstack([X, np.ones((X.shape[0], 1))])
    y = np.asarray(labels, dtype=np.float64)
    radius = math.sqrt(2.0 * c * X.shape[0])
    return float(_subgradient_hinge(np.ascontiguousarray(X), y, float(c), radius, iters))


class MilQp:
    """The MIL objective for a fixed labeling, as a parametrized convex QP."""

    def __init__(self, pos, neg, c1):
        pos = np.asarray(pos, dtype=np.float64)
        neg = np.asarray(neg, dtype=np.float64)
        p = pos.shape[1]
        self.n = pos.shape[0]
        self.w = cp.Variable(p)
        self.b = cp.Variable()
        self.theta = cp.Parameter(self.n)
        loss = cp.sum(cp.pos(1 - cp.multiply(self.theta, pos @ self.w + self.b)))
        loss += cp.sum(cp.pos(1 + neg @ self.w + self.b))
        self.problem = cp.Problem(cp.Minimize(
            0.5 * cp.sum_squares(self.w) + 0.5 * cp.square(self.b) + c1 * loss))

    def solve(self, theta) -> float:
        self.theta.value = np.asarray(theta, dtype=np.float64)
        self.problem.solve(solver=cp.CLARABEL)
        return float(self.problem.value)


def brute_force_mil(pos, neg, c1, eta):
    """Re-enumerate every labeling with at least ceil(eta n) positives.

    Returns ``(best_objective, best_subset, all_objectives)`` where subsets
    are sorted index tuples.
    """
    pos = np.asarray(pos, dtype=np.float64)
    n = pos.shape[0]
    r = max(1, math.ceil(eta * n - 1e-9))
    qp = MilQp(pos, neg, c1)
    results = {}
    for size in range(r, n + 1):
        for subset in itertools.combinations(range(n), size):
            theta = -np.ones(n)
            theta[list(subset)] = 1.0
            results[subset] = qp.solve(theta)
    best = min(results, key=lambda s: (results[s], s))
    return results[best], best, results


def chi2_kernel(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    s = x + y
    return np.where(s > 0, 2.0 * x * y / np.where(s > 0, s, 1.0), 0.0)


def layer_1d(z: float, lam: float = 1.0) -> tuple[float, float]:
    """Single active point, theta = +1, p = 1: w = lam z / (1 + lam z^2) and its derivative."""
    w = lam * z / (1.0 + lam * z * z)
    dw = lam * (1.0 - lam * z * z) / (1.0 + lam * z * z) ** 2
    return w, dw


def count_order_violations(scores, pairs) -> int:
    return sum(1 for l, m in pairs if scores[l] > scores[m])
