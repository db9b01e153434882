"""Temporally ordered SVM pooling.

Adds a soft ordering penalty over pairs of positively labeled rows ``l < m``:

    C2 * sum max(0, delta + w.x_l - w.x_m)^2

to the hinge pooling objective. The penalty of a pair equals a squared-hinge
loss with cost ``C2 delta^2`` on the point ``(x_m - x_l) / delta`` (label +1,
no bias), so each rung of the C1 ladder is solved exactly by the same dual
coordinate descent as the plain SVM, with a duality-gap certificate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from svmpool import svm
from svmpool.core import (
    Algorithm,
    FeatureBag,
    MilLabeling,
    NegativeBag,
    PoolingConfig,
    PoolResult,
    SvmpDescriptor,
    check_pair,
    classified_fraction,
)
from svmpool.mil import _check_theta, c1_ladder, objective_p1, sign_labeling

PAIR_MODES = ("all-pairs", "consecutive")


def make_pairs(indices, mode: str = "all-pairs") -> np.ndarray:
    """Index pairs ``(l, m)`` with ``l < m`` in temporal order, shape ``(k, 2)``."""
    idx = np.sort(np.asarray(indices, dtype=np.int64))
    if mode == "all-pairs":
        if idx.shape[0] < 2:
            return np.empty((0, 2), dtype=np.int64)
        a, b = np.triu_indices(idx.shape[0], k=1)
        return np.stack([idx[a], idx[b]], axis=1)
    if mode == "consecutive":
        return np.stack([idx[:-1], idx[1:]], axis=1)
    raise ValueError(f"pair_mode must be one of {PAIR_MODES}, got {mode!r}")


@dataclass(frozen=True, eq=False)
class OrderedProblem:
    bag: FeatureBag
    neg: NegativeBag
    theta: MilLabeling
    c1: float
    c2: float
    delta: float = 1.0
    pair_mode: str = "all-pairs"

    def __post_init__(self):
        check_pair(self.bag, self.neg)
        _check_theta(self.theta, None)
        if self.theta.theta.shape[0] != self.bag.n:
            raise ValueError("theta length must match the bag")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        if self.c2 < 0 or self.c1 <= 0:
            raise ValueError("need c1 > 0 and c2 >= 0")

    @property
    def pairs(self) -> np.ndarray:
        return make_pairs(self.theta.positive_indices(), self.pair_mode)

    def pair_differences(self) -> np.ndarray:
        """Rows ``x_l - x_m`` for every pair."""
        pr = self.pairs
        X = self.bag.features
        return X[pr[:, 0]] - X[pr[:, 1]]


def ordering_term(prob: OrderedProblem, w) -> float:
    viol = np.maximum(0.0, prob.delta + prob.pair_differences() @ w)
    return prob.c2 * float(viol @ viol)


def ordered_objective(prob: OrderedProblem, w, b: float) -> float:
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    return objective_p1(prob.bag, prob.neg, prob.theta, w, b, prob.c1) + ordering_term(prob, w)


def ordered_gradient(prob: OrderedProblem, w, b: float) -> tuple[np.ndarray, float]:
    """A subgradient; hinge terms exactly at their kink contribute zero."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    X, N = prob.bag.features, prob.neg.features
    theta = prob.theta.theta.astype(np.float64)
    gw = w.copy()
    gb = b
    act_p = 1.0 - theta * (X @ w + b) > 0.0
    gw -= prob.c1 * (theta[act_p] @ X[act_p])
    gb -= prob.c1 * float(theta[act_p].sum())
    act_n = 1.0 + (N @ w + b) > 0.0
    gw += prob.c1 * N[act_n].sum(axis=0)
    gb += prob.c1 * float(np.count_nonzero(act_n))
    if prob.c2 > 0:
        D = prob.pair_differences()
        viol = np.maximum(0.0, prob.delta + D @ w)
        gw += 2.0 * prob.c2 * (viol @ D)
    return gw, float(gb)


@dataclass(frozen=True, eq=False)
class InnerSolution:
    w: np.ndarray
    b: float
    objective: float
    trace: np.ndarray
    converged: bool
    iterations: int


def solve_ordered(prob: OrderedProblem, tol: float = 1e-6, max_iters: int = 10000,
                  backend: str | None = None) -> InnerSolution:
    """Exact minimizer of :func:`ordered_objective` by dual coordinate descent.

    ``trace`` is the dual objective being minimized, one entry per epoch;
    it is non-increasing.
    """
    X, N = prob.bag.features, prob.neg.features
    p = prob.bag.p
    rows = [np.hstack([X, np.ones((prob.bag.n, 1))]), np.hstack([N, np.ones((prob.neg.m, 1))])]
    labels = [prob.theta.theta.astype(np.float64), -np.ones(prob.neg.m)]
    upper = [np.full(prob.bag.n + prob.neg.m, prob.c1)]
    diag = [np.zeros(prob.bag.n + prob.neg.m)]
    if prob.c2 > 0:
        D = -prob.pair_differences() / prob.delta
        if D.shape[0]:
            rows.append(np.hstack([D, np.zeros((D.shape[0], 1))]))
            labels.append(np.ones(D.shape[0]))
            upper.append(np.full(D.shape[0], np.inf))
            diag.append(np.full(D.shape[0], 0.5 / (prob.c2 * prob.delta ** 2)))
    w_aug, _, _, epochs, converged, _, dual_trace = svm.solve_dual(
        np.vstack(rows), np.concatenate(labels), np.concatenate(upper), np.concatenate(diag),
        tol=tol, max_iters=max_iters, backend=backend)
    w, b = w_aug[:p].copy(), float(w_aug[p])
    return InnerSolution(w=w, b=b, objective=ordered_objective(prob, w, b), trace=-dual_trace,
                         converged=converged, iterations=epochs)


def descent_solve(prob: OrderedProblem, tol: float = 1e-6, max_iters: int = 2000,
                  armijo: float = 1e-4, shrink: float = 0.5) -> InnerSolution:
    """Full-batch subgradient descent with backtracking, from ``w = 0, b = 0``.

    Stops when the gradient norm is at most ``tol (1 + |objective|)``, after
    ``max_iters`` steps, or when the line search cannot find sufficient
    decrease (``converged=False``). The objective trace never increases.
    Slow on the nonsmooth hinge terms; :func:`solve_ordered` is exact.
    """
    w = np.zeros(prob.bag.p)
    b = 0.0
    f = ordered_objective(prob, w, b)
    trace = [f]
    step = 1.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        gw, gb = ordered_gradient(prob, w, b)
        gg = float(gw @ gw) + gb * gb
        if math.sqrt(gg) <= tol * (1.0 + abs(f)):
            converged = True
            break
        step = min(step * 2.0, 1e6)
        while True:
            w_new, b_new = w - step * gw, b - step * gb
            f_new = ordered_objective(prob, w_new, b_new)
            if f_new <= f - armijo * step * gg:
                break
            step *= shrink
            if step < 1e-20:
                return InnerSolution(w, b, f, np.array(trace), False, it)
        w, b, f = w_new, b_new, f_new
        trace.append(f)
    return InnerSolution(w, b, f, np.array(trace), converged, it)


def ordering_violations(w, features: np.ndarray, pairs: np.ndarray, margin: float = 0.0) -> int:
    """Number of pairs ``(l, m)`` with ``w.x_l + margin > w.x_m``."""
    s = features @ np.asarray(w, dtype=np.float64)
    return int(np.count_nonzero(s[pairs[:, 0]] + margin > s[pairs[:, 1]]))


def pool_ordered(bag: FeatureBag, neg: NegativeBag, config: PoolingConfig,
                 inner: str = "dcd") -> PoolResult:
    """Param-tuning ladder whose rungs minimize the ordered objective.

    Ordering pairs range over all bag rows (every row is labeled +1 inside
    the ladder). ``inner`` picks the rung solver: ``"dcd"`` (exact) or
    ``"descent"`` (:func:`descent_solve`). The trace lists one
    ``(c1, fraction, inner_trace)`` entry per rung.
    """
    check_pair(bag, neg)
    if not config.delta > 0:
        raise ValueError("ordered pooling needs delta > 0")
    all_pos = MilLabeling(np.ones(bag.n, dtype=np.int8))
    trace = []
    sol = None
    c1 = math.nan
    converged = True
    for c1 in c1_ladder(config):
        prob = OrderedProblem(bag, neg, all_pos, c1, config.c2, config.delta, config.pair_mode)
        if inner == "dcd":
            sol = solve_ordered(prob, tol=config.solver_tol, max_iters=config.max_svm_iters)
        elif inner == "descent":
            sol = descent_solve(prob, tol=config.solver_tol, max_iters=config.max_inner_iters)
        else:
            raise ValueError(f"unknown inner solver {inner!r}")
        converged = sol.converged
        frac = float(np.count_nonzero(bag.features @ sol.w + sol.b >= 0.0)) / bag.n
        trace.append((c1, frac, sol.trace))
        if frac >= config.eta:
            break
    theta = sign_labeling(bag.features @ sol.w + sol.b)
    desc = SvmpDescriptor(w=sol.w, b=sol.b, objective=sol.objective,
                          algorithm=Algorithm.ORDERED.value, iterations=len(trace))
    frac = classified_fraction(desc, bag)
    desc = SvmpDescriptor(w=sol.w, b=sol.b, eta_achieved=frac, objective=sol.objective,
                          algorithm=Algorithm.ORDERED.value, iterations=len(trace))
    return PoolResult(descriptor=desc, labeling=theta, feasible=theta.satisfies(config.eta) and frac >= config.eta,
                      objective=sol.objective, converged=converged, trace=trace)
