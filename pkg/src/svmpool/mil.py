"""SVM pooling solvers for the multiple-instance max-margin problem.

Every positive-bag row takes a label from ``theta``; negatives are always -1.
The objective for a labeling is the regularized hinge SVM objective on the
concatenated, labeled rows (bias regularized, see :mod:`svmpool.svm`).
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor

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
    min_positive_count,
)


def labeled_problem(bag: FeatureBag, neg: NegativeBag, theta: MilLabeling, c1: float,
                    loss: str = svm.HINGE) -> svm.SvmProblem:
    check_pair(bag, neg)
    if theta.theta.shape[0] != bag.n:
        raise ValueError(f"theta has {theta.theta.shape[0]} entries for a bag of {bag.n} rows")
    points = np.vstack([bag.features, neg.features])
    labels = np.concatenate([theta.theta.astype(np.float64), -np.ones(neg.m)])
    return svm.SvmProblem(points, labels, c1, loss=loss)


def _check_theta(theta: MilLabeling, eta: float | None) -> None:
    if theta.n_positive == 0:
        raise ValueError("infeasible labeling: no positive rows")
    if eta is not None and not theta.satisfies(eta):
        need = min_positive_count(eta, theta.theta.shape[0])
        raise ValueError(f"infeasible labeling: {theta.n_positive} positives, need {need} for eta={eta}")


def objective_p1(bag: FeatureBag, neg: NegativeBag, theta: MilLabeling, w, b: float,
                 c1: float, eta: float | None = None) -> float:
    """Hinge-form MIL objective of ``(w, b)`` under the labeling ``theta``."""
    _check_theta(theta, eta)
    check_pair(bag, neg)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != bag.p:
        raise ValueError(f"w has length {w.shape[0]}, features have p={bag.p}")
    pos = np.maximum(0.0, 1.0 - theta.theta * (bag.features @ w + b))
    negl = np.maximum(0.0, 1.0 + (neg.features @ w + b))
    return 0.5 * (float(w @ w) + b * b) + c1 * (float(pos.sum()) + float(negl.sum()))


def _result(bag, algorithm, w, b, theta, eta, objective, iterations, converged=True, trace=()):
    desc = SvmpDescriptor(w=w, b=b, algorithm=algorithm.value, iterations=iterations,
                          objective=objective)
    frac = classified_fraction(desc, bag)
    desc = SvmpDescriptor(w=desc.w, b=desc.b, eta_achieved=frac, objective=objective,
                          algorithm=algorithm.value, iterations=iterations)
    feasible = theta.satisfies(eta) and frac >= eta
    return PoolResult(descriptor=desc, labeling=theta, feasible=feasible, objective=objective,
                      converged=converged, trace=list(trace))


def _solve_labeling(bag, neg, theta, c1, config, loss=svm.HINGE):
    sol = svm.solve(labeled_problem(bag, neg, theta, c1, loss), tol=config.solver_tol,
                    max_iters=config.max_svm_iters)
    obj = objective_p1(bag, neg, theta, sol.w, sol.b, c1)
    return sol, obj


def candidate_subsets(n: int, eta: float):
    """All positive-index sets of size >= ceil(eta n), in lexicographic order."""
    r = min_positive_count(eta, n)
    subsets = [s for k in range(r, n + 1) for s in itertools.combinations(range(n), k)]
    subsets.sort()
    return subsets


def pool_enumerate(bag: FeatureBag, neg: NegativeBag, config: PoolingConfig,
                   jobs: int = 1) -> PoolResult:
    """Solve every eta-feasible labeling and keep the lowest objective.

    Ties go to the lexicographically smallest positive-index set. The trace
    holds one ``(subset, objective)`` entry per candidate.
    """
    check_pair(bag, neg)
    if bag.n > config.enumeration_cap:
        raise ValueError(
            f"bag has {bag.n} rows, above the enumeration cap of {config.enumeration_cap}; "
            "use the alternating or param-tuning solver")
    subsets = candidate_subsets(bag.n, config.eta)

    def run(subset):
        theta = -np.ones(bag.n, dtype=np.int8)
        theta[list(subset)] = 1
        labeling = MilLabeling(theta)
        sol, obj = _solve_labeling(bag, neg, labeling, config.c1, config)
        return labeling, sol, obj

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            outcomes = list(ex.map(run, subsets))
    else:
        outcomes = [run(s) for s in subsets]

    best = min(range(len(outcomes)), key=lambda i: (outcomes[i][2], subsets[i]))
    labeling, sol, obj = outcomes[best]
    trace = [(s, o[2]) for s, o in zip(subsets, outcomes)]
    return _result(bag, Algorithm.ENUMERATE, sol.w, sol.b, labeling, config.eta, obj,
                   iterations=len(subsets), converged=sol.converged, trace=trace)


def flip_reductions(bag: FeatureBag, w, b: float, c1: float) -> np.ndarray:
    """Objective reduction from relabeling each positive row -1 -> +1 with (w, b) fixed."""
    s = bag.features @ np.asarray(w, dtype=np.float64) + b
    return c1 * (np.maximum(0.0, 1.0 + s) - np.maximum(0.0, 1.0 - s))


def top_r_labeling(reductions: np.ndarray, r: int) -> MilLabeling:
    # stable sort on the negated key puts larger reductions first, lower index on ties
    order = np.argsort(-reductions, kind="stable")
    theta = -np.ones(reductions.shape[0], dtype=np.int8)
    theta[order[:r]] = 1
    return MilLabeling(theta)


def initial_labelings(bag: FeatureBag, neg: NegativeBag, config: PoolingConfig):
    """Starting labelings for the alternating solver, each with exactly R positives.

    Three deterministic starts rank rows by projection on the mean difference
    between bags, by standardized distance from the negatives, and by the
    all-positive SVM score; ``config.alt_random_starts`` more are drawn from
    ``config.seed``.
    """
    r = min_positive_count(config.eta, bag.n)
    X = bag.features
    starts = [("mean-difference", top_r_labeling(X @ (X.mean(0) - neg.features.mean(0)), r))]
    mu, sd = neg.features.mean(0), neg.features.std(0) + 1e-8
    starts.append(("negative-distance", top_r_labeling((((X - mu) / sd) ** 2).sum(1), r)))
    sol, _ = _solve_labeling(bag, neg, MilLabeling(np.ones(bag.n, dtype=np.int8)), config.c1, config)
    starts.append(("all-positive", top_r_labeling(flip_reductions(bag, sol.w, sol.b, config.c1), r)))
    rng = np.random.default_rng(config.seed)
    for k in range(config.alt_random_starts):
        theta = -np.ones(bag.n, dtype=np.int8)
        theta[rng.permutation(bag.n)[:r]] = 1
        starts.append((f"random-{k}", MilLabeling(theta)))
    return starts


def _alternate(bag, neg, config, theta):
    r = min_positive_count(config.eta, bag.n)
    c1 = config.c1
    prev_obj = math.inf
    trace = []
    converged = False
    it = 0
    for it in range(1, config.max_outer_iters + 1):
        sol, _ = _solve_labeling(bag, neg, theta, c1, config)
        new_theta = top_r_labeling(flip_reductions(bag, sol.w, sol.b, c1), r)
        obj = objective_p1(bag, neg, new_theta, sol.w, sol.b, c1)
        trace.append(obj)
        unchanged = np.array_equal(new_theta.theta, theta.theta)
        theta = new_theta
        if unchanged or abs(prev_obj - obj) < config.convergence_threshold:
            converged = True
            break
        prev_obj = obj
    if not unchanged:
        # the returned (w, b) must be the SVM optimum for the returned labeling
        sol, _ = _solve_labeling(bag, neg, theta, c1, config)
    obj = objective_p1(bag, neg, theta, sol.w, sol.b, c1)
    return theta, sol, obj, it, converged, trace


def pool_alternating(bag: FeatureBag, neg: NegativeBag, config: PoolingConfig) -> PoolResult:
    """Alternate between the SVM solve for a fixed labeling and the best top-R labeling.

    Each start (see :func:`initial_labelings`) runs until the objective
    changes by less than ``config.convergence_threshold`` between outer
    iterations, the labeling stops changing, or ``config.max_outer_iters``
    is reached. The start with the lowest final objective wins, earlier
    starts on ties. The returned labeling has exactly ``ceil(eta n)``
    positives; ``iterations`` counts outer iterations over all starts.
    """
    check_pair(bag, neg)
    best = None
    total_iters = 0
    all_converged = True
    for _, theta0 in initial_labelings(bag, neg, config):
        theta, sol, obj, it, converged, trace = _alternate(bag, neg, config, theta0)
        total_iters += it
        all_converged &= converged
        if best is None or obj < best[2]:
            best = (theta, sol, obj, trace)
    theta, sol, obj, trace = best
    return _result(bag, Algorithm.ALTERNATING, sol.w, sol.b, theta, config.eta, obj,
                   iterations=total_iters, converged=all_converged, trace=trace)


def c1_ladder(config: PoolingConfig) -> list[float]:
    """Geometric C1 values from ``c1_init`` up to ``c1_max``."""
    values = []
    k = 0
    while True:
        c = config.c1_init * config.c1_multiplier ** k
        if c > config.c1_max * (1 + 1e-12):
            break
        values.append(c)
        k += 1
    return values


def sign_labeling(scores: np.ndarray) -> MilLabeling:
    return MilLabeling(np.where(scores >= 0.0, 1, -1).astype(np.int8))


def pool_param_tuning(bag: FeatureBag, neg: NegativeBag, config: PoolingConfig) -> PoolResult:
    """Raise C1 along a geometric ladder until an eta fraction of the bag scores >= 0.

    All positive rows are labeled +1. The returned labeling is the sign
    pattern of the final hyperplane on the bag; ``feasible`` is False when the
    ladder ran out before reaching the eta fraction. The trace records
    ``(c1, fraction)`` per rung.
    """
    check_pair(bag, neg)
    all_pos = MilLabeling(np.ones(bag.n, dtype=np.int8))
    problem_points = np.vstack([bag.features, neg.features])
    labels = np.concatenate([np.ones(bag.n), -np.ones(neg.m)])
    trace = []
    sol = None
    c1 = math.nan
    for c1 in c1_ladder(config):
        sol = svm.solve(svm.SvmProblem(problem_points, labels, c1), tol=config.solver_tol,
                        max_iters=config.max_svm_iters)
        frac = float(np.count_nonzero(bag.features @ sol.w + sol.b >= 0.0)) / bag.n
        trace.append((c1, frac))
        if frac >= config.eta:
            break
    obj = objective_p1(bag, neg, all_pos, sol.w, sol.b, c1)
    theta = sign_labeling(bag.features @ sol.w + sol.b)
    res = _result(bag, Algorithm.PARAM_TUNING, sol.w, sol.b, theta, config.eta, obj,
                  iterations=len(trace), converged=sol.converged, trace=trace)
    return res


def tuned_c1(result: PoolResult) -> float:
    """The C1 value of the last ladder rung of a param-tuning result."""
    return result.trace[-1][0]
