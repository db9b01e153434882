"""Weighted binary linear SVM (hinge and squared hinge) by dual coordinate descent.

The bias is handled by appending a constant feature of value 1 to every point,
so it is regularized together with ``w``: the solved primal is

    1/2 (||w||^2 + b^2) + sum_i c_i loss(1 - y_i (w.x_i + b))

with ``loss(s) = max(0, s)`` (hinge) or ``max(0, s)^2`` (squared hinge).

The coordinate sweep runs in a compiled kernel when ``svmpool._dcd`` was
built, and in an equivalent pure-Python loop otherwise. Set
``SVMPOOL_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from svmpool import _dcd_py

try:
    from svmpool import _dcd as _dcd_ext
except ImportError:  # pragma: no cover - depends on the build
    _dcd_ext = None

HINGE = "hinge"
SQUARED_HINGE = "squared-hinge"
LOSSES = (HINGE, SQUARED_HINGE)

_KERNELS = {"python": _dcd_py.dcd}
if _dcd_ext is not None:
    _KERNELS["cython"] = _dcd_ext.dcd

if os.environ.get("SVMPOOL_PURE_PYTHON") == "1" or "cython" not in _KERNELS:
    DEFAULT_BACKEND = "python"
else:
    DEFAULT_BACKEND = "cython"


def available_backends() -> list[str]:
    return sorted(_KERNELS)


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SvmProblem:
    points: np.ndarray
    labels: np.ndarray
    c: float
    loss: str = HINGE
    fit_bias: bool = True
    class_weight: tuple[float, float] = (1.0, 1.0)  # (positive, negative)

    def __post_init__(self):
        X = np.ascontiguousarray(self.points, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"points must be 2-D, got shape {X.shape}")
        y = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} points but {y.shape[0]} labels")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValueError("labels must be +1 or -1")
        if not (np.any(y == 1.0) and np.any(y == -1.0)):
            raise ValueError("labels must contain both classes")
        if not np.all(np.isfinite(X)):
            raise ValueError("points contain non-finite entries")
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"c must be positive and finite, got {self.c!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if min(self.class_weight) <= 0:
            raise ValueError("class weights must be positive")
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "labels", y)

    @property
    def sample_costs(self) -> np.ndarray:
        wp, wn = self.class_weight
        return self.c * np.where(self.labels > 0, wp, wn)


@dataclass(frozen=True, eq=False)
class SvmSolution:
    w: np.ndarray
    b: float
    primal_objective: float
    duality_gap: float
    iterations: int
    converged: bool
    alpha: np.ndarray


def augment(points: np.ndarray, fit_bias: bool) -> np.ndarray:
    if not fit_bias:
        return np.ascontiguousarray(points, dtype=np.float64)
    return np.ascontiguousarray(np.hstack([points, np.ones((points.shape[0], 1))]))


def box_and_diag(costs: np.ndarray, loss: str) -> tuple[np.ndarray, np.ndarray]:
    """Dual box bounds and diagonal shifts for per-sample costs."""
    costs = np.asarray(costs, dtype=np.float64)
    if loss == HINGE:
        return costs.copy(), np.zeros_like(costs)
    return np.full_like(costs, np.inf), 0.5 / costs


POLISH_EVERY = 50  # epochs between free-set Newton steps
POLISH_STEPS = 8  # bound hits handled per polish


def _dual_value(alpha, diag, w) -> float:
    return float(np.sum(alpha - 0.5 * diag * alpha * alpha)) - 0.5 * float(w @ w)


def _free_system(Z, d_free, Q, b):
    """Least-squares solution of ``Q a = b`` and its residual, ``Q = Z Z^T + diag(d_free)``.

    The residual is zero when the system is consistent and otherwise lies in
    the null space of ``Q``.
    """
    F, d = Z.shape
    try:
        if np.count_nonzero(d_free == 0.0) <= d:
            target = np.linalg.solve(Q, b)  # generically nonsingular
        elif not d_free.any():
            # Q = Z Z^T has rank <= d: work with the small d x d Gram matrix instead
            G = Z.T @ Z
            coef = np.linalg.solve(G, Z.T @ b)
            target = Z @ np.linalg.solve(G, coef)
            return target, b - Z @ coef
        else:
            target = None
    except np.linalg.LinAlgError:
        target = None
    if target is None or not np.all(np.isfinite(target)):
        target = np.linalg.lstsq(Q, b, rcond=None)[0]
    return target, b - Q @ target


def _polish(X, y, upper, diag, alpha, w) -> None:
    """Exact ascent steps on the free dual variables, stopped at the box; in place.

    Cyclic coordinate sweeps crawl when the free support vectors are nearly
    collinear. Restricted to the free set the dual is a concave quadratic
    ``b.a - 1/2 a.Q a``: when ``Q a = b`` is solvable the step heads for its
    maximizer, otherwise the residual is a null direction of ``Q`` along which
    the dual rises linearly. Either way the step stops at the first bound, so
    the dual never decreases; the variable that hits the bound leaves the
    free set and the step repeats on the rest, up to ``POLISH_STEPS`` times.
    """
    free = (alpha > 0.0) & (alpha < upper)
    for _ in range(POLISH_STEPS):
        if not free.any():
            return
        idx = np.flatnonzero(free)
        Z = X[idx] * y[idx, None]
        a_free = alpha[idx]
        w_fixed = w - Z.T @ a_free
        Q = Z @ Z.T + np.diag(diag[idx])
        b = 1.0 - Z @ w_fixed
        target, resid = _free_system(Z, diag[idx], Q, b)
        bounded = float(np.linalg.norm(resid)) <= 1e-10 * (1.0 + float(np.linalg.norm(b)))
        step = target - a_free if bounded else resid
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(step > 0, (upper[idx] - a_free) / step,
                            np.where(step < 0, -a_free / step, np.inf))
        hit = int(np.argmin(room))
        t = float(room[hit])
        if bounded:
            t = min(1.0, t)
        if not (t > 0.0 and np.isfinite(t)):
            return
        new_free = np.clip(a_free + t * step, 0.0, upper[idx])
        if t == float(room[hit]):
            new_free[hit] = 0.0 if step[hit] < 0 else upper[idx][hit]
        new_w = w_fixed + Z.T @ new_free
        trial = alpha.copy()
        trial[idx] = new_free
        if not _dual_value(trial, diag, new_w) > _dual_value(alpha, diag, w):
            return
        alpha[:] = trial
        w[:] = new_w
        if bounded and t >= 1.0:
            return
        free = (alpha > 0.0) & (alpha < upper)


def solve_dual(X, y, upper, diag, tol=1e-6, max_iters=10000, backend=None):
    """Low-level entry: minimize over pre-augmented points with per-sample losses.

    ``upper[i]`` is the dual box bound (``inf`` for squared hinge) and
    ``diag[i]`` the dual diagonal shift (``1/(2 c_i)`` for squared hinge,
    0 for hinge). Returns ``(w, primal, gap, epochs, converged, alpha,
    dual_trace)``; ``dual_trace`` is non-decreasing.

    Every ``POLISH_EVERY`` epochs without convergence, a Newton step on the
    free variables speeds up the sweeps; it is plain numpy, so both backends
    take identical steps.
    """
    kernel = _KERNELS[backend or DEFAULT_BACKEND]
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    if tol <= 0:
        raise ValueError("tol must be positive")
    alpha = np.zeros(X.shape[0])
    w = np.zeros(X.shape[1])
    epochs, primal, dual, best_w, converged = 0, np.inf, -np.inf, w.copy(), False
    traces = []
    while epochs < max_iters:
        ep, p_chunk, dual, w_chunk, converged, tr = kernel(
            X, y, upper, diag, alpha, w, float(tol), int(min(POLISH_EVERY, max_iters - epochs)))
        epochs += ep
        traces.append(tr)
        if p_chunk < primal:
            primal, best_w = p_chunk, w_chunk
        if converged or ep == 0:
            break
        _polish(X, y, upper, diag, alpha, w)
    if not np.all(np.isfinite(best_w)):
        raise SolverError("solver diverged to non-finite weights")
    gap = max(primal - dual, 0.0)
    trace = np.concatenate(traces) if traces else np.empty(0)
    return best_w, primal, gap, epochs, converged, alpha, trace


def solve(problem: SvmProblem, tol: float = 1e-6, max_iters: int = 10000,
          backend: str | None = None) -> SvmSolution:
    """Solve the problem to a relative duality gap of ``tol``.

    Stops when ``gap <= tol * max(1, primal)`` or after ``max_iters`` epochs,
    in which case the best iterate seen is returned with ``converged=False``.
    The coordinate order is fixed, so results are deterministic.
    """
    X = augment(problem.points, problem.fit_bias)
    upper, diag = box_and_diag(problem.sample_costs, problem.loss)
    w_aug, primal, gap, epochs, converged, alpha, _ = solve_dual(
        X, problem.labels, upper, diag, tol, max_iters, backend)
    if problem.fit_bias:
        w, b = w_aug[:-1].copy(), float(w_aug[-1])
    else:
        w, b = w_aug, 0.0
    return SvmSolution(w=w, b=b, primal_objective=primal, duality_gap=gap,
                       iterations=epochs, converged=converged, alpha=alpha)


def losses(margins: np.ndarray, loss: str) -> np.ndarray:
    slack = np.maximum(0.0, 1.0 - margins)
    return slack if loss == HINGE else slack * slack


def objective(problem: SvmProblem, w, b: float = 0.0) -> float:
    """Exact primal value, including the bias penalty when ``fit_bias``."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != problem.points.shape[1]:
        raise ValueError(f"w has length {w.shape[0]}, points have {problem.points.shape[1]} columns")
    reg = 0.5 * float(w @ w)
    if problem.fit_bias:
        reg += 0.5 * b * b
    else:
        b = 0.0
    margins = problem.labels * (problem.points @ w + b)
    return reg + float(problem.sample_costs @ losses(margins, problem.loss))
