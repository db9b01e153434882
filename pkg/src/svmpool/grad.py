"""Differentiable SVM pooling layer: forward argmin and its implicit Jacobian.

The layer solves, with no bias term,

    w*(z) = argmin_w  1/2 ||w||^2 + lambda/2 sum_j max(0, 1 - theta_j w.z_j)^2

Stationarity reads ``F(w, z) = w - lambda sum_A theta_j z_j (1 - theta_j w.z_j) = 0``
over the active set ``A = {j : theta_j w.z_j < 1}``. The implicit function
theorem then gives ``dw*/dz_j = -H^{-1} B_j`` with

    H   = I + lambda sum_A theta_j^2 z_j z_j^T
    B_j = lambda [ (theta_j^2 w.z_j - theta_j) I + theta_j^2 z_j w^T ]

for active ``j`` and zero blocks otherwise. The ``z_j w^T`` orientation is the
one the finite-difference check in :func:`finite_difference_jacobian` confirms.

``convention="printed"`` swaps the loss for ``max(0, theta_j w.z_j - 1)^2``;
its minimizer is always ``w = 0`` with an empty active set. It exists only to
compare against that transcription.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from svmpool import svm

CONVENTIONS = ("standard", "printed")


class DegenerateMarginError(ValueError):
    """A point sits on the hinge kink, where the Jacobian is undefined."""


@dataclass(frozen=True, eq=False)
class LayerProblem:
    z: np.ndarray
    theta: np.ndarray
    lambda_layer: float = 1.0
    convention: str = "standard"

    def __post_init__(self):
        z = np.array(self.z, dtype=np.float64)
        if z.ndim == 1:
            z = z.reshape(-1, 1)
        theta = np.asarray(self.theta, dtype=np.float64).reshape(-1)
        if z.ndim != 2 or theta.shape[0] != z.shape[0]:
            raise ValueError("z must be (n_tot, p) with one theta per row")
        if not np.all(np.isfinite(z)):
            raise ValueError("z contains non-finite entries")
        if not np.all(np.abs(theta) == 1.0):
            raise ValueError("theta entries must be +1 or -1")
        if not (np.isfinite(self.lambda_layer) and self.lambda_layer > 0):
            raise ValueError("lambda_layer must be positive")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "theta", theta)

    def with_z(self, z) -> "LayerProblem":
        return LayerProblem(z, self.theta, self.lambda_layer, self.convention)


@dataclass(frozen=True, eq=False)
class LayerJacobian:
    blocks: np.ndarray  # (n_tot, p, p); blocks[j] = dw*/dz_j
    active_set: np.ndarray
    hessian: np.ndarray = field(repr=False)


def _residuals(prob: LayerProblem, w: np.ndarray) -> np.ndarray:
    r = 1.0 - prob.theta * (prob.z @ w)
    return r if prob.convention == "standard" else -r


def layer_objective(prob: LayerProblem, w) -> float:
    w = np.asarray(w, dtype=np.float64)
    r = np.maximum(0.0, _residuals(prob, w))
    return 0.5 * float(w @ w) + 0.5 * prob.lambda_layer * float(r @ r)


def layer_gradient(prob: LayerProblem, w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    r = np.maximum(0.0, _residuals(prob, w))
    sign = 1.0 if prob.convention == "standard" else -1.0
    return w - sign * prob.lambda_layer * ((r * prob.theta) @ prob.z)


def _hessian(prob: LayerProblem, active: np.ndarray) -> np.ndarray:
    za = prob.z[active] * prob.theta[active, None]
    return np.eye(prob.z.shape[1]) + prob.lambda_layer * (za.T @ za)


def solve_layer(prob: LayerProblem, tol: float = 1e-10, max_newton: int = 100) -> np.ndarray:
    """Unique minimizer of the layer objective with gradient norm <= ``tol``.

    A squared-hinge dual coordinate descent solve gives the starting point;
    generalized Newton steps with backtracking then polish it.
    """
    if prob.convention == "standard":
        w, *_ = svm.solve_dual(prob.z, prob.theta, *svm.box_and_diag(
            np.full(prob.z.shape[0], 0.5 * prob.lambda_layer), svm.SQUARED_HINGE),
            tol=1e-9, max_iters=10000)
        w = w.copy()
    else:
        w = np.zeros(prob.z.shape[1])
    f = layer_objective(prob, w)
    for _ in range(max_newton):
        g = layer_gradient(prob, w)
        if np.linalg.norm(g) <= tol:
            return w
        active = _residuals(prob, w) > 0.0
        step = np.linalg.solve(_hessian(prob, active), -g)
        t = 1.0
        while t > 1e-12:
            w_new = w + t * step
            f_new = layer_objective(prob, w_new)
            if f_new <= f + 1e-4 * t * float(g @ step):
                break
            t *= 0.5
        if t <= 1e-12:
            break
        w, f = w_new, f_new
    g = layer_gradient(prob, w)
    if np.linalg.norm(g) > max(tol, 1e-8):
        raise svm.SolverError(f"layer solve stalled at gradient norm {np.linalg.norm(g):.3e}")
    return w


def active_set(prob: LayerProblem, w_star, kink_tol: float = 1e-7) -> np.ndarray:
    r = _residuals(prob, np.asarray(w_star, dtype=np.float64))
    near = np.flatnonzero(np.abs(r) < kink_tol)
    if near.size:
        raise DegenerateMarginError(
            f"point {int(near[0])} lies on the margin (|1 - theta w.z| = {abs(r[near[0]]):.2e}); "
            "the Jacobian is undefined there")
    return np.flatnonzero(r > 0.0)


def _cross_block(prob: LayerProblem, w: np.ndarray, j: int) -> np.ndarray:
    th, zj = prob.theta[j], prob.z[j]
    p = zj.shape[0]
    return prob.lambda_layer * ((th * th * float(w @ zj) - th) * np.eye(p) + th * th * np.outer(zj, w))


def implicit_jacobian(prob: LayerProblem, w_star, kink_tol: float = 1e-7) -> LayerJacobian:
    w = np.asarray(w_star, dtype=np.float64)
    act = active_set(prob, w, kink_tol)
    mask = np.zeros(prob.z.shape[0], dtype=bool)
    mask[act] = True
    H = _hessian(prob, mask)
    np.linalg.cholesky(H)  # raises LinAlgError unless SPD
    n, p = prob.z.shape
    blocks = np.zeros((n, p, p))
    for j in act:
        blocks[j] = -np.linalg.solve(H, _cross_block(prob, w, j))
    return LayerJacobian(blocks=blocks, active_set=act, hessian=H)


def backprop_vjp(prob: LayerProblem, w_star, upstream, kink_tol: float = 1e-7) -> np.ndarray:
    """Rows ``upstream^T dw*/dz_j`` for every input, shape ``(n_tot, p)``.

    Uses one Hessian solve ``H u = -upstream`` and never forms the blocks.
    """
    w = np.asarray(w_star, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64).reshape(-1)
    if g.shape[0] != w.shape[0]:
        raise ValueError("upstream gradient must have the length of w")
    act = active_set(prob, w, kink_tol)
    mask = np.zeros(prob.z.shape[0], dtype=bool)
    mask[act] = True
    H = _hessian(prob, mask)
    u = np.linalg.solve(H.T, -g)
    out = np.zeros_like(prob.z)
    th = prob.theta[act]
    za = prob.z[act]
    coef = th * th * (za @ w) - th
    # u^T B_j = lambda [coef_j u^T + theta_j^2 (u.z_j) w^T]
    out[act] = prob.lambda_layer * (coef[:, None] * u[None, :] + (th * th * (za @ u))[:, None] * w[None, :])
    return out


def finite_difference_jacobian(prob: LayerProblem, j: int, h: float = 1e-4,
                               tol: float = 1e-12) -> np.ndarray:
    """Central differences of :func:`solve_layer` with respect to ``z_j``."""
    p = prob.z.shape[1]
    J = np.zeros((p, p))
    for k in range(p):
        zp = prob.z.copy()
        zm = prob.z.copy()
        zp[j, k] += h
        zm[j, k] -= h
        J[:, k] = (solve_layer(prob.with_z(zp), tol) - solve_layer(prob.with_z(zm), tol)) / (2 * h)
    return J


def random_instance(rng: np.random.Generator, max_p: int = 6, max_n: int = 12) -> LayerProblem:
    p = int(rng.integers(1, max_p + 1))
    n = int(rng.integers(2, max_n + 1))
    z = rng.normal(size=(n, p))
    theta = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    theta[0], theta[1] = 1.0, -1.0
    return LayerProblem(z, theta, float(rng.uniform(0.5, 2.0)))


def stable_under_perturbation(prob: LayerProblem, w_star, h: float) -> bool:
    """Margin-distance pre-filter: every point at least ``10 h ||w|| ||z_j||`` from its kink."""
    r = np.abs(_residuals(prob, w_star))
    bound = 10.0 * h * np.linalg.norm(w_star) * np.linalg.norm(prob.z, axis=1)
    return bool(np.all(r > np.maximum(bound, 10.0 * h)))


@dataclass
class GradCheck:
    index: int
    p: int
    n_tot: int
    n_active: int
    max_rel_error: float
    passed: bool


def gradcheck(seed: int = 0, instances: int = 20, tol: float = 1e-3, h: float = 1e-4,
              max_p: int = 6, max_n: int = 12) -> list[GradCheck]:
    """Compare analytic Jacobians with central differences on random instances.

    Instances whose margins are too close to the kink for step ``h`` are
    skipped and redrawn. The error per instance is the largest absolute entry
    difference over all blocks divided by the largest finite-difference entry.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < instances:
        prob = random_instance(rng, max_p, max_n)
        w = solve_layer(prob, tol=1e-12)
        if not stable_under_perturbation(prob, w, h):
            continue
        jac = implicit_jacobian(prob, w)
        fd = np.stack([finite_difference_jacobian(prob, j, h) for j in range(prob.z.shape[0])])
        scale = max(float(np.abs(fd).max()), 1e-12)
        err = float(np.abs(jac.blocks - fd).max()) / scale
        out.append(GradCheck(len(out), prob.z.shape[1], prob.z.shape[0], len(jac.active_set),
                             err, err <= tol))
    return out
