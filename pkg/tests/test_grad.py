import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from svmpool.grad import (
    DegenerateMarginError,
    LayerProblem,
    active_set,
    backprop_vjp,
    finite_difference_jacobian,
    gradcheck,
    implicit_jacobian,
    layer_gradient,
    layer_objective,
    random_instance,
    solve_layer,
    stable_under_perturbation,
)


def one_d(z, lam=1.0):
    return LayerProblem([[z]], [1.0], lam)


@pytest.mark.parametrize("z, lam", [(1.0, 1.0), (0.5, 1.0), (2.0, 1.0), (0.7, 2.5), (-1.3, 0.4)])
def test_one_dimensional_closed_form(z, lam):
    prob = one_d(z, lam)
    w = solve_layer(prob)
    w_ref, dw_ref = oracles.layer_1d(z, lam)
    assert w[0] == pytest.approx(w_ref, abs=1e-8)
    assert implicit_jacobian(prob, w).blocks[0, 0, 0] == pytest.approx(dw_ref, abs=1e-8)


def test_printed_numbers():
    assert solve_layer(one_d(1.0))[0] == pytest.approx(0.5, abs=1e-10)
    for z, d in [(1.0, 0.0), (0.5, 0.48), (2.0, -0.12)]:
        prob = one_d(z)
        assert implicit_jacobian(prob, solve_layer(prob)).blocks[0, 0, 0] == pytest.approx(d, abs=1e-8)


@pytest.mark.parametrize("seed", range(6))
def test_forward_solve_is_stationary_and_beats_zero(seed):
    prob = random_instance(np.random.default_rng(seed))
    w = solve_layer(prob)
    assert np.linalg.norm(layer_gradient(prob, w)) <= 1e-10
    assert layer_objective(prob, w) <= layer_objective(prob, np.zeros_like(w))


def test_inactive_blocks_are_zero():
    z = np.array([[1.0, 0.0], [0.0, 1.0], [50.0, 0.0]])
    prob = LayerProblem(z, [1.0, 1.0, 1.0])
    w = solve_layer(prob)
    jac = implicit_jacobian(prob, w)
    assert 2 not in jac.active_set
    assert not np.any(jac.blocks[2])


@pytest.mark.parametrize("seed", range(5))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    while True:
        prob = random_instance(rng)
        w = solve_layer(prob, tol=1e-12)
        if stable_under_perturbation(prob, w, 1e-4):
            break
    jac = implicit_jacobian(prob, w)
    for j in range(prob.z.shape[0]):
        fd = finite_difference_jacobian(prob, j)
        assert np.allclose(jac.blocks[j], fd, atol=1e-6 + 1e-3 * np.abs(fd).max())


def test_transposed_cross_term_disagrees_with_finite_differences():
    rng = np.random.default_rng(7)
    prob = LayerProblem(rng.normal(size=(4, 3)), [1.0, -1.0, 1.0, -1.0], 1.0)
    w = solve_layer(prob, tol=1e-12)
    jac = implicit_jacobian(prob, w)
    j = int(jac.active_set[0])
    th, zj = prob.theta[j], prob.z[j]
    wrong_b = (th * th * (w @ zj) - th) * np.eye(3) + th * th * np.outer(w, zj)
    wrong = -np.linalg.solve(jac.hessian, wrong_b)
    fd = finite_difference_jacobian(prob, j)
    assert np.abs(jac.blocks[j] - fd).max() < 1e-6
    assert np.abs(wrong - fd).max() > 1e-2


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1))
def test_vjp_matches_dense_contraction(seed):
    rng = np.random.default_rng(seed)
    prob = random_instance(rng)
    w = solve_layer(prob)
    try:
        jac = implicit_jacobian(prob, w)
    except DegenerateMarginError:
        return
    g = rng.normal(size=w.shape[0])
    dense = np.einsum("a,jab->jb", g, jac.blocks)
    assert np.allclose(backprop_vjp(prob, w, g), dense, atol=1e-10, rtol=0)


def test_vjp_of_zero_upstream_is_zero():
    prob = random_instance(np.random.default_rng(3))
    w = solve_layer(prob)
    assert not np.any(backprop_vjp(prob, w, np.zeros_like(w)))


def test_vjp_rejects_wrong_length():
    prob = one_d(1.0)
    with pytest.raises(ValueError, match="upstream"):
        backprop_vjp(prob, solve_layer(prob), [1.0, 2.0])


def test_point_on_margin_is_degenerate():
    # z = 1 in 1-D with w = 1 puts the point exactly on the kink
    prob = one_d(1.0)
    with pytest.raises(DegenerateMarginError, match="margin"):
        active_set(prob, np.array([1.0]))
    with pytest.raises(DegenerateMarginError):
        implicit_jacobian(prob, np.array([1.0]))


def test_printed_convention_collapses_to_zero():
    rng = np.random.default_rng(0)
    prob = LayerProblem(rng.normal(size=(5, 3)), [1, -1, 1, -1, 1], 1.0, "printed")
    w = solve_layer(prob)
    assert np.all(w == 0.0)
    assert implicit_jacobian(prob, w).active_set.size == 0


@given(st.integers(0, 2**31 - 1))
def test_hessian_is_spd(seed):
    prob = random_instance(np.random.default_rng(seed))
    w = solve_layer(prob)
    try:
        H = implicit_jacobian(prob, w).hessian
    except DegenerateMarginError:
        return
    assert np.allclose(H, H.T)
    assert np.linalg.eigvalsh(H).min() >= 1.0 - 1e-12


def test_problem_validation():
    with pytest.raises(ValueError):
        LayerProblem([[1.0]], [0.5])
    with pytest.raises(ValueError):
        LayerProblem([[1.0]], [1.0], lambda_layer=0.0)
    with pytest.raises(ValueError):
        LayerProblem([[np.nan]], [1.0])


def test_gradcheck_suite_passes():
    results = gradcheck(seed=0, instances=5)
    assert len(results) == 5 and all(r.passed for r in results)
    assert max(r.max_rel_error for r in results) <= 1e-3
