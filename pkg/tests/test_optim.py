import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import max_rel_err, normal_equations, numeric_grad, svr_dual_brute_force
from wattzoo import errors
from wattzoo.optim import (
    LassoProblem,
    LeastSquaresProblem,
    coordinate_descent_lasso,
    em_gmm,
    gmm_responsibilities,
    grid_search_scalar,
    lasso_lambda_max,
    lasso_objective,
    sgd_backprop,
    soft_threshold,
    solve_least_squares,
    svr_dual_objective,
    svr_dual_solver,
)

# --- least squares ---------------------------------------------------------------


def test_ls_identity():
    sol = solve_least_squares(LeastSquaresProblem(np.eye(3), [1, 2, 3], "none"))
    np.testing.assert_allclose(sol.coef, [1, 2, 3])


def test_ls_single_column():
    sol = solve_least_squares(LeastSquaresProblem(np.array([[1.0], [2.0]]), [2, 4], "none"))
    assert sol.coef[0] == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_ls_matches_normal_equation_oracle(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(8, 3))
    y = rng.normal(size=8)
    sol = solve_least_squares(LeastSquaresProblem(X, y, "none"))
    np.testing.assert_allclose(sol.coef, normal_equations(X, y, intercept=False), atol=1e-8)
    sol = solve_least_squares(LeastSquaresProblem(X, y, "free"))
    ref = normal_equations(X, y)
    assert abs(sol.intercept - ref[0]) < 1e-8
    np.testing.assert_allclose(sol.coef, ref[1:], atol=1e-8)


def test_ls_fixed_intercept():
    u = np.linspace(0, 1, 7)
    sol = solve_least_squares(LeastSquaresProblem(u[:, None], 150 + 100 * u, "fixed", 150.0))
    assert sol.intercept == 150.0 and sol.coef[0] == pytest.approx(100, abs=1e-9)


def test_ls_rank_deficient():
    X = np.column_stack([np.arange(5.0), 2 * np.arange(5.0)])
    with pytest.raises(errors.RankDeficient):
        solve_least_squares(LeastSquaresProblem(X, np.ones(5)))
    with pytest.raises(errors.RankDeficient):
        solve_least_squares(LeastSquaresProblem(np.ones((5, 1)), np.ones(5)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 30), st.integers(1, 4))
def test_ls_residual_orthogonality(seed, n, p):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = rng.normal(size=n) * 10
    sol = solve_least_squares(LeastSquaresProblem(X, y))
    r = y - sol.intercept - X @ sol.coef
    scale = np.abs(y).max()
    assert abs(r.sum()) < 1e-6 * n * scale
    assert np.abs(X.T @ r).max() < 1e-6 * n * scale


# --- lasso -------------------------------------------------------------------------


def _std_problem(seed, n=40, p=2):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    X = (X - X.mean(0)) / X.std(0)
    y = X @ rng.normal(size=p) * 3 + rng.normal(size=n)
    return X, y - y.mean()


def test_soft_threshold():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(-3.0, 1.0) == -2.0
    assert soft_threshold(0.5, 1.0) == 0.0


def test_lasso_zero_penalty_is_ols():
    X, y = _std_problem(1, p=4)
    res = coordinate_descent_lasso(LassoProblem(X, y, 0.0))
    ols = solve_least_squares(LeastSquaresProblem(X, y, "none")).coef
    np.testing.assert_allclose(res.coef, ols, atol=1e-4)


def test_lasso_kills_everything_at_lambda_max():
    X, y = _std_problem(2, p=5)
    lam = lasso_lambda_max(X, y)
    assert np.all(coordinate_descent_lasso(LassoProblem(X, y, lam)).coef == 0.0)
    assert np.all(coordinate_descent_lasso(LassoProblem(X, y, 10 * lam)).coef == 0.0)
    assert np.any(coordinate_descent_lasso(LassoProblem(X, y, 0.9 * lam)).coef != 0.0)


@pytest.mark.parametrize("seed", range(3))
def test_lasso_two_features_vs_brute_force_grid(seed):
    X, y = _std_problem(seed)
    lam = 0.3 * lasso_lambda_max(X, y)
    w = coordinate_descent_lasso(LassoProblem(X, y, lam)).coef
    f = lasso_objective(X, y, w, lam)
    g = np.arange(-0.1, 0.1 + 1e-9, 1e-3)
    W0, W1 = np.meshgrid(w[0] + g, w[1] + g, indexing="ij")
    R = X[:, 0][None, None, :] * W0[..., None] + X[:, 1][None, None, :] * W1[..., None] - y
    grid_obj = (R**2).sum(-1) / (2 * len(y)) + lam * (np.abs(W0) + np.abs(W1))
    assert f - grid_obj.min() < 1e-5
    assert grid_obj.min() - f < 1e-5 + 1e-3  # grid resolution cannot beat the optimum by much


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_lasso_objective_non_increasing(seed, frac):
    X, y = _std_problem(seed, p=6)
    res = coordinate_descent_lasso(LassoProblem(X, y, frac * lasso_lambda_max(X, y)))
    trail = np.array(res.objective_trail)
    assert np.all(np.diff(trail) <= 1e-12 * (1 + np.abs(trail[:-1])))


def test_lasso_max_iterations_warning():
    X, y = _std_problem(0, p=3)
    with pytest.warns(errors.MaxIterationsExceeded):
        res = coordinate_descent_lasso(LassoProblem(X, y, 0.0, tolerance=1e-300, max_iter=2))
    assert not res.converged and res.n_iter == 2


def test_lasso_rejects_negative_penalty():
    X, y = _std_problem(0)
    with pytest.raises(errors.InputError):
        coordinate_descent_lasso(LassoProblem(X, y, -1.0))


# --- SVR dual -----------------------------------------------------------------------


def test_svr_constant_targets():
    K = np.eye(4)
    sol = svr_dual_solver(K, np.full(4, 7.0), 1.0, 0.1)
    assert np.all(sol.coef == 0) and sol.bias == pytest.approx(7.0, abs=0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 25))
def test_svr_equality_constraint_and_box(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    K = X @ X.T
    y = rng.normal(size=n) * 5
    C = 2.0
    sol = svr_dual_solver(K, y, C, 0.1)
    assert abs(sol.coef.sum()) < 1e-9
    assert np.all(np.abs(sol.coef) <= C)


@pytest.mark.parametrize("n,seed", [(3, 0), (3, 1), (4, 2), (4, 3)])
def test_svr_vs_exhaustive_dual_enumeration(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 1))
    K = X @ X.T
    y = 2 * X[:, 0] + rng.normal(scale=0.5, size=n)
    C, eps = 1.0, 0.1
    sol = svr_dual_solver(K, y, C, eps, tolerance=1e-6)
    brute = svr_dual_brute_force(K, y, C, eps)
    assert abs(sol.objective - brute) < 1e-2
    assert sol.objective <= brute + 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_svr_kkt_conditions(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(30, 2))
    y = 100 + 50 * X[:, 0] + rng.normal(scale=2, size=30)
    K = np.exp(-0.5 * ((X[:, None] - X[None]) ** 2).sum(-1))
    C, eps, tol = 50.0, 0.5, 1e-3
    sol = svr_dual_solver(K, y, C, eps, tol)
    resid = y - (K @ sol.coef + sol.bias)
    inside = np.abs(resid) < eps - tol
    assert np.all(sol.coef[inside] == 0)
    free = (sol.coef != 0) & (np.abs(sol.coef) < C)
    assert np.all(np.abs(np.abs(resid[free]) - eps) <= tol)


def test_svr_argument_checks():
    with pytest.raises(errors.InputError):
        svr_dual_solver(np.eye(2), [1, 2], 0.0, 0.1)
    with pytest.raises(errors.LengthMismatch):
        svr_dual_solver(np.eye(3), [1, 2], 1.0, 0.1)


def test_svr_not_converged():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 2))
    with pytest.raises(errors.SolverNotConverged):
        svr_dual_solver(X @ X.T, rng.normal(size=20) * 10, 10.0, 0.0, 1e-9, max_iter=2)


def test_svr_dual_objective_formula():
    K = np.array([[2.0, 1.0], [1.0, 2.0]])
    b = np.array([0.5, -0.5])
    assert svr_dual_objective(K, np.array([1.0, 0.0]), b, 0.1) == pytest.approx(0.25 - 0.5 + 0.1)


# --- EM ---------------------------------------------------------------------------


def test_em_single_component_closed_form():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(50, 3)) * [1, 10, 100] + [5, -2, 40]
    fit = em_gmm(Z, 1)
    np.testing.assert_allclose(fit.means[0], Z.mean(0), rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(fit.covariances[0], np.cov(Z.T, bias=True), rtol=1e-9)
    assert fit.weights[0] == 1.0


def test_em_separated_clusters():
    rng = np.random.default_rng(3)
    centers = np.array([[0.0, 0.0], [10.0, 10.0]])
    Z = np.vstack([c + rng.normal(size=(1000, 2)) for c in centers])
    fit = em_gmm(Z, 2, seed=1)
    got = fit.means[np.argsort(fit.means[:, 0])]
    assert np.abs(got - centers).max() < 0.1
    np.testing.assert_allclose(np.sort(fit.weights), [0.5, 0.5], atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 3))
def test_em_monotone_and_normalized(seed, k):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(40, 2)) + rng.integers(0, 3, size=(40, 1)) * 3
    fit = em_gmm(Z, k, seed=seed)
    trail = np.array(fit.loglik_trail)
    assert np.all(np.diff(trail) >= -1e-9)
    assert abs(fit.weights.sum() - 1) < 1e-9
    resp, _ = gmm_responsibilities(Z, fit.weights, fit.means, fit.covariances)
    np.testing.assert_allclose(resp.sum(1), 1.0, atol=1e-9)
    for c in fit.covariances:
        np.testing.assert_allclose(c, c.T)
        assert np.linalg.eigvalsh(c).min() > 0


def test_em_determinism():
    Z = np.random.default_rng(5).normal(size=(60, 2))
    a, b = em_gmm(Z, 3, seed=9), em_gmm(Z, 3, seed=9)
    assert np.array_equal(a.means, b.means) and a.loglik_trail == b.loglik_trail


def test_em_needs_more_samples_than_components():
    with pytest.raises(errors.InputError):
        em_gmm(np.zeros((2, 1)), 2)


def test_em_degenerate_component():
    Z = np.r_[np.zeros(30), [1.0]][:, None]
    with pytest.raises(errors.DegenerateComponent):
        em_gmm(Z, 3, seed=0)


# --- SGD ---------------------------------------------------------------------------


def _linear_neuron(x, y):
    def grad(p, i):
        e = p["w"][0] * x[i] - y[i]
        return float(e * e), {"w": np.array([2 * e * x[i]])}

    return grad


def test_sgd_zero_learning_rate():
    x = np.linspace(0, 1, 10)
    res = sgd_backprop({"w": np.array([0.3])}, _linear_neuron(x, 3 * x), 10, 20, 0.0, 0)
    assert res.params["w"][0] == 0.3 and len(res.loss_history) == 20


def test_sgd_linear_neuron_learns_slope():
    x = np.linspace(0, 1, 20)
    start = {"w": np.array([0.0])}
    res = sgd_backprop(start, _linear_neuron(x, 3 * x), 20, 200, 0.1, 0)
    assert abs(res.params["w"][0] - 3) < 0.01
    assert start["w"][0] == 0.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_sgd_non_finite_loss():
    x = np.linspace(0, 1, 5) * 100
    with pytest.raises(errors.NonFiniteLoss):
        sgd_backprop({"w": np.array([0.0])}, _linear_neuron(x, 2 * x), 5, 50, 10.0, 0)


def test_sgd_gradient_check_tiny_net():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(3, 2))
    t = rng.normal(size=3)
    params = {"W": rng.normal(size=(3, 2)), "v": rng.normal(size=3)}

    def loss(p):
        h = np.tanh(X @ p["W"].T)
        return float(((h @ p["v"] - t) ** 2).mean())

    def grad(p):
        h = np.tanh(X @ p["W"].T)
        e = h @ p["v"] - t
        d = (2 / 3) * e
        dh = np.outer(d, p["v"]) * (1 - h**2)
        return {"W": dh.T @ X, "v": h.T @ d}

    assert max_rel_err(grad(params), numeric_grad(loss, params)) < 1e-4


def test_sgd_epoch_hook_and_determinism():
    calls = []
    x = np.linspace(0, 1, 8)
    g = _linear_neuron(x, 2 * x)
    a = sgd_backprop({"w": np.zeros(1)}, g, 8, 3, 0.1, 4, epoch_hook=lambda p: calls.append(p["w"][0]))
    b = sgd_backprop({"w": np.zeros(1)}, g, 8, 3, 0.1, 4)
    assert len(calls) == 3 and calls[0] == 0.0
    assert np.array_equal(a.params["w"], b.params["w"])


# --- grid search ---------------------------------------------------------------------


def test_grid_quadratic():
    assert grid_search_scalar(lambda x: (x - 2) ** 2, 1, 3, 0.001) == pytest.approx(2.0, abs=1e-12)


def test_grid_constant_picks_lo():
    assert grid_search_scalar(lambda x: 1.0, 1, 3, 0.5) == 1.0


def test_grid_boundary_tie():
    assert grid_search_scalar(lambda x: abs(x - 2.0005), 1, 3, 0.001) == pytest.approx(2.000, abs=1e-12)


def test_grid_includes_upper_end():
    assert grid_search_scalar(lambda x: -x, 1, 3, 0.001) == pytest.approx(3.0)


def test_grid_argument_checks():
    with pytest.raises(errors.InputError):
        grid_search_scalar(lambda x: x, 3, 1, 0.1)
    with pytest.raises(errors.InputError):
        grid_search_scalar(lambda x: x, 1, 3, 0)
