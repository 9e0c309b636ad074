"""Numerical solvers shared by the model families.

Everything here is a pure function of its inputs (plus an explicit seed where
randomness is involved).  Iterative solvers return their convergence trail so
callers and tests can check monotonicity.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple

import numpy as np

from . import errors

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


# --- least squares ---------------------------------------------------------


@dataclass(frozen=True)
class LeastSquaresProblem:
    design: np.ndarray
    targets: np.ndarray
    intercept_mode: str = "free"  # free | fixed | none
    intercept_value: float = 0.0


class LinearSolution(NamedTuple):
    intercept: float
    coef: np.ndarray


def solve_least_squares(problem: LeastSquaresProblem) -> LinearSolution:
    """Minimize ||X b - y||^2 by Householder QR on a column-scaled design.

    A free intercept adds a column of ones; a fixed intercept is subtracted
    from the targets first.  Raises :class:`RankDeficient` when the
    (augmented) design does not have full column rank.
    """
    X = np.atleast_2d(np.asarray(problem.design, dtype=float))
    y = np.asarray(problem.targets, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise errors.LengthMismatch(f"design has {X.shape[0]} rows, targets {y.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise errors.InputError("least-squares inputs must be finite")
    mode = problem.intercept_mode
    if mode == "free":
        A = np.column_stack([np.ones(len(y)), X])
    elif mode in ("fixed", "none"):
        A = X
        if mode == "fixed":
            y = y - problem.intercept_value
    else:
        raise errors.InputError(f"unknown intercept mode {mode!r}")

    n, p = A.shape
    if p == 0:
        return LinearSolution(problem.intercept_value if mode == "fixed" else 0.0, np.zeros(0))
    if n < p:
        raise errors.RankDeficient(f"{n} equations for {p} unknowns")
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0):
        raise errors.RankDeficient(f"design columns {np.flatnonzero(scale == 0).tolist()} are all zero")
    As = A / scale
    sv = np.linalg.svd(As, compute_uv=False)
    if sv[-1] <= sv[0] * max(n, p) * _EPS * 10:
        raise errors.RankDeficient(f"design is rank deficient (condition {sv[0] / max(sv[-1], 1e-300):.3g})")
    Q, R = np.linalg.qr(As)
    beta = np.linalg.solve(R, Q.T @ y) / scale

    if __debug__:
        resid = y - A @ beta
        ortho = np.abs(As.T @ resid).max()
        if ortho > 1e-6 * max(1.0, np.linalg.norm(y)):
            log.warning("least-squares residual not orthogonal to design (max |A'r| = %.3g)", ortho)

    if mode == "free":
        return LinearSolution(float(beta[0]), beta[1:])
    return LinearSolution(problem.intercept_value if mode == "fixed" else 0.0, beta)


# --- lasso -------------------------------------------------------------------


@dataclass(frozen=True)
class LassoProblem:
    """``min_w 1/(2n) ||X w - y||^2 + penalty * ||w||_1``.

    ``design`` is expected standardized and ``targets`` centered; the solver
    fits no intercept.
    """

    design: np.ndarray
    targets: np.ndarray
    penalty: float
    tolerance: float = 1e-7
    max_iter: int = 10_000
    init: np.ndarray | None = None


class LassoResult(NamedTuple):
    coef: np.ndarray
    n_iter: int
    objective_trail: list
    converged: bool


def lasso_objective(X: np.ndarray, y: np.ndarray, w: np.ndarray, penalty: float) -> float:
    r = X @ w - y
    return float(r @ r / (2 * len(y)) + penalty * np.abs(w).sum())


def lasso_lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which the all-zero solution is optimal."""
    return float(np.abs(X.T @ y).max() / len(y)) if X.shape[1] else 0.0


def soft_threshold(z: float, gamma: float) -> float:
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


def coordinate_descent_lasso(problem: LassoProblem) -> LassoResult:
    """Cyclic coordinate descent with soft-thresholding (covariance updates)."""
    X = np.asarray(problem.design, dtype=float)
    y = np.asarray(problem.targets, dtype=float)
    lam = float(problem.penalty)
    if lam < 0:
        raise errors.InputError("lasso penalty must be >= 0")
    if not problem.tolerance > 0:
        raise errors.InputError("lasso tolerance must be > 0")
    n, p = X.shape
    gram = X.T @ X / n
    xty = X.T @ y / n
    diag = np.diag(gram).copy()
    w = np.zeros(p) if problem.init is None else np.array(problem.init, dtype=float)

    trail = [lasso_objective(X, y, w, lam)]
    converged = False
    it = 0
    for it in range(1, problem.max_iter + 1):
        max_delta = 0.0
        for j in range(p):
            if diag[j] <= 0.0:
                w[j] = 0.0
                continue
            old = w[j]
            rho = xty[j] - gram[j] @ w + diag[j] * old
            new = soft_threshold(rho, lam) / diag[j]
            if new != old:
                w[j] = new
                max_delta = max(max_delta, abs(new - old))
        trail.append(lasso_objective(X, y, w, lam))
        if max_delta < problem.tolerance:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"lasso stopped after {problem.max_iter} cycles without converging",
            errors.MaxIterationsExceeded,
            stacklevel=2,
        )
    return LassoResult(w, it, trail, converged)


# --- epsilon-SVR dual -------------------------------------------------------


class SvrDualSolution(NamedTuple):
    coef: np.ndarray  # alpha_i - alpha_i^*, in [-C, C], summing to 0
    bias: float
    n_iter: int
    objective: float


def svr_dual_objective(K: np.ndarray, y: np.ndarray, coef: np.ndarray, epsilon: float) -> float:
    """Dual objective (to minimize): 1/2 b'Kb - y'b + eps * sum|b|."""
    return float(0.5 * coef @ K @ coef - y @ coef + epsilon * np.abs(coef).sum())


def _pair_step(bi, bj, gi, gj, eta, C, eps):
    """Exact minimizer t >= 0 of the dual along beta_i += t, beta_j -= t."""
    t_max = min(C - bi, C + bj)
    points = [0.0] + sorted(x for x in (-bi, bj) if 0.0 < x < t_max) + [t_max]
    lin = gi - gj

    def phi(t):
        return 0.5 * eta * t * t + lin * t + eps * (abs(bi + t) + abs(bj - t))

    best_t, best_v = 0.0, phi(0.0)
    for a, b in zip(points, points[1:]):
        m = 0.5 * (a + b)
        slope = lin + eps * (math.copysign(1.0, bi + m) - math.copysign(1.0, bj - m))
        if eta > 1e-12:
            t = min(max(-slope / eta, a), b)
        else:
            t = b if slope < 0 else a
        v = phi(t)
        if v < best_v:
            best_t, best_v = t, v
    return best_t


def svr_dual_solver(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    epsilon: float,
    tolerance: float = 1e-3,
    max_iter: int = 100_000,
) -> SvrDualSolution:
    """Two-variable working-set solver for the epsilon-SVR dual.

    Works on ``beta = alpha - alpha*`` directly.  Each iteration picks the
    maximal violating pair of bias bounds and minimizes the (piecewise
    quadratic) objective exactly along the pair direction.  Stops when the
    bias bounds overlap to within ``tolerance`` (the KKT gap, in target
    units).
    """
    K = np.asarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if K.shape != (n, n):
        raise errors.LengthMismatch(f"kernel is {K.shape}, targets have {n} entries")
    if not C > 0:
        raise errors.InputError("C must be > 0")
    if epsilon < 0:
        raise errors.InputError("epsilon must be >= 0")

    beta = np.zeros(n)
    grad = -y.copy()  # K beta - y
    diag = np.diag(K)
    snap = 1e-12 * C
    it = 0
    for it in range(1, max_iter + 1):
        h = -grad
        lower = np.where(beta < C, h - epsilon * np.where(beta >= 0, 1.0, -1.0), -np.inf)
        upper = np.where(beta > -C, h + epsilon * np.where(beta <= 0, 1.0, -1.0), np.inf)
        i = int(np.argmax(lower))
        j = int(np.argmin(upper))
        if lower[i] - upper[j] <= tolerance:
            break
        eta = diag[i] + diag[j] - 2.0 * K[i, j]
        t = _pair_step(beta[i], beta[j], grad[i], grad[j], eta, C, epsilon)
        if t <= 0.0:
            raise errors.SolverNotConverged("SVR working-set step made no progress")
        old_i, old_j = beta[i], beta[j]
        for idx, val in ((i, old_i + t), (j, old_j - t)):
            if abs(val) < snap:
                val = 0.0
            elif val > C - snap:
                val = C
            elif val < -C + snap:
                val = -C
            beta[idx] = val
        grad += K[:, i] * (beta[i] - old_i) + K[:, j] * (beta[j] - old_j)
    else:
        raise errors.SolverNotConverged(f"SVR dual not converged after {max_iter} iterations")

    h = -grad
    free = (beta != 0) & (np.abs(beta) < C)
    if free.any():
        bias = float(np.mean(h[free] - epsilon * np.sign(beta[free])))
    else:
        lower = np.where(beta < C, h - epsilon * np.where(beta >= 0, 1.0, -1.0), -np.inf)
        upper = np.where(beta > -C, h + epsilon * np.where(beta <= 0, 1.0, -1.0), np.inf)
        lo, hi = lower.max(), upper.min()
        if np.isfinite(lo) and np.isfinite(hi):
            bias = float(0.5 * (lo + hi))
        else:
            bias = float(lo if np.isfinite(lo) else hi)
    return SvrDualSolution(beta, bias, it, svr_dual_objective(K, y, beta, epsilon))


# --- Gaussian mixtures ------------------------------------------------------


class GmmFit(NamedTuple):
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    loglik_trail: list
    n_iter: int
    converged: bool


def _kmeans_pp(Z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(Z)
    centers = [Z[rng.integers(n)]]
    d2 = ((Z - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(Z[idx])
        d2 = np.minimum(d2, ((Z - Z[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def gaussian_log_density(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    sol = np.linalg.solve(L, (X - mean).T)
    maha = (sol**2).sum(axis=0)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return -0.5 * (X.shape[1] * math.log(2 * math.pi) + logdet + maha)


def _log_joint(X, weights, means, covs):
    return np.column_stack(
        [math.log(w) + gaussian_log_density(X, m, c) for w, m, c in zip(weights, means, covs)]
    )


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True))).ravel()


def gmm_responsibilities(X: np.ndarray, weights, means, covs) -> tuple[np.ndarray, float]:
    """E-step: posterior component probabilities and total log-likelihood."""
    lj = _log_joint(np.asarray(X, dtype=float), weights, means, covs)
    lse = _logsumexp_rows(lj)
    return np.exp(lj - lse[:, None]), float(lse.sum())


def _regularized_cov(S: np.ndarray, reg: float) -> np.ndarray:
    """``S`` if positive definite, else ``S + reg*I`` with reg grown x10 up to 3 times."""
    d = S.shape[0]
    try:
        np.linalg.cholesky(S)
        if np.linalg.eigvalsh(S)[0] > 1e-12 * max(1.0, np.abs(S).max()):
            return S
    except np.linalg.LinAlgError:
        pass
    r = reg
    for _ in range(4):
        cand = S + r * np.eye(d)
        try:
            np.linalg.cholesky(cand)
            return cand
        except np.linalg.LinAlgError:
            r *= 10
    raise errors.DegenerateComponent("covariance stays singular after regularization retries")


def _m_step(Z, resp, reg):
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    if weights.min() < 1e-8:
        raise errors.DegenerateComponent(f"component weight {weights.min():.3g} below 1e-8")
    means = (resp.T @ Z) / nk[:, None]
    covs = []
    for k in range(resp.shape[1]):
        D = Z - means[k]
        S = (resp[:, k, None] * D).T @ D / nk[k]
        covs.append(_regularized_cov(0.5 * (S + S.T), reg))
    return weights, means, np.array(covs)


def em_gmm(
    data: np.ndarray,
    n_components: int,
    seed: int = 0,
    reg: float = 1e-6,
    tol: float = 1e-7,
    max_iter: int = 500,
) -> GmmFit:
    """Expectation-maximization for a full-covariance Gaussian mixture.

    Runs on internally standardized data (results are mapped back).  Means
    are seeded by k-means++ from ``seed``.  ``reg`` is added to the diagonal
    of a covariance only when it is not positive definite.  Stops when the
    total log-likelihood gains less than ``tol`` between iterations.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if n_components < 1:
        raise errors.InputError("n_components must be >= 1")
    if n <= n_components:
        raise errors.InputError(f"need more samples ({n}) than components ({n_components})")
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - shift) / scale
    log_jac = float(n * np.log(scale).sum())

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(Z, n_components, rng)
    nearest = ((Z[:, None, :] - centers[None]) ** 2).sum(axis=2).argmin(axis=1)
    resp = np.eye(n_components)[nearest]
    if resp.sum(axis=0).min() == 0:
        raise errors.DegenerateComponent("k-means++ seeding left a component empty")
    weights, means, covs = _m_step(Z, resp, reg)

    trail = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        resp, ll = gmm_responsibilities(Z, weights, means, covs)
        trail.append(ll - log_jac)
        if len(trail) > 1 and trail[-1] - trail[-2] < tol:
            converged = True
            break
        weights, means, covs = _m_step(Z, resp, reg)

    means = means * scale + shift
    covs = covs * np.outer(scale, scale)[None]
    return GmmFit(weights, means, covs, trail, it, converged)


# --- SGD ---------------------------------------------------------------------

GradFn = Callable[[Mapping[str, np.ndarray], int], tuple[float, Mapping[str, np.ndarray]]]


class SgdResult(NamedTuple):
    params: dict
    loss_history: list


def sgd_backprop(
    params: Mapping[str, np.ndarray],
    grad_fn: GradFn,
    n_samples: int,
    epochs: int,
    learning_rate: float,
    seed: int,
    epoch_hook: Callable[[dict], None] | None = None,
) -> SgdResult:
    """Plain per-sample SGD in seed-shuffled order.

    ``grad_fn(params, i)`` returns the loss on sample ``i`` and the gradient
    of that loss for every parameter.  ``epoch_hook(params)`` runs before each
    epoch (used by recurrent models to refresh state).  The input mapping is
    not modified.
    """
    if learning_rate < 0:
        raise errors.InputError("learning rate must be >= 0")
    if epochs < 0:
        raise errors.InputError("epochs must be >= 0")
    p = {k: np.array(v, dtype=float) for k, v in params.items()}
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(epochs):
        if epoch_hook is not None:
            epoch_hook(p)
        total = 0.0
        for i in rng.permutation(n_samples):
            loss, grads = grad_fn(p, int(i))
            if not math.isfinite(loss):
                raise errors.NonFiniteLoss(f"loss became {loss} in epoch {epoch}; lower the learning rate")
            total += loss
            for k, g in grads.items():
                p[k] -= learning_rate * g
        history.append(total / max(n_samples, 1))
    return SgdResult(p, history)


# --- grid search ----------------------------------------------------------------


def grid_search_scalar(objective: Callable[[float], float], lo: float, hi: float, step: float) -> float:
    """Minimize over the inclusive grid ``lo, lo+step, ..., hi``.

    Values within 1e-12 (relative) of the minimum count as ties and the
    smallest such argument wins.
    """
    if not lo < hi:
        raise errors.InputError("grid needs lo < hi")
    if not step > 0:
        raise errors.InputError("grid step must be > 0")
    count = int(math.floor((hi - lo) / step + 1e-9))
    grid = lo + step * np.arange(count + 1)
    values = np.array([objective(float(x)) for x in grid])
    best = np.nanmin(values)
    idx = int(np.flatnonzero(values <= best + 1e-12 * (1.0 + abs(best)))[0])
    return float(grid[idx])
