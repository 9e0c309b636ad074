"""Non-linear learned models: epsilon-SVR, GMM regression, MLP and a
recursive autoencoder predictor.

All of them standardize their inputs internally.  The neural models also
scale the power target to [0, 1] while training; SVR and GMM work directly
in watts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import errors
from .core import FeatureSpec, Trace, TrainedModel
from .optim import em_gmm, gaussian_log_density, sgd_backprop, svr_dual_solver

SVM_SPEC = FeatureSpec.identity(["u_cpu", "u_mem"])
GMM_SPEC = FeatureSpec.identity(["u_cpu", "c_ipc", "c_mem_access", "c_cache_tx"])
MLP_SPEC = FeatureSpec.identity(["u_cpu", "u_mem", "u_disk", "u_net"])
RAE_SPEC = FeatureSpec.identity(["u_cpu", "u_mem", "u_disk", "u_net"])

RAE_PREDICTION_WEIGHT = 0.95
RAE_RECONSTRUCTION_WEIGHT = 0.05
RAE_L2 = 1e-4


def _standardize_fit(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def _target_scale(y):
    lo, hi = float(y.min()), float(y.max())
    return lo, (hi - lo) if hi > lo else 1.0


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# --- support vector regression ------------------------------------------------


def kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, gamma: float | None = None) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        sq = (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :] - 2.0 * A @ B.T
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise errors.InputError(f"unknown kernel {kernel!r}")


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray  # standardized feature rows
    dual_coef: np.ndarray
    bias: float
    kernel: str
    gamma: float | None
    epsilon: float
    C: float
    x_mean: np.ndarray
    x_std: np.ndarray

    def decision(self, X: np.ndarray) -> np.ndarray:
        Z = (X - self.x_mean) / self.x_std
        if len(self.dual_coef) == 0:
            return np.full(len(X), self.bias)
        return kernel_matrix(Z, self.support_vectors, self.kernel, self.gamma) @ self.dual_coef + self.bias

    def to_params(self) -> dict:
        return {
            "support_vectors": self.support_vectors,
            "dual_coef": self.dual_coef,
            "bias": self.bias,
            "kernel": self.kernel,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "C": self.C,
            "x_mean": self.x_mean,
            "x_std": self.x_std,
        }

    @classmethod
    def from_params(cls, p) -> "SvrModel":
        sv = np.asarray(p["support_vectors"], dtype=float)
        return cls(
            sv.reshape(-1, len(p["x_mean"])),
            np.asarray(p["dual_coef"], dtype=float),
            float(p["bias"]),
            p["kernel"],
            p["gamma"],
            float(p["epsilon"]),
            float(p["C"]),
            np.asarray(p["x_mean"], dtype=float),
            np.asarray(p["x_std"], dtype=float),
        )


def fit_svr(
    train: Trace,
    spec: FeatureSpec = SVM_SPEC,
    C: float = 100.0,
    epsilon: float = 0.5,
    kernel: str = "rbf",
    gamma: float | None = None,
    tolerance: float = 1e-3,
    max_iter: int = 100_000,
) -> SvrModel:
    """Epsilon-SVR on standardized features; ``epsilon`` and ``C`` are in watts.

    The default RBF width is ``1 / (n_features * var(Z))`` over the
    standardized training features ``Z``.
    """
    if len(train) == 0:
        raise errors.EmptyTrainingSet("SVR needs training samples")
    X = spec.matrix(train)
    y = train.power
    mean, std = _standardize_fit(X)
    Z = (X - mean) / std
    if kernel == "rbf" and gamma is None:
        var = Z.var()
        gamma = 1.0 / (Z.shape[1] * var) if var > 0 else 1.0
    K = kernel_matrix(Z, Z, kernel, gamma)
    sol = svr_dual_solver(K, y, C, epsilon, tolerance, max_iter)
    keep = sol.coef != 0
    return SvrModel(Z[keep], sol.coef[keep], sol.bias, kernel, gamma, epsilon, C, mean, std)


def predict_svr(model: SvrModel, X: np.ndarray) -> np.ndarray:
    return model.decision(np.atleast_2d(X))


# --- Gaussian mixture regression -------------------------------------------------


@dataclass(frozen=True)
class GmmModel:
    """Joint mixture over (features, power); power is the last coordinate."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    loglik_trail: tuple = ()

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def to_params(self) -> dict:
        return {"weights": self.weights, "means": self.means, "covariances": self.covariances}

    @classmethod
    def from_params(cls, p) -> "GmmModel":
        w = np.asarray(p["weights"], dtype=float)
        m = np.asarray(p["means"], dtype=float).reshape(len(w), -1)
        d = m.shape[1]
        return cls(w, m, np.asarray(p["covariances"], dtype=float).reshape(len(w), d, d))


def fit_gmm_regression(
    train: Trace,
    spec: FeatureSpec = GMM_SPEC,
    n_components: int = 3,
    seed: int = 0,
    reg: float = 1e-6,
    tol: float = 1e-7,
    max_iter: int = 500,
) -> GmmModel:
    if n_components < 1:
        raise errors.InputError("n_components must be >= 1")
    if len(train) < 5 * n_components:
        raise errors.TooFewSamples(f"GMM with {n_components} components needs >= {5 * n_components} samples")
    data = np.column_stack([spec.matrix(train), train.power])
    fit = em_gmm(data, n_components, seed, reg, tol, max_iter)
    return GmmModel(fit.weights, fit.means, fit.covariances, tuple(fit.loglik_trail))


def predict_gmm(model: GmmModel, X: np.ndarray) -> np.ndarray:
    """E[power | features]: responsibility-weighted conditional component means."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    logw, cond = [], []
    for w, mu, S in zip(model.weights, model.means, model.covariances):
        Sxx, Sxy = S[:d, :d], S[:d, d]
        logw.append(math.log(w) + gaussian_log_density(X, mu[:d], Sxx))
        cond.append(mu[d] + (X - mu[:d]) @ np.linalg.solve(Sxx, Sxy))
    logw = np.column_stack(logw)
    logw -= logw.max(axis=1, keepdims=True)
    resp = np.exp(logw)
    resp /= resp.sum(axis=1, keepdims=True)
    return (resp * np.column_stack(cond)).sum(axis=1)


# --- multilayer perceptron ---------------------------------------------------------


def init_mlp(n_in: int, hidden_sizes=(16, 8), seed: int = 0, zero_output: bool = False) -> dict:
    """Uniform(+/- 1/sqrt(fan_in)) weights; the output bias starts at 0.5, mid target scale."""
    if len(hidden_sizes) != 2:
        raise errors.InputError("the MLP has exactly two hidden layers")
    rng = np.random.default_rng(seed)
    sizes = [n_in, *hidden_sizes, 1]
    params = {}
    for layer, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:]), start=1):
        bound = 1.0 / math.sqrt(fan_in)
        params[f"W{layer}"] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params[f"b{layer}"] = rng.uniform(-bound, bound, size=fan_out)
    params["b3"] = np.array([0.5])
    if zero_output:
        params["W3"] = np.zeros_like(params["W3"])
    return params


def mlp_forward(params, X):
    a1 = sigmoid(X @ params["W1"].T + params["b1"])
    a2 = sigmoid(a1 @ params["W2"].T + params["b2"])
    out = a2 @ params["W3"].T + params["b3"]
    return out[:, 0], (a1, a2)


def mlp_loss_grad(params, X, t):
    """Mean squared error over the rows of ``X`` and its gradient."""
    m = len(X)
    pred, (a1, a2) = mlp_forward(params, X)
    err = pred - t
    loss = float(err @ err / m)
    d3 = (2.0 / m) * err[:, None]
    g = {"W3": d3.T @ a2, "b3": d3.sum(axis=0)}
    d2 = (d3 @ params["W3"]) * a2 * (1 - a2)
    g["W2"], g["b2"] = d2.T @ a1, d2.sum(axis=0)
    d1 = (d2 @ params["W2"]) * a1 * (1 - a1)
    g["W1"], g["b1"] = d1.T @ X, d1.sum(axis=0)
    return loss, g


@dataclass(frozen=True)
class MlpModel:
    params: dict
    x_mean: np.ndarray
    x_std: np.ndarray
    y_min: float
    y_scale: float
    loss_history: tuple = ()

    def predict(self, X: np.ndarray) -> np.ndarray:
        Z = (np.atleast_2d(X) - self.x_mean) / self.x_std
        out, _ = mlp_forward(self.params, Z)
        return self.y_min + self.y_scale * out

    def to_params(self) -> dict:
        return {**{k: v for k, v in self.params.items()}, "x_mean": self.x_mean, "x_std": self.x_std,
                "y_min": self.y_min, "y_scale": self.y_scale}

    @classmethod
    def from_params(cls, p) -> "MlpModel":
        x_mean = np.asarray(p["x_mean"], dtype=float)
        n_in = len(x_mean)
        b1, b2 = np.asarray(p["b1"], dtype=float), np.asarray(p["b2"], dtype=float)
        shapes = {"W1": (len(b1), n_in), "W2": (len(b2), len(b1)), "W3": (1, len(b2))}
        params = {k: np.asarray(p[k], dtype=float).reshape(shapes.get(k, (-1,))) for k in ("W1", "b1", "W2", "b2", "W3", "b3")}
        return cls(params, x_mean, np.asarray(p["x_std"], dtype=float), float(p["y_min"]), float(p["y_scale"]))


def fit_mlp(
    train: Trace,
    spec: FeatureSpec = MLP_SPEC,
    hidden_sizes=(16, 8),
    epochs: int = 300,
    learning_rate: float = 0.05,
    seed: int = 0,
    zero_output: bool = False,
) -> MlpModel:
    """Two sigmoid hidden layers trained by per-sample SGD on squared error."""
    if len(train) == 0:
        raise errors.EmptyTrainingSet("MLP needs training samples")
    X = spec.matrix(train)
    mean, std = _standardize_fit(X)
    Z = (X - mean) / std
    y_min, y_scale = _target_scale(train.power)
    t = (train.power - y_min) / y_scale
    params = init_mlp(Z.shape[1], hidden_sizes, seed, zero_output)

    def grad(p, i):
        return mlp_loss_grad(p, Z[i : i + 1], t[i : i + 1])

    res = sgd_backprop(params, grad, len(Z), epochs, learning_rate, seed)
    return MlpModel(res.params, mean, std, y_min, y_scale, tuple(res.loss_history))


# --- recursive autoencoder -----------------------------------------------------------


def rae_objective(pred_err: float, rec_err: float) -> float:
    """Weighted training objective: 0.95 * prediction error + 0.05 * reconstruction error."""
    return RAE_PREDICTION_WEIGHT * pred_err + RAE_RECONSTRUCTION_WEIGHT * rec_err


def init_rae(n_in: int, latent_size: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)

    def uni(fan_out, fan_in):
        b = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-b, b, size=(fan_out, fan_in))

    return {
        "We": uni(latent_size, n_in + latent_size),
        "be": np.zeros(latent_size),
        "Wd": uni(n_in, latent_size),
        "bd": np.zeros(n_in),
        "Wp": uni(1, latent_size),
        "bp": np.array([0.5]),
    }


def rae_encode_sequence(params, X) -> np.ndarray:
    """Latent codes h_t = sigmoid(We [x_t; h_{t-1}] + be) with h_0 = 0; row t is h_t."""
    L = len(params["be"])
    H = np.zeros((len(X), L))
    h = np.zeros(L)
    We, be = params["We"], params["be"]
    for t in range(len(X)):
        h = sigmoid(We @ np.concatenate([X[t], h]) + be)
        H[t] = h
    return H


def rae_previous_latents(params, X) -> np.ndarray:
    H = rae_encode_sequence(params, X)
    return np.vstack([np.zeros((1, H.shape[1])), H[:-1]])


def rae_loss_grad(params, X, t, H_prev):
    """Mean per-sample objective with the previous latent codes held fixed.

    Per sample: 0.95 * ((y - y')^2 + 1e-4 ||Wp||^2) + 0.05 * ||x - x'||^2.
    Returns (loss, grads, (prediction error, reconstruction error)).
    """
    m = len(X)
    inp = np.hstack([X, H_prev])
    h = sigmoid(inp @ params["We"].T + params["be"])
    xr = h @ params["Wd"].T + params["bd"]
    yp = (h @ params["Wp"].T + params["bp"])[:, 0]
    e_y = yp - t
    e_x = xr - X
    w2 = float((params["Wp"] ** 2).sum())
    prd = float(e_y @ e_y / m) + RAE_L2 * w2
    rec = float((e_x**2).sum() / m)
    loss = rae_objective(prd, rec)

    dy = (RAE_PREDICTION_WEIGHT * 2.0 / m) * e_y[:, None]
    dx = (RAE_RECONSTRUCTION_WEIGHT * 2.0 / m) * e_x
    g = {
        "Wp": dy.T @ h + RAE_PREDICTION_WEIGHT * RAE_L2 * 2.0 * params["Wp"],
        "bp": dy.sum(axis=0),
        "Wd": dx.T @ h,
        "bd": dx.sum(axis=0),
    }
    dh = (dy @ params["Wp"] + dx @ params["Wd"]) * h * (1 - h)
    g["We"], g["be"] = dh.T @ inp, dh.sum(axis=0)
    return loss, g, (prd, rec)


@dataclass(frozen=True)
class RaeModel:
    params: dict
    x_mean: np.ndarray
    x_std: np.ndarray
    y_min: float
    y_scale: float
    loss_history: tuple = ()

    @property
    def latent_size(self) -> int:
        return len(self.params["be"])

    def standardize(self, X):
        return (np.atleast_2d(X) - self.x_mean) / self.x_std

    def predict_sequence(self, X: np.ndarray) -> np.ndarray:
        """Predictions over an ordered sequence, carrying the latent code forward."""
        H = rae_encode_sequence(self.params, self.standardize(X))
        out = (H @ self.params["Wp"].T + self.params["bp"])[:, 0]
        return self.y_min + self.y_scale * out

    def reconstruction_error(self, X: np.ndarray) -> float:
        Z = self.standardize(X)
        H = rae_encode_sequence(self.params, Z)
        xr = H @ self.params["Wd"].T + self.params["bd"]
        return float(((xr - Z) ** 2).sum() / len(Z))

    def to_params(self) -> dict:
        return {**self.params, "x_mean": self.x_mean, "x_std": self.x_std, "y_min": self.y_min, "y_scale": self.y_scale}

    @classmethod
    def from_params(cls, p) -> "RaeModel":
        x_mean = np.asarray(p["x_mean"], dtype=float)
        d = len(x_mean)
        L = len(p["be"])
        shapes = {"We": (L, d + L), "Wd": (d, L), "Wp": (1, L)}
        params = {k: np.asarray(p[k], dtype=float).reshape(shapes.get(k, (-1,))) for k in ("We", "be", "Wd", "bd", "Wp", "bp")}
        return cls(params, x_mean, np.asarray(p["x_std"], dtype=float), float(p["y_min"]), float(p["y_scale"]))


def fit_rae(
    train: Trace,
    spec: FeatureSpec = RAE_SPEC,
    latent_size: int = 8,
    epochs: int = 200,
    learning_rate: float = 0.05,
    seed: int = 0,
) -> RaeModel:
    """Joint encoder/decoder/predictor training over the trace in time order.

    Each epoch first re-encodes the whole sequence to refresh the previous
    latent codes, then takes per-sample SGD steps with those codes fixed.
    """
    if latent_size < 1:
        raise errors.InputError("latent_size must be >= 1")
    if len(train) == 0:
        raise errors.EmptyTrainingSet("RAE needs training samples")
    X = spec.matrix(train)
    mean, std = _standardize_fit(X)
    Z = (X - mean) / std
    y_min, y_scale = _target_scale(train.power)
    t = (train.power - y_min) / y_scale
    state = {"H_prev": np.zeros((len(Z), latent_size))}

    def refresh(p):
        state["H_prev"] = rae_previous_latents(p, Z)

    def grad(p, i):
        loss, g, _ = rae_loss_grad(p, Z[i : i + 1], t[i : i + 1], state["H_prev"][i : i + 1])
        return loss, g

    res = sgd_backprop(init_rae(Z.shape[1], latent_size, seed), grad, len(Z), epochs, learning_rate, seed, refresh)
    return RaeModel(res.params, mean, std, y_min, y_scale, tuple(res.loss_history))


# --- catalog adapters ---------------------------------------------------------------

_SVM_KEYS = ("C", "epsilon", "kernel", "gamma", "tolerance", "max_iter")
_GMM_KEYS = ("n_components", "reg", "tol", "max_iter")
_MLP_KEYS = ("hidden_sizes", "epochs", "learning_rate", "zero_output")
_RAE_KEYS = ("latent_size", "epochs", "learning_rate")


def _pick(hp, keys):
    return {k: hp[k] for k in keys if k in hp}


def fit_svm_model(train, profile=None, seed=0, spec=SVM_SPEC, **hp) -> TrainedModel:
    m = fit_svr(train, spec, **_pick(hp, _SVM_KEYS))
    return TrainedModel("svm", m.to_params(), spec)


def fit_gmm_model(train, profile=None, seed=0, spec=GMM_SPEC, **hp) -> TrainedModel:
    m = fit_gmm_regression(train, spec, seed=seed, **_pick(hp, _GMM_KEYS))
    return TrainedModel("gmm", m.to_params(), spec, metadata={"loglik_trail": list(m.loglik_trail)})


def fit_mlp_model(train, profile=None, seed=0, spec=MLP_SPEC, **hp) -> TrainedModel:
    m = fit_mlp(train, spec, seed=seed, **_pick(hp, _MLP_KEYS))
    return TrainedModel("mlp", m.to_params(), spec)


def fit_rae_model(train, profile=None, seed=0, spec=RAE_SPEC, **hp) -> TrainedModel:
    m = fit_rae(train, spec, seed=seed, **_pick(hp, _RAE_KEYS))
    return TrainedModel("rae", m.to_params(), spec)


def predict_svm_model(model: TrainedModel, trace: Trace):
    return predict_svr(SvrModel.from_params(model.parameters), model.feature_spec.matrix(trace))


def predict_gmm_model(model: TrainedModel, trace: Trace):
    return predict_gmm(GmmModel.from_params(model.parameters), model.feature_spec.matrix(trace))


def predict_mlp_model(model: TrainedModel, trace: Trace):
    return MlpModel.from_params(model.parameters).predict(model.feature_spec.matrix(trace))


def predict_rae_model(model: TrainedModel, trace: Trace):
    return RaeModel.from_params(model.parameters).predict_sequence(model.feature_spec.matrix(trace))
