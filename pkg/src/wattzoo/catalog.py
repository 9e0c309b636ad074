"""The model catalog: every kind, its family, its formula, fitter and predictor.

Also owns the plain-text model file format used by the CLI::

    wattzoo-model 1
    {"kind": ..., "feature_spec": ..., "profile": ..., "parameters": ...}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import errors, formula_models as fm, ml_models as ml, regression_models as rm
from .core import FeatureSpec, ServerProfile, Trace, TrainedModel
from .trace_io import atomic_write_text

FORMAT_MAGIC = "wattzoo-model"
FORMAT_VERSION = 1

FAMILIES = {
    "SVLF": "single-variable, fixed slope and intercept",
    "SVNLF": "single-variable non-linear, calibrated",
    "MLLV": "learned, linear in parameters",
    "MLNLV": "learned, non-linear",
}


@dataclass(frozen=True)
class CatalogKind:
    kind: str
    family: str
    formula: str
    fit: Callable[..., TrainedModel]
    predict: Callable[[TrainedModel, Trace], np.ndarray]
    hyperparameters: tuple[str, ...] = ()


def _linear_fit(kind):
    def fit(train, profile=None, **hp):
        return rm.fit_catalog_entry(kind, train, profile, **hp)

    return fit


_LINEAR_FORMULAS = {
    "svlr": "P = a + b*u_cpu",
    "svlr-fixed": "P = P_min + b*u_cpu",
    "throughput-lr": "P = a + b*throughput",
    "svpr-2": "P = a + b1*u_cpu + b2*u_cpu^2",
    "svpr-r": "P = a + b1*u_cpu + b2*u_cpu^r, r searched on [1.5, 4]",
    "svpr-3": "P = a + b1*u_cpu + b2*u_cpu^2 + b3*u_cpu^3",
    "mvlr-4": "P = a + b1*u_cpu + b2*u_mem + b3*u_disk + b4*u_net",
    "mvlr-4-fixed": "P = P_min + b1*u_cpu + b2*u_mem + b3*u_disk + b4*u_net",
    "mvlr-3": "P = a + b1*u_cpu + b2*u_mem + b3*u_disk",
    "mvlr-cache": "P = a + b1*u_cpu + b2*u_mem + b3*u_disk + b4*icache_misses",
    "mvlr-9-fixed": "P = P_min + sum_n b_n*C_n over nine metrics, u_cpu and cache misses squared",
    "mvlr-24-temp": "P = a + sum_n b_n*C_n over hardware counters + b_T*temperature",
    "mvlr-33-temp-freq": "P = b0 + sum_n b_n*x_n over counters, CPU load, temperature and frequency",
    "lasso-poly": "P = a + sum_i sum_{a=1..3} w_ia*x_i^a, lasso penalty",
    "lasso-poly-exp": "P = a + sum_i sum_{a=1..3} w_ia*exp(x_i^a), lasso penalty",
    "lasso-30": "P = a + sum_n w_n*C_n over 30 counters, lasso penalty",
}

_LINEAR_FAMILY = {"svlr": "MLLV", "svlr-fixed": "MLLV"}
_LINEAR_HP = ("penalty", "n_lambdas", "lambda_min_ratio")


def _build() -> dict[str, CatalogKind]:
    kinds = [
        CatalogKind("svlf-linear", "SVLF", "P = (P_max - P_min)*u + P_min", fm.fit_svlf_linear, fm.predict_svlf_linear),
        CatalogKind("svlf-70", "SVLF", "P = P_max*(0.7 + 0.3*u)", fm.fit_svlf_70, fm.predict_svlf_70),
        CatalogKind(
            "interpolation", "SVLF", "P = P1 + (P2 - P1)*(u - u1)/(u2 - u1) on the enclosing bucket",
            fm.fit_interpolation_model, fm.predict_interpolation, ("bucket_width",),
        ),
        CatalogKind(
            "throughput-lf", "SVLF", "P = (P_max - P_min)*throughput/throughput_max + P_min",
            fm.fit_throughput_fixed, fm.predict_throughput_fixed,
        ),
        CatalogKind("svnlf-power", "SVNLF", "P = (P_max - P_min)*(2u - u^r) + P_min", fm.fit_svnlf_power, fm.predict_svnlf_power),
        CatalogKind(
            "svnlf-exp", "SVNLF", "P = (P_max - P_min)*alpha*u^beta + P_min", fm.fit_svnlf_exponential, fm.predict_svnlf_exponential
        ),
    ]
    for kind, formula in _LINEAR_FORMULAS.items():
        hp = _LINEAR_HP if kind.startswith("lasso") else ()
        kinds.append(CatalogKind(kind, _LINEAR_FAMILY.get(kind, "MLLV"), formula, _linear_fit(kind), rm.predict_linear, hp))
    kinds += [
        CatalogKind("svm", "MLNLV", "P = sum_i (a_i - a_i*) K(x_i, x) + b, epsilon-SVR", ml.fit_svm_model, ml.predict_svm_model, ml._SVM_KEYS),
        CatalogKind("gmm", "MLNLV", "P = E[P | x] under a joint Gaussian mixture", ml.fit_gmm_model, ml.predict_gmm_model, ml._GMM_KEYS),
        CatalogKind("mlp", "MLNLV", "a = sigmoid(W i + b), two hidden layers", ml.fit_mlp_model, ml.predict_mlp_model, ml._MLP_KEYS),
        CatalogKind(
            "rae", "MLNLV", "min 0.95*E_prd + 0.05*E_ae, recursive autoencoder", ml.fit_rae_model, ml.predict_rae_model, ml._RAE_KEYS
        ),
    ]
    return {k.kind: k for k in kinds}


KINDS: dict[str, CatalogKind] = _build()


def kind_info(kind: str) -> CatalogKind:
    try:
        return KINDS[kind]
    except KeyError:
        raise errors.UnknownModelKind(f"unknown model kind {kind!r}") from None


def predictor_for(kind: str):
    return kind_info(kind).predict


def all_kinds() -> list[str]:
    return list(KINDS)


def feature_spec_for(kind: str) -> FeatureSpec:
    """The inputs a kind reads at fit time (svpr-r refines its exponent later)."""
    info = kind_info(kind)
    if kind in rm.LINEAR_CATALOG:
        return rm.LINEAR_CATALOG[kind].feature_spec
    return {
        "throughput-lf": fm.THROUGHPUT_SPEC,
        "svm": ml.SVM_SPEC,
        "gmm": ml.GMM_SPEC,
        "mlp": ml.MLP_SPEC,
        "rae": ml.RAE_SPEC,
    }.get(info.kind, fm.CPU_SPEC)


def fit_model(kind: str, train: Trace, profile: ServerProfile | None = None, seed: int = 0, **hp) -> TrainedModel:
    """Fit one catalog kind; unknown hyperparameter names are rejected."""
    info = kind_info(kind)
    unknown = sorted(set(hp) - set(info.hyperparameters))
    if unknown:
        raise errors.ConfigError(f"{kind} does not accept hyperparameters {unknown}")
    return info.fit(train, profile, seed=seed, **hp)


def catalog_markdown() -> str:
    lines = ["| kind | family | formula |", "|---|---|---|"]
    for k in KINDS.values():
        lines.append(f"| `{k.kind}` | {k.family} | `{k.formula}` |")
    return "\n".join(lines) + "\n"


# --- model files ----------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, Mapping):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def dumps_model(model: TrainedModel) -> str:
    body = {
        "kind": model.kind,
        "feature_spec": model.feature_spec.to_dict(),
        "profile": model.profile.to_dict() if model.profile is not None else None,
        "parameters": _jsonable(model.parameters),
    }
    return f"{FORMAT_MAGIC} {FORMAT_VERSION}\n" + json.dumps(body, indent=1, sort_keys=True) + "\n"


def loads_model(text: str) -> TrainedModel:
    head, _, rest = text.partition("\n")
    parts = head.split()
    if len(parts) != 2 or parts[0] != FORMAT_MAGIC:
        raise errors.ModelFormatError("not a wattzoo model file")
    try:
        version = int(parts[1])
    except ValueError:
        raise errors.ModelFormatError(f"bad format version {parts[1]!r}") from None
    if version != FORMAT_VERSION:
        raise errors.ModelFormatError(f"model format version {version} is not supported (this build reads {FORMAT_VERSION})")
    try:
        body = json.loads(rest)
        kind_info(body["kind"])
        spec = FeatureSpec.from_dict(body["feature_spec"])
        profile = ServerProfile.from_dict(body["profile"]) if body["profile"] is not None else None
        params = {k: np.asarray(v, dtype=float) if isinstance(v, list) and k != "kernel" else v for k, v in body["parameters"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, errors.WattzooError):
            raise
        raise errors.ModelFormatError(f"corrupt model file: {exc}") from None
    return TrainedModel(body["kind"], params, spec, profile)


def save_model(model: TrainedModel, path: str | os.PathLike) -> None:
    atomic_write_text(path, dumps_model(model))


def load_model(path: str | os.PathLike) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
