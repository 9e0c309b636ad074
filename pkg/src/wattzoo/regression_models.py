"""Models that are linear in their parameters.

Every catalog entry is a :class:`~wattzoo.core.FeatureSpec` plus a fitter:
ordinary least squares with a free intercept, least squares with the
intercept pinned to the idle power, or lasso along a regularization path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .core import FeatureSpec, Sample, ServerProfile, Trace, TrainedModel, derive_server_profile
from .optim import (
    LassoProblem,
    LeastSquaresProblem,
    coordinate_descent_lasso,
    grid_search_scalar,
    lasso_lambda_max,
    solve_least_squares,
)
from .trace_io import train_size

# Counter columns (trace names carry the c_ prefix).
LASSO_30_COUNTERS = tuple(
    "c_" + n
    for n in (
        "branch_instructions", "instructions", "cache_misses", "l1_icache_load_misses",
        "branch_loads", "branch_load_misses", "llc_loads", "llc_store_misses",
        "llc_load_misses", "llc_stores", "dtlb_store_misses", "dtlb_load_misses",
        "dtlb_loads", "dtlb_stores", "bus_cycles", "l1_dcache_stores",
        "l1_dcache_load_misses", "l1_dcache_loads", "cpu_cycles", "branch_misses",
        "cache_references", "itlb_loads", "itlb_load_misses", "node_loads",
        "node_stores", "node_load_misses", "node_store_misses", "ref_cycles",
        "if_octets_out", "if_octets_in",
    )
)

# HPC runtime model: hardware counters plus CPU temperature.
HPC_24_COUNTERS = tuple(
    "c_" + n
    for n in (
        "llc_load_misses", "llc_loads", "llc_stores", "llc_store_misses",
        "branch_instructions", "cache_misses", "cache_references", "context_switches",
        "cpu_cycles", "dtlb_load_misses", "dtlb_loads", "dtlb_stores",
        "dtlb_store_misses", "itlb_loads", "itlb_load_misses", "instructions",
        "major_faults", "minor_faults", "page_faults", "dram_access_1",
        "dram_access_2", "bus_transactions",
    )
)

# Correlation-selected HPC model: counters, CPU load, temperature and frequency.
HPC_33_INPUTS = tuple(
    "c_" + n
    for n in (
        "llc_load_misses", "llc_loads", "llc_store_misses", "llc_stores",
        "branch_misses", "branch_instructions", "cache_misses", "cache_references",
        "context_switches", "cpu_cycles", "dtlb_load_misses", "dtlb_loads",
        "dtlb_store_misses", "dtlb_stores", "itlb_load_misses", "itlb_loads",
        "instructions", "major_faults", "minor_faults", "page_faults",
    )
) + ("u_cpu", "c_bus_transactions", "c_dram_access_1", "c_dram_access_2", "temp_c", "freq_mhz")

# Fine-grained model: nine significant metrics/counters, two of them squared.
NINE_INPUTS = (
    ("u_cpu", "pow:2"),
    ("c_context_switches", "pow:1"),
    ("c_cache_references", "pow:1"),
    ("c_cache_misses", "pow:2"),
    ("c_disk_rw_per_s", "pow:1"),
    ("c_tlb_interrupts", "pow:1"),
    ("c_res_interrupts", "pow:1"),
    ("c_nmi_interrupts", "pow:1"),
    ("c_loc_interrupts", "pow:1"),
)

SVPR_R_BOUNDS = (1.5, 4.0)
SVPR_R_STEP = 0.1


def _spec(inputs, basis=(), intercept="free"):
    return FeatureSpec(tuple(inputs), tuple(basis), intercept)


@dataclass(frozen=True)
class ModelCatalogEntry:
    kind: str
    feature_spec: FeatureSpec
    fitter: str  # ols | ols-fixed-intercept | lasso
    penalty: float | None = None

    def __post_init__(self):
        if self.fitter not in ("ols", "ols-fixed-intercept", "lasso"):
            raise errors.InputError(f"unknown fitter {self.fitter!r}")

    @property
    def needs_profile(self) -> bool:
        return self.fitter == "ols-fixed-intercept"


_UTIL4 = ("u_cpu", "u_mem", "u_disk", "u_net")

LINEAR_CATALOG: dict[str, ModelCatalogEntry] = {
    e.kind: e
    for e in (
        ModelCatalogEntry("svlr", _spec(["u_cpu"]), "ols"),
        ModelCatalogEntry("svlr-fixed", _spec(["u_cpu"], intercept="fixed"), "ols-fixed-intercept"),
        ModelCatalogEntry("throughput-lr", _spec(["throughput"]), "ols"),
        ModelCatalogEntry("svpr-2", _spec(["u_cpu"], [("pow:1", "pow:2")]), "ols"),
        # exponent placeholder; fit_linear_model searches it
        ModelCatalogEntry("svpr-r", _spec(["u_cpu"], [("pow:1", "pow:2")]), "ols"),
        ModelCatalogEntry("svpr-3", _spec(["u_cpu"], [("pow:1", "pow:2", "pow:3")]), "ols"),
        ModelCatalogEntry("mvlr-4", _spec(_UTIL4), "ols"),
        ModelCatalogEntry("mvlr-4-fixed", _spec(_UTIL4, intercept="fixed"), "ols-fixed-intercept"),
        ModelCatalogEntry("mvlr-3", _spec(_UTIL4[:3]), "ols"),
        ModelCatalogEntry("mvlr-cache", _spec(_UTIL4[:3] + ("c_l1_icache_load_misses",)), "ols"),
        ModelCatalogEntry(
            "mvlr-9-fixed",
            _spec([n for n, _ in NINE_INPUTS], [(b,) for _, b in NINE_INPUTS], "fixed"),
            "ols-fixed-intercept",
        ),
        ModelCatalogEntry("mvlr-24-temp", _spec(HPC_24_COUNTERS + ("temp_c",)), "ols"),
        ModelCatalogEntry("mvlr-33-temp-freq", _spec(HPC_33_INPUTS), "ols"),
        ModelCatalogEntry("lasso-poly", _spec(["u_cpu", "u_mem"], [("pow:1", "pow:2", "pow:3")] * 2), "lasso"),
        ModelCatalogEntry("lasso-poly-exp", _spec(["u_cpu", "u_mem"], [("exp:1", "exp:2", "exp:3")] * 2), "lasso"),
        ModelCatalogEntry("lasso-30", _spec(LASSO_30_COUNTERS), "lasso"),
    )
}


def build_feature_vector(spec: FeatureSpec, sample: Sample) -> np.ndarray:
    return spec.vector(sample)


# --- lasso helpers -------------------------------------------------------------


def _standardize(X):
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return (X - mean) / std, mean, std


def fit_lasso(X: np.ndarray, y: np.ndarray, penalty: float, init=None):
    """Lasso on standardized features; returns (intercept, slopes, standardized coef) in original units."""
    Z, mean, std = _standardize(X)
    ym = y.mean()
    res = coordinate_descent_lasso(LassoProblem(Z, y - ym, penalty, init=init))
    slopes = res.coef / std
    return float(ym - mean @ slopes), slopes, res.coef


def lasso_path(X: np.ndarray, y: np.ndarray, n_lambdas: int = 20, min_ratio: float = 1e-3) -> np.ndarray:
    Z, _, _ = _standardize(X)
    lam_max = lasso_lambda_max(Z, y - y.mean())
    if lam_max == 0:
        return np.zeros(1)
    return lam_max * np.logspace(0, np.log10(min_ratio), n_lambdas)


def select_lasso_penalty(
    X: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    n_lambdas: int = 20,
    min_ratio: float = 1e-3,
) -> float:
    """Penalty on the path minimizing error on an inner 70/30 split of the training rows."""
    n = len(y)
    if n < 4:
        raise errors.TooFewSamples("lasso penalty selection needs at least 4 samples")
    perm = np.random.default_rng(seed).permutation(n)
    k = train_size(n)
    tr, va = perm[:k], perm[k:]
    path = lasso_path(X[tr], y[tr], n_lambdas, min_ratio)
    best_lam, best_err = path[0], np.inf
    init = None
    for lam in path:
        b0, b, init = fit_lasso(X[tr], y[tr], lam, init)
        err = np.mean((y[va] - b0 - X[va] @ b) ** 2)
        if err < best_err:
            best_lam, best_err = lam, err
    return float(best_lam)


# --- fitting -------------------------------------------------------------------


def _check_ols_size(n, p, kind):
    if n < p + 1:
        raise errors.Underdetermined(f"{kind}: {n} samples for {p} features (need at least {p + 1})")


def fit_linear_model(
    entry: ModelCatalogEntry,
    train: Trace,
    profile: ServerProfile | None = None,
    seed: int = 0,
    penalty: float | None = None,
    n_lambdas: int = 20,
    lambda_min_ratio: float = 1e-3,
    **_,
) -> TrainedModel:
    """Fit one linear catalog entry to ``train``."""
    if len(train) == 0:
        raise errors.EmptyTrainingSet(f"{entry.kind}: empty training trace")
    spec = entry.feature_spec
    y = train.power
    params: dict = {}

    if entry.kind == "svpr-r":
        _check_ols_size(len(train), 2, entry.kind)
        u = train.column("u_cpu")
        X1 = np.column_stack([u, np.zeros_like(u)])

        def sse(r):
            X1[:, 1] = u**r
            sol = solve_least_squares(LeastSquaresProblem(X1, y))
            resid = y - sol.intercept - X1 @ sol.coef
            return float(resid @ resid)

        r = grid_search_scalar(sse, SVPR_R_BOUNDS[0], SVPR_R_BOUNDS[1], SVPR_R_STEP)
        r = round(r, 10)
        spec = FeatureSpec(("u_cpu",), (("pow:1", f"pow:{r!r}"),), "free")
        params["r"] = r

    X = spec.matrix(train)
    if entry.fitter == "lasso":
        lam = penalty if penalty is not None else entry.penalty
        if lam is None:
            lam = select_lasso_penalty(X, y, seed, n_lambdas, lambda_min_ratio)
        intercept, slopes, _ = fit_lasso(X, y, lam)
        params["penalty"] = float(lam)
        fixed = False
    elif entry.fitter == "ols-fixed-intercept":
        if profile is None:
            raise errors.MissingProfile(f"{entry.kind} pins its intercept to p_min and needs a server profile")
        _check_ols_size(len(train), X.shape[1], entry.kind)
        sol = solve_least_squares(LeastSquaresProblem(X, y, "fixed", profile.p_min))
        intercept, slopes, fixed = profile.p_min, sol.coef, True
    else:
        _check_ols_size(len(train), X.shape[1], entry.kind)
        sol = solve_least_squares(LeastSquaresProblem(X, y, "free"))
        intercept, slopes, fixed = sol.intercept, sol.coef, False

    params.update(intercept=float(intercept), slopes=np.asarray(slopes, dtype=float), intercept_fixed=fixed)
    return TrainedModel(entry.kind, params, spec, profile if fixed else None)


def fit_catalog_entry(kind: str, train: Trace, profile: ServerProfile | None = None, **hp) -> TrainedModel:
    try:
        entry = LINEAR_CATALOG[kind]
    except KeyError:
        raise errors.UnknownModelKind(kind) from None
    if entry.needs_profile and profile is None:
        profile = derive_server_profile(train)
    return fit_linear_model(entry, train, profile, **hp)


def predict_linear(model: TrainedModel, trace: Trace) -> np.ndarray:
    X = model.feature_spec.matrix(trace)
    return model.parameters["intercept"] + X @ np.asarray(model.parameters["slopes"])


def in_sample_sse(model: TrainedModel, trace: Trace) -> float:
    resid = trace.power - predict_linear(model, trace)
    return float(resid @ resid)
