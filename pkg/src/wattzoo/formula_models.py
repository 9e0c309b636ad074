"""Fixed slope/intercept power models and their calibrations.

These models are anchored on the idle power ``p_min`` and the full-load power
``p_max`` of a :class:`~wattzoo.core.ServerProfile`; only the non-linear
variants carry parameters estimated from data (``r`` or ``alpha, beta``).
All utilizations are fractions in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import errors
from .core import FeatureSpec, ServerProfile, Trace, TrainedModel, derive_server_profile
from .optim import grid_search_scalar

CPU_SPEC = FeatureSpec.identity(["u_cpu"], intercept_mode="fixed")
THROUGHPUT_SPEC = FeatureSpec.identity(["throughput"], intercept_mode="fixed")

R_BOUNDS = (1.0, 3.0)
R_STEP = 0.001


def _check_u(u):
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0) | (arr > 1)):
        raise errors.OutOfRangeUtilization(f"utilization must lie in [0, 1], got {u!r}")
    return arr


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def svlf_linear(profile: ServerProfile, u_cpu):
    """(p_max - p_min) * u + p_min."""
    u = _check_u(u_cpu)
    return _out((profile.p_max - profile.p_min) * u + profile.p_min)


def svlf_k_form(profile: ServerProfile, u_cpu):
    """The same line written with k = p_min / p_max: (1-k) p_max u + k p_max."""
    u = _check_u(u_cpu)
    k = profile.k
    return _out((1 - k) * profile.p_max * u + k * profile.p_max)


def svlf_fixed70(p_max: float, u_cpu):
    """Idle power assumed to be 70% of peak: p_max (0.7 + 0.3 u)."""
    if not p_max > 0:
        raise errors.InvalidProfile("p_max must be > 0")
    u = _check_u(u_cpu)
    return _out(p_max * (0.7 + 0.3 * u))


def throughput_linear_fixed(profile: ServerProfile, throughput):
    """Linear in throughput relative to the application's maximum."""
    tmax = profile.throughput_max
    if tmax is None or not tmax > 0:
        raise errors.MissingThroughputMax("profile needs a positive throughput_max")
    x = np.asarray(throughput, dtype=float)
    if np.any(~np.isfinite(x)) or np.any((x < 0) | (x > tmax * (1 + 1e-12))):
        raise errors.OutOfRangeThroughput(f"throughput must lie in [0, {tmax}], got {throughput!r}")
    return _out((profile.p_max - profile.p_min) * (x / tmax) + profile.p_min)


# --- piecewise-linear interpolation -------------------------------------


@dataclass(frozen=True)
class InterpolationTable:
    utilization: tuple[float, ...]
    power: tuple[float, ...]

    def __post_init__(self):
        u = tuple(float(x) for x in self.utilization)
        p = tuple(float(x) for x in self.power)
        if len(u) != len(p):
            raise errors.LengthMismatch("knot utilization and power lists differ in length")
        if len(u) < 2:
            raise errors.InsufficientBuckets("an interpolation table needs at least 2 knots")
        if any(b <= a for a, b in zip(u, u[1:])):
            raise errors.InputError("knot utilizations must be strictly increasing")
        object.__setattr__(self, "utilization", u)
        object.__setattr__(self, "power", p)

    @classmethod
    def from_knots(cls, knots) -> "InterpolationTable":
        u, p = zip(*knots)
        return cls(u, p)

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.utilization, self.power))


def fit_interpolation(
    train: Trace,
    bucket_width: float = 0.10,
    profile: ServerProfile | None = None,
) -> InterpolationTable:
    """Knots at bucket centers 0, w, 2w, ..., 1 holding the mean in-bucket power.

    Each sample goes to the nearest bucket center.  An empty first or last
    bucket is pinned to the profile's ``p_min`` / ``p_max`` (derived from
    ``train`` when no profile is given).
    """
    if not 0 < bucket_width <= 1:
        raise errors.InputError("bucket width must lie in (0, 1]")
    u = _check_u(train.column("u_cpu"))
    p = train.power
    n_buckets = max(1, int(round(1.0 / bucket_width)))
    idx = np.floor(u * n_buckets + 0.5).astype(int)
    filled = np.unique(idx)
    if len(filled) < 2:
        raise errors.InsufficientBuckets(f"only {len(filled)} non-empty utilization bucket(s)")
    knots = {int(k): float(p[idx == k].mean()) for k in filled}
    if 0 not in knots or n_buckets not in knots:
        if profile is None:
            profile = derive_server_profile(train)
        knots.setdefault(0, profile.p_min)
        knots.setdefault(n_buckets, profile.p_max)
    order = sorted(knots)
    return InterpolationTable(tuple(k / n_buckets for k in order), tuple(knots[k] for k in order))


def interpolate(table: InterpolationTable, u_cpu):
    """P1 + slope * (u - u1) on the segment enclosing ``u``; exact at knots."""
    u = _check_u(u_cpu)
    ku = np.asarray(table.utilization)
    kp = np.asarray(table.power)
    seg = np.clip(np.searchsorted(ku, u, side="right") - 1, 0, len(ku) - 2)
    u1, u2, p1, p2 = ku[seg], ku[seg + 1], kp[seg], kp[seg + 1]
    out = p1 + (p2 - p1) / (u2 - u1) * (u - u1)
    pos = np.clip(np.searchsorted(ku, u), 0, len(ku) - 1)
    out = np.where(ku[pos] == u, kp[pos], out)
    return _out(out)


# --- calibrated non-linear models ------------------------------------------


@dataclass(frozen=True)
class NonlinearCalibration:
    r: float | None = None
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.r is not None and not R_BOUNDS[0] <= self.r <= R_BOUNDS[1]:
            raise errors.InputError(f"r must lie in {list(R_BOUNDS)}, got {self.r}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise errors.InputError(f"{name} must be > 0, got {v}")


def svnlf_power(profile: ServerProfile, calib: NonlinearCalibration, u_cpu):
    """(p_max - p_min) (2u - u^r) + p_min."""
    u = _check_u(u_cpu)
    return _out((profile.p_max - profile.p_min) * (2 * u - u**calib.r) + profile.p_min)


def svnlf_exponential(profile: ServerProfile, calib: NonlinearCalibration, u_cpu):
    """(p_max - p_min) alpha u^beta + p_min."""
    u = _check_u(u_cpu)
    return _out((profile.p_max - profile.p_min) * calib.alpha * u**calib.beta + profile.p_min)


def calibrate_r(train: Trace, profile: ServerProfile) -> NonlinearCalibration:
    """Grid search r over [1, 3] (step 0.001) for minimum squared error."""
    if len(train) == 0:
        raise errors.EmptyTrainingSet("calibration needs training samples")
    u = _check_u(train.column("u_cpu"))
    p = train.power
    span = profile.p_max - profile.p_min

    def sse(r):
        resid = p - (span * (2 * u - u**r) + profile.p_min)
        return float(resid @ resid)

    return NonlinearCalibration(r=grid_search_scalar(sse, R_BOUNDS[0], R_BOUNDS[1], R_STEP))


def calibrate_alpha_beta(
    train: Trace,
    profile: ServerProfile,
    refine_fraction: float = 0.10,
    refine_points: int = 41,
) -> NonlinearCalibration:
    """Log-linear least squares for (alpha, beta), then a local grid refinement.

    The first stage regresses log((P - p_min)/(p_max - p_min)) on log(u);
    the second scans +/-10% around that estimate on a 41 x 41 grid using the
    untransformed squared error (ties keep the smaller alpha, then beta).
    """
    u = _check_u(train.column("u_cpu"))
    p = train.power
    pos = u > 0
    if not pos.any():
        raise errors.NoPositiveUtilizationSamples("calibration needs samples with u_cpu > 0")
    span = profile.p_max - profile.p_min
    usable = pos & (p > profile.p_min)
    alpha0, beta0 = 1.0, 1.0
    if usable.sum() >= 2 and np.ptp(np.log(u[usable])) > 0:
        x = np.log(u[usable])
        y = np.log((p[usable] - profile.p_min) / span)
        slope, icept = np.polyfit(x, y, 1)
        if slope > 0 and math.isfinite(icept):
            alpha0, beta0 = math.exp(icept), float(slope)

    alphas = alpha0 * np.linspace(1 - refine_fraction, 1 + refine_fraction, refine_points)
    betas = beta0 * np.linspace(1 - refine_fraction, 1 + refine_fraction, refine_points)
    powers = u[None, :] ** betas[:, None]  # (beta, n)
    pred = profile.p_min + span * alphas[:, None, None] * powers[None, :, :]
    sse = ((pred - p) ** 2).sum(axis=2)  # (alpha, beta)
    best = sse.min()
    ia, ib = np.argwhere(sse <= best + 1e-12 * (1 + abs(best)))[0]
    return NonlinearCalibration(alpha=float(alphas[ia]), beta=float(betas[ib]))


# --- catalog adapters -----------------------------------------------------------


def _profile_or_derive(train, profile):
    return profile if profile is not None else derive_server_profile(train)


def fit_svlf_linear(train: Trace, profile: ServerProfile | None = None, **_) -> TrainedModel:
    return TrainedModel("svlf-linear", {}, CPU_SPEC, _profile_or_derive(train, profile))


def fit_svlf_70(train: Trace, profile: ServerProfile | None = None, **_) -> TrainedModel:
    return TrainedModel("svlf-70", {}, CPU_SPEC, _profile_or_derive(train, profile))


def fit_interpolation_model(train: Trace, profile: ServerProfile | None = None, bucket_width: float = 0.10, **_) -> TrainedModel:
    table = fit_interpolation(train, bucket_width, profile)
    return TrainedModel(
        "interpolation",
        {"utilization": np.array(table.utilization), "power": np.array(table.power)},
        CPU_SPEC,
        profile,
    )


def fit_throughput_fixed(train: Trace, profile: ServerProfile | None = None, **_) -> TrainedModel:
    profile = _profile_or_derive(train, profile)
    if profile.throughput_max is None:
        raise errors.MissingThroughputMax("training trace has no throughput column")
    return TrainedModel("throughput-lf", {}, THROUGHPUT_SPEC, profile)


def fit_svnlf_power(train: Trace, profile: ServerProfile | None = None, **_) -> TrainedModel:
    profile = _profile_or_derive(train, profile)
    return TrainedModel("svnlf-power", {"r": calibrate_r(train, profile).r}, CPU_SPEC, profile)


def fit_svnlf_exponential(train: Trace, profile: ServerProfile | None = None, **_) -> TrainedModel:
    profile = _profile_or_derive(train, profile)
    c = calibrate_alpha_beta(train, profile)
    return TrainedModel("svnlf-exp", {"alpha": c.alpha, "beta": c.beta}, CPU_SPEC, profile)


def predict_svlf_linear(model: TrainedModel, trace: Trace):
    return np.asarray(svlf_linear(model.profile, trace.column("u_cpu")))


def predict_svlf_70(model: TrainedModel, trace: Trace):
    return np.asarray(svlf_fixed70(model.profile.p_max, trace.column("u_cpu")))


def predict_interpolation(model: TrainedModel, trace: Trace):
    table = InterpolationTable(tuple(model.parameters["utilization"]), tuple(model.parameters["power"]))
    return np.asarray(interpolate(table, trace.column("u_cpu")))


def predict_throughput_fixed(model: TrainedModel, trace: Trace):
    # observed throughput above the training maximum counts as full load
    tp = np.clip(trace.column("throughput"), 0.0, model.profile.throughput_max)
    return np.asarray(throughput_linear_fixed(model.profile, tp))


def predict_svnlf_power(model: TrainedModel, trace: Trace):
    return np.asarray(svnlf_power(model.profile, NonlinearCalibration(r=model.parameters["r"]), trace.column("u_cpu")))


def predict_svnlf_exponential(model: TrainedModel, trace: Trace):
    calib = NonlinearCalibration(alpha=model.parameters["alpha"], beta=model.parameters["beta"])
    return np.asarray(svnlf_exponential(model.profile, calib, trace.column("u_cpu")))
