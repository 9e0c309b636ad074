"""Synthetic traces with planted ground truth.

A :class:`GroundTruthSpec` names a true power function over the utilization
metrics, a noise level and a sweep plan.  Generation is a pure function of
``(spec, n_samples, seed)``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import errors
from .core import FRACTION_COLUMNS, POWER, TIMESTAMP, Trace
from .ml_models import GMM_SPEC
from .regression_models import HPC_24_COUNTERS, HPC_33_INPUTS, LASSO_30_COUNTERS, NINE_INPUTS
from .trace_io import atomic_write_text, write_trace_csv

PLANT_DEFAULTS: dict[str, dict] = {
    "linear": {"p_min": 150.0, "p_max": 300.0},
    "svnlf": {"p_min": 100.0, "p_max": 300.0, "r": 2.0},
    "exponential": {"p_min": 100.0, "p_max": 300.0, "alpha": 0.8, "beta": 1.5},
    "multilinear": {"intercept": 120.0, "u_cpu": 100.0, "u_mem": 40.0, "u_disk": 20.0, "u_net": 15.0},
    "composite": {
        "intercept": 120.0, "u_cpu": 60.0, "u_mem": 30.0, "u_disk": 20.0, "u_net": 15.0,
        "cpu_mem": 120.0, "cpu_sq": 60.0,
    },
    "gmm-clusters": {"clusters": [[0.1, 160.0, 0.03], [0.9, 290.0, 0.03]]},
}
SWEEPS = ("cpu", "individual", "mixed")

# every counter name some catalog kind reads
ALL_COUNTERS = tuple(
    dict.fromkeys(
        LASSO_30_COUNTERS
        + HPC_24_COUNTERS
        + tuple(n for n in HPC_33_INPUTS if n.startswith("c_"))
        + tuple(n for n, _ in NINE_INPUTS if n.startswith("c_"))
        + tuple(GMM_SPEC.inputs[1:])
        + ("c_l1_icache_load_misses",)
    )
)


@dataclass(frozen=True)
class GroundTruthSpec:
    """Planted power function, noise level and sweep plan.

    ``params`` overrides the plant defaults in ``PLANT_DEFAULTS``.  Sweeps:
    ``cpu`` ramps u_cpu over [0, 1] with other utilizations idle;
    ``individual`` stresses each resource in turn; ``mixed`` draws all
    utilizations at random with idle and full-CPU rows mixed in.
    """

    plant: str = "linear"
    params: Mapping = field(default_factory=dict)
    noise_sigma: float = 0.0
    sweep: str = "cpu"
    throughput_max: float = 1000.0
    full_metrics: bool = False

    def __post_init__(self):
        if self.plant not in PLANT_DEFAULTS:
            raise errors.InputError(f"unknown plant {self.plant!r}; choose from {sorted(PLANT_DEFAULTS)}")
        if self.sweep not in SWEEPS:
            raise errors.InputError(f"unknown sweep {self.sweep!r}; choose from {SWEEPS}")
        if not self.noise_sigma >= 0:
            raise errors.InputError("noise_sigma must be >= 0")
        unknown = set(self.params) - set(PLANT_DEFAULTS[self.plant])
        if unknown:
            raise errors.InputError(f"plant {self.plant} has no parameters {sorted(unknown)}")
        object.__setattr__(self, "params", {**PLANT_DEFAULTS[self.plant], **dict(self.params)})

    def power(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        """Noise-free planted power for the given utilization columns."""
        p = self.params
        u = np.asarray(columns["u_cpu"], dtype=float)
        if self.plant == "linear":
            return p["p_min"] + (p["p_max"] - p["p_min"]) * u
        if self.plant == "svnlf":
            return p["p_min"] + (p["p_max"] - p["p_min"]) * (2 * u - u ** p["r"])
        if self.plant == "exponential":
            return p["p_min"] + (p["p_max"] - p["p_min"]) * p["alpha"] * u ** p["beta"]
        if self.plant == "gmm-clusters":
            centers = np.array([c[0] for c in p["clusters"]])
            powers = np.array([c[1] for c in p["clusters"]])
            return powers[np.abs(u[:, None] - centers[None, :]).argmin(axis=1)]
        out = p["intercept"] + sum(p[n] * np.asarray(columns[n], dtype=float) for n in FRACTION_COLUMNS)
        if self.plant == "composite":
            out = out + p["cpu_mem"] * u * np.asarray(columns["u_mem"]) + p["cpu_sq"] * u**2
        return out

    def to_dict(self) -> dict:
        return {
            "plant": self.plant,
            "params": dict(self.params),
            "noise_sigma": self.noise_sigma,
            "sweep": self.sweep,
            "throughput_max": self.throughput_max,
            "full_metrics": self.full_metrics,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "GroundTruthSpec":
        return cls(**d)


def _utilizations(spec: GroundTruthSpec, n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    cols = {name: np.zeros(n) for name in FRACTION_COLUMNS}
    if spec.plant == "gmm-clusters":
        clusters = spec.params["clusters"]
        pick = rng.integers(len(clusters), size=n)
        centers = np.array([c[0] for c in clusters])[pick]
        spread = np.array([c[2] for c in clusters])[pick]
        cols["u_cpu"] = np.clip(centers + spread * rng.standard_normal(n), 0.0, 1.0)
        return cols
    if spec.sweep == "cpu":
        cols["u_cpu"] = np.linspace(0.0, 1.0, n)
    elif spec.sweep == "individual":
        for name, idx in zip(FRACTION_COLUMNS, np.array_split(np.arange(n), len(FRACTION_COLUMNS))):
            if len(idx):
                cols[name][idx] = np.linspace(0.0, 1.0, len(idx)) if len(idx) > 1 else 1.0
    else:
        for name in FRACTION_COLUMNS:
            cols[name] = rng.uniform(0.0, 1.0, n)
        n_end = max(1, n // 10)
        order = rng.permutation(n)
        cols["u_cpu"][order[:n_end]] = 0.0
        cols["u_cpu"][order[n_end : 2 * n_end]] = 1.0
    return cols


def _extra_metrics(cols: dict[str, np.ndarray], n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Counters, temperature and frequency as noisy linear functions of the utilizations."""
    U = np.column_stack([cols[name] for name in FRACTION_COLUMNS])
    out = {}
    for name in ALL_COUNTERS:
        scale = 10.0 ** rng.uniform(1.0, 4.0)
        w = rng.dirichlet(np.ones(4))
        out[name] = np.maximum(scale * (U @ w + 0.05 * rng.standard_normal(n)), 0.0)
    out["temp_c"] = 35.0 + 30.0 * cols["u_cpu"] + 0.5 * rng.standard_normal(n)
    out["freq_mhz"] = 1200.0 + 1200.0 * cols["u_cpu"] + 20.0 * rng.standard_normal(n)
    return out


def generate_trace(spec: GroundTruthSpec, n_samples: int, seed: int) -> Trace:
    """Trace of ``n_samples`` one-second samples under the planted function plus Gaussian noise."""
    if n_samples < 2:
        raise errors.TooFewSamples("generate_trace needs n_samples >= 2")
    rng = np.random.default_rng(seed)
    cols = _utilizations(spec, n_samples, rng)
    cols["throughput"] = spec.throughput_max * cols["u_cpu"]
    if spec.full_metrics:
        cols.update(_extra_metrics(cols, n_samples, rng))
    power = spec.power(cols)
    if spec.noise_sigma > 0:
        power = power + spec.noise_sigma * rng.standard_normal(n_samples)
    cols[POWER] = np.maximum(power, 0.0)
    cols[TIMESTAMP] = np.arange(n_samples, dtype=float)
    return Trace(cols, source=f"synth:{spec.plant}:seed={seed}", resolution=1.0)


def counter_names(n_counters: int) -> tuple[str, ...]:
    if n_counters <= len(LASSO_30_COUNTERS):
        return LASSO_30_COUNTERS[:n_counters]
    return LASSO_30_COUNTERS + tuple(f"c_extra_{i}" for i in range(len(LASSO_30_COUNTERS) + 1, n_counters + 1))


def generate_counter_trace(
    n_samples: int,
    n_counters: int,
    sparsity: int,
    seed: int,
    noise_sigma: float = 0.0,
    intercept: float = 120.0,
) -> tuple[Trace, dict]:
    """Counters i.i.d. uniform on [0, 1]; power is linear in ``sparsity`` of them.

    Returns the trace and the plant (intercept and every counter's slope,
    zero for unplanted counters).
    """
    if not 0 <= sparsity <= n_counters <= 33 or n_counters < 1:
        raise errors.InputError("need 0 <= sparsity <= n_counters <= 33 and n_counters >= 1")
    if n_samples < 2:
        raise errors.TooFewSamples("generate_counter_trace needs n_samples >= 2")
    rng = np.random.default_rng(seed)
    names = counter_names(n_counters)
    X = rng.uniform(0.0, 1.0, size=(n_samples, n_counters))
    slopes = np.zeros(n_counters)
    planted = np.sort(rng.choice(n_counters, size=sparsity, replace=False))
    slopes[planted] = rng.uniform(20.0, 60.0, size=sparsity)
    power = intercept + X @ slopes
    if noise_sigma > 0:
        power = power + noise_sigma * rng.standard_normal(n_samples)
    cols = {name: X[:, i] for i, name in enumerate(names)}
    cols[POWER] = power
    cols[TIMESTAMP] = np.arange(n_samples, dtype=float)
    plant = {
        "intercept": intercept,
        "slopes": {name: float(s) for name, s in zip(names, slopes)},
        "support": [names[i] for i in planted],
        "noise_sigma": noise_sigma,
    }
    return Trace(cols, source=f"synth:counters:seed={seed}", resolution=1.0), plant


def bundled_spec() -> GroundTruthSpec:
    """Composite plant over a mixed workload with every metric and counter present."""
    return GroundTruthSpec("composite", noise_sigma=2.0, sweep="mixed", full_metrics=True)


def generate_bundled_trace(n_samples: int = 200, seed: int = 0) -> Trace:
    return generate_trace(bundled_spec(), n_samples, seed)


def plant_path(trace_path: str | os.PathLike) -> Path:
    p = Path(trace_path)
    return p.with_name(p.stem + ".plant.json")


def write_synthetic(trace: Trace, plant: Mapping, path: str | os.PathLike) -> Path:
    """Write the trace CSV and its sidecar plant JSON; returns the sidecar path."""
    write_trace_csv(trace, path)
    side = plant_path(path)
    atomic_write_text(side, json.dumps(plant, indent=1, sort_keys=True) + "\n")
    return side


def read_plant(path: str | os.PathLike) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def plant_record(spec: GroundTruthSpec, n_samples: int, seed: int) -> dict:
    return {**spec.to_dict(), "n_samples": n_samples, "seed": seed, "k": _k_of(spec)}


def _k_of(spec: GroundTruthSpec):
    p = spec.params
    if "p_min" in p and "p_max" in p and p["p_max"] > 0:
        return p["p_min"] / p["p_max"]
    return None


__all__ = [
    "GroundTruthSpec", "PLANT_DEFAULTS", "SWEEPS", "generate_trace", "generate_counter_trace",
    "generate_bundled_trace", "bundled_spec", "write_synthetic", "read_plant", "plant_path",
    "plant_record", "counter_names", "ALL_COUNTERS",
]
