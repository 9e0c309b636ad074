"""Domain types shared across the package.

A :class:`Trace` is stored column-wise (one read-only float array per column,
keyed by the trace-CSV column name) and exposes row access through
:class:`Sample` objects.  Feature names used by :class:`FeatureSpec` are the
same column names, e.g. ``u_cpu``, ``temp_c`` or ``c_cache_misses``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import errors

TIMESTAMP = "timestamp_s"
POWER = "power_w"
FRACTION_COLUMNS = ("u_cpu", "u_mem", "u_disk", "u_net")
METRIC_COLUMNS = FRACTION_COLUMNS + ("throughput", "temp_c", "freq_mhz")
COUNTER_PREFIX = "c_"

# Sample attribute -> trace column
SAMPLE_FIELDS = {
    "u_cpu": "u_cpu",
    "u_mem": "u_mem",
    "u_disk": "u_disk",
    "u_net": "u_net",
    "throughput": "throughput",
    "temperature": "temp_c",
    "frequency": "freq_mhz",
}

DEFAULT_IDLE_THRESHOLD = 0.05
DEFAULT_FULL_THRESHOLD = 0.95


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def _column_order(names: Iterable[str]) -> list[str]:
    names = list(names)
    fixed = [c for c in (TIMESTAMP, POWER) + METRIC_COLUMNS if c in names]
    counters = [c for c in names if c.startswith(COUNTER_PREFIX)]
    unknown = [c for c in names if c not in fixed and c not in counters]
    if unknown:
        raise errors.SchemaMismatch(f"unrecognized columns: {unknown}")
    return fixed + counters


@dataclass(frozen=True)
class Sample:
    """One synchronized observation of metrics, counters and power."""

    timestamp: float
    power: float | None = None
    u_cpu: float | None = None
    u_mem: float | None = None
    u_disk: float | None = None
    u_net: float | None = None
    throughput: float | None = None
    counters: tuple[tuple[str, float], ...] = ()
    temperature: float | None = None
    frequency: float | None = None

    def __post_init__(self):
        counters = tuple((str(k), float(v)) for k, v in self.counters)
        names = [k for k, _ in counters]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise errors.SchemaMismatch(f"duplicate counter names: {dup}")
        object.__setattr__(self, "counters", counters)

    def columns(self) -> dict[str, float]:
        """Present fields keyed by trace column name."""
        out = {TIMESTAMP: float(self.timestamp)}
        if self.power is not None:
            out[POWER] = float(self.power)
        for attr, col in SAMPLE_FIELDS.items():
            value = getattr(self, attr)
            if value is not None:
                out[col] = float(value)
        for name, value in self.counters:
            out[COUNTER_PREFIX + name] = value
        return out

    def get(self, name: str) -> float:
        try:
            return self.columns()[name]
        except KeyError:
            raise errors.UnresolvedInput(f"sample has no field {name!r}") from None


class Trace:
    """Time-ordered, schema-homogeneous sequence of samples."""

    def __init__(
        self,
        columns: Mapping[str, Sequence[float]],
        source: str = "",
        resolution: float | None = None,
    ):
        if TIMESTAMP not in columns:
            raise errors.SchemaMismatch(f"trace needs a {TIMESTAMP!r} column")
        order = _column_order(columns)
        cols = {name: _readonly(columns[name]) for name in order}
        n = len(cols[TIMESTAMP])
        for name, arr in cols.items():
            if arr.ndim != 1 or len(arr) != n:
                raise errors.LengthMismatch(f"column {name!r} has {arr.shape} values, expected {n}")
        ts = cols[TIMESTAMP]
        bad = np.flatnonzero(np.diff(ts) <= 0)
        if bad.size:
            raise errors.NonMonotoneTimestamp(int(bad[0]) + 1)
        if resolution is None:
            resolution = float(np.median(np.diff(ts))) if n > 1 else 1.0
        if not resolution > 0:
            raise errors.InputError("trace resolution must be positive")
        self._columns = MappingProxyType(cols)
        self.source = source
        self.resolution = float(resolution)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], source: str = "", resolution: float | None = None) -> "Trace":
        if not samples:
            raise errors.EmptyInput("cannot build a trace from zero samples")
        rows = [s.columns() for s in samples]
        schema = list(rows[0])
        for i, row in enumerate(rows):
            if list(row) != schema:
                raise errors.SchemaMismatch(f"sample {i} has fields {list(row)}, expected {schema}")
        return cls({name: [r[name] for r in rows] for name in schema}, source, resolution)

    # --- access --------------------------------------------------------
    @property
    def columns(self) -> Mapping[str, np.ndarray]:
        return self._columns

    @property
    def column_names(self) -> list[str]:
        return list(self._columns)

    @property
    def counter_names(self) -> list[str]:
        return [c for c in self._columns if c.startswith(COUNTER_PREFIX)]

    @property
    def timestamps(self) -> np.ndarray:
        return self._columns[TIMESTAMP]

    @property
    def has_power(self) -> bool:
        return POWER in self._columns

    @property
    def power(self) -> np.ndarray:
        if POWER not in self._columns:
            raise errors.MissingPower("trace has no power column")
        return self._columns[POWER]

    def has(self, name: str) -> bool:
        return name in self._columns

    def column(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise errors.UnresolvedInput(f"trace has no column {name!r}") from None

    def __len__(self) -> int:
        return len(self._columns[TIMESTAMP])

    def __getitem__(self, i: int) -> Sample:
        n = len(self)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError(i)
        kwargs = {"timestamp": float(self.timestamps[i])}
        if self.has_power:
            kwargs["power"] = float(self.power[i])
        for attr, col in SAMPLE_FIELDS.items():
            if col in self._columns:
                kwargs[attr] = float(self._columns[col][i])
        kwargs["counters"] = tuple(
            (c[len(COUNTER_PREFIX):], float(self._columns[c][i])) for c in self.counter_names
        )
        return Sample(**kwargs)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def samples(self) -> list[Sample]:
        return list(self)

    def __repr__(self) -> str:
        return f"Trace(n={len(self)}, columns={self.column_names}, source={self.source!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return self.column_names == other.column_names and all(
            np.array_equal(self._columns[c], other._columns[c]) for c in self._columns
        )

    # --- derivation ----------------------------------------------------
    def take(self, indices: Sequence[int], source: str | None = None) -> "Trace":
        """Rows at ``indices`` (re-sorted into time order)."""
        idx = np.sort(np.asarray(indices, dtype=int))
        return Trace(
            {k: v[idx] for k, v in self._columns.items()},
            self.source if source is None else source,
            self.resolution,
        )

    def with_columns(self, updates: Mapping[str, Sequence[float]], drop: Iterable[str] = ()) -> "Trace":
        cols = {k: v for k, v in self._columns.items() if k not in set(drop)}
        cols.update(updates)
        return Trace(cols, self.source, self.resolution)

    def without_power(self) -> "Trace":
        return self.with_columns({}, drop=[POWER])


@dataclass(frozen=True)
class ServerProfile:
    """Idle and full-load power of one server."""

    p_min: float
    p_max: float
    throughput_max: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.p_min) and math.isfinite(self.p_max)):
            raise errors.InvalidProfile("profile powers must be finite")
        if not 0 < self.p_min < self.p_max:
            raise errors.InvalidProfile(f"need 0 < p_min < p_max, got p_min={self.p_min}, p_max={self.p_max}")
        if self.throughput_max is not None and not self.throughput_max >= 0:
            raise errors.InvalidProfile("throughput_max must be non-negative")

    @property
    def k(self) -> float:
        return self.p_min / self.p_max

    def to_dict(self) -> dict:
        return {"p_min": self.p_min, "p_max": self.p_max, "throughput_max": self.throughput_max}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ServerProfile":
        return cls(d["p_min"], d["p_max"], d.get("throughput_max"))


# --- feature specs -------------------------------------------------------

_TOKEN = re.compile(r"^(pow|exp):([0-9.eE+-]+)$")
INTERCEPT_MODES = ("free", "fixed", "none")


def parse_basis(token: str) -> tuple[str, float]:
    """``"pow:2"`` -> ``("pow", 2.0)``; ``"exp:3"`` -> ``("exp", 3.0)``."""
    m = _TOKEN.match(token)
    if not m:
        raise errors.InputError(f"bad basis token {token!r}")
    kind, a = m.group(1), float(m.group(2))
    if kind == "exp" and a not in (1.0, 2.0, 3.0):
        raise errors.InputError(f"exp basis exponent must be 1, 2 or 3, got {a}")
    return kind, a


def apply_basis(token: str, x: np.ndarray) -> np.ndarray:
    kind, a = parse_basis(token)
    if kind == "pow":
        return x if a == 1.0 else np.power(x, a)
    return np.exp(np.power(x, a))


@dataclass(frozen=True)
class FeatureSpec:
    """Recipe turning a sample into a feature vector.

    ``basis[i]`` lists the transforms applied to ``inputs[i]``; the feature
    vector is the concatenation in declaration order.
    """

    inputs: tuple[str, ...]
    basis: tuple[tuple[str, ...], ...] = ()
    intercept_mode: str = "free"

    def __post_init__(self):
        inputs = tuple(self.inputs)
        basis = tuple(tuple(b) for b in self.basis) or tuple(("pow:1",) for _ in inputs)
        if len(basis) != len(inputs):
            raise errors.InputError("basis must list transforms for every input")
        for tokens in basis:
            if not tokens:
                raise errors.InputError("every input needs at least one transform")
            for t in tokens:
                parse_basis(t)
        if self.intercept_mode not in INTERCEPT_MODES:
            raise errors.InputError(f"intercept_mode must be one of {INTERCEPT_MODES}")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "basis", basis)

    @classmethod
    def identity(cls, inputs: Sequence[str], intercept_mode: str = "free") -> "FeatureSpec":
        return cls(tuple(inputs), (), intercept_mode)

    @property
    def n_features(self) -> int:
        return sum(len(b) for b in self.basis)

    @property
    def feature_names(self) -> list[str]:
        out = []
        for name, tokens in zip(self.inputs, self.basis):
            for t in tokens:
                kind, a = parse_basis(t)
                if kind == "pow":
                    out.append(name if a == 1.0 else f"{name}^{a:g}")
                else:
                    out.append(f"exp({name})" if a == 1.0 else f"exp({name}^{a:g})")
        return out

    def matrix(self, trace: Trace) -> np.ndarray:
        """Feature matrix with one row per sample of ``trace``."""
        missing = [name for name in self.inputs if not trace.has(name)]
        if missing:
            raise errors.UnresolvedInput(f"trace lacks inputs {missing}")
        cols = [apply_basis(t, trace.column(name)) for name, tokens in zip(self.inputs, self.basis) for t in tokens]
        if not cols:
            return np.zeros((len(trace), 0))
        return np.column_stack(cols)

    def vector(self, sample: Sample) -> np.ndarray:
        values = sample.columns()
        missing = [name for name in self.inputs if name not in values]
        if missing:
            raise errors.UnresolvedInput(f"sample lacks inputs {missing}")
        return np.array(
            [apply_basis(t, np.float64(values[name])) for name, tokens in zip(self.inputs, self.basis) for t in tokens],
            dtype=float,
        )

    def to_dict(self) -> dict:
        return {"inputs": list(self.inputs), "basis": [list(b) for b in self.basis], "intercept_mode": self.intercept_mode}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSpec":
        return cls(tuple(d["inputs"]), tuple(tuple(b) for b in d["basis"]), d.get("intercept_mode", "free"))


# --- fitted models ---------------------------------------------------------


def _freeze_params(params: Mapping) -> Mapping:
    frozen = {}
    for k, v in params.items():
        if isinstance(v, np.ndarray):
            v = v.copy()
            v.setflags(write=False)
        elif isinstance(v, Mapping):
            v = _freeze_params(v)
        elif isinstance(v, list):
            v = tuple(v)
        frozen[k] = v
    return MappingProxyType(frozen)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A fitted power predictor of one catalog kind.

    ``parameters`` is a read-only mapping whose layout depends on ``kind``;
    prediction dispatches through the model catalog.
    """

    kind: str
    parameters: Mapping
    feature_spec: FeatureSpec
    profile: ServerProfile | None = None
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "parameters", _freeze_params(self.parameters))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    def predict_trace(self, trace: Trace) -> np.ndarray:
        """Predicted watts for every sample of ``trace``, in order."""
        from .catalog import predictor_for

        out = np.asarray(predictor_for(self.kind)(self, trace), dtype=float)
        return out

    def predict(self, sample: Sample) -> float:
        trace = Trace.from_samples([sample])
        return float(self.predict_trace(trace)[0])


# --- reports ----------------------------------------------------------------


@dataclass(frozen=True)
class ReportEntry:
    kind: str
    standard_error: float
    n_samples: int


@dataclass(frozen=True)
class EvaluationReport:
    """Per-model standard errors on one dataset, sorted best first."""

    dataset_name: str
    entries: tuple[ReportEntry, ...]
    split_seed: int
    created_at: str = ""
    failures: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        entries = tuple(self.entries)
        for e in entries:
            if not e.standard_error >= 0:
                raise errors.InputError(f"standard error of {e.kind} must be >= 0")
        entries = tuple(sorted(entries, key=lambda e: (e.standard_error, e.kind)))
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "failures", tuple(sorted(tuple(f) for f in self.failures)))

    def error_of(self, kind: str) -> float:
        for e in self.entries:
            if e.kind == kind:
                return e.standard_error
        raise KeyError(kind)

    @property
    def kinds(self) -> list[str]:
        return [e.kind for e in self.entries]


# --- operations ---------------------------------------------------------------


def derive_server_profile(
    trace: Trace,
    idle_threshold: float = DEFAULT_IDLE_THRESHOLD,
    full_threshold: float = DEFAULT_FULL_THRESHOLD,
) -> ServerProfile:
    """Idle/full-load power as mean power over low and high CPU samples."""
    if not trace.has_power:
        raise errors.MissingPower("profile derivation needs measured power")
    u = trace.column("u_cpu")
    p = trace.power
    idle = u <= idle_threshold
    full = u >= full_threshold
    if not idle.any():
        raise errors.MissingRegion(f"no samples with u_cpu <= {idle_threshold}")
    if not full.any():
        raise errors.MissingRegion(f"no samples with u_cpu >= {full_threshold}")
    tmax = float(trace.column("throughput").max()) if trace.has("throughput") else None
    return ServerProfile(float(p[idle].mean()), float(p[full].mean()), tmax)


@dataclass(frozen=True)
class Violation:
    row: int | None
    column: str
    message: str

    def __str__(self) -> str:
        where = f"row {self.row}, " if self.row is not None else ""
        return f"{where}{self.column}: {self.message}"


@dataclass(frozen=True)
class ValidationResult:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def raise_for_violations(self):
        if self.violations:
            raise errors.SchemaMismatch("; ".join(str(v) for v in self.violations))


def validate_trace(trace: Trace, spec: FeatureSpec | None = None, max_per_column: int = 20) -> ValidationResult:
    """Check every name in ``spec`` resolves and every value invariant holds.

    Never raises; returns all violations found (row-level reports are capped
    at ``max_per_column`` per column).
    """
    found: list[Violation] = []
    if spec is not None:
        for name in spec.inputs:
            if not trace.has(name):
                found.append(Violation(None, name, "missing from trace"))

    def check(column, bad_mask, message):
        for row in np.flatnonzero(bad_mask)[:max_per_column]:
            found.append(Violation(int(row), column, f"{message} (got {trace.column(column)[row]!r})"))

    for name, values in trace.columns.items():
        check(name, ~np.isfinite(values), "value must be finite")
        finite = np.where(np.isfinite(values), values, 0.0)
        if name in FRACTION_COLUMNS:
            check(name, (finite < 0) | (finite > 1), "must lie in [0, 1]")
        elif name in (POWER, TIMESTAMP, "throughput") or name.startswith(COUNTER_PREFIX):
            check(name, finite < 0, "must be >= 0")
    return ValidationResult(tuple(found))
