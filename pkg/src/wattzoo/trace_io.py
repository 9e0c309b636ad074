"""Trace CSV I/O and the measurement pre-processing pipeline.

The pipeline mirrors how power traces are collected on a bench: metric and
power streams are bucketed and averaged, repeated runs of the same experiment
are averaged index-by-index, and the result is split 70/30 into training and
validation sets.
"""

from __future__ import annotations

import csv
import io
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence, Union

import numpy as np

from . import errors
from .core import COUNTER_PREFIX, METRIC_COLUMNS, POWER, TIMESTAMP, Trace

PathOrStream = Union[str, os.PathLike, IO]

TRAIN_FRACTION_NUM, TRAIN_FRACTION_DEN = 7, 10


def _open_text(source: PathOrStream):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, (io.BufferedIOBase, io.RawIOBase)) or "b" in getattr(source, "mode", ""):
        return io.TextIOWrapper(source, encoding="utf-8", newline=""), False
    return source, False


def _read_rows(source: PathOrStream) -> tuple[list[str], list[list[str]]]:
    fh, close = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise errors.MalformedHeader("empty input: no header row") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    finally:
        if close:
            fh.close()
    return [h.strip() for h in header], rows


def _to_float(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise errors.NonNumericCell(row, col, cell) from None
    if not math.isfinite(value):
        raise errors.NonNumericCell(row, col, cell)
    return value


def parse_trace_csv(source: PathOrStream, source_label: str | None = None) -> Trace:
    """Read a trace CSV.

    Required columns are ``timestamp_s`` and ``power_w``; optional columns are
    ``u_cpu, u_mem, u_disk, u_net, throughput, temp_c, freq_mhz`` and any
    column prefixed ``c_`` (a named counter).  Row numbers in errors are
    1-based data rows (the header is row 0).
    """
    header, rows = _read_rows(source)
    if len(set(header)) != len(header):
        raise errors.MalformedHeader(f"duplicate column names in header {header}")
    for required in (TIMESTAMP, POWER):
        if required not in header:
            raise errors.MalformedHeader(f"header lacks required column {required!r}: {header}")
    known = {TIMESTAMP, POWER, *METRIC_COLUMNS}
    unknown = [h for h in header if h not in known and not (h.startswith(COUNTER_PREFIX) and len(h) > 2)]
    if unknown:
        raise errors.MalformedHeader(f"unrecognized columns {unknown}")

    data = {h: [] for h in header}
    prev_t = -math.inf
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise errors.MalformedHeader(f"row {i} has {len(row)} cells, header has {len(header)}")
        for col, cell in zip(header, row):
            data[col].append(_to_float(cell.strip(), i, col))
        t = data[TIMESTAMP][-1]
        if t <= prev_t:
            raise errors.NonMonotoneTimestamp(i)
        prev_t = t
    if not rows:
        raise errors.EmptyInput("trace file has a header but no rows")
    if source_label is None:
        source_label = str(source) if isinstance(source, (str, os.PathLike)) else "stream"
    return Trace(data, source=source_label)


def format_trace_csv(trace: Trace) -> str:
    """Serialize with 9 significant digits per value."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = trace.column_names
    writer.writerow(names)
    cols = [trace.column(n) for n in names]
    for i in range(len(trace)):
        writer.writerow([f"{c[i]:.9g}" for c in cols])
    return buf.getvalue()


def write_trace_csv(trace: Trace, dest: PathOrStream) -> None:
    text = format_trace_csv(trace)
    if isinstance(dest, (str, os.PathLike)):
        atomic_write_text(dest, text)
    else:
        dest.write(text)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary sibling file and rename, so readers never see partial output."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if tmp.exists():
            tmp.unlink()
        raise


# --- raw recordings -------------------------------------------------------


@dataclass(frozen=True)
class RawRecording:
    """Unsynchronized metric and power streams from one experiment."""

    metric_stream: tuple[tuple[float, str, float], ...]
    power_stream: tuple[tuple[float, float], ...]

    def __post_init__(self):
        metric = tuple((float(t), str(n), float(v)) for t, n, v in self.metric_stream)
        power = tuple((float(t), float(w)) for t, w in self.power_stream)
        last: dict[str, float] = {}
        for t, name, _ in metric:
            if t < last.get(name, -math.inf):
                raise errors.InputError(f"metric {name!r} timestamps must be non-decreasing")
            last[name] = t
        ts = [t for t, _ in power]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise errors.InputError("power stream timestamps must be non-decreasing")
        object.__setattr__(self, "metric_stream", metric)
        object.__setattr__(self, "power_stream", power)


def parse_metric_stream_csv(source: PathOrStream) -> list[tuple[float, str, float]]:
    """Long-format metric stream: ``timestamp_s,name,value`` per line."""
    header, rows = _read_rows(source)
    if header != [TIMESTAMP, "name", "value"]:
        raise errors.MalformedHeader(f"metric stream header must be timestamp_s,name,value, got {header}")
    out = []
    for i, row in enumerate(rows, start=1):
        if len(row) != 3:
            raise errors.MalformedHeader(f"row {i} has {len(row)} cells, expected 3")
        out.append((_to_float(row[0], i, TIMESTAMP), row[1].strip(), _to_float(row[2], i, "value")))
    return out


def parse_power_stream_csv(source: PathOrStream) -> list[tuple[float, float]]:
    """Power stream: ``timestamp_s,power_w`` per line."""
    header, rows = _read_rows(source)
    if header != [TIMESTAMP, POWER]:
        raise errors.MalformedHeader(f"power stream header must be timestamp_s,power_w, got {header}")
    out = []
    for i, row in enumerate(rows, start=1):
        if len(row) != 2:
            raise errors.MalformedHeader(f"row {i} has {len(row)} cells, expected 2")
        out.append((_to_float(row[0], i, TIMESTAMP), _to_float(row[1], i, POWER)))
    return out


def synchronize_and_average(raw: RawRecording, bucket: float = 1.0) -> Trace:
    """Average both streams into fixed-width time buckets.

    Buckets start at the earliest timestamp of either stream.  A bucket is
    kept only when it holds at least one power reading and at least one
    reading of every metric; its timestamp is the bucket midpoint.
    """
    if not bucket > 0:
        raise errors.InputError("bucket width must be positive")
    if not raw.metric_stream or not raw.power_stream:
        raise errors.EmptyInput("both streams must be non-empty")
    t0 = min(raw.power_stream[0][0], min(t for t, _, _ in raw.metric_stream))
    names = sorted({n for _, n, _ in raw.metric_stream})

    def key(t):
        return int(math.floor((t - t0) / bucket))

    power_acc: dict[int, list[float]] = defaultdict(list)
    for t, w in raw.power_stream:
        power_acc[key(t)].append(w)
    metric_acc: dict[int, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for t, name, v in raw.metric_stream:
        metric_acc[key(t)][name].append(v)

    keep = sorted(k for k in power_acc if k in metric_acc and all(n in metric_acc[k] for n in names))
    if not keep:
        raise errors.EmptyOverlap("no time bucket holds both power and every metric")
    cols = {TIMESTAMP: [t0 + (k + 0.5) * bucket for k in keep], POWER: [float(np.mean(power_acc[k])) for k in keep]}
    for n in names:
        cols[n] = [float(np.mean(metric_acc[k][n])) for k in keep]
    return Trace(cols, source="synchronized", resolution=bucket)


def average_repetitions(runs: Sequence[Trace], n_required: int = 5) -> Trace:
    """Field-wise mean of repeated runs, aligned by sample index."""
    if len(runs) != n_required:
        raise errors.LengthMismatch(f"expected {n_required} runs, got {len(runs)}")
    first = runs[0]
    for i, r in enumerate(runs[1:], start=1):
        if r.column_names != first.column_names:
            raise errors.SchemaMismatch(f"run {i} columns {r.column_names} differ from run 0 {first.column_names}")
        if len(r) != len(first):
            raise errors.LengthMismatch(f"run {i} has {len(r)} samples, run 0 has {len(first)}")
    cols = {name: np.mean([r.column(name) for r in runs], axis=0) for name in first.column_names}
    return Trace(cols, source=f"mean of {len(runs)} runs", resolution=first.resolution)


@dataclass(frozen=True)
class SplitDataset:
    train: Trace
    validation: Trace
    seed: int
    train_index: np.ndarray = field(repr=False, default=None)
    validation_index: np.ndarray = field(repr=False, default=None)


def train_size(n: int) -> int:
    """ceil(0.7 n), computed in integers."""
    return (TRAIN_FRACTION_NUM * n + TRAIN_FRACTION_DEN - 1) // TRAIN_FRACTION_DEN


def split_70_30(trace: Trace, seed: int) -> SplitDataset:
    """Random 70/30 train/validation split driven only by ``seed``."""
    n = len(trace)
    if n < 4:
        raise errors.TooFewSamples(f"need at least 4 samples to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    k = train_size(n)
    tr, va = np.sort(perm[:k]), np.sort(perm[k:])
    return SplitDataset(
        trace.take(tr, source=f"{trace.source}[train]"),
        trace.take(va, source=f"{trace.source}[validation]"),
        seed,
        tr,
        va,
    )


def normalize_rates(trace: Trace) -> Trace:
    """Scale disk and network rate columns by their trace maxima."""
    updates = {}
    for name in ("u_disk", "u_net"):
        if trace.has(name):
            col = trace.column(name)
            peak = col.max()
            updates[name] = col / peak if peak > 0 else np.zeros_like(col)
    return trace.with_columns(updates) if updates else trace
