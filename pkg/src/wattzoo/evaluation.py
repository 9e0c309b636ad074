"""Standard error of estimation, model evaluation, comparisons and reports."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import errors
from .catalog import feature_spec_for, fit_model, kind_info
from .core import EvaluationReport, ReportEntry, ServerProfile, Trace, TrainedModel, validate_trace
from .trace_io import SplitDataset

log = logging.getLogger(__name__)

REPORT_FORMATS = ("text-table", "csv", "svg-bars")
CSV_HEADER = "model,standard_error_w,n_samples"


def standard_error(actual, predicted) -> float:
    """Root-mean-square deviation between measured and predicted watts."""
    a = np.asarray(actual, dtype=float).ravel()
    p = np.asarray(predicted, dtype=float).ravel()
    if len(a) != len(p):
        raise errors.LengthMismatch(f"{len(a)} actual values vs {len(p)} predictions")
    if len(a) == 0:
        raise errors.EmptyInput("standard error of an empty sample")
    d = a - p
    return float(np.sqrt(d @ d / len(d)))


def evaluate_model(model: TrainedModel, trace: Trace) -> tuple[float, np.ndarray]:
    """Standard error on ``trace`` and per-sample residuals (measured minus predicted)."""
    if not trace.has_power:
        raise errors.MissingPower(f"trace {trace.source!r} has no power column")
    missing = [n for n in model.feature_spec.inputs if not trace.has(n)]
    if missing:
        raise errors.SchemaMismatch(f"trace {trace.source!r} lacks inputs {missing} required by {model.kind}")
    pred = model.predict_trace(trace)
    resid = trace.power - pred
    return standard_error(trace.power, pred), resid


@dataclass(frozen=True)
class ComparisonRun:
    """A catalog subset fitted on one split and scored on validation plus test traces."""

    kinds: tuple[str, ...]
    split: SplitDataset
    tests: tuple[tuple[str, Trace], ...] = ()
    seed: int = 0
    hyperparameters: Mapping[str, Mapping] = field(default_factory=dict)
    profile: ServerProfile | None = None
    validation_name: str = "validation"

    def __post_init__(self):
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "tests", tuple((str(n), t) for n, t in self.tests))
        for k in self.kinds:
            kind_info(k)
        for k in self.hyperparameters:
            kind_info(k)

    def datasets(self) -> list[tuple[str, Trace]]:
        return [(self.validation_name, self.split.validation), *self.tests]

    def schema_violations(self) -> list[str]:
        """Kinds whose inputs do not resolve on some trace, as readable messages."""
        out = []
        for kind in self.kinds:
            spec = feature_spec_for(kind)
            for name, trace in [("train", self.split.train), *self.datasets()]:
                res = validate_trace(trace, spec)
                missing = [v.column for v in res.violations if v.row is None]
                if missing:
                    out.append(f"{kind} on {name}: missing {', '.join(missing)}")
        return out


def run_comparison(run: ComparisonRun) -> list[EvaluationReport]:
    """One sorted report per dataset; a failing model is annotated, never fatal."""
    fitted: dict[str, TrainedModel] = {}
    fit_failures: dict[str, str] = {}
    for kind in run.kinds:
        try:
            fitted[kind] = fit_model(kind, run.split.train, run.profile, seed=run.seed, **dict(run.hyperparameters.get(kind, {})))
        except errors.WattzooError as exc:
            log.warning("fit of %s failed: %s", kind, exc)
            fit_failures[kind] = f"fit: {type(exc).__name__}: {exc}"

    reports = []
    for name, trace in run.datasets():
        entries, failures = [], dict(fit_failures)
        for kind, model in fitted.items():
            try:
                err, _ = evaluate_model(model, trace)
                if not np.isfinite(err):
                    raise errors.FitError("non-finite predictions")
                entries.append(ReportEntry(kind, err, len(trace)))
            except errors.WattzooError as exc:
                failures[kind] = f"evaluate: {type(exc).__name__}: {exc}"
        reports.append(EvaluationReport(name, tuple(entries), run.split.seed, failures=tuple(failures.items())))
    return reports


# --- rendering -------------------------------------------------------------------


def _render_csv(report: EvaluationReport) -> str:
    lines = [CSV_HEADER] + [f"{e.kind},{e.standard_error:.6f},{e.n_samples}" for e in report.entries]
    return "\n".join(lines) + "\n"


def _render_table(report: EvaluationReport) -> str:
    buf = io.StringIO()
    buf.write(f"dataset: {report.dataset_name}  split seed: {report.split_seed}\n")
    width = max([len("model"), *(len(e.kind) for e in report.entries)])
    buf.write(f"{'rank':>4}  {'model':<{width}}  {'std error (W)':>14}  {'n':>6}\n")
    for i, e in enumerate(report.entries, start=1):
        buf.write(f"{i:>4}  {e.kind:<{width}}  {e.standard_error:>14.6f}  {e.n_samples:>6}\n")
    for kind, why in report.failures:
        buf.write(f"failed  {kind}: {why}\n")
    return buf.getvalue()


def _render_svg(report: EvaluationReport) -> str:
    if not report.entries:
        raise errors.EmptyReport(f"report {report.dataset_name!r} has no entries to plot")
    bar_h, gap, label_w, plot_w, top = 18, 6, 150, 420, 30
    height = top + len(report.entries) * (bar_h + gap) + 10
    width = label_w + plot_w + 90
    peak = max(e.standard_error for e in report.entries) or 1.0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="12">',
        f'<text x="4" y="18">{escape(report.dataset_name)}: standard error of estimation (W)</text>',
    ]
    for i, e in enumerate(report.entries):
        y = top + i * (bar_h + gap)
        w = plot_w * e.standard_error / peak
        out.append(f'<text x="{label_w - 6}" y="{y + 13}" text-anchor="end">{escape(e.kind)}</text>')
        out.append(f'<rect x="{label_w}" y="{y}" width="{w:.2f}" height="{bar_h}" fill="#4a7ab5"/>')
        out.append(f'<text x="{label_w + w + 4:.2f}" y="{y + 13}">{e.standard_error:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_report(report: EvaluationReport, fmt: str = "text-table") -> bytes:
    """Deterministic bytes for ``report`` in one of ``REPORT_FORMATS``."""
    renderers = {"text-table": _render_table, "csv": _render_csv, "svg-bars": _render_svg}
    if fmt not in renderers:
        raise errors.InputError(f"unknown report format {fmt!r}; choose from {REPORT_FORMATS}")
    return renderers[fmt](report).encode("utf-8")


def parse_report_csv(text: str, dataset_name: str = "report", split_seed: int = 0) -> EvaluationReport:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise errors.MalformedHeader(f"report csv must start with {CSV_HEADER!r}")
    entries = []
    for i, ln in enumerate(lines[1:], start=1):
        parts = ln.split(",")
        if len(parts) != 3:
            raise errors.MalformedHeader(f"report row {i} has {len(parts)} cells")
        try:
            entries.append(ReportEntry(parts[0], float(parts[1]), int(parts[2])))
        except ValueError:
            raise errors.NonNumericCell(i, "standard_error_w", parts[1]) from None
    return EvaluationReport(dataset_name, tuple(entries), split_seed)


def in_sample_sse(model: TrainedModel, trace: Trace) -> float:
    resid = trace.power - model.predict_trace(trace)
    return float(resid @ resid)


def order_holds(errors_by_kind: Mapping[str, float], order: Sequence[str], margin: float = 0.0) -> bool:
    """True when each error is below the next one by at least ``margin`` (relative)."""
    vals = [errors_by_kind[k] for k in order]
    return all(a * (1 + margin) < b for a, b in zip(vals, vals[1:]))
