"""wattzoo: a catalog of software server power models and a harness to compare them."""

from . import errors
from .catalog import KINDS, all_kinds, dumps_model, fit_model, load_model, loads_model, predictor_for, save_model
from .core import (
    EvaluationReport,
    FeatureSpec,
    ReportEntry,
    Sample,
    ServerProfile,
    Trace,
    TrainedModel,
    derive_server_profile,
    validate_trace,
)
from .evaluation import ComparisonRun, evaluate_model, render_report, run_comparison, standard_error
from .synth import GroundTruthSpec, generate_counter_trace, generate_trace
from .trace_io import (
    RawRecording,
    SplitDataset,
    average_repetitions,
    normalize_rates,
    parse_trace_csv,
    split_70_30,
    synchronize_and_average,
    write_trace_csv,
)

__version__ = "0.1.0"

__all__ = [
    "errors", "KINDS", "all_kinds", "fit_model", "predictor_for", "save_model", "load_model",
    "dumps_model", "loads_model", "EvaluationReport", "FeatureSpec", "ReportEntry", "Sample",
    "ServerProfile", "Trace", "TrainedModel", "derive_server_profile", "validate_trace",
    "ComparisonRun", "evaluate_model", "render_report", "run_comparison", "standard_error",
    "GroundTruthSpec", "generate_counter_trace", "generate_trace", "RawRecording", "SplitDataset",
    "average_repetitions", "normalize_rates", "parse_trace_csv", "split_70_30",
    "synchronize_and_average", "write_trace_csv",
]
