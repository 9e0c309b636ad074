"""Command-line entry point: ``wattzoo <subcommand> ...``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or validation error.
Set ``WATTZOO_LOG`` (e.g. ``DEBUG``) for verbose logging on stderr.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import errors
from .catalog import all_kinds, feature_spec_for, fit_model, kind_info, load_model, save_model
from .core import derive_server_profile, validate_trace
from .evaluation import REPORT_FORMATS, ComparisonRun, evaluate_model, parse_report_csv, render_report, run_comparison
from .synth import PLANT_DEFAULTS, SWEEPS, GroundTruthSpec, generate_trace, plant_record, write_synthetic
from .trace_io import (
    RawRecording,
    atomic_write_text,
    average_repetitions,
    normalize_rates,
    parse_metric_stream_csv,
    parse_power_stream_csv,
    parse_trace_csv,
    split_70_30,
    synchronize_and_average,
    write_trace_csv,
)

log = logging.getLogger("wattzoo")

EXTENSIONS = {"csv": ".csv", "text-table": ".txt", "svg-bars": ".svg"}
RUN_KEYS = {"trace", "models", "seed", "idle_threshold", "full_threshold", "formats", "normalize_rates"}


class UsageError(errors.InputError):
    pass


# --- configuration ---------------------------------------------------------------


def _value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip()


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


@dataclass
class RunConfig:
    trace: Path
    models: list[str]
    seed: int = 0
    idle_threshold: float = 0.05
    full_threshold: float = 0.95
    formats: list[str] = field(default_factory=lambda: ["csv", "text-table"])
    normalize_rates: bool = False
    tests: dict[str, Path] = field(default_factory=dict)
    hyperparameters: dict[str, dict] = field(default_factory=dict)


def load_config(path: str | os.PathLike) -> RunConfig:
    """Parse an INI run configuration; unknown keys and missing paths are errors."""
    path = Path(path)
    if not path.is_file():
        raise errors.ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise errors.ConfigError(f"{path}: {exc}") from None
    base = path.parent

    def resolve(p):
        full = (base / p).resolve() if not Path(p).is_absolute() else Path(p)
        if not full.exists():
            raise errors.ConfigError(f"{path}: referenced path {p} does not exist")
        return full

    for section in cp.sections():
        if section not in ("run", "tests") and not section.startswith("model:"):
            raise errors.ConfigError(f"{path}: unknown section [{section}]")
    if not cp.has_section("run"):
        raise errors.ConfigError(f"{path}: missing [run] section")
    run = cp["run"]
    unknown = sorted(set(run) - RUN_KEYS)
    if unknown:
        raise errors.ConfigError(f"{path}: unknown keys in [run]: {', '.join(unknown)}")
    if "trace" not in run:
        raise errors.ConfigError(f"{path}: [run] needs a trace")
    models = _list(run.get("models", "all"))
    if models == ["all"]:
        models = all_kinds()
    for m in models:
        kind_info(m)
    cfg = RunConfig(trace=resolve(run["trace"]), models=models)
    if "seed" in run:
        cfg.seed = int(run["seed"])
    for key in ("idle_threshold", "full_threshold"):
        if key in run:
            setattr(cfg, key, float(run[key]))
    if "formats" in run:
        cfg.formats = _formats(run["formats"])
    if "normalize_rates" in run:
        cfg.normalize_rates = run.getboolean("normalize_rates")
    if cp.has_section("tests"):
        cfg.tests = {name: resolve(p) for name, p in cp["tests"].items()}
    for section in cp.sections():
        if section.startswith("model:"):
            kind = section.split(":", 1)[1]
            allowed = kind_info(kind).hyperparameters
            hp = {k: _value(v) for k, v in cp[section].items()}
            bad = sorted(set(hp) - set(allowed))
            if bad:
                raise errors.ConfigError(f"{path}: [{section}] has unknown keys {', '.join(bad)}")
            cfg.hyperparameters[kind] = hp
    return cfg


def _formats(text: str) -> list[str]:
    fmts = _list(text)
    bad = [f for f in fmts if f not in REPORT_FORMATS]
    if bad or not fmts:
        raise UsageError(f"unknown report formats {bad}; choose from {', '.join(REPORT_FORMATS)}")
    return fmts


# --- subcommands ------------------------------------------------------------------


def _seed(args, default=0) -> int:
    return args.seed if args.seed is not None else default


def _out_dir(args) -> Path:
    d = Path(args.out_dir or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_synth(args) -> int:
    params = {}
    for item in args.param or []:
        key, _, val = item.partition("=")
        params[key] = _value(val)
    spec = GroundTruthSpec(args.plant, params, args.noise, args.sweep, full_metrics=args.full_metrics)
    seed = _seed(args)
    trace = generate_trace(spec, args.n, seed)
    write_synthetic(trace, plant_record(spec, args.n, seed), args.out)
    print(f"wrote {len(trace)} rows to {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    if args.runs:
        if args.metrics or args.power:
            raise UsageError("use either --runs or --metrics/--power, not both")
        trace = average_repetitions([parse_trace_csv(p) for p in args.runs], args.n_required)
    else:
        if not (args.metrics and args.power):
            raise UsageError("preprocess needs --metrics and --power, or --runs")
        raw = RawRecording(tuple(parse_metric_stream_csv(args.metrics)), tuple(parse_power_stream_csv(args.power)))
        trace = synchronize_and_average(raw, args.bucket)
    if args.normalize_rates:
        trace = normalize_rates(trace)
    write_trace_csv(trace, args.out)
    print(f"wrote {len(trace)} rows to {args.out}")
    return 0


def cmd_split(args) -> int:
    trace = parse_trace_csv(args.trace)
    split = split_70_30(trace, _seed(args))
    out = _out_dir(args)
    stem = Path(args.trace).stem
    write_trace_csv(split.train, out / f"{stem}.train.csv")
    write_trace_csv(split.validation, out / f"{stem}.validation.csv")
    print(f"train {len(split.train)} rows, validation {len(split.validation)} rows")
    return 0


def _violations_exit(messages) -> int:
    for m in messages:
        print(f"error: {m}", file=sys.stderr)
    return 2


def cmd_train(args) -> int:
    trace = parse_trace_csv(args.trace)
    hp = {}
    if args.config:
        hp = load_config(args.config).hyperparameters.get(args.model, {})
    res = validate_trace(trace, feature_spec_for(args.model))
    if not res.ok:
        return _violations_exit(str(v) for v in res.violations)
    model = fit_model(args.model, trace, seed=_seed(args), **hp)
    save_model(model, args.out)
    print(f"trained {args.model} on {len(trace)} samples -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    trace = parse_trace_csv(args.trace)
    res = validate_trace(trace, model.feature_spec)
    if not res.ok:
        return _violations_exit(str(v) for v in res.violations)
    err, _ = evaluate_model(model, trace)
    print(f"{model.kind} standard error: {err:.6f} W over {len(trace)} samples")
    return 0


def cmd_compare(args) -> int:
    if not args.config:
        raise UsageError("compare needs --config")
    cfg = load_config(args.config)
    seed = _seed(args, cfg.seed)
    formats = _formats(args.format) if args.format else cfg.formats

    trace = parse_trace_csv(cfg.trace)
    tests = [(name, parse_trace_csv(p)) for name, p in cfg.tests.items()]
    if cfg.normalize_rates:
        trace = normalize_rates(trace)
        tests = [(n, normalize_rates(t)) for n, t in tests]
    split = split_70_30(trace, seed)
    try:
        profile = derive_server_profile(split.train, cfg.idle_threshold, cfg.full_threshold)
    except errors.InputError as exc:
        log.warning("no server profile: %s", exc)
        profile = None
    run = ComparisonRun(tuple(cfg.models), split, tuple(tests), seed, cfg.hyperparameters, profile)
    reports = run_comparison(run)

    out = _out_dir(args)
    status = 0
    for report in reports:
        if cfg.models and not report.entries:
            print(f"error: every model failed on {report.dataset_name}", file=sys.stderr)
            status = 1
        for kind, why in report.failures:
            print(f"warning: {report.dataset_name}: {kind} {why}", file=sys.stderr)
        for fmt in formats:
            if fmt == "svg-bars" and not report.entries:
                continue
            dest = out / f"{report.dataset_name}{EXTENSIONS[fmt]}"
            atomic_write_text(dest, render_report(report, fmt).decode("utf-8"))
            print(f"wrote {dest}")
    return status


def cmd_report(args) -> int:
    text = Path(args.input).read_text(encoding="utf-8")
    report = parse_report_csv(text, Path(args.input).stem)
    fmt = args.format or "text-table"
    if fmt not in REPORT_FORMATS:
        raise UsageError(f"unknown report format {fmt!r}")
    data = render_report(report, fmt).decode("utf-8")
    if args.out:
        atomic_write_text(args.out, data)
    else:
        sys.stdout.write(data)
    return 0


# --- parser ---------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, default):
    p.add_argument("--config", default=default, help="INI run configuration")
    p.add_argument("--seed", type=int, default=default, help="random seed")
    p.add_argument("--out-dir", default=default, help="output directory")
    p.add_argument("--format", default=default, help=f"report format(s): {', '.join(REPORT_FORMATS)}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wattzoo", description="Server power model zoo and benchmarking harness.")
    _global_flags(parser, None)
    shared = argparse.ArgumentParser(add_help=False)
    _global_flags(shared, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[shared], help="generate a synthetic trace with planted ground truth")
    p.add_argument("--plant", choices=sorted(PLANT_DEFAULTS), default="linear")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--sweep", choices=SWEEPS, default="cpu")
    p.add_argument("--full-metrics", action="store_true", help="add counters, temperature and frequency")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="override a plant parameter")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", parents=[shared], help="synchronize raw streams or average repeated runs")
    p.add_argument("--metrics")
    p.add_argument("--power")
    p.add_argument("--bucket", type=float, default=1.0)
    p.add_argument("--runs", nargs="+")
    p.add_argument("--n-required", type=int, default=5)
    p.add_argument("--normalize-rates", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("split", parents=[shared], help="70/30 train/validation split")
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[shared], help="fit one model kind and save it")
    p.add_argument("--model", required=True, choices=all_kinds(), metavar="KIND")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[shared], help="standard error of a saved model on a trace")
    p.add_argument("--model", required=True, help="saved model file")
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", parents=[shared], help="fit a catalog subset and write per-dataset reports")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", parents=[shared], help="re-render a report CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("WATTZOO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except errors.InputError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except errors.FitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
