"""Command-line experiment runner.

Subcommands::

    bgqt run <config.json> [--seed N] [--out DIR]
    bgqt validate [--filter NAME]
    bgqt parse-weight <file|-> [--kind KIND]
    bgqt list-builtins

Exit codes: 0 success, 1 failed validation checks, 2 config/schema/weight
errors, 3 simulation errors (degenerate measure, negative weight, degenerate
collapse).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .beables import (CosmoSequence, write_flashes_csv, write_sequences_csv,
                      write_trajectories_csv)
from .bohm import run_bohm_ensemble
from .config import DEFAULT_OUTPUT_DIR, Experiment, load_config
from .cosmo import (ConstraintSpec, as_configurations, constrain_levels, default_volumes,
                    exact_posterior, report_marginals, sample_levels, write_marginals_csv)
from .errors import BGQTError, ConfigError
from .grw import run_grw_ensemble
from .reweight import EstimateReport, compare, estimate
from .weightlang import (PRESETS, WeightParseError, WeightTypeError, dump, parse, to_source,
                         type_of, typecheck)

EXIT_OK, EXIT_CHECKS_FAILED, EXIT_CONFIG, EXIT_SIMULATION = 0, 1, 2, 3
WORKERS_ENV = "BGQT_WORKERS"
ARTIFACTS = ("estimates.json", "trajectories.csv", "flashes.csv", "sequences.csv",
             "marginals.csv", "exact_marginals.csv")


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer") from None


def _clean(value):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, np.integer):
        return int(value)
    return value


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _ensemble_summary(report: EstimateReport) -> dict:
    e = report.ensemble
    return {"m": e.m, "sum_w": e.sum_w, "sum_w2": e.sum_w2, "ess": e.ess,
            "log_scale": e.log_scale, "surviving_fraction": e.surviving_fraction,
            "low_ess": bool(e.ess < 0.01 * e.m)}


def _run_physics(exp: Experiment, out: Path, workers: int) -> tuple[dict, dict]:
    if exp.model == "bohm":
        configs = run_bohm_ensemble(exp.model_config, exp.ensemble_size, exp.master_seed)
        csv_name = "trajectories.csv"
        write_trajectories_csv(configs, out / csv_name)
        diag = {"record_stride": exp.model_config.record_stride,
                "wraps": sum(c.diagnostics["wraps"] for c in configs),
                "subdivided_steps": sum(c.diagnostics["subdivided_steps"] for c in configs)}
    else:
        configs = run_grw_ensemble(exp.model_config, exp.ensemble_size, exp.master_seed,
                                   workers=workers)
        csv_name = "flashes.csv"
        write_flashes_csv(configs, out / csv_name)
        diag = {"total_flashes": sum(len(c.flashes) for c in configs)}
    baseline = estimate(configs, None, exp.observables, exp.master_seed)
    guided = estimate(configs, exp.weight, exp.observables, exp.master_seed)
    diag["weight_window_flags"] = guided.weight_diagnostics
    return {"baseline": baseline, "guided": guided}, diag


def _run_cosmo(exp: Experiment, out: Path) -> tuple[dict, dict]:
    chain, n, m = exp.model_config, exp.sequence_length, exp.ensemble_size
    L = chain.n_levels
    levels = sample_levels(chain, n, m, exp.master_seed)
    dvals = chain.deltas[levels]
    sequences = [CosmoSequence(default_volumes(n), d, lv) for lv, d in zip(levels, dvals)]
    configs = as_configurations(sequences, exp.master_seed)
    extra = {}
    for obs in exp.observables:
        col = [obs.extract(c) for c in configs]
        extra[obs.name] = np.array([np.nan if v is None else v for v in col], dtype=float)
    write_sequences_csv(configs, out / "sequences.csv")
    unconstrained = ConstraintSpec.hard([None] * n)
    baseline = constrain_levels(levels, dvals, unconstrained, L, exp.master_seed,
                                sequences=sequences, extra_values=extra)
    guided = constrain_levels(levels, dvals, exp.constraint, L, exp.master_seed,
                              sequences=sequences, extra_values=extra)
    est, _ = report_marginals(guided, n, L)
    write_marginals_csv(est, out / "marginals.csv")
    diag = {"levels": L, "sequence_length": n}
    if exp.constraint.variant == "hard" or exp.constraint.tables is not None:
        post = exact_posterior(chain, exp.constraint, n)
        write_marginals_csv(post.marginals, out / "exact_marginals.csv")
        diag["constraint_mass"] = post.evidence
    return {"baseline": baseline, "guided": guided}, diag


def run_experiment(exp: Experiment, config_bytes: bytes, out: Path, workers: int = 1) -> dict:
    """Run ``exp`` and write its artifacts to ``out``; returns the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    if exp.model == "cosmo":
        reports, diag = _run_cosmo(exp, out)
    else:
        reports, diag = _run_physics(exp, out, workers)
    baseline, guided = reports["baseline"], reports["guided"]
    estimates = {
        "model": exp.model,
        "master_seed": exp.master_seed,
        "ensemble_size": exp.ensemble_size,
        "weight_source_text": guided.weight_source,
        "parameter_bindings": guided.bindings,
        "ensemble": _ensemble_summary(guided),
        "records": guided.to_records(),
        "baseline": baseline.to_records(),
        "comparison": [c.to_dict() for c in compare(baseline, guided)],
        "diagnostics": diag,
    }
    (out / "estimates.json").write_text(_dumps(estimates))
    outputs = {name: _sha256((out / name).read_bytes()) for name in sorted(ARTIFACTS)
               if (out / name).is_file()}
    body = {
        "package": "bgqt", "version": __version__,
        "config": exp.raw,
        "config_sha256": _sha256(config_bytes),
        "master_seed": exp.master_seed,
        "weight_source_text": guided.weight_source,
        "parameter_bindings": guided.bindings,
        "outputs": outputs,
    }
    body["content_hash"] = _sha256(_dumps(body).encode())
    (out / "manifest.json").write_text(_dumps(body))
    return body


# -- subcommands ---------------------------------------------------------------

def _cmd_run(args) -> int:
    try:
        exp, data = load_config(args.config, seed=args.seed, output_dir=args.out)
        workers = _workers()
    except ConfigError as exc:
        print(f"bgqt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run_experiment(exp, data, Path(exp.output_dir), workers)
    except BGQTError as exc:
        print(f"bgqt: simulation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(f"bgqt: diagnostics: {json.dumps(_clean(diag), sort_keys=True)}", file=sys.stderr)
        return EXIT_SIMULATION
    except (ValueError, ArithmeticError) as exc:
        print(f"bgqt: simulation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    print(f"wrote {len(manifest['outputs']) + 1} files to {exp.output_dir} "
          f"(content hash {manifest['content_hash'][:16]})")
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .validate import run_checks
    results = run_checks(args.filter)
    if not results:
        print(f"bgqt: no check matches {args.filter!r}", file=sys.stderr)
        return EXIT_CONFIG
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECKS_FAILED


def _caret(source: str, exc: WeightParseError) -> str:
    lines = source.split("\n")
    line = lines[exc.line - 1] if exc.line <= len(lines) else ""
    return f"  {line}\n  {' ' * (exc.column - 1)}^"


def _cmd_parse_weight(args) -> int:
    source = sys.stdin.read() if args.file == "-" else Path(args.file).read_text()
    try:
        expr = parse(source)
    except WeightParseError as exc:
        print(f"bgqt: {type(exc).__name__}: {exc}", file=sys.stderr)
        print(_caret(source, exc), file=sys.stderr)
        return EXIT_CONFIG
    types = None
    if args.kind:
        try:
            typecheck(expr, args.kind)
        except WeightTypeError as exc:
            print(f"bgqt: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        types = {id(n): type_of(n, args.kind) for n in expr.walk()}
    print(to_source(expr))
    print(dump(expr, types))
    return EXIT_OK


def _cmd_list_builtins(args) -> int:
    for name, (kind, source) in sorted(PRESETS.items()):
        print(f"{name:<14} {kind:<5} {source}")
    return EXIT_OK


class _DefaultsFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Show defaults, except ``None`` ones whose help text already explains them."""

    def _get_help_string(self, action):
        if action.default is None:
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _DefaultsFormatter
    p = argparse.ArgumentParser(
        prog="bgqt", formatter_class=fmt,
        description="Beable-guided quantum theory simulations: sample Bohmian trajectories, "
                    "GRW flashes or cosmological level sequences and reweight them.",
        epilog=f"Environment: {WORKERS_ENV} sets the worker-thread count for GRW ensembles "
               "(default 1); results do not depend on it.")
    p.add_argument("--version", action="version", version=f"bgqt {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", formatter_class=fmt, help="run an experiment config",
                       description="Run an experiment and write estimates.json, ensemble CSVs "
                                   "and manifest.json.")
    r.add_argument("config", help="path to the JSON experiment config")
    r.add_argument("--seed", type=int, default=None,
                   help="override the config's master_seed (default: use the config value)")
    r.add_argument("--out", default=None,
                   help=f"output directory (default: the config's output.dir, else "
                        f"./{DEFAULT_OUTPUT_DIR})")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", formatter_class=fmt, help="run the deterministic self-checks")
    v.add_argument("--filter", default=None, help="only run checks whose name contains this text")
    v.set_defaults(func=_cmd_validate)

    w = sub.add_parser("parse-weight", formatter_class=fmt,
                       help="parse a weight expression and print its syntax tree")
    w.add_argument("file", help="file containing the expression, or - for standard input")
    w.add_argument("--kind", choices=["bohm", "grw", "cosmo"], default=None,
                   help="also type-check for this beable kind and annotate node types")
    w.set_defaults(func=_cmd_parse_weight)

    b = sub.add_parser("list-builtins", formatter_class=fmt, help="list the named weight presets")
    b.set_defaults(func=_cmd_list_builtins)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
