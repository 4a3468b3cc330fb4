"""Command-line front end.

Commands:
    search          run the prune-until-one search on a configured oracle
    bench-gen       enumerate a space and record a tabular benchmark file
    bound           tabulate the closed-form error bound over an epoch range
    validate-bound  Monte Carlo validation of the bound over a noise grid
    report          summarize an event log into CSVs and figures

Exit codes: 0 success, 1 configuration error, 2 runtime error,
3 bound violation (empirical rate confidently above a non-vacuous bound).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from typing import Optional, Sequence

from . import __version__
from .config import (
    Config,
    ConfigError,
    build_bound_params,
    build_evaluator,
    build_landscape,
    build_search_config,
    build_spec,
    build_validation_inputs,
    load_config,
)
from .engine import EngineError, run_search, total_epoch_budget
from .oracles import generate_benchmark, write_benchmark
from .report import (
    ReportError,
    parse_event_log,
    plot_bound_validation,
    render_figures,
    replay_final_architecture,
    summarize,
    write_epoch_csv,
    write_probability_csv,
    write_prune_csv,
)
from .space import SpaceError, space_size
from .theory import TheoryError, bound_rows, validate_bound_grid, write_theory_csv

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_BOUND_VIOLATION = 3


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load(args: argparse.Namespace) -> Config:
    overrides = list(args.overrides)
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "jobs", None) is not None:
        overrides.append(f"search.jobs={args.jobs}")
    return load_config(args.config, overrides)


def _write_manifest(
    path: str, cfg: Config, spec, evaluator, search_cfg, seed: int, outputs: dict
) -> None:
    """The immutable pre-run record; completion facts go to the result doc."""
    manifest = {
        "tool": "distprune",
        "version": __version__,
        "started_at": datetime.now(timezone.utc).isoformat(),
        "ended_at": None,
        "seed": seed,
        "space": {
            "num_nodes": spec.num_nodes,
            "num_cell_types": spec.num_cell_types,
            "operations": [op.name for op in spec.operations],
            "num_edges": len(spec.flat_edges),
            "size": str(space_size(spec)),
        },
        "oracle": evaluator.description(),
        "config": {
            "epochs_per_round": search_cfg.epochs_per_round,
            "temperature": search_cfg.temperature,
            "ema_coeff": search_cfg.ema_coeff,
            "metric_direction": search_cfg.metric_direction,
            "jobs": search_cfg.jobs,
        },
        "outputs": outputs,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")


def _cmd_search(args: argparse.Namespace) -> int:
    try:
        cfg = _load(args)
        spec = build_spec(cfg)
        search_cfg = build_search_config(cfg)
        seed = cfg.get_int("seed", 0)
        evaluator = build_evaluator(cfg, spec, seed, search_cfg)
    except ValueError as exc:
        return _fail(str(exc), EXIT_CONFIG)

    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    events_path = os.path.join(out_dir, "events.jsonl")
    checkpoint_path = os.path.join(out_dir, "checkpoint.json")
    manifest_path = os.path.join(out_dir, "manifest.json")
    result_path = os.path.join(out_dir, "result.json")
    outputs = {
        "events": events_path,
        "checkpoint": checkpoint_path,
        "result": result_path,
    }
    _write_manifest(manifest_path, cfg, spec, evaluator, search_cfg, seed, outputs)

    started = time.perf_counter()
    try:
        with open(events_path, "w", encoding="utf-8") as sink:
            result = run_search(
                spec,
                evaluator,
                search_cfg,
                seed,
                event_sink=sink,
                checkpoint_path=checkpoint_path,
            )
    except EngineError as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    wall = time.perf_counter() - started

    document = {
        "final": result.encoded,
        "rounds": result.rounds,
        "per_round_cohort": list(range(spec.num_operations, 1, -1)),
        "total_epochs": result.total_epochs,
        "wall_time_seconds": wall,
        "ended_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(result_path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2)
        handle.write("\n")
    print(f"final architecture: {result.encoded}")
    print(f"rounds: {result.rounds}, total epochs: {result.total_epochs}")
    print(f"outputs in {out_dir}")
    return EXIT_OK


def _cmd_bench_gen(args: argparse.Namespace) -> int:
    try:
        cfg = _load(args)
        spec = build_spec(cfg)
        seed = cfg.get_int("seed", 0)
        landscape = build_landscape(cfg, spec)
    except ValueError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    try:
        benchmark = generate_benchmark(spec, landscape, args.epochs, seed, cap=args.cap)
    except SpaceError as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    with open(args.out, "w", encoding="utf-8") as handle:
        write_benchmark(benchmark, handle)
    print(f"wrote {len(benchmark.entries)} entries x {benchmark.epochs} epochs to {args.out}")
    return EXIT_OK


def _cmd_bound(args: argparse.Namespace) -> int:
    try:
        cfg = _load(args)
        params, e_t_values, num_alive = build_bound_params(cfg)
    except ValueError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    rows = bound_rows(params, e_t_values, num_alive)
    if args.out is None:
        write_theory_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as handle:
            write_theory_csv(rows, handle)
        print(f"wrote {len(rows)} rows to {args.out}")
    vacuous = sum(1 for row in rows if row.vacuous)
    if vacuous:
        print(f"note: {vacuous}/{len(rows)} rows are vacuous (bound >= 1)", file=sys.stderr)
    return EXIT_OK


def _cmd_validate_bound(args: argparse.Namespace) -> int:
    try:
        cfg = _load(args)
        spec = build_spec(cfg)
        seed = cfg.get_int("seed", 0)
        search_cfg = build_search_config(cfg, jobs=1)
        inputs = build_validation_inputs(cfg, spec)
        if args.trials is not None:
            inputs["trials"] = args.trials
    except ValueError as exc:
        return _fail(str(exc), EXIT_CONFIG)

    try:
        grid = validate_bound_grid(
            config=search_cfg, seed=seed, jobs=args.jobs or 1, **inputs
        )
    except TheoryError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    except EngineError as exc:
        return _fail(str(exc), EXIT_RUNTIME)

    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "validation.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        write_theory_csv(grid.rows, handle)
    figure_path = os.path.join(args.out_dir, "validation.png")
    plot_bound_validation(grid.cells, figure_path)

    for cell in grid.cells:
        row = cell.row
        flags = []
        if row.vacuous:
            flags.append("vacuous")
        if cell.violates_bound:
            flags.append("VIOLATION")
        if cell.deviation_mismatch:
            flags.append(
                f"deviation mismatch (measured {cell.measured_deviation:.4f}, "
                f"configured {cell.configured_deviation:.4f})"
            )
        suffix = f"  [{'; '.join(flags)}]" if flags else ""
        print(
            f"beta={cell.beta:g} gamma={cell.gamma:g}: "
            f"bound={row.bound_simplified:.4f} "
            f"rate={row.empirical_rate:.4f} "
            f"ci=[{row.ci_low:.4f}, {row.ci_high:.4f}]{suffix}"
        )
    print(f"wrote {csv_path} and {figure_path}")
    if grid.violations:
        print(
            f"error: {len(grid.violations)} grid cell(s) exceed the bound",
            file=sys.stderr,
        )
        return EXIT_BOUND_VIOLATION
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        with open(args.log, "r", encoding="utf-8") as handle:
            log = parse_event_log(handle)
    except OSError as exc:
        return _fail(f"cannot read log {args.log!r}: {exc}", EXIT_CONFIG)
    except ReportError as exc:
        return _fail(str(exc), EXIT_RUNTIME)

    try:
        replayed = replay_final_architecture(log)
    except ReportError as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    if replayed != log.final_arch:
        return _fail(
            f"replay mismatch: events rebuild {replayed!r} "
            f"but the log's final entry is {log.final_arch!r}",
            EXIT_RUNTIME,
        )

    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    prefix = os.path.splitext(os.path.basename(args.log))[0]
    csv_paths = []
    for name, writer in (
        ("probabilities", write_probability_csv),
        ("prunes", write_prune_csv),
        ("epochs", write_epoch_csv),
    ):
        path = os.path.join(out_dir, f"{prefix}_{name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer(log, handle)
        csv_paths.append(path)
    figure_paths = render_figures(log, out_dir, prefix=prefix)

    print(summarize(log))
    print("replay check: final architecture reconstructed from events matches")
    for path in csv_paths + figure_paths:
        print(f"wrote {path}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distprune",
        description="Distribution-pruning architecture search and bound validation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="path to a `key = value` config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config key (repeatable)",
        )
        p.add_argument("--seed", type=int, default=None, help="override the root seed")

    p = sub.add_parser("search", help="run the architecture search")
    add_config_args(p)
    p.add_argument("--jobs", type=int, default=None, help="concurrent evaluations per round")
    p.add_argument("--out-dir", default="distprune-run", help="directory for run outputs")
    p.set_defaults(handler=_cmd_search)

    p = sub.add_parser("bench-gen", help="generate a tabular benchmark file")
    add_config_args(p)
    p.add_argument("--epochs", type=int, required=True, help="metrics recorded per architecture")
    p.add_argument("--out", required=True, help="benchmark file to write")
    p.add_argument("--cap", type=int, default=1_000_000, help="enumeration size cap")
    p.set_defaults(handler=_cmd_bench_gen)

    p = sub.add_parser("bound", help="tabulate the closed-form error bound")
    add_config_args(p)
    p.add_argument("--out", default=None, help="CSV path (default: standard output)")
    p.set_defaults(handler=_cmd_bound)

    p = sub.add_parser("validate-bound", help="Monte Carlo validation of the bound")
    add_config_args(p)
    p.add_argument("--trials", type=int, default=None, help="override validate.trials")
    p.add_argument("--jobs", type=int, default=None, help="concurrent trial workers")
    p.add_argument("--out-dir", default="distprune-validate", help="directory for outputs")
    p.set_defaults(handler=_cmd_validate_bound)

    p = sub.add_parser("report", help="summarize an event log")
    p.add_argument("log", help="events.jsonl from a search run")
    p.add_argument("--out-dir", default="distprune-report", help="directory for CSVs and figures")
    p.set_defaults(handler=_cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
