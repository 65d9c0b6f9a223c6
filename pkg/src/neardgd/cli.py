"""Command line entry point.

Exit codes: 0 success, 1 config error, 2 dataset error, 3 every method diverged.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .accounting import read_trace_csv
from .datasets import DatasetError
from .experiment import (
    OUTPUT_ENV,
    PLOT_AXES,
    ConfigError,
    emit_plot_data,
    load_config,
    run_experiment,
    summarize,
    write_summary_csv,
)
from .topology import TOPOLOGY_KINDS, build_topology, metropolis_weights, write_matrix_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATASET, EXIT_DIVERGED = 0, 1, 2, 3


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.max_iters is not None:
        cfg = replace(cfg, max_iters=args.max_iters,
                      methods=tuple(replace(m, max_iters=args.max_iters) for m in cfg.methods))
    result = run_experiment(cfg, output_dir=args.output_dir, timestamp=not args.no_timestamp)
    for label, path in result.paths.items():
        trace = result.traces[label]
        status = trace.manifest.get("status", "ok")
        final = trace.rel_err[-1] if len(trace) else float("nan")
        print(f"{label:<24} {status:<14} final rel_err={final:.3e}  -> {path}")
    print(f"summary -> {result.summary_path}")
    return EXIT_DIVERGED if result.all_diverged else EXIT_OK


def _cmd_plotdata(args) -> int:
    traces = [read_trace_csv(p) for p in args.traces]
    if args.output:
        emit_plot_data(traces, args.axis, args.output)
    else:
        emit_plot_data(traces, args.axis, sys.stdout)
    return EXIT_OK


def _cmd_summarize(args) -> int:
    rows = summarize(read_trace_csv(p) for p in args.traces)
    write_summary_csv(rows, args.output if args.output else sys.stdout)
    return EXIT_OK


def _cmd_spectrum(args) -> int:
    W = metropolis_weights(build_topology(args.kind, args.n, args.k))
    print(f"topology   {W.topology.describe()}")
    print(f"beta       {W.beta!r}")
    print(f"lambda_min {W.lambda_min!r}")
    for t in args.powers:
        print(f"t={t:<4} beta^t={W.beta_power(t)!r} lambda_min(W^t)={W.lambda_min_power(t)!r}")
    if args.csv:
        with open(args.csv, "w") as fh:
            write_matrix_csv(W, fh)
        print(f"W -> {args.csv}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neardgd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config", type=Path)
    p.add_argument("--output-dir", default=None, help=f"overrides the config and ${OUTPUT_ENV}")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp manifest line")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("plotdata", help="long-format label,x,rel_err data from traces")
    p.add_argument("traces", nargs="+", type=Path)
    p.add_argument("--axis", choices=PLOT_AXES, default="iterations")
    p.add_argument("-o", "--output", type=Path, default=None)
    p.set_defaults(func=_cmd_plotdata)

    p = sub.add_parser("summarize", help="threshold table from trace files")
    p.add_argument("traces", nargs="+", type=Path)
    p.add_argument("-o", "--output", type=Path, default=None)
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("spectrum", help="print beta and lambda_min of a Metropolis matrix")
    p.add_argument("kind", choices=TOPOLOGY_KINDS)
    p.add_argument("n", type=int)
    p.add_argument("-k", type=int, default=None, help="degree for cyclic_k")
    p.add_argument("--powers", type=int, nargs="*", default=[], help="also report W^t quantities")
    p.add_argument("--csv", type=Path, default=None, help="dump W as CSV")
    p.set_defaults(func=_cmd_spectrum)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except ValueError as exc:
        if args.command == "spectrum":
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        raise


if __name__ == "__main__":
    sys.exit(main())
