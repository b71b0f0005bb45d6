"""Command-line interface.

Subcommands: ``simulate`` (emit a synthetic benchmark dataset), ``fit``
(segment one CSV), ``replicate`` (paired baseline/robust study), and
``export-segments`` (re-emit CSVs from a saved summary). Exit codes:
0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

from .config import EMISSIONS, MODELS, RunConfig
from .pipeline import (
    export_segments,
    fit_command,
    replicate_command,
    simulate_command,
    summary_table,
)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--seed", type=int, help="random seed (overrides config)")
    parser.add_argument("--output", help="output directory (default: current)")
    parser.add_argument("--model", choices=MODELS, help="sampler variant (overrides config)")
    parser.add_argument("--tau", type=float, help="merge threshold (overrides config)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsmmseg",
        description="Semi-Markov segmentation of sequential data with redundant-state merging.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="emit a synthetic benchmark dataset")
    _common_flags(p_sim)
    p_sim.add_argument("--segments", type=int, default=30, help="number of true segments")

    p_fit = sub.add_parser("fit", help="fit one dataset and export artifacts")
    _common_flags(p_fit)
    p_fit.add_argument("--input", required=True, help="input CSV (trip or generic series)")
    p_fit.add_argument("--emission", choices=EMISSIONS, help="emission family (overrides config)")
    p_fit.add_argument(
        "--downsample", type=int, default=10,
        help="block-average factor applied to trip-schema inputs (default 10)",
    )

    p_rep = sub.add_parser("replicate", help="run the baseline/robust replication study")
    _common_flags(p_rep)
    p_rep.add_argument("--reps", type=int, default=20, help="number of replications")
    p_rep.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p_rep.add_argument("--segments", type=int, default=30, help="number of true segments")

    p_exp = sub.add_parser("export-segments", help="re-export CSVs from a saved summary")
    _common_flags(p_exp)
    p_exp.add_argument("--input", required=True, help="summary.json written by fit")

    return parser


def _run_config(args, **extra) -> RunConfig:
    return RunConfig.from_sources(
        config_path=args.config,
        seed=args.seed,
        output=args.output,
        model=args.model,
        tau=args.tau,
        **extra,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            paths = simulate_command(_run_config(args), n_segments=args.segments)
            if not args.quiet:
                print(f"wrote {paths['data']}")
        elif args.command == "fit":
            config = _run_config(args, input=args.input, emission=args.emission)
            paths = fit_command(config, downsample_factor=args.downsample)
            if not args.quiet:
                print(f"wrote {paths['summary']}")
        elif args.command == "replicate":
            paths, summary = replicate_command(
                _run_config(args), n_reps=args.reps, n_jobs=args.jobs, n_segments=args.segments
            )
            if not args.quiet:
                print(summary_table(summary))
                print(f"wrote {paths['replications']}")
        else:  # export-segments
            config = _run_config(args, input=args.input)
            paths = export_segments(config.input, config.output)
            if not args.quiet:
                print(f"wrote {paths['segmentation']}")
    except Exception as exc:  # runtime failures map to exit code 1
        print(f"hsmmseg: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
