"""Command-line entry point.

Subcommands select one study each (plus ``run`` for the config's own
task list); every subcommand takes --config, --out, --seed and
--threads.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .harness import TASKS, ConfigError, parse_run_config, study_runner


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dqopt",
        description="Double-quantum filtration studies and pulse-sequence optimisation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("buildup", "filtration efficiency against excitation time"),
        ("scan1d", "efficiency along one parameter axis"),
        ("scan2d", "efficiency over a two-parameter grid"),
        ("optimize", "run the configured optimizer"),
        ("offset", "transmitter-offset profile"),
        ("speedstudy", "buildup maximum against spinning speed"),
        ("run", "execute the task list from the config file"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the optimizer seed")
        p.add_argument("--threads", type=int, default=None,
                       help="crystallite-loop threads")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("dqopt: --threads must be >= 1", file=sys.stderr)
            return 2
        import numba
        numba.set_num_threads(args.threads)
    try:
        cfg = parse_run_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, optimizer=replace(cfg.optimizer, seed=args.seed))
        if args.command != "run":
            if args.command not in TASKS:
                raise ConfigError(f"unknown task {args.command!r}")
            cfg = replace(cfg, tasks=(args.command,))
        study_runner(cfg, args.out)
    except ConfigError as exc:
        print(f"dqopt: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical or I/O failure
        print(f"dqopt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
