"""Command-line entry points.

    gpsplit evolve      --config run.yaml [--override run.tau0=0.05] [--out DIR]
    gpsplit groundstate --config run.yaml ...
    gpsplit experiment  --config run.yaml [--workers 4] [--paper-mode]

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 I/O failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .errors import ConfigError, ControllerFailureError, DivergedError
from .experiments import run_evolve, run_experiment, run_groundstate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _add_common(sub):
    sub.add_argument("--config", required=True, help="YAML config path")
    sub.add_argument("--override", action="append", default=[],
                     metavar="KEY=VALUE", help="dotted config override, repeatable")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--workers", type=int, default=1,
                     help="concurrent experiment rows")
    sub.add_argument("--paper-mode", action="store_true",
                     help="forbid step growth (fac_max = 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gpsplit", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("evolve", "groundstate", "experiment"):
        _add_common(subs.add_parser(name))
    return parser


def _load(args, forced_mode=None):
    config = load_config(args.config, args.override)
    if forced_mode is not None and config.mode != forced_mode:
        config = replace(config, mode=forced_mode)
    if args.paper_mode:
        config.controller_overrides["fac_max"] = 1.0
    if args.out is not None:
        config = replace(config, out_dir=Path(args.out))
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "evolve":
            config = _load(args, forced_mode="evolve")
        elif args.command == "groundstate":
            config = _load(args, forced_mode="groundstate")
        else:
            config = _load(args)
            if config.mode in ("evolve", "groundstate"):
                pass  # single runs are legal through `experiment` as well
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(config.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if config.mode == "evolve":
            outputs, summary = run_evolve(config, out_dir)
            print(f"evolve: {summary['steps']} steps "
                  f"({summary['rejected']} rejected), "
                  f"{summary['transforms']} transforms")
        elif config.mode == "groundstate":
            outputs, result = run_groundstate(config, out_dir)
            print(f"groundstate: converged={result.converged} "
                  f"reason={result.reason} iterations={result.iterations} "
                  f"E={result.energy:.12g} residual={result.residual:.3e}")
            if not result.converged and result.reason == "divergence":
                return EXIT_DIVERGED
        else:
            outputs, _ = run_experiment(config, out_dir, workers=args.workers)
            print(f"experiment {config.mode}: wrote {len(outputs)} artifacts")
        for path in outputs:
            print(f"  {path}")
    except (DivergedError, ControllerFailureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
