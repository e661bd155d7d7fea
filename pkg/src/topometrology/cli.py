"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, NumericError
from .experiments import (
    load_config,
    run_chern_report,
    run_holevo_scan,
    run_mass_sweep,
    run_optimize_povm,
    run_trajectory_scan,
)

log = logging.getLogger("topometrology")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topometrology", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("scan-trajectory", "uncertainty volumes and Berry bound along a k-space trajectory"),
        ("scan-holevo", "weighted-variance optimal POVMs against Holevo and SLD bounds"),
        ("sweep-mass", "quantum volume, metrological potential and Chern number versus M"),
        ("chern-report", "signed Chern numbers and quantum volumes for configured masses"),
        ("optimize-povm", "optimize a three-outcome POVM at one k-point"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path, help="scenario file (INI sections)")
        p.add_argument("--out", required=True, type=Path, help="output file (CSV or JSON)")
        p.add_argument("--seed", type=_u64, default=None, help="overrides [estimation] seed")
        p.add_argument("--grid-n", type=int, default=None, help="Brillouin-zone points per axis")
        p.add_argument("--verbose", action="store_true")
    return parser


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _write_json(path: Path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(args: argparse.Namespace) -> None:
    cfg = load_config(args.config, seed=args.seed, grid_n=args.grid_n)
    out: Path = args.out
    if args.command == "scan-trajectory":
        table = run_trajectory_scan(cfg)
        table.to_csv(out)
    elif args.command == "scan-holevo":
        table = run_holevo_scan(cfg)
        table.to_csv(out)
    elif args.command == "sweep-mass":
        table, spots = run_mass_sweep(cfg)
        table.to_csv(out)
        if spots.rows:
            spots.to_csv(_sibling(out, "_spotcheck.csv"))
    elif args.command == "chern-report":
        table = run_chern_report(cfg.masses, cfg.grid_n)
        table.to_csv(out)
    elif args.command == "optimize-povm":
        summary, result = run_optimize_povm(cfg)
        _write_json(out, summary)
        if args.verbose:
            trace_path = _sibling(out, "_trace.csv")
            with open(trace_path, "w", newline="\n") as fh:
                fh.write("restart,iteration,objective\n")
                for r, it, obj in result.trace:
                    fh.write(f"{r},{it},{obj:.17g}\n")
            log.info("optimization trace written to %s", trace_path)
    log.info("wrote %s", out)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
