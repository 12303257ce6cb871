"""Command line: ``run``, ``validate`` and ``version``."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .config import load_config, validate_file
from .errors import ConfigError, PriceMfgError
from .pipeline import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, run_experiment

log = logging.getLogger("pricemfg")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pricemfg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve, recover and compare; write CSV and report.json")
    run.add_argument("config", help="TOML run configuration")
    run.add_argument("--out", default=None, help="output directory (default: output.directory)")
    run.add_argument("--refine", type=int, default=1, metavar="K",
                     help="number of grids, each doubling n_t and n_x (default 1)")

    val = sub.add_parser("validate", help="check a configuration without computing")
    val.add_argument("config")

    sub.add_parser("version", help="print the package version")
    return parser


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(d, file=sys.stderr)
        return EXIT_CONFIG
    if args.refine < 1:
        print("error: --refine must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    for w in cfg.warnings:
        log.warning("%s", w)
    try:
        outcome = run_experiment(cfg, args.out, args.refine)
    except PriceMfgError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    m = outcome.manifest
    print(f"status: {m['status']}")
    for lev in m["levels"]:
        g = lev["grid"]
        print(f"grid {g['n_t']}x{g['n_x']}: objective_discrete={lev['objective_discrete']:.8f} "
              f"objective_analytic={lev['objective_analytic']:.8f} "
              f"kkt={lev['solver']['kkt_residual']:.2e} "
              f"price_sup_error={lev['errors']['fields']['varpi']['sup']:.4g}")
        for v in lev["invariant_violations"]:
            print(f"  invariant violated: {v}", file=sys.stderr)
    print(f"artifacts: {outcome.out_dir}")
    return outcome.exit_code


def _cmd_validate(args) -> int:
    diags = validate_file(args.config)
    for d in diags:
        print(d)
    if any(d.severity == "error" for d in diags):
        return EXIT_CONFIG
    if not diags:
        print("config OK")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    if args.command == "validate":
        return _cmd_validate(args)
    return _cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
