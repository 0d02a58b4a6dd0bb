"""Command-line entry point: ``dgff-run {assumptions,converge,sobolev,full}``.

Exit status is 0 when every threshold passes, 2 when a threshold is
violated, and 1 on errors (bad config, unwritable output, numerical failure).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, parse_config
from .experiments import SUBCOMMANDS, run_experiment, serialize_report

log = logging.getLogger("dgff")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgff-run", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config's master seed")
        p.add_argument("--out", default=None, help="output directory (default: run.output from the config)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--dump-spectra", action="store_true")
        p.add_argument("--dump-samples", action="store_true")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = args.out or cfg.output
        if out is None:
            raise ConfigError("no output directory: pass --out or set run.output")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        report = run_experiment(cfg, args.command, args.threads)
        serialize_report(report, out, args.dump_spectra, args.dump_samples)
    except (ConfigError, ValueError, OSError, ArithmeticError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for note in report.notes:
        log.info("note: %s", note)
    for v in report.violations:
        print(f"VIOLATION {v}")
    print(f"{'PASS' if report.passed else 'FAIL'}: {len(report.violations)} violation(s); reports in {out}")
    return 0 if report.passed else 2


if __name__ == "__main__":
    sys.exit(main())
