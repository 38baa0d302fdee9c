"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 capacity error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import CapacityError, ConfigError, NumericalFailure
from .runner import RUNNERS

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_NUMERICAL = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hsfrag", description="XX-ladder quench and spectrum experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*RUNNERS, "validate-config"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--resume", type=int, default=0, metavar="INDEX",
                       help="first realization to (re)compute")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads", f"must be >= 1, got {args.threads}")
        cfg = load_config(args.config)
        if args.command == "validate-config":
            print(f"{args.config}: ok (config {cfg.digest()}, sector dim {cfg.basis().dim})")
            return EXIT_OK
        out = args.out or Path(cfg.output.directory)
        if not out.is_absolute() and args.out is None:
            out = Path(cfg.base_dir) / out
        result = RUNNERS[args.command](cfg, out, threads=args.threads, resume=args.resume)
        if "svg" in cfg.output.formats:
            from .plots import PLOTTERS

            result.files += PLOTTERS[args.command](out)
        for f in result.files:
            print(f)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
