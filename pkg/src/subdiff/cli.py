"""Command line entry point.

Subcommands ``run``, ``converge-time``, ``converge-space`` and ``audit``.
Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from . import study
from .audit import default_sweep, property_audit
from .config import load_config, with_overrides
from .errors import InvalidParameter, StepFailure, SubdiffError

log = logging.getLogger("subdiff")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subdiff", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "solve every (M, N) pair of the config"),
        ("converge-time", "temporal refinement over the N list at M[0]"),
        ("converge-space", "spatial refinement over the M list at N[-1]"),
        ("audit", "check coefficient and kernel inequalities over the default sweep"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=name != "audit", help="key = value run configuration")
        p.add_argument("--out", help="CSV output path (overrides 'out' in the config)")
        p.add_argument("--seed", type=int, default=0, help="audit sweep shuffling seed")
        p.add_argument("--threads", type=int, default=1, help="parallel independent runs")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, StepFailure) and isinstance(exc.cause, InvalidParameter):
        return EXIT_VALIDATION
    if isinstance(exc, InvalidParameter):
        return EXIT_VALIDATION
    if isinstance(exc, SubdiffError):
        return EXIT_NUMERICAL
    raise exc


def _audit(args) -> int:
    report = property_audit(default_sweep(seed=args.seed))
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_NUMERICAL


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        if args.command == "audit":
            return _audit(args)
        spec = with_overrides(load_config(args.config), out=args.out)
        if args.command == "run":
            report = study.run_grid(spec, threads=args.threads)
        elif args.command == "converge-time":
            report = study.converge_time(spec, threads=args.threads)
        else:
            report = study.converge_space(spec, threads=args.threads)
        print(report.table())
        if spec.out:
            study.emit_csv(report, spec.out)
            log.info("wrote %s", spec.out)
        return EXIT_OK
    except (SubdiffError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
