"""Command-line front end: global flags, logging setup, ledger and exit codes.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys

from schro_ldp import __version__
from schro_ldp.commands import experiment, rates, runs, sampling, solvers
from schro_ldp.config import LEDGER_URL, LOG_LEVEL
from schro_ldp.errors import SchroError, ValidationError
from schro_ldp.ledger import record_run

logger = logging.getLogger("schro_ldp")

HIDDEN_ARGS = {"func", "ledger", "verbose", "quiet", "record"}


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = (lambda value: argparse.SUPPRESS) if suppress else (lambda value: value)
    parser.add_argument("--seed", type=u64, default=default(0), help="master seed (u64)")
    parser.add_argument("-v", "--verbose", action="count", default=default(0), help="-v for INFO, -vv for DEBUG")
    parser.add_argument("--quiet", action="store_true", default=default(False), help="only errors on stderr")
    parser.add_argument("--ledger", default=default(LEDGER_URL), metavar="URL", help="record the run in a SQLAlchemy database")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="schro-ldp",
        description="Entropic OT, Schrödinger bridges and Monte Carlo checks of their large deviations.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=ArgumentParser)
    sub.required = True
    for module in (solvers, rates, sampling, experiment, runs):
        module.register(sub, common)
    return parser


def configure_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = getattr(logging, LOG_LEVEL.upper(), logging.WARNING)
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def args_hash(args: argparse.Namespace) -> str:
    """sha256 of the canonical JSON of the command's arguments."""
    payload = {k: v for k, v in sorted(vars(args).items()) if k not in HIDDEN_ARGS}
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.verbose, args.quiet)
    logger.debug("schro-ldp %s: %s seed=%d", __version__, args.command, args.seed)

    try:
        ledger = args.ledger if getattr(args, "record", True) else None
        with record_run(ledger, args.command, args.seed, args_hash(args)) as run:
            args.func(args, run)
    except SchroError as exc:
        if not isinstance(exc, ValidationError):
            logger.debug("numerical failure", exc_info=True)
        print(f"schro-ldp: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"schro-ldp: error: {exc}", file=sys.stderr)
        return 1
    return 0
