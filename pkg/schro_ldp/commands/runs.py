"""`runs`: list what the run ledger recorded."""

from __future__ import annotations

from schro_ldp.errors import ValidationError
from schro_ldp.io import dumps_json, emit
from schro_ldp.ledger import list_runs


def register(sub, common) -> None:
    p = sub.add_parser("runs", parents=[common], help="list recorded runs from the ledger, newest first")
    p.add_argument("--config-hash", metavar="SHA256", help="only runs with this config hash")
    p.add_argument("--command", dest="filter_command", metavar="NAME", help="only runs of this subcommand")
    p.add_argument("--out", metavar="PATH", help="JSON output file (default stdout)")
    p.set_defaults(func=run_list, record=False)


def run_list(args, run) -> None:
    if not args.ledger:
        raise ValidationError("runs needs --ledger URL or SCHRO_LDP_LEDGER.")
    runs = list_runs(args.ledger, config_hash=args.config_hash, command=args.filter_command)
    emit(dumps_json({"runs": runs}), args.out)
