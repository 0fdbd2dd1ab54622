"""`ldp`: run an LDP verification experiment from a JSON config."""

from __future__ import annotations

import json
import os
import sys

from schro_ldp.errors import SchroError
from schro_ldp.experiment import ExperimentConfig, error_report, run_ldp_experiment
from schro_ldp.io import atomic_write_files, dumps_json


def register(sub, common) -> None:
    p = sub.add_parser("ldp", parents=[common], help="Monte Carlo slope of eps log P(A) against the rate infimum")
    p.add_argument("--config", required=True, metavar="JSON")
    p.add_argument("--out-dir", metavar="DIR", help="overrides output.dir of the config")
    p.set_defaults(func=run_ldp)


def run_ldp(args, run) -> None:
    """Report and CSV companion go to the output directory (or the report to stdout).

    Files are written only after the whole run succeeded; a failure prints a
    structured error on stderr and re-raises for the exit code.
    """
    config = None
    try:
        config = ExperimentConfig.from_file(args.config)
        report = run_ldp_experiment(config, ledger=run)
    except SchroError as exc:
        sys.stderr.write(json.dumps(error_report(exc, config.config_hash if config else None), sort_keys=True) + "\n")
        raise

    out_dir = args.out_dir or config.output_dir
    if out_dir is None:
        sys.stdout.write(report.to_json())
        return
    files = {}
    if "csv" in config.formats:
        files[os.path.join(out_dir, "report.csv")] = report.to_csv()
    if "json" in config.formats:
        files[os.path.join(out_dir, "report.json")] = dumps_json(report.to_dict())
    atomic_write_files(files)
