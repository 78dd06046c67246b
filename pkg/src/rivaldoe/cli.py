"""Command line interface: ``rivaldoe run`` and ``rivaldoe report``.

``run`` writes one JSON record per replication into ``--out`` plus
``summary.csv`` and ``table.csv``; ``report`` rebuilds those files (and
``curves.csv`` when records carry criterion curves) from stored records.
The worker count comes from the ``RIVALDOE_WORKERS`` environment variable.
"""

import argparse
import glob
import json
import logging
import os
import sys

from .campaign import (
    CampaignConfig,
    DESIGN_CRITERIA,
    MARGINALS,
    curves_csv,
    load_records,
    record_filename,
    run_campaign,
    stats_table,
    summary_csv,
)
from .discrimination import METHODS
from .exceptions import ContractError

# CLI flag -> config field
_FLAGS = {"case": "case", "true_model": "true_model", "dc": "design_criterion",
          "md": "discrimination_method", "marginal": "marginal_method", "budget": "budget",
          "reps": "replications", "seed": "seed", "grid": "candidate_grid",
          "curves": "store_curves"}


def _parser():
    p = argparse.ArgumentParser(prog="rivaldoe", description="Model discrimination campaigns")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run replications and write records plus a summary")
    run.add_argument("--config", help="JSON file with CampaignConfig fields; flags override it")
    run.add_argument("--case", choices=["mixing", "ammonia", "kinetics"])
    run.add_argument("--true-model", type=int, help="1-based index of the data-generating model")
    run.add_argument("--dc", type=str.upper, choices=DESIGN_CRITERIA, help="design criterion")
    run.add_argument("--md", choices=METHODS, help="discrimination method")
    run.add_argument("--marginal", choices=MARGINALS, help="marginal predictive method")
    run.add_argument("--budget", type=int)
    run.add_argument("--reps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--grid", type=int, help="candidate points per continuous design dimension")
    run.add_argument("--curves", action="store_true", default=None,
                     help="store criterion values over the grid each round")
    run.add_argument("--out", required=True)

    rep = sub.add_parser("report", help="rebuild summary tables from stored records")
    rep.add_argument("--out", required=True, help="directory holding record files")
    return p


def _config(args):
    base = {} if args.config is None else CampaignConfig.from_json(args.config).to_dict()
    for flag, key in _FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            base[key] = value
    return CampaignConfig.from_dict(base)


def _write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_reports(out, records):
    _write(os.path.join(out, "summary.csv"), summary_csv(records))
    _write(os.path.join(out, "table.csv"), stats_table(records))
    curves = curves_csv(records)
    if curves.count("\n") > 1:
        _write(os.path.join(out, "curves.csv"), curves)


def _workers():
    raw = os.environ.get("RIVALDOE_WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ContractError(f"RIVALDOE_WORKERS must be an integer, got {raw!r}") from None
    return max(1, n)


def cmd_run(args):
    config = _config(args)
    os.makedirs(args.out, exist_ok=True)
    done = []

    def save(rec):
        _write(os.path.join(args.out, record_filename(rec)), rec.to_json())
        done.append(rec)
        logging.getLogger("rivaldoe").info("replication %d: %s after %d", rec.replication,
                                           rec.outcome, rec.n_additional)

    try:
        run_campaign(config, workers=_workers(), on_record=save)
    except KeyboardInterrupt:
        if done:
            write_reports(args.out, done)
        print(f"interrupted after {len(done)} replications", file=sys.stderr)
        return 130
    write_reports(args.out, done)
    sys.stdout.write(summary_csv(done))
    return 0


def cmd_report(args):
    paths = sorted(glob.glob(os.path.join(args.out, "*.json")))
    if not paths:
        raise ContractError(f"no record files in {args.out}")
    records = load_records(paths)
    write_reports(args.out, records)
    sys.stdout.write(summary_csv(records))
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return cmd_run(args) if args.command == "run" else cmd_report(args)
    except (ContractError, OSError, json.JSONDecodeError) as exc:
        print(f"rivaldoe: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
