"""Command line entry point: ``closedchar run <config.json> [--seed N] [--out DIR] [-v]``.

Exit codes: 0 when every audit passes, 2 when the run completed with audit
failures, 3 on a stage error (including a rejected config).
"""

from __future__ import annotations

import argparse
import datetime
import logging
import sys

from .errors import ConfigError
from .pipeline import RunConfig, run_pipeline, write_outputs

EXIT_OK, EXIT_AUDIT, EXIT_STAGE = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="closedchar", description="Closed characteristics index laboratory")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the pipeline described by a JSON config")
    run.add_argument("config", help="path to the JSON run config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="output directory (overrides the config)")
    run.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
    except ConfigError as exc:
        print(f"config rejected: {exc}", file=sys.stderr)
        return EXIT_STAGE
    rep = run_pipeline(cfg)
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    paths = write_outputs(rep, cfg.out_dir, stamp)
    failed = [a["invariant"] for a in rep.audit if a["verdict"] != "PASS"]
    print(f"status {rep.status}: {len(rep.orbits)} orbit(s), {len(rep.audit) - len(failed)}/{len(rep.audit)} audits pass")
    for e in rep.errors:
        print(f"  stage error [{e['stage']}] {e['type']}: {e['message']}")
    for name in failed:
        print(f"  audit FAIL: {name}")
    print(f"report: {paths['report.json']}")
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
