"""Command-line entry point: ``lassodebug <verb> --config cfg.json``."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import DebugError
from .experiments import CONFIG_TYPES, config_from_dict, run_experiment

HELP = {
    "debug": "flag buggy rows in a CSV file or in synthetic trials",
    "tune": "fixed-lambda vs data-driven lambda recovery rates",
    "conditions": "evaluate recovery conditions and check certified recovery",
    "game": "bug generator vs debugger on small designs",
    "sweep": "data-driven lambda recovery over a grid of n and c_t",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lassodebug", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for verb in CONFIG_TYPES:
        sp = sub.add_parser(verb, help=HELP[verb])
        sp.add_argument("--config", help="JSON config file (defaults used if omitted)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="write the JSON report here (CSV tables go alongside)")
        sp.add_argument("--threads", type=int, help="worker threads for trials")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = {}
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as e:
                raise DebugError(f"cannot read config {args.config}: {e}") from e
            if not isinstance(data, dict):
                raise DebugError("config must be a JSON object")
        for key in ("seed", "out", "threads"):
            v = getattr(args, key)
            if v is not None:
                data[key] = v
        cfg = config_from_dict(args.command, data)
        report = run_experiment(args.command, cfg)
        if cfg.out:
            for path in report.write(cfg.out):
                print(f"wrote {path}", file=sys.stderr)
        else:
            sys.stdout.write(report.to_json() + "\n")
    except DebugError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    if report.errors:
        print(f"{len(report.errors)} trial(s) failed; see the report's errors field", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
