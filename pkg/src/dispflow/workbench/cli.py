"""Command line entry point: ``dispflow <experiment> [options]``."""
from __future__ import annotations

import argparse
import json
import sys

from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import run


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dispflow",
        description="Numerical lab for a fourth-order dispersive flow of curves on S^2.")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", metavar="PATH", help="YAML experiment file")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field (dotted path)")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--threads", type=int, help="worker threads for sweeps")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, experiment=args.experiment,
                          seed=args.seed, threads=args.threads, output_dir=args.out)
    except ConfigError as exc:
        print(f"dispflow: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"dispflow: cannot read configuration: {exc}", file=sys.stderr)
        return 2
    status, summary = run(cfg)
    if status == 0:
        print(json.dumps(summary, indent=2, sort_keys=True, default=float))
    else:
        print(f"dispflow: {cfg.experiment} failed; see {cfg.output_dir}/manifest.json",
              file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
