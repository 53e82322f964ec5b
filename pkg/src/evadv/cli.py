"""Command-line benchmark harness.

Subcommands: gen-data, train-victim, attack, defend, report. Exit codes:
0 on success, 1 on usage or configuration errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import sys

from .config import ABLATION_FLAGS, ConfigError, load_config
from . import runner


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_common(parser):
    parser.add_argument("--config", metavar="PATH", help="JSON config file")
    parser.add_argument("--seed", type=int, metavar="U64", help="override config seed")
    parser.add_argument("--out", metavar="DIR", help="override output directory")
    parser.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="parallel workers for per-sample attacks")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evadv",
                     description="Adversarial attacks on event streams: data, victim, attacks, defenses")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    _add_common(p)

    p = sub.add_parser("train-victim", help="train the point classifier")
    _add_common(p)

    p = sub.add_parser("attack", help="run the configured attack methods")
    _add_common(p)
    for flag in ABLATION_FLAGS:
        p.add_argument(f"--{flag}", action="store_true",
                       help=f"ablation: disable the {ABLATION_FLAGS[flag]} switch")

    p = sub.add_parser("defend", help="re-evaluate attacks under defenses")
    _add_common(p)

    p = sub.add_parser("report", help="merge runs and export plot data")
    _add_common(p)
    p.add_argument("run_dirs", nargs="+", metavar="RUN_DIR",
                   help="output directories of previous runs")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        cfg = load_config(args.config, args.seed, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "gen-data":
            path = runner.cmd_gen_data(cfg)
        elif args.command == "train-victim":
            path = runner.cmd_train_victim(cfg)
        elif args.command == "attack":
            flags = [f for f in ABLATION_FLAGS if getattr(args, f.replace("-", "_"))]
            path = runner.cmd_attack(cfg, flags, jobs=args.jobs)
        elif args.command == "defend":
            path = runner.cmd_defend(cfg)
        else:
            path = runner.cmd_report(args.run_dirs, cfg["out_dir"] + "/report",
                                     cfg["report"]["plot_samples"])
        print(path)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
