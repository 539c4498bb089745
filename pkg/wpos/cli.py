"""
Command line front end: wpos generate|select-f|train|eval|sanity|table1|report.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from typing import Optional, Sequence

from . import harness
from .config import CONDITIONS, debug_enabled, load_config
from .log import configure
from .models import MODEL_KINDS

log = logging.getLogger("wpos.cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wpos", description="UWB zone positioning experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--model", action="append", choices=MODEL_KINDS, help="restrict to a model (repeatable)")
    common.add_argument("--repeats", type=int, help="runs per cell")
    common.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                        help="single-threaded training with bitwise reproducible results")
    common.add_argument("--nlos", action="store_true", help="run the NLOS condition only")
    common.add_argument("--debug", action="store_true", help="debug logging and finiteness checks")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("generate", parents=[common], help="synthesize datasets")
    commands.add_parser("select-f", parents=[common], help="feature-size selection per cell")
    commands.add_parser("train", parents=[common], help="train and evaluate the classifiers")
    commands.add_parser("eval", parents=[common], help="re-score saved checkpoints")
    commands.add_parser("sanity", parents=[common], help="train on random zone labels, expect chance-level rates")
    commands.add_parser("table1", parents=[common], help="selection steps on the reference vector")
    report = commands.add_parser("report", parents=[common], help="summarize metrics.csv")
    report.add_argument("--influx", action="store_true", help="publish metrics to InfluxDB")
    report.add_argument("--export-pdp", metavar="CSV", help="write one cell's test PDPs as CSV")
    return parser


def resolve_config(args: argparse.Namespace):
    cfg = load_config(args.config)
    experiment = cfg.experiment
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out=args.out)
    if args.repeats is not None:
        experiment = replace(experiment, repeats=args.repeats)
    if args.deterministic is not None:
        experiment = replace(experiment, deterministic=args.deterministic)
    if args.nlos:
        experiment = replace(experiment, conditions=(CONDITIONS[1],))
    if args.model:
        experiment = replace(experiment, models=tuple(dict.fromkeys(args.model)))
    return replace(cfg, experiment=experiment)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    debug = args.debug or debug_enabled()
    configure(debug)

    try:
        if args.command == "table1":
            tables = harness.cmd_table1(args.out)
            print(harness.format_table1(tables))
            return 0
        cfg = resolve_config(args)
        if args.command == "generate":
            manifest = harness.cmd_generate(cfg)
            log.info("wrote %d files under %s", len(manifest.entries), cfg.out)
        elif args.command == "select-f":
            for (scenario, condition, snr), f_star in harness.cmd_select_f(cfg).items():
                print(f"s{scenario} {condition} {snr:g} dB: F*={f_star}")
        elif args.command == "train":
            harness.cmd_train_eval(cfg, debug=debug)
            print(harness.format_report(harness.read_csv(f"{cfg.out}/metrics.csv")))
        elif args.command == "eval":
            rows = harness.cmd_eval(cfg)
            log.info("re-scored %d checkpoints", len(rows))
        elif args.command == "sanity":
            for row in harness.cmd_sanity(cfg):
                print(f"{row['model']:<8} F={row['F']:<3} {row['rate']:6.2f}% (chance {row['chance']:.2f}%)")
        elif args.command == "report":
            print(harness.cmd_report(cfg, influx=args.influx, export_pdp=args.export_pdp))
    except (ValueError, RuntimeError, OSError) as exc:
        log.error("%s failed: %s", args.command, exc)
        if debug:
            raise
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
