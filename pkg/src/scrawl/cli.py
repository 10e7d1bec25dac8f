"""Command line front end.

Subcommands map onto the experiment stages plus a few utilities:

    scrawl gen-data    record demonstrations and build datasets
    scrawl train       fit policies on the prepared datasets
    scrawl rollout     run autonomous writing for every condition
    scrawl eval        score rollouts and write reports
    scrawl experiment  all four stages in order
    scrawl print-config   show the resolved configuration as JSON
    scrawl selfcheck   run built-in numerical sanity checks

Exit codes: 0 on success, 1 when a stage fails, 2 for configuration
errors (bad JSON, unknown keys, out-of-range values).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .backend import backend_name
from .config import ConfigError, dump_config, load_config

log = logging.getLogger(__name__)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--suite", default="main",
                   choices=("main", "preliminary"),
                   help="built-in experiment definition to start from")
    p.add_argument("--config", metavar="PATH",
                   help="JSON file merged over the suite preset")
    p.add_argument("--out", metavar="DIR", help="output directory override")
    p.add_argument("--seed", type=int, help="master seed override")
    p.add_argument("--jobs", type=int, help="worker process count override")
    p.add_argument("--epochs", type=int, help="training epoch override")
    p.add_argument("--runs", type=int,
                   help="rollout repetitions per condition override")
    p.add_argument("-v", "--verbose", action="store_true",
                   help="log stage progress to stderr")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="scrawl",
        description="two-rate imitation learning on a simulated "
                    "pen-and-board rig")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (
            ("gen-data", "record demonstrations and build datasets"),
            ("train", "fit policies on prepared datasets"),
            ("rollout", "run autonomous writing per condition"),
            ("eval", "score rollouts and write reports"),
            ("experiment", "gen-data, train, rollout and eval in order"),
            ("print-config", "show the resolved configuration"),
            ("selfcheck", "run built-in numerical sanity checks")):
        _add_common(sub.add_parser(name, help=text))
    return ap


def _resolve(args) -> "ExperimentConfig":
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.runs is not None:
        overrides["run_count"] = args.runs
    if args.epochs is not None:
        overrides["train"] = {"epochs": args.epochs}
    return load_config(args.config, base_suite=args.suite,
                       overrides=overrides or None)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "print-config":
        print(dump_config(cfg))
        return 0
    if args.command == "selfcheck":
        from .selfcheck import run_selfcheck
        ok = run_selfcheck(verbose=True)
        return 0 if ok else 1

    from . import experiments
    log.info("backend: %s", backend_name())
    try:
        if args.command == "gen-data":
            experiments.stage_gen_data(cfg)
        elif args.command == "train":
            experiments.stage_train(cfg)
        elif args.command == "rollout":
            experiments.stage_rollout(cfg)
        elif args.command == "eval":
            experiments.stage_eval(cfg)
        elif args.command == "experiment":
            experiments.run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - stage failures become exit 1
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
