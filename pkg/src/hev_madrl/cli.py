"""Command-line entry point.

    hev-madrl train --config exp.yaml --seed 0 --out runs/a
    hev-madrl eval --checkpoint runs/a/checkpoints --out runs/a-eval
    hev-madrl baseline --initial-soc 0.25,0.28,0.30
    hev-madrl sweep --dimension LearningRates --episodes 100 --out runs/sweep
    hev-madrl sensitivity runs/sweep/sweep_log.json
    hev-madrl cycles inspect udds wltp learning

Failures exit nonzero and print one JSON line on stderr naming the error class.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cycles import BUILTIN, build_learning_cycle, learning_cycle_order, resolve_cycle
from .errors import ConfigError, HevError
from .harness import (
    LEARNERS,
    ExperimentConfig,
    eval_cycle,
    format_comparison,
    load_config,
    make_learner,
    build_model,
    phases_for,
    run_experiment,
)
from .sensitivity import DIMENSIONS, SweepLog, run_sweep, sensitivity_report

EXIT_CODES = {"ConfigError": 2}


def _soc_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated SoC values, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment YAML file")
    p.add_argument("--seed", type=int, help="root seed (replaces the config's seed list)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--episodes", type=int)
    p.add_argument("--relevance-ratio", type=float)
    p.add_argument("--initial-soc", type=_soc_list, help="comma-separated initial SoC values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hev-madrl", description="PHEV energy-management experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train learning controllers, then evaluate all configured controllers")
    _common(p)
    p.add_argument("--controller", choices=["MultiAgent", "SingleAgent", "RuleBased", "Ecms"], action="append",
                   help="restrict to these controllers (repeatable)")

    p = sub.add_parser("eval", help="evaluate saved learners without training")
    _common(p)
    p.add_argument("--checkpoint", required=True, help="directory holding <Controller>/seed<n>/ checkpoints")
    p.add_argument("--controller", choices=list(LEARNERS), action="append")

    p = sub.add_parser("baseline", help="evaluate the rule-based and ECMS controllers")
    _common(p)

    p = sub.add_parser("sweep", help="hyperparameter sweep over one dimension")
    _common(p)
    p.add_argument("--dimension", choices=sorted(DIMENSIONS), action="append",
                   help="dimension to sweep (repeatable; default all)")

    p = sub.add_parser("sensitivity", help="importance report from a sweep log")
    p.add_argument("log", nargs="+", help="sweep_log.json files")
    p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("cycles", help="drive-cycle utilities")
    csub = p.add_subparsers(dest="cycles_command", required=True)
    q = csub.add_parser("inspect", help="summarize cycles: built-in names, trace files, or 'learning'")
    q.add_argument("refs", nargs="*", default=sorted(BUILTIN))
    q.add_argument("--seed", type=int, default=None, help="seed for the learning-cycle order")
    q.add_argument("--config", help="experiment YAML (for phase windows)")
    return parser


def _config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(
        seeds=[args.seed] if args.seed is not None else None,
        out=args.out,
        episodes=args.episodes,
        relevance_ratio=args.relevance_ratio,
        initial_socs=args.initial_soc,
    )


def _report(result) -> None:
    sys.stdout.write(format_comparison(result.rows))
    sys.stdout.write(f"artifacts: {result.out}\n")


def cmd_train(args) -> int:
    config = _config(args)
    if args.controller:
        config = config.with_overrides(controllers=args.controller)
    _report(run_experiment(config))
    return 0


def cmd_eval(args) -> int:
    config = _config(args).with_overrides(checkpoint=args.checkpoint)
    controllers = args.controller or [c for c in config.controllers if c in LEARNERS] or ["MultiAgent"]
    config = config.with_overrides(controllers=controllers)
    _report(run_experiment(config))
    return 0


def cmd_baseline(args) -> int:
    config = _config(args).with_overrides(controllers=["RuleBased", "Ecms"])
    _report(run_experiment(config))
    return 0


def cmd_sweep(args) -> int:
    config = _config(args)
    model = build_model(config)
    phases = phases_for(config)
    evaluation = eval_cycle(config, "learning")

    def train_fn(overrides, seed):
        cfg = config.with_overrides(agent={**config.agent, **overrides})
        est = make_learner("MultiAgent", cfg, seed, model).fit(phases)
        h = est.history_
        rewards = sum(h.rewards(i) for i in range(est.n_agents))
        return rewards, est.evaluate(evaluation, config.train_soc).fuel_l_per_100km

    groups = [g for d in (args.dimension or sorted(DIMENSIONS)) for g in DIMENSIONS[d]()]
    host = {"machine": platform.machine(), "python": platform.python_version(), "numpy": np.__version__}
    log = run_sweep(groups, train_fn, seeds=config.seeds, host=host)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    log.write(out / "sweep_log.json")
    report = sensitivity_report(log)
    (out / "sensitivity.tsv").write_text(report)
    sys.stdout.write(report)
    return 0


def cmd_sensitivity(args) -> int:
    merged = SweepLog()
    for path in args.log:
        part = SweepLog.read(path)
        merged.groups.extend(part.groups)
        merged.host = merged.host or part.host
    report = sensitivity_report(merged)
    if args.out:
        Path(args.out).write_text(report)
    else:
        sys.stdout.write(report)
    return 0


def cmd_cycles(args) -> int:
    config = load_config(args.config) if args.config else ExperimentConfig()
    for ref in args.refs:
        if ref == "learning":
            seed = config.eval_order_seed if args.seed is None else args.seed
            cycle = build_learning_cycle(phases_for(config), seed=seed, bridge_seconds=config.bridge_seconds)
            summary = {**cycle.summary(), "order": learning_cycle_order(seed), "seed": seed}
        else:
            summary = resolve_cycle(ref).summary()
        sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "baseline": cmd_baseline,
    "sweep": cmd_sweep,
    "sensitivity": cmd_sensitivity,
    "cycles": cmd_cycles,
}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except HevError as exc:
        return _fail(exc.code, str(exc), EXIT_CODES.get(exc.code, 3))
    except (FileNotFoundError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), 4)


if __name__ == "__main__":
    sys.exit(main())
