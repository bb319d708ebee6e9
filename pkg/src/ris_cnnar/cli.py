"""Command-line entry point: ``ris-cnnar {gen-data,train,eval,overhead}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .classifier import (DatasetRanges, DopplerClassBank, TrainingRun, build_convnet, evaluate,
                         gen_dataset, load_checkpoint, load_dataset, save_checkpoint, save_dataset,
                         split_dataset, train)
from .experiments import EXPERIMENTS, ExperimentSpec, run_experiment
from .scenario import Geometry, SystemConfig, load_config

TRAIN_PER_CLASS, VAL_PER_CLASS, TEST_PER_CLASS = 400, 100, 50


def _load(path) -> tuple[SystemConfig, Geometry]:
    if path is None:
        return SystemConfig(), Geometry()
    return load_config(path)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI configuration file (defaults to built-in values)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ris-cnnar", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate labeled CSI windows")
    _common(p)
    p.add_argument("--samples", type=int, default=TRAIN_PER_CLASS + VAL_PER_CLASS + TEST_PER_CLASS,
                   help="windows per Doppler class")

    p = sub.add_parser("train", help="train the aging-pattern classifier")
    _common(p)
    p.add_argument("--data", help="dataset file from gen-data (generated on the fly if omitted)")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--patience", type=int, default=20)

    p = sub.add_parser("eval", help="run one experiment and write CSV")
    _common(p)
    p.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--checkpoint", help="classifier checkpoint from train")

    p = sub.add_parser("overhead", help="pilot-overhead table")
    _common(p)
    return parser


def cmd_gen_data(args) -> int:
    cfg, _ = _load(args.config)
    X, y = gen_dataset(cfg, cfg.doppler_fn(cfg.doppler_grid), args.samples, args.seed)
    save_dataset(args.out, X, y)
    print(f"wrote {len(y)} windows of shape {X.shape[1:]} to {args.out}")
    return 0


def train_classifier(cfg: SystemConfig, seed: int, X=None, y=None, epochs=300, patience=20):
    """Train on an 8:2:1 per-class split (400/100/50 at desk scale).

    Returns ``(net, bank, run, test_accuracy)``.
    """
    if X is None:
        X, y = gen_dataset(cfg, cfg.doppler_fn(cfg.doppler_grid),
                           TRAIN_PER_CLASS + VAL_PER_CLASS + TEST_PER_CLASS, seed, DatasetRanges())
    per_class = int(np.min(np.bincount(y)))
    total = TRAIN_PER_CLASS + VAL_PER_CLASS + TEST_PER_CLASS
    n_val = max(1, per_class * VAL_PER_CLASS // total)
    n_train = min(per_class * TRAIN_PER_CLASS // total, per_class - n_val)
    train_set, val_set, test_set = split_dataset(X, y, n_train, n_val)
    bank = DopplerClassBank.from_config(cfg)
    net = build_convnet(X.shape[1:], len(bank), seed=seed)
    run = TrainingRun(epochs=epochs, patience=patience, seed=seed)
    train(net, *train_set, *val_set, run)
    accuracy = evaluate(net, *test_set)[1] if len(test_set[1]) else float("nan")
    return net, bank, run, accuracy


def cmd_train(args) -> int:
    cfg, _ = _load(args.config)
    X = y = None
    if args.data:
        X, y = load_dataset(args.data)
    net, bank, run, acc = train_classifier(cfg, args.seed, X, y, args.epochs, args.patience)
    save_checkpoint(args.out, net, bank)
    print(f"trained {len(run.loss_history)} epochs (best {run.best_epoch}), "
          f"held-out accuracy {acc:.3f}; checkpoint {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg, geom = _load(args.config)
    spec = ExperimentSpec(args.experiment, args.config, args.trials, args.out, args.seed)
    net = bank = None
    if args.experiment != "overhead":
        if not args.checkpoint or not Path(args.checkpoint).exists():
            raise FileNotFoundError("--checkpoint is required and must exist for this experiment")
        net, bank = load_checkpoint(args.checkpoint)
    path = run_experiment(spec, cfg, geom, net, bank)
    print(f"wrote {path}")
    return 0


def cmd_overhead(args) -> int:
    cfg, geom = _load(args.config)
    path = run_experiment(ExperimentSpec("overhead", args.config, 1, args.out, args.seed), cfg, geom)
    print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
                "overhead": cmd_overhead}
    try:
        return handlers[args.command](args)
    except (OSError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"ris-cnnar: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
