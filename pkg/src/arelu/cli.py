"""``arelu`` command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 run failure, 3 a result
fell below a threshold given with ``--min-acc`` (or a gradient check failed).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import kernels
from .errors import ConfigError, FormatError

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_THRESHOLD = 0, 1, 2, 3

log = logging.getLogger("arelu")


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _strs(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


# Flag -> config key; values stay strings and are parsed by ExperimentConfig.
_RUN_FLAGS = {
    "--dataset": "dataset",
    "--test-dataset": "test_dataset",
    "--activation": "activation",
    "--optimizer": "optimizer",
    "--lr": "lr",
    "--momentum": "momentum",
    "--weight-decay": "weight_decay",
    "--batch-size": "batch_size",
    "--epochs": "epochs",
    "--seeds": "seeds",
    "--alpha": "alpha",
    "--beta": "beta",
    "--widths": "widths",
    "--precision": "precision",
    "--subset": "subset",
    "--test-subset": "test_subset",
    "--subset-seed": "subset_seed",
    "--activation-params": "activation_params",
    "--out-dir": "out_dir",
    "--run-id": "run_id",
}


def _add_run_flags(p: argparse.ArgumentParser, prefix: str = "") -> None:
    p.add_argument(f"--{prefix}config", metavar="FILE", help="flat key = value file; flags override it")
    for flag, key in _RUN_FLAGS.items():
        p.add_argument(f"--{prefix}{flag[2:]}", dest=f"{prefix.replace('-', '_')}{key}", metavar=key.upper())


def _config_from(args, prefix: str = ""):
    from .experiments import ExperimentConfig

    attr = prefix.replace("-", "_")
    overrides = {key: getattr(args, attr + key) for key in _RUN_FLAGS.values()}
    path = getattr(args, attr + "config")
    if path:
        return ExperimentConfig.from_file(path, **overrides)
    return ExperimentConfig.from_text("", **overrides)


def _threshold(args, value: float, what: str) -> int:
    if args.min_acc is None:
        return EXIT_OK
    if math.isnan(value) or value < args.min_acc:
        print(f"FAIL {what}: {value:.2f} < {args.min_acc:.2f}")
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_train(args) -> int:
    from .experiments import run_train

    result = run_train(_config_from(args))
    print(f"{result.config.name}: mean final accuracy {result.mean_final_accuracy:.2f}% -> {result.directory}")
    if result.failed_seeds:
        print(f"failed seeds: {result.failed_seeds}")
        return EXIT_RUN
    return _threshold(args, result.mean_final_accuracy, "mean final accuracy")


def _report_grid(result) -> int:
    from .experiments import mean_final_accuracy

    by_run: dict[str, list] = {}
    for r in result.records:
        by_run.setdefault(r.run_id, []).append(r)
    for run_id, recs in by_run.items():
        print(f"{run_id}: {mean_final_accuracy(recs):.2f}%")
    for run_id, err in result.errors.items():
        print(f"{run_id}: FAILED ({err})")
    print(f"metrics -> {result.path}")
    failed = bool(result.errors) or any(r.failed for r in result.records)
    return EXIT_RUN if failed else EXIT_OK


def cmd_grid(args) -> int:
    from .experiments import run_grid

    base = _config_from(args)
    grid = {}
    if args.activations:
        grid["activation"] = _strs(args.activations)
    if args.optimizers:
        grid["optimizer"] = _strs(args.optimizers)
    if args.lrs:
        grid["lr"] = _floats(args.lrs)
    return _report_grid(run_grid(base, grid, workers=args.workers))


def cmd_init_sweep(args) -> int:
    from .experiments import run_init_sweep

    base = _config_from(args)
    return _report_grid(run_init_sweep(_floats(args.alphas), _floats(args.betas), base, workers=args.workers))


def cmd_transfer(args) -> int:
    from .experiments import run_transfer

    finetune = _config_from(args)
    pretrain = _config_from(args, prefix="pretrain-")
    checkpoints = [int(c) for c in _strs(args.checkpoints)]
    result = run_transfer(pretrain, finetune, checkpoints)
    print(f"no_finetune: {result.accuracy('no_finetune', 0):.2f}%")
    for c in sorted(set(checkpoints)):
        print(f"after {c} epochs: finetune {result.accuracy('finetune', c):.2f}%, "
              f"no_pretrain {result.accuracy('no_pretrain', c):.2f}%")
    print(f"metrics -> {result.path}\nsummary -> {result.summary_path}")
    if any(r.failed for r in result.records):
        return EXIT_RUN
    return _threshold(args, result.accuracy("finetune", max(checkpoints)), "finetuned accuracy")


def cmd_evaluate(args) -> int:
    from .experiments import evaluate

    acc = evaluate(args.checkpoint, args.dataset, activation=args.activation, split=args.split)
    print(f"accuracy {acc:.2f}%")
    return _threshold(args, acc, "accuracy")


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_checks

    reports = run_checks(args.op or None, trials=args.trials, tolerance=args.tolerance, seed=args.seed)
    for r in reports:
        print(r.summary())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_THRESHOLD


def cmd_convert(args) -> int:
    from .data import convert_to_idx

    rep = convert_to_idx(args.src, args.out, size=args.size)
    print(f"wrote {rep.written} images in {len(rep.classes)} classes -> {rep.images_path}, {rep.labels_path}")
    if rep.skipped:
        print(f"skipped {len(rep.skipped)} unreadable files")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arelu", description="AReLU experiments on MNIST-style data")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--backend", choices=kernels.available_backends(), help="kernel implementation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train MNIST-Conv once per seed")
    _add_run_flags(p)
    p.add_argument("--min-acc", type=float, help="exit 3 if the mean final accuracy is lower")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="cross product of activations, optimizers and learning rates")
    _add_run_flags(p)
    p.add_argument("--activations", help="comma-separated activation names")
    p.add_argument("--optimizers", help="comma-separated: sgd,adam")
    p.add_argument("--lrs", help="comma-separated learning rates")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("init-sweep", help="one run per (alpha0, beta0) pair")
    _add_run_flags(p)
    p.add_argument("--alphas", required=True)
    p.add_argument("--betas", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_init_sweep)

    p = sub.add_parser("transfer", help="pretrain on one dataset, compare three arms on another")
    _add_run_flags(p)
    _add_run_flags(p, prefix="pretrain-")
    p.add_argument("--checkpoints", default="5,10,20", help="finetune epochs at which to report accuracy")
    p.add_argument("--min-acc", type=float, help="exit 3 if the final finetuned accuracy is lower")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("evaluate", help="accuracy of a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--activation", help="needed only for parameter-free activations without a config.txt")
    p.add_argument("--min-acc", type=float, help="exit 3 if the accuracy is lower")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    p.add_argument("--op", action="append", help="operation name (repeatable); default all")
    p.add_argument("--trials", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("convert", help="folder of per-class images -> IDX pair")
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True, help="output prefix, e.g. data/svhn/train")
    p.add_argument("--size", type=int, default=28)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        if args.backend:
            kernels.set_backend(args.backend)
        return args.func(args)
    except (ConfigError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a failed run
        log.debug("run failed", exc_info=True)
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
