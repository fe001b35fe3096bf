"""Training harness: single runs, grids, initialization sweeps and transfer.

Every run writes into its own directory::

    <out_dir>/<run_id>/config.txt     flat key = value snapshot
    <out_dir>/<run_id>/metrics.csv    one row per (seed, epoch)
    <out_dir>/<run_id>/seed<S>.ckpt   final weights for each seed

Metrics rows share one fixed header (:data:`CSV_HEADER`). A seed whose loss
or gradients become non-finite keeps its completed epochs plus one row for the
diverged epoch with ``train_loss=nan`` and an empty ``test_acc``; the run then
moves on to the next seed.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import io
import itertools
import logging
import math
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

import numpy as np

from .activations import activation_kind
from .data import BatchIterator, Dataset, load_split, resolve_dataset_dir
from .errors import ConfigError, ConsistencyError, TrainingError
from .model import (
    MnistConvSpec,
    SequentialModel,
    build_mnist_conv,
    infer_mnist_conv_spec,
    read_checkpoint,
    save_checkpoint,
)
from .optim import build_optimizer
from .tensor import precision

log = logging.getLogger(__name__)

CSV_HEADER = ("run_id", "seed", "epoch", "train_loss", "test_acc", "wall_s",
              "alpha_1", "beta_1", "alpha_2", "beta_2", "alpha_3", "beta_3")
CONFIG_NAME = "config.txt"
METRICS_NAME = "metrics.csv"


# ------------------------------------------------------------------------ config


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in str(text).replace(" ", "").split(",") if s)


def _parse_optional_int(text: str) -> int | None:
    text = str(text).strip().lower()
    return None if text in ("", "none", "all") else int(text)


def _parse_optional_str(text: str) -> str | None:
    text = str(text).strip()
    return None if text.lower() in ("", "none") else text


@dataclass
class ExperimentConfig:
    """Declarative description of a training run.

    Parameters
    ----------
    dataset : str
        Directory holding ``train-*`` and ``t10k-*`` IDX files, or a name
        looked up under ``$ARELU_DATA_DIR``.
    test_dataset : str, optional
        Evaluation directory; defaults to ``dataset``.
    seeds : tuple of int
        One independent training run per seed.
    subset, test_subset : int, optional
        Train (evaluate) on the first N samples after a shuffle seeded by
        ``subset_seed``; None uses everything.
    activation_params : {"shared", "momentum"}
        Whether AReLU/PReLU scalars use the main optimizer or their own
        momentum SGD.
    """

    dataset: str = "mnist"
    test_dataset: str | None = None
    activation: str = "arelu"
    optimizer: str = "sgd"
    lr: float = 1e-3
    momentum: float = 0.0
    weight_decay: float = 0.0
    batch_size: int = 64
    epochs: int = 1
    seeds: tuple[int, ...] = (0, 1, 2)
    alpha: float = 0.9
    beta: float = 2.0
    widths: tuple[int, ...] = (32, 64, 128)
    precision: str = "float32"
    subset: int | None = None
    test_subset: int | None = None
    subset_seed: int = 0
    activation_params: str = "shared"
    activation_decay: bool = False
    out_dir: str = "runs"
    run_id: str | None = None

    _PARSERS = {
        "lr": float, "momentum": float, "weight_decay": float, "alpha": float, "beta": float,
        "batch_size": int, "epochs": int, "subset_seed": int,
        "seeds": _parse_ints, "widths": _parse_ints,
        "subset": _parse_optional_int, "test_subset": _parse_optional_int,
        "test_dataset": _parse_optional_str, "run_id": _parse_optional_str,
        "activation_decay": lambda s: str(s).strip().lower() in ("1", "true", "yes", "on"),
    }

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, str) and f.name in self._PARSERS:
                setattr(self, f.name, self._PARSERS[f.name](value))
            elif f.name in ("seeds", "widths") and not isinstance(value, tuple):
                setattr(self, f.name, tuple(int(v) for v in value))

    def validate(self) -> "ExperimentConfig":
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds in {self.seeds}")
        if not (0.0 < self.alpha < 1.0) or not math.isfinite(self.beta):
            raise ConfigError(f"alpha must lie in (0, 1) and beta must be finite, got {self.alpha}, {self.beta}")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ConfigError("momentum and weight decay must be non-negative")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        for key in ("subset", "test_subset"):
            n = getattr(self, key)
            if n is not None and n < 1:
                raise ConfigError(f"{key} must be >= 1 (or none for all samples), got {n}")
        if self.optimizer.lower() not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.activation_params not in ("shared", "momentum"):
            raise ConfigError(f"activation_params must be 'shared' or 'momentum', got {self.activation_params!r}")
        if len(self.widths) != 3 or min(self.widths) < 1:
            raise ConfigError(f"widths must be three positive integers, got {self.widths}")
        activation_kind(self.activation)
        return self

    def replace(self, **overrides) -> "ExperimentConfig":
        unknown = set(overrides) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **overrides)

    @property
    def name(self) -> str:
        if self.run_id:
            return self.run_id
        return f"{self.activation}_{self.optimizer.lower()}_lr{self.lr:g}"

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(map(str, value))
            elif value is None:
                value = "none"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "ExperimentConfig":
        values: dict[str, Any] = {}
        known = {f.name for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            values[key] = value
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), **overrides)

    def model_spec(self) -> MnistConvSpec:
        return MnistConvSpec(activation=self.activation, widths=self.widths, alpha=self.alpha, beta=self.beta,
                             activation_decay=self.activation_decay)


# ----------------------------------------------------------------------- metrics


@dataclass
class MetricsRecord:
    run_id: str
    seed: int
    epoch: int
    train_loss: float
    test_acc: float | None
    wall_s: float
    alphas: tuple[float, ...] = ()
    betas: tuple[float, ...] = ()

    def __post_init__(self):
        if self.test_acc is not None and not (0.0 <= self.test_acc <= 100.0):
            raise ConsistencyError(f"accuracy {self.test_acc} outside [0, 100]")

    @property
    def failed(self) -> bool:
        return self.test_acc is None

    def row(self) -> list[str]:
        cells = [self.run_id, str(self.seed), str(self.epoch), repr(float(self.train_loss)),
                 "" if self.test_acc is None else repr(float(self.test_acc)), f"{self.wall_s:.3f}"]
        for i in range(3):
            if i < len(self.alphas):
                cells += [repr(float(self.alphas[i])), repr(float(self.betas[i]))]
            else:
                cells += ["", ""]
        return cells

    @classmethod
    def from_row(cls, row: dict[str, str]) -> "MetricsRecord":
        alphas = tuple(float(row[f"alpha_{i}"]) for i in (1, 2, 3) if row.get(f"alpha_{i}"))
        betas = tuple(float(row[f"beta_{i}"]) for i in (1, 2, 3) if row.get(f"beta_{i}"))
        return cls(row["run_id"], int(row["seed"]), int(row["epoch"]), float(row["train_loss"]),
                   float(row["test_acc"]) if row["test_acc"] else None, float(row["wall_s"]), alphas, betas)


class CsvWriter:
    """Append-only metrics CSV; writes from several threads are serialized."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists() or self.path.stat().st_size == 0:
            with open(self.path, "w", newline="") as fh:
                csv.writer(fh).writerow(CSV_HEADER)

    def write(self, records: MetricsRecord | Iterable[MetricsRecord]) -> None:
        if isinstance(records, MetricsRecord):
            records = [records]
        buf = io.StringIO()
        w = csv.writer(buf)
        for r in records:
            w.writerow(r.row())
        with self._lock, open(self.path, "a", newline="") as fh:
            fh.write(buf.getvalue())


def read_metrics(path: str | Path) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ConsistencyError(f"{path}: unexpected header {reader.fieldnames}")
        return [MetricsRecord.from_row(row) for row in reader]


def final_accuracies(records: Sequence[MetricsRecord]) -> dict[tuple[str, int], float | None]:
    """Last-epoch accuracy per (run_id, seed); None for failed seeds."""
    out: dict[tuple[str, int], float | None] = {}
    for r in records:
        out[(r.run_id, r.seed)] = r.test_acc
    return out


def mean_final_accuracy(records: Sequence[MetricsRecord]) -> float:
    accs = list(final_accuracies(records).values())
    if not accs or any(a is None for a in accs):
        return float("nan")
    return float(np.mean(accs))


@dataclass
class RunResult:
    config: ExperimentConfig
    directory: Path
    records: list[MetricsRecord] = field(default_factory=list)

    @property
    def failed_seeds(self) -> list[int]:
        return sorted({r.seed for r in self.records if r.failed})

    @property
    def mean_final_accuracy(self) -> float:
        return mean_final_accuracy(self.records)


# ------------------------------------------------------------------------- data


@functools.lru_cache(maxsize=8)
def _load_cached(directory: str, split: str, dtype_name: str) -> Dataset:
    return load_split(directory, split, dtype=np.dtype(dtype_name))


def load_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    train_dir = str(resolve_dataset_dir(cfg.dataset))
    test_dir = str(resolve_dataset_dir(cfg.test_dataset or cfg.dataset))
    train = _load_cached(train_dir, "train", cfg.precision).subset(cfg.subset, cfg.subset_seed)
    test = _load_cached(test_dir, "test", cfg.precision).subset(cfg.test_subset, cfg.subset_seed)
    return train, test


def accuracy(model: SequentialModel, dataset: Dataset, batch_size: int = 500) -> float:
    """Percentage of samples whose argmax prediction equals the label."""
    if len(dataset) == 0:
        raise ConsistencyError("cannot evaluate on an empty dataset")
    pred = model.predict(dataset.images, batch_size=batch_size)
    return float(np.count_nonzero(pred == dataset.labels)) * 100.0 / len(dataset)


# ---------------------------------------------------------------------- training


def _activation_values(model: SequentialModel) -> tuple[tuple[float, ...], tuple[float, ...]]:
    states = model.activation_states()
    return tuple(float(s.alpha) for s in states), tuple(float(s.beta) for s in states)


def iter_epochs(model: SequentialModel, cfg: ExperimentConfig, train: Dataset, test: Dataset, seed: int,
                run_id: str, epochs: int | None = None) -> Iterator[MetricsRecord]:
    """Train ``model`` in place, yielding one record after each epoch.

    Raises
    ------
    TrainingError
        If the loss or a gradient becomes non-finite.
    """
    opt = build_optimizer(model.params(), cfg.optimizer, cfg.lr, momentum=cfg.momentum,
                          weight_decay=cfg.weight_decay, activation_params=cfg.activation_params)
    batches = BatchIterator(train, cfg.batch_size, seed)
    for epoch in range(1, (epochs or cfg.epochs) + 1):
        t0 = time.perf_counter()
        total, steps = 0.0, 0
        # divergence is detected explicitly below, so overflow warnings are noise
        with np.errstate(over="ignore", invalid="ignore"):
            for xb, yb in batches.epoch(epoch - 1):
                opt.zero_grad()
                loss, _ = model.forward_loss(xb, yb, train=True)
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, step {steps + 1}")
                model.backward()
                opt.step()
                total += loss
                steps += 1
        acc = accuracy(model, test)
        alphas, betas = _activation_values(model)
        rec = MetricsRecord(run_id, seed, epoch, total / steps, acc, time.perf_counter() - t0, alphas, betas)
        log.info("%s seed=%d epoch=%d loss=%.4f acc=%.2f (%.1fs)", run_id, seed, epoch, rec.train_loss, acc,
                 rec.wall_s)
        yield rec


def train_epochs(model: SequentialModel, cfg: ExperimentConfig, train: Dataset, test: Dataset, seed: int,
                 run_id: str, epochs: int | None = None) -> list[MetricsRecord]:
    return list(iter_epochs(model, cfg, train, test, seed, run_id, epochs))


def _run_seed(cfg: ExperimentConfig, train: Dataset, test: Dataset, seed: int, directory: Path,
              init_state: dict[str, np.ndarray] | None = None) -> tuple[list[MetricsRecord], SequentialModel]:
    """Train one seed; on divergence the completed epochs are kept and a failure row is appended."""
    model = build_mnist_conv(cfg.model_spec(), seed=seed)
    if init_state is not None:
        model.load_state_dict(init_state)
    records: list[MetricsRecord] = []
    try:
        for rec in iter_epochs(model, cfg, train, test, seed, cfg.name):
            records.append(rec)
    except TrainingError as exc:
        log.warning("%s seed=%d failed: %s", cfg.name, seed, exc)
        alphas, betas = _activation_values(model)
        records.append(MetricsRecord(cfg.name, seed, len(records) + 1, float("nan"), None, 0.0, alphas, betas))
    save_checkpoint(model, directory / f"seed{seed}.ckpt")
    return records, model


def _check_shapes(cfg: ExperimentConfig, *datasets: Dataset) -> None:
    spec = cfg.model_spec()
    for ds in datasets:
        shape = ds.images.shape[1:]
        if shape != (spec.in_channels, spec.input_size, spec.input_size):
            raise ConfigError(f"dataset images have shape {shape}, model expects "
                              f"{(spec.in_channels, spec.input_size, spec.input_size)}")
        if ds.num_classes > spec.num_classes or (len(ds) and int(ds.labels.max()) >= spec.num_classes):
            raise ConfigError(f"dataset has more than {spec.num_classes} classes")


def run_train(cfg: ExperimentConfig, writer: CsvWriter | None = None) -> RunResult:
    """Train MNIST-Conv once per seed, evaluating after every epoch.

    Writes ``config.txt``, ``metrics.csv`` and one checkpoint per seed into
    ``<out_dir>/<run_id>``. Rows also go to ``writer`` when one is given.
    """
    cfg.validate()
    directory = Path(cfg.out_dir) / cfg.name
    directory.mkdir(parents=True, exist_ok=True)
    (directory / CONFIG_NAME).write_text(cfg.to_text())
    local = CsvWriter(directory / METRICS_NAME)
    result = RunResult(cfg, directory)
    with precision(cfg.precision):
        train, test = load_datasets(cfg)
        _check_shapes(cfg, train, test)
        for seed in cfg.seeds:
            records, _ = _run_seed(cfg, train, test, seed, directory)
            local.write(records)
            if writer is not None:
                writer.write(records)
            result.records.extend(records)
    return result


# -------------------------------------------------------------------------- grids


def _fmt(value: Any) -> str:
    return f"{value:g}" if isinstance(value, float) else str(value)


def expand_grid(base: ExperimentConfig, grid: dict[str, Sequence[Any]]) -> list[ExperimentConfig]:
    """Cross product of ``grid`` applied to ``base``; each cell gets a descriptive run id."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid is empty: give at least one key with values")
    keys = list(grid)
    cells = []
    for values in itertools.product(*(grid[k] for k in keys)):
        overrides = dict(zip(keys, values))
        cell = base.replace(**overrides)
        parts = [cell.activation, cell.optimizer.lower(), f"lr{cell.lr:g}"]
        parts += [f"{k}{_fmt(v)}" for k, v in overrides.items() if k not in ("activation", "optimizer", "lr")]
        prefix = f"{base.run_id}_" if base.run_id else ""
        cells.append(cell.replace(run_id=prefix + "_".join(parts)))
    names = [c.name for c in cells]
    if len(set(names)) != len(names):
        raise ConfigError("grid produces duplicate run ids")
    for c in cells:
        c.validate()
    return cells


def _run_cell(cfg: ExperimentConfig) -> tuple[list[MetricsRecord], str | None]:
    try:
        return run_train(cfg).records, None
    except Exception as exc:  # a failed cell must not stop the grid
        log.error("grid cell %s failed: %s", cfg.name, exc)
        return [], f"{type(exc).__name__}: {exc}"


@dataclass
class GridResult:
    path: Path
    records: list[MetricsRecord]
    errors: dict[str, str]


def run_grid(base: ExperimentConfig, grid: dict[str, Sequence[Any]], workers: int = 1,
             csv_name: str = "grid.csv") -> GridResult:
    """Run every cell of ``grid`` and gather all rows into one long-format CSV.

    Cells may run in ``workers`` processes; only the parent writes the
    combined CSV. A cell that raises is reported in ``errors`` and skipped.
    """
    cells = expand_grid(base, grid)
    out = Path(base.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / csv_name
    path.unlink(missing_ok=True)
    writer = CsvWriter(path)
    records: list[MetricsRecord] = []
    errors: dict[str, str] = {}
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, cells))
    else:
        outcomes = map(_run_cell, cells)
    for cell, (recs, err) in zip(cells, outcomes):
        writer.write(recs)
        records.extend(recs)
        if err is not None:
            errors[cell.name] = err
    return GridResult(path, records, errors)


def run_init_sweep(alphas: Sequence[float], betas: Sequence[float], base: ExperimentConfig,
                   workers: int = 1) -> GridResult:
    """One run per (alpha0, beta0) pair; the CSV carries the alpha/beta trajectories."""
    values = [float(v) for v in (*alphas, *betas)]
    if not all(math.isfinite(v) for v in values):
        raise ConfigError("initial alpha/beta values must be finite")
    return run_grid(base, {"alpha": list(alphas), "beta": list(betas)}, workers=workers, csv_name="init_sweep.csv")


# ----------------------------------------------------------------------- transfer


TRANSFER_ARMS = ("no_pretrain", "no_finetune", "finetune")
SUMMARY_HEADER = ("activation", "arm", "seed", "finetune_epochs", "test_acc")


@dataclass
class TransferResult:
    path: Path
    summary_path: Path
    records: list[MetricsRecord]
    summary: list[dict[str, Any]]

    def accuracy(self, arm: str, epochs: int, activation: str | None = None) -> float:
        """Mean accuracy of ``arm`` after ``epochs`` finetune epochs (0 for no_finetune)."""
        accs = [s["test_acc"] for s in self.summary
                if s["arm"] == arm and s["finetune_epochs"] == epochs
                and (activation is None or s["activation"] == activation)]
        if not accs or any(a is None for a in accs):
            return float("nan")
        return float(np.mean(accs))


def run_transfer(pretrain: ExperimentConfig, finetune: ExperimentConfig,
                 checkpoints: Sequence[int] = (5, 10, 20)) -> TransferResult:
    """Pretrain on the source domain, then compare three arms on the target.

    ``no_pretrain`` trains from scratch with the finetune settings,
    ``no_finetune`` evaluates the pretrained weights untouched, and
    ``finetune`` continues training the pretrained weights. The finetune
    config sets the target data, seeds, activation and epoch budget (at
    least ``max(checkpoints)``).
    """
    pretrain = pretrain.replace(activation=finetune.activation, alpha=finetune.alpha, beta=finetune.beta,
                                widths=finetune.widths, precision=finetune.precision, seeds=finetune.seeds)
    pretrain.validate()
    finetune.validate()
    checkpoints = sorted({int(c) for c in checkpoints})
    if not checkpoints or checkpoints[0] < 1:
        raise ConfigError(f"finetune checkpoints must be positive, got {checkpoints}")
    if finetune.epochs < checkpoints[-1]:
        finetune = finetune.replace(epochs=checkpoints[-1])

    out = Path(finetune.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = finetune.run_id or f"transfer_{finetune.activation}"
    path = out / f"{base}.csv"
    summary_path = out / f"{base}_summary.csv"
    for p in (path, summary_path):
        p.unlink(missing_ok=True)
    writer = CsvWriter(path)
    records: list[MetricsRecord] = []
    summary: list[dict[str, Any]] = []

    def add_summary(arm, seed, epochs, acc):
        summary.append({"activation": finetune.activation, "arm": arm, "seed": seed,
                        "finetune_epochs": epochs, "test_acc": acc})

    with precision(finetune.precision):
        src_train, src_test = load_datasets(pretrain)
        tgt_train, tgt_test = load_datasets(finetune)
        if src_train.images.shape[1:] != tgt_train.images.shape[1:]:
            raise ConfigError(f"source images {src_train.images.shape[1:]} and target images "
                              f"{tgt_train.images.shape[1:]} differ in shape")
        _check_shapes(finetune, src_train, src_test, tgt_train, tgt_test)

        pre_cfg = pretrain.replace(run_id=f"{base}_pretrain", out_dir=str(out))
        ft_cfg = finetune.replace(run_id=f"{base}_finetune", out_dir=str(out))
        np_cfg = finetune.replace(run_id=f"{base}_no_pretrain", out_dir=str(out))
        dirs = {}
        for c in (pre_cfg, ft_cfg, np_cfg):
            dirs[c.name] = Path(c.out_dir) / c.name
            dirs[c.name].mkdir(parents=True, exist_ok=True)
            (dirs[c.name] / CONFIG_NAME).write_text(c.to_text())

        for seed in finetune.seeds:
            pre_recs, pre_model = _run_seed(pre_cfg, src_train, src_test, seed, dirs[pre_cfg.name])
            writer.write(pre_recs)
            records.extend(pre_recs)
            if any(r.failed for r in pre_recs):
                for arm in TRANSFER_ARMS:
                    add_summary(arm, seed, 0, None)
                continue
            state = pre_model.state_dict()

            acc0 = accuracy(pre_model, tgt_test)
            alphas, betas = _activation_values(pre_model)
            rec = MetricsRecord(f"{base}_no_finetune", seed, 0, float("nan"), acc0, 0.0, alphas, betas)
            writer.write(rec)
            records.append(rec)
            add_summary("no_finetune", seed, 0, acc0)

            for arm, cfg, init in (("finetune", ft_cfg, state), ("no_pretrain", np_cfg, None)):
                recs, _ = _run_seed(cfg, tgt_train, tgt_test, seed, dirs[cfg.name], init_state=init)
                writer.write(recs)
                records.extend(recs)
                by_epoch = {r.epoch: r.test_acc for r in recs}
                for c in checkpoints:
                    add_summary(arm, seed, c, by_epoch.get(c))

    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for s in summary:
            w.writerow([s["activation"], s["arm"], s["seed"], s["finetune_epochs"],
                        "" if s["test_acc"] is None else repr(float(s["test_acc"]))])
    return TransferResult(path, summary_path, records, summary)


# ----------------------------------------------------------------------- evaluate


def evaluate(checkpoint: str | Path, dataset: Dataset | str | Path, activation: str | None = None,
             split: str = "test") -> float:
    """Accuracy (%) of a saved MNIST-Conv on ``dataset``.

    The architecture is read from the checkpoint's parameter shapes. For
    activations without parameters the kind comes from ``activation`` or,
    failing that, from the ``config.txt`` saved next to the checkpoint.
    """
    checkpoint = Path(checkpoint)
    state = read_checkpoint(checkpoint)
    if activation is None and (checkpoint.parent / CONFIG_NAME).exists():
        activation = ExperimentConfig.from_file(checkpoint.parent / CONFIG_NAME).activation
    spec = infer_mnist_conv_spec(state, activation)
    if not isinstance(dataset, Dataset):
        dataset = load_split(resolve_dataset_dir(dataset), split)
    if len(dataset) == 0:
        raise ConsistencyError("cannot evaluate on an empty dataset")
    with precision("float32"):
        model = build_mnist_conv(spec, seed=0)
        model.load_state_dict(state)
        return accuracy(model, dataset.astype(np.float32))
