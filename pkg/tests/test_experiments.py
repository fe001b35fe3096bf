import csv
import math

import numpy as np
import pytest

from arelu.data import Dataset, load_split
from arelu.errors import ConfigError, ConsistencyError
from arelu.experiments import (
    CSV_HEADER,
    ExperimentConfig,
    MetricsRecord,
    evaluate,
    expand_grid,
    read_metrics,
    run_grid,
    run_init_sweep,
    run_train,
    run_transfer,
)
from arelu.model import MnistConvSpec, build_mnist_conv, save_checkpoint
from conftest import make_synthetic


def cfg(tmp_path, synth, **kw):
    base = dict(dataset=str(synth), out_dir=str(tmp_path / "runs"), seeds=(0,), epochs=1, widths=(4, 8, 8))
    base.update(kw)
    return ExperimentConfig(**base)


# ------------------------------------------------------------------------ config


def test_config_defaults():
    c = ExperimentConfig()
    assert (c.alpha, c.beta, c.batch_size, c.seeds, c.optimizer, c.momentum) == (0.9, 2.0, 64, (0, 1, 2), "sgd", 0)
    c.validate()


@pytest.mark.parametrize("bad", [
    {"epochs": 0}, {"seeds": ()}, {"seeds": (1, 1)}, {"alpha": 0.0}, {"alpha": 1.0}, {"beta": math.inf},
    {"lr": 0.0}, {"batch_size": 0}, {"optimizer": "rmsprop"}, {"precision": "float16"},
    {"activation": "maxout"}, {"widths": (4, 4)}, {"subset": 0},
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad).validate()


def test_config_text_roundtrip(tmp_path):
    c = ExperimentConfig(activation="selu", lr=3e-4, seeds=(4, 5), subset=100, run_id="x", activation_decay=True)
    (tmp_path / "c.txt").write_text(c.to_text())
    assert ExperimentConfig.from_file(tmp_path / "c.txt") == c


def test_config_file_with_overrides():
    text = "# comment\nactivation = relu\nlr = 0.01  # trailing\nseeds = 1, 2\nbatch-size = 32\n"
    c = ExperimentConfig.from_text(text, lr="0.5", epochs=None)
    assert (c.activation, c.lr, c.seeds, c.batch_size, c.epochs) == ("relu", 0.5, (1, 2), 32, 1)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("nonsense = 1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("lr 0.1\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_text("epochs = many\n")


def test_metrics_record_bounds():
    with pytest.raises(ConsistencyError):
        MetricsRecord("r", 0, 1, 0.1, 100.5, 0.0)


# ------------------------------------------------------------------------- train


def test_run_train_outputs(tmp_path, synth):
    c = cfg(tmp_path, synth, seeds=(0, 1), epochs=2, optimizer="adam", lr=1e-2, batch_size=16)
    res = run_train(c)
    d = res.directory
    assert sorted(p.name for p in d.iterdir()) == ["config.txt", "metrics.csv", "seed0.ckpt", "seed1.ckpt"]
    with open(d / "metrics.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == CSV_HEADER and len(rows) == 5
    recs = read_metrics(d / "metrics.csv")
    assert [(r.seed, r.epoch) for r in recs] == [(0, 1), (0, 2), (1, 1), (1, 2)]
    assert all(0 <= r.test_acc <= 100 and len(r.alphas) == 3 for r in recs)
    assert res.mean_final_accuracy > 50
    # reconstructible from its directory
    again = ExperimentConfig.from_file(d / "config.txt")
    assert again == c
    assert evaluate(d / "seed1.ckpt", synth) == pytest.approx(recs[-1].test_acc)


def test_non_arelu_rows_have_empty_alpha_cells(tmp_path, synth):
    res = run_train(cfg(tmp_path, synth, activation="relu"))
    with open(res.directory / "metrics.csv") as fh:
        row = list(csv.DictReader(fh))[0]
    assert all(row[k] == "" for k in CSV_HEADER[6:])


def test_epochs_zero_is_config_error(tmp_path, synth):
    with pytest.raises(ConfigError):
        run_train(cfg(tmp_path, synth, epochs=0))


def test_diverged_seed_marked_failed_and_next_seed_runs(tmp_path, synth):
    res = run_train(cfg(tmp_path, synth, lr=1e4, seeds=(0, 1)))
    assert res.failed_seeds == [0, 1]
    recs = read_metrics(res.directory / "metrics.csv")
    assert [(r.seed, r.epoch, r.test_acc) for r in recs] == [(0, 1, None), (1, 1, None)]
    assert all(math.isnan(r.train_loss) for r in recs)


def strip_wall(path):
    with open(path) as fh:
        return [row[:5] + row[6:] for row in csv.reader(fh)]


def test_float64_runs_are_bit_identical(tmp_path, synth):
    a = run_train(cfg(tmp_path / "a", synth, precision="float64", epochs=2, activation="rrelu"))
    b = run_train(cfg(tmp_path / "b", synth, precision="float64", epochs=2, activation="rrelu"))
    assert strip_wall(a.directory / "metrics.csv") == strip_wall(b.directory / "metrics.csv")
    assert (a.directory / "seed0.ckpt").read_bytes() == (b.directory / "seed0.ckpt").read_bytes()


def test_subset_limits_training_set(tmp_path, synth):
    res = run_train(cfg(tmp_path, synth, subset=16, test_subset=8, batch_size=4))
    assert res.records[0].test_acc in {k * 12.5 for k in range(9)}


# -------------------------------------------------------------------------- grids


def test_grid_rows_and_ids(tmp_path, synth):
    res = run_grid(cfg(tmp_path, synth), {"activation": ["arelu", "relu"], "lr": [1e-3, 1e-2]})
    assert len(res.records) == 4 and not res.errors
    assert {r.run_id for r in res.records} == {
        "arelu_sgd_lr0.001", "arelu_sgd_lr0.01", "relu_sgd_lr0.001", "relu_sgd_lr0.01"}
    assert len(read_metrics(res.path)) == 4


def test_empty_grid_is_config_error(tmp_path, synth):
    with pytest.raises(ConfigError):
        run_grid(cfg(tmp_path, synth), {})
    with pytest.raises(ConfigError):
        expand_grid(cfg(tmp_path, synth), {"lr": []})
    with pytest.raises(ConfigError):
        expand_grid(cfg(tmp_path, synth), {"activation": ["relu", "maxout"]})


def test_grid_continues_past_failed_cell(tmp_path, synth):
    res = run_grid(cfg(tmp_path, synth), {"dataset": [str(tmp_path / "missing"), str(synth)]})
    assert len(res.errors) == 1 and "FileNotFoundError" in next(iter(res.errors.values()))
    assert len(res.records) == 1


def test_init_sweep(tmp_path, synth):
    res = run_init_sweep([0.25, 0.75], [1.0, 2.0], cfg(tmp_path, synth))
    assert len({r.run_id for r in res.records}) == 4
    for r in res.records:
        assert all(0.01 <= a <= 0.99 for a in r.alphas)
    with pytest.raises(ConfigError):
        run_init_sweep([math.nan], [1.0], cfg(tmp_path, synth))


def test_single_pair_sweep_equals_train(tmp_path, synth):
    base = cfg(tmp_path, synth, precision="float64")
    sweep = run_init_sweep([0.5], [1.5], base.replace(out_dir=str(tmp_path / "s")))
    train = run_train(base.replace(alpha=0.5, beta=1.5))
    strip = lambda r: (r.seed, r.epoch, r.train_loss, r.test_acc, r.alphas, r.betas)  # noqa: E731
    assert [strip(r) for r in sweep.records] == [strip(r) for r in train.records]


# ----------------------------------------------------------------------- transfer


def test_transfer_three_arms(tmp_path, synth):
    pre = cfg(tmp_path, synth, lr=0.05, momentum=0.9, epochs=2)
    ft = cfg(tmp_path, synth, lr=1e-5, epochs=2)
    res = run_transfer(pre, ft, checkpoints=(1, 2))
    arms = {(s["arm"], s["finetune_epochs"]) for s in res.summary}
    assert arms == {("no_finetune", 0), ("finetune", 1), ("finetune", 2), ("no_pretrain", 1), ("no_pretrain", 2)}
    # identical source and target: a tiny finetune barely moves accuracy
    assert abs(res.accuracy("finetune", 2) - res.accuracy("no_finetune", 0)) < 2
    assert res.accuracy("finetune", 2) > res.accuracy("no_pretrain", 2)
    assert res.summary_path.exists() and len(read_metrics(res.path)) == 2 + 1 + 2 + 2


def test_transfer_no_finetune_is_deterministic(tmp_path, synth):
    pre = cfg(tmp_path, synth, lr=0.05, epochs=1)
    ft = cfg(tmp_path, synth, lr=1e-5, epochs=1)
    a = run_transfer(pre, ft.replace(out_dir=str(tmp_path / "a")), checkpoints=(1,))
    b = run_transfer(pre, ft.replace(out_dir=str(tmp_path / "b")), checkpoints=(1,))
    assert a.accuracy("no_finetune", 0) == b.accuracy("no_finetune", 0)


def test_transfer_shape_mismatch(tmp_path, synth):
    small = make_synthetic(tmp_path / "small", size=16)
    with pytest.raises(ConfigError):
        run_transfer(cfg(tmp_path, synth), cfg(tmp_path, small), checkpoints=(1,))


# ----------------------------------------------------------------------- evaluate


def constant_model(tmp_path, cls):
    m = build_mnist_conv(MnistConvSpec("relu", widths=(4, 8, 8)))
    p = m.named_params()
    p["fc.weight"].value[...] = 0
    p["fc.bias"].value[...] = 0
    p["fc.bias"].value[cls] = 1
    save_checkpoint(m, tmp_path / "const.ckpt")
    return tmp_path / "const.ckpt"


def test_evaluate_constructed_models(tmp_path, synth):
    ds = load_split(synth, "train")
    only3 = Dataset(ds.images[ds.labels == 3], ds.labels[ds.labels == 3])
    assert evaluate(constant_model(tmp_path, 3), only3, activation="relu") == 100.0


def test_evaluate_constant_predictor_on_mnist(tmp_path, mnist_dir):
    assert evaluate(constant_model(tmp_path, 1), mnist_dir, activation="relu") == pytest.approx(11.35)


def test_evaluate_empty_dataset(tmp_path):
    empty = Dataset(np.zeros((0, 1, 28, 28), np.float32), np.zeros(0, np.int64))
    with pytest.raises(ConsistencyError):
        evaluate(constant_model(tmp_path, 0), empty, activation="relu")
