"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Criteria 4-6 train on the real datasets under ``$ARELU_DATA_DIR`` and take
about two hours on one CPU core in total; they are marked ``slow``
(deselect with ``-m "not slow"``).
"""
import csv
import math
import struct
import time

import numpy as np
import pytest

from arelu.activations import AReLUState, arelu_backward, arelu_forward, elsa_attention, sigmoid_scalar
from arelu.data import IMAGE_MAGIC, LABEL_MAGIC, read_idx, split_paths, write_dataset
from arelu.experiments import ExperimentConfig, read_metrics, run_init_sweep, run_train, run_transfer
from arelu.gradcheck import CHECKS, run_checks
from conftest import data_dir


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")


def require(name):
    d = data_dir(name)
    if d is None:
        pytest.skip(f"{name} not found under $ARELU_DATA_DIR")
    return d


# ------------------------------------------------------------------------ 1


def test_1_gradcheck_suite(capsys):
    ops = [n for n in CHECKS if n != "mnist_conv"]
    t0 = time.perf_counter()
    reports = run_checks(ops, tolerance=1e-5)
    elapsed = time.perf_counter() - t0
    trials_ok = all(r.trials >= (1000 if r.name == "arelu" else 100) for r in reports)
    worst = max(reports, key=lambda r: r.max_rel_err)
    ok = all(r.passed for r in reports) and trials_ok and len(reports) == 18 and elapsed < 120
    report(capsys, 1, ok, f"{len(reports)} ops, worst {worst.name} max_rel={worst.max_rel_err:.2e} "
                          f"(< 1e-5), {elapsed:.1f}s (< 120s)")
    for r in reports:
        assert r.passed, r.summary()
    assert trials_ok and len(reports) == 18
    assert elapsed < 120


# ------------------------------------------------------------------------ 2


def test_2_closed_form_gradient_identity(capsys):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 500))
        x = rng.normal(scale=rng.uniform(0.1, 10), size=n)
        d_out = rng.normal(size=n)
        alpha, beta = float(rng.uniform(0.01, 0.99)), float(rng.uniform(-6, 6))
        st = AReLUState(alpha, beta, dtype=np.float64)
        _, ctx = arelu_forward(x, st)
        _, g_alpha, g_beta = arelu_backward(ctx, st, d_out)
        sb = sigmoid_scalar(beta)
        want_alpha = math.fsum(x[x < 0] * d_out[x < 0])
        want_beta = sb * (1 - sb) * math.fsum(x[x >= 0] * d_out[x >= 0])
        for got, want in ((g_alpha, want_alpha), (g_beta, want_beta)):
            worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    ok = worst <= 1e-10
    report(capsys, 2, ok, f"1000 instances, max error {worst:.2e} (<= 1e-10)")
    assert ok


# ------------------------------------------------------------------------ 3


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_3_decomposition(capsys, dtype):
    rng = np.random.default_rng(3)
    x = (rng.standard_normal(100_000) * 10.0 ** rng.uniform(-6, 6, 100_000)).astype(dtype)
    x[:10] = [0.0, -0.0, 1.0, -1.0, 1e-30, -1e-30, 1e30, -1e30, 5e-39, -5e-39]
    alpha, beta = 0.37, -1.3
    y, _ = arelu_forward(x, AReLUState(alpha, beta, dtype=dtype))
    ref = np.maximum(x, dtype(0)) + elsa_attention(x, alpha, beta) * x
    try:
        ulps = int(np.max(np.testing.assert_array_max_ulp(y, ref, maxulp=1)))
    except AssertionError:
        ulps = None
    report(capsys, 3, ulps is not None, f"{np.dtype(dtype).name}, 1e5 elements, max {ulps} ulp (<= 1)")
    assert ulps is not None


# ------------------------------------------------------------------------ 4


def table1_mean(mnist, activation, optimizer, lr, tmp_path):
    cfg = ExperimentConfig(dataset=str(mnist), activation=activation, optimizer=optimizer, lr=lr, epochs=1,
                           seeds=(0, 1, 2), batch_size=64, out_dir=str(tmp_path))
    res = run_train(cfg)
    assert not res.failed_seeds
    return res.mean_final_accuracy


@pytest.mark.slow
def test_4_first_epoch_table(capsys, tmp_path):
    mnist = require("mnist")
    adam = table1_mean(mnist, "arelu", "adam", 1e-3, tmp_path)
    gaps = {}
    for lr in (1e-3, 1e-4):
        a = table1_mean(mnist, "arelu", "sgd", lr, tmp_path)
        r = table1_mean(mnist, "relu", "sgd", lr, tmp_path)
        gaps[lr] = (a, r)
    checks = [adam >= 94, gaps[1e-3][0] - gaps[1e-3][1] >= 20, gaps[1e-4][0] - gaps[1e-4][1] >= 10]
    report(capsys, 4, all(checks),
           f"Adam 1e-3 AReLU {adam:.2f} (>= 94); "
           f"SGD 1e-3 AReLU {gaps[1e-3][0]:.2f} vs ReLU {gaps[1e-3][1]:.2f} (gap >= 20); "
           f"SGD 1e-4 AReLU {gaps[1e-4][0]:.2f} vs ReLU {gaps[1e-4][1]:.2f} (gap >= 10)")
    assert adam >= 94
    assert gaps[1e-3][0] - gaps[1e-3][1] >= 20
    assert gaps[1e-4][0] - gaps[1e-4][1] >= 10


# ------------------------------------------------------------------------ 5


@pytest.mark.slow
def test_5_initialization_insensitivity(capsys, tmp_path):
    mnist = require("mnist")
    base = ExperimentConfig(dataset=str(mnist), optimizer="adam", lr=1e-3, epochs=10, seeds=(0,),
                            out_dir=str(tmp_path))
    res = run_init_sweep([0.25, 0.75], [1.0, 2.0], base)
    assert not res.errors
    recs = read_metrics(res.path)
    finals = {}
    for r in recs:
        if r.epoch == 10:
            finals[r.run_id] = r.test_acc
    alphas = [a for r in recs for a in r.alphas]
    spread = max(finals.values()) - min(finals.values())
    in_range = all(0.01 <= a <= 0.99 for a in alphas)
    ok = len(finals) == 4 and spread < 2 and in_range and len(alphas) == 4 * 10 * 3
    report(capsys, 5, ok, f"finals {sorted(round(v, 2) for v in finals.values())}, spread {spread:.2f} (< 2); "
                          f"alpha in [{min(alphas):.3f}, {max(alphas):.3f}] over {len(alphas)} CSV values")
    assert len(finals) == 4 and len(alphas) == 4 * 10 * 3
    assert spread < 2
    assert in_range


# ------------------------------------------------------------------------ 6


def transfer(activation, tmp_path):
    pre = ExperimentConfig(dataset=str(require("mnist")), activation=activation, optimizer="sgd", lr=0.01,
                           epochs=5, subset=10_000, seeds=(0,), out_dir=str(tmp_path))
    ft = pre.replace(dataset=str(require("fashion-mnist")), lr=1e-5, epochs=20)
    res = run_transfer(pre, ft, checkpoints=(5, 10, 20))
    assert not any(r.failed for r in res.records)
    return res


@pytest.mark.slow
def test_6_transfer_orderings(capsys, tmp_path):
    ar = transfer("arelu", tmp_path)
    re = transfer("relu", tmp_path)
    ar_ft, ar_np = ar.accuracy("finetune", 20), ar.accuracy("no_pretrain", 20)
    re_ft = re.accuracy("finetune", 20)
    ok = ar_ft > ar_np and ar_ft >= re_ft
    report(capsys, 6, ok, f"AReLU finetuned {ar_ft:.2f} > no-pretrain {ar_np:.2f}; "
                          f"AReLU finetuned {ar_ft:.2f} >= ReLU finetuned {re_ft:.2f}")
    assert ar_ft > ar_np
    assert ar_ft >= re_ft


# ------------------------------------------------------------------------ 7


def test_7_float64_determinism(capsys, tmp_path, synth):
    mnist = data_dir("mnist")
    cfg = ExperimentConfig(dataset=str(mnist or synth), subset=2000 if mnist else None,
                           test_subset=1000 if mnist else None, precision="float64", epochs=2, seeds=(0, 1),
                           activation="arelu", optimizer="sgd", lr=0.01, momentum=0.9)

    def rows(out):
        res = run_train(cfg.replace(out_dir=str(tmp_path / out)))
        with open(res.directory / "metrics.csv") as fh:
            return [r[:5] + r[6:] for r in csv.reader(fh)]

    a, b = rows("a"), rows("b")
    ok = a == b and len(a) == 5
    report(capsys, 7, ok, f"two float64 runs, {len(a) - 1} CSV rows identical except wall_s "
                          f"({'MNIST subset' if mnist else 'synthetic data'})")
    assert ok


# ------------------------------------------------------------------------ 8


def test_8_data_layer(capsys, tmp_path):
    rng = np.random.default_rng(8)
    images = rng.integers(0, 256, size=(37, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, size=37, dtype=np.uint8)
    img1, lbl1 = write_dataset(tmp_path / "a" / "train", images, labels)
    back_i, back_l = read_idx(img1, IMAGE_MAGIC), read_idx(lbl1, LABEL_MAGIC)
    img2, lbl2 = write_dataset(tmp_path / "b" / "train", back_i, back_l)
    roundtrip = (img1.read_bytes() == img2.read_bytes() and lbl1.read_bytes() == lbl2.read_bytes()
                 and np.array_equal(back_i, images) and np.array_equal(back_l, labels))
    detail = f"synthetic round-trip {'byte-exact' if roundtrip else 'MISMATCH'}"
    headers_ok = True
    mnist = data_dir("mnist")
    if mnist is not None:
        found = []
        for split, n in (("train", 60000), ("test", 10000)):
            ip, lp = split_paths(mnist, split)
            with open(ip, "rb") as f:
                im = struct.unpack(">4I", f.read(16))
            with open(lp, "rb") as f:
                lm = struct.unpack(">2I", f.read(8))
            found.append((im, lm))
            headers_ok &= im == (IMAGE_MAGIC, n, 28, 28) and lm == (LABEL_MAGIC, n)
            headers_ok &= read_idx(ip, IMAGE_MAGIC).shape == (n, 28, 28) and read_idx(lp, LABEL_MAGIC).shape == (n,)
        detail += (f"; MNIST headers N={found[0][0][1]}/{found[1][0][1]}, "
                   f"magics 0x{found[0][0][0]:08X}/0x{found[0][1][0]:08X}")
    else:
        detail += "; MNIST absent, header check skipped"
    report(capsys, 8, roundtrip and headers_ok, detail)
    assert roundtrip
    assert headers_ok
    if mnist is None:
        pytest.skip("MNIST headers not checked: dataset absent")
