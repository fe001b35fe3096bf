import math
import struct

import numpy as np
import pytest

from arelu.errors import ConfigError, FormatError, ShapeError, StateError
from arelu.gradcheck import finite_diff, relative_error
from arelu.layers import Linear
from arelu.model import (
    MnistConvSpec,
    SequentialModel,
    build_mnist_conv,
    count_params,
    infer_mnist_conv_spec,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from arelu.optim import SGD

# conv1 + conv2 + conv3 + fc, weights and biases
BASE_PARAMS = (32 * 9 + 32) + (64 * 32 * 9 + 64) + (128 * 64 * 9 + 128) + (10 * 128 * 9 + 10)


def small(activation="arelu", **kw):
    return MnistConvSpec(activation=activation, widths=(3, 4, 5), input_size=8, **kw)


def test_build_counts():
    m = build_mnist_conv(MnistConvSpec("arelu"))
    assert count_params(m) == BASE_PARAMS + 6
    assert len(m.activation_states()) == 3
    m = build_mnist_conv(MnistConvSpec("relu"))
    assert count_params(m) == BASE_PARAMS
    assert m.activation_states() == []
    assert count_params(build_mnist_conv(MnistConvSpec("prelu"))) == BASE_PARAMS + 3


def test_spatial_trace():
    assert MnistConvSpec().spatial_trace() == [28, 14, 7, 3]
    m = build_mnist_conv(MnistConvSpec())
    assert m.named_params()["fc.weight"].value.shape == (10, 128 * 9)


def test_layer_order_and_names():
    m = build_mnist_conv(MnistConvSpec())
    assert [layer.name for layer in m.layers] == [
        "conv1", "pool1", "act1", "conv2", "pool2", "act2", "conv3", "pool3", "act3", "flatten", "fc"]
    p = m.named_params()
    assert p["act1.alpha"].clamp and not p["act1.alpha"].decay and not p["act2.beta"].decay


def test_build_rejects_bad_specs():
    with pytest.raises(ShapeError):
        build_mnist_conv(MnistConvSpec(input_size=5))
    with pytest.raises(ConfigError):
        build_mnist_conv(MnistConvSpec(widths=(8, 8)))
    with pytest.raises(ConfigError):
        build_mnist_conv(MnistConvSpec(activation="maxout"))


def test_duplicate_param_names():
    with pytest.raises(ConfigError):
        SequentialModel([Linear(2, 2, name="fc"), Linear(2, 2, name="fc")])


def test_uniform_logits_loss_is_ln10(f64):
    m = build_mnist_conv(MnistConvSpec())
    for p in m.params():
        if p.name.endswith("weight") or p.name.endswith("bias"):
            p.value[...] = 0
    x = np.random.default_rng(0).random((4, 1, 28, 28))
    loss, logits = m.forward_loss(x, np.array([0, 3, 5, 9]))
    assert loss == pytest.approx(math.log(10), abs=1e-12)
    assert np.all(logits == 0)


def test_loss_batch_repetition_and_bounds(f64, rng):
    m = build_mnist_conv(small(), seed=1)
    x = rng.random((1, 1, 8, 8))
    l1, _ = m.forward_loss(x, [4])
    l8, _ = m.forward_loss(np.repeat(x, 8, axis=0), [4] * 8)
    assert l1 == pytest.approx(l8, rel=1e-12)
    loss, _ = m.forward_loss(rng.random((6, 1, 8, 8)), rng.integers(0, 10, 6))
    assert math.isfinite(loss) and loss >= 0


def test_input_shape_checked():
    m = build_mnist_conv(MnistConvSpec())
    with pytest.raises(ShapeError):
        m.forward_loss(np.zeros((2, 1, 27, 27), np.float32), [0, 1])


def test_backward_requires_forward():
    m = build_mnist_conv(small())
    with pytest.raises(StateError):
        m.backward()
    m.forward_loss(np.zeros((1, 1, 8, 8), np.float32), [0])
    m.backward()
    with pytest.raises(StateError):
        m.backward()


@pytest.mark.parametrize("activation", ["arelu", "prelu", "gelu", "tanh"])
def test_end_to_end_conv_weight_gradient(f64, activation):
    rng = np.random.default_rng(11)
    m = build_mnist_conv(small(activation), seed=3)
    x = rng.random((2, 1, 8, 8))
    y = np.array([2, 7])
    w = m.named_params()["conv2.weight"]
    m.zero_grad()
    m.forward_loss(x, y)
    m.backward()
    analytic = w.grad.copy()

    def loss(v):
        saved = w.value.copy()
        w.value[...] = v
        out = m.forward_loss(x, y, train=False)[0]
        w.value[...] = saved
        return out

    numeric = finite_diff(loss, w.value.copy())
    assert relative_error(analytic, numeric).max() < 1e-4


def test_zero_inputs_zero_weights_give_zero_conv_grads(f64):
    m = build_mnist_conv(small("arelu"))
    for p in m.params():
        if "conv" in p.name:
            p.value[...] = 0
    m.forward_loss(np.zeros((3, 1, 8, 8)), [0, 1, 2])
    m.backward()
    for name, p in m.named_params().items():
        if name.startswith("conv") and name.endswith("weight"):
            assert not p.grad.any(), name


def test_grad_alpha_zero_for_nonnegative_preactivations(f64, rng):
    m = build_mnist_conv(small("arelu"), seed=0)
    for name, p in m.named_params().items():
        if name.startswith("conv"):
            p.value[...] = np.abs(p.value)
    m.forward_loss(rng.random((2, 1, 8, 8)), [1, 2])
    m.backward()
    for s in m.activation_states():
        assert s.grad_alpha == 0
        assert s.grad_beta != 0


def test_predict_argmax_and_ties():
    m = SequentialModel([])
    assert m.predict(np.array([[0.1, 0.9]])).tolist() == [1]
    assert m.predict(np.array([[0.5, 0.5]])).tolist() == [0]


def test_predict_batch_independent(rng):
    m = build_mnist_conv(MnistConvSpec(), seed=2)
    x = rng.random((37, 1, 28, 28)).astype(np.float32)
    full = m.predict(x, batch_size=500)
    assert m.predict(x, batch_size=5).tolist() == full.tolist()
    assert m.predict(x[10:11]).tolist() == full[10:11].tolist()


def test_single_sgd_step_decreases_loss(f64):
    failures = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        m = build_mnist_conv(MnistConvSpec(activation="arelu", widths=(8, 16, 32)), seed=seed)
        x = rng.random((16, 1, 28, 28))
        y = rng.integers(0, 10, 16)
        opt = SGD(m.params(), lr=1e-3)
        before, _ = m.forward_loss(x, y)
        m.backward()
        opt.step()
        after, _ = m.forward_loss(x, y, train=False)
        failures += not after < before
    assert failures <= 1


def test_alpha_stays_in_range_after_training(rng):
    m = build_mnist_conv(small("arelu", alpha=0.02), seed=0)
    opt = SGD(m.params(), lr=0.1, momentum=0.5)
    for _ in range(20):
        opt.zero_grad()
        m.forward_loss(rng.random((8, 1, 8, 8)).astype(np.float32), rng.integers(0, 10, 8))
        m.backward()
        opt.step()
    for s in m.activation_states():
        assert 0.01 <= s.alpha <= 0.99
        assert 1.0 < s.positive_slope < 2.0


# ----------------------------------------------------------------- checkpoints


def test_checkpoint_roundtrip_bit_identical(tmp_path, rng):
    m = build_mnist_conv(MnistConvSpec(), seed=4)
    x = rng.random((5, 1, 28, 28)).astype(np.float32)
    ref = m.logits(x)
    save_checkpoint(m, tmp_path / "m.ckpt")
    m2 = load_checkpoint(build_mnist_conv(MnistConvSpec(), seed=99), tmp_path / "m.ckpt")
    assert np.array_equal(m2.logits(x), ref)


def test_checkpoint_layout(tmp_path):
    save_checkpoint({"a": np.array([[1.5, 2.0]], np.float32)}, tmp_path / "c.ckpt")
    raw = (tmp_path / "c.ckpt").read_bytes()
    expected = (b"ARLU" + struct.pack("<III", 1, 1, 1) + b"a" + struct.pack("<III", 2, 1, 2)
                + struct.pack("<2f", 1.5, 2.0))
    assert raw == expected


def test_checkpoint_errors(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE" + bytes(8))
    with pytest.raises(FormatError):
        read_checkpoint(bad)
    save_checkpoint(build_mnist_conv(small()), tmp_path / "ok.ckpt")
    data = (tmp_path / "ok.ckpt").read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(data[:-10])
    with pytest.raises(FormatError):
        read_checkpoint(tmp_path / "cut.ckpt")
    with pytest.raises(FormatError):
        load_checkpoint(build_mnist_conv(small("relu")), tmp_path / "ok.ckpt")


@pytest.mark.parametrize("activation", ["arelu", "prelu", "selu"])
def test_infer_spec_from_checkpoint(activation):
    spec = MnistConvSpec(activation=activation, widths=(4, 6, 8))
    state = build_mnist_conv(spec).state_dict()
    found = infer_mnist_conv_spec(state, None if activation != "selu" else "selu")
    assert (found.activation, found.widths, found.input_size) == (activation, (4, 6, 8), 28)
