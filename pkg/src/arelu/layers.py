"""Hand-derived differentiable layers.

Each operation exists twice: as a pure function pair
(``*_forward`` returning ``(output, context)`` and ``*_backward`` consuming
that context) and as a stateful :class:`Layer` that owns its parameters and
accumulates gradients into them. Convolution is cross-correlation computed
through im2col and a single matrix product over the whole batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError, StateError
from .params import Param
from .tensor import check_finite, default_dtype


class Layer:
    """Base class: ``forward`` caches what ``backward`` needs."""

    name = "layer"

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[Param]:
        return []

    def _require_ctx(self):
        ctx = getattr(self, "_ctx", None)
        if ctx is None:
            raise StateError(f"{self.name}: backward called before forward")
        return ctx


def kaiming_uniform(shape, fan_in: int, rng: np.random.Generator, a: float = math.sqrt(5.0),
                    dtype=None) -> np.ndarray:
    """Uniform(-b, b) with b = gain * sqrt(3 / fan_in), gain = sqrt(2 / (1 + a^2)).

    The default ``a = sqrt(5)`` gives b = 1 / sqrt(fan_in).
    """
    gain = math.sqrt(2.0 / (1.0 + a * a))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype or default_dtype())


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


# --------------------------------------------------------------------------- conv


@dataclass
class ConvParams:
    weight: np.ndarray  # [out_ch, in_ch, kh, kw]
    bias: np.ndarray    # [out_ch]
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weight.ndim != 4:
            raise ShapeError(f"conv weight must be 4-D, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"conv bias shape {self.bias.shape} does not match {self.weight.shape[0]} filters")
        if self.stride < 1 or self.padding < 0:
            raise ShapeError(f"invalid stride={self.stride} / padding={self.padding}")


@dataclass
class ConvContext:
    x_shape: tuple
    cols: np.ndarray  # [C*kh*kw, N*Ho*Wo]
    out_hw: tuple


def conv2d_forward(x: np.ndarray, p: ConvParams) -> tuple[np.ndarray, ConvContext]:
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects [N, C, H, W], got shape {x.shape}")
    n, c, h, w = x.shape
    c_out, c_in, kh, kw = p.weight.shape
    if c != c_in:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {c_in}")
    ho = conv_output_size(h, kh, p.stride, p.padding)
    wo = conv_output_size(w, kw, p.stride, p.padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} does not fit input {h}x{w} with padding {p.padding}")
    x = np.ascontiguousarray(x, dtype=p.weight.dtype)
    cols = np.empty((c * kh * kw, n * ho * wo), dtype=x.dtype)
    kernels.impl.im2col(x, kh, kw, p.stride, p.padding, cols)
    out = p.weight.reshape(c_out, -1) @ cols
    out += p.bias[:, None]
    out = np.ascontiguousarray(out.reshape(c_out, n, ho, wo).transpose(1, 0, 2, 3))
    return out, ConvContext(x.shape, cols, (ho, wo))


def conv2d_backward(ctx: ConvContext, p: ConvParams, d_out: np.ndarray):
    """Return ``(d_x, d_weight, d_bias)``."""
    n, c, h, w = ctx.x_shape
    c_out, _, kh, kw = p.weight.shape
    expected = (n, c_out) + ctx.out_hw
    if d_out.shape != expected:
        raise ShapeError(f"conv2d backward: d_out shape {d_out.shape}, expected {expected}")
    d = np.ascontiguousarray(d_out.transpose(1, 0, 2, 3), dtype=p.weight.dtype).reshape(c_out, -1)
    d_weight = (d @ ctx.cols.T).reshape(p.weight.shape)
    d_bias = d.sum(axis=1)
    d_cols = p.weight.reshape(c_out, -1).T @ d
    d_x = np.zeros(ctx.x_shape, dtype=d.dtype)
    kernels.impl.col2im(d_cols, kh, kw, p.stride, p.padding, d_x)
    return d_x, d_weight, d_bias


class Conv2d(Layer):
    name = "conv"

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1, padding: int = 0,
                 rng: np.random.Generator | None = None, dtype=None, name: str = "conv"):
        rng = rng if rng is not None else np.random.default_rng()
        dtype = dtype or default_dtype()
        fan_in = in_ch * kernel * kernel
        self.name = name
        self.weight = Param(f"{name}.weight",
                            kaiming_uniform((out_ch, in_ch, kernel, kernel), fan_in, rng, dtype=dtype))
        self.bias = Param(f"{name}.bias", np.zeros(out_ch, dtype=dtype))
        self.stride = stride
        self.padding = padding
        self._ctx = None

    @property
    def conv_params(self) -> ConvParams:
        return ConvParams(self.weight.value, self.bias.value, self.stride, self.padding)

    def forward(self, x, train=True):
        out, self._ctx = conv2d_forward(x, self.conv_params)
        return out

    def backward(self, d_out):
        d_x, d_w, d_b = conv2d_backward(self._require_ctx(), self.conv_params, d_out)
        self.weight.grad += d_w
        self.bias.grad += d_b
        return d_x

    def params(self):
        return [self.weight, self.bias]


# ------------------------------------------------------------------------ maxpool


@dataclass
class PoolContext:
    x_shape: tuple
    argmax: np.ndarray  # flat index of the winner inside its (H, W) plane


def maxpool2d_forward(x: np.ndarray, window: int, stride: int | None = None):
    """Per-window maximum (floor mode); ties go to the lowest linear index."""
    stride = window if stride is None else stride
    if window < 1 or stride < 1:
        raise ShapeError(f"maxpool window and stride must be >= 1, got {window}, {stride}")
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects [N, C, H, W], got shape {x.shape}")
    n, c, h, w = x.shape
    if window > h or window > w:
        raise ShapeError(f"maxpool window {window} larger than input {h}x{w}")
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    x = np.ascontiguousarray(x)
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    argmax = np.empty((n, c, ho, wo), dtype=np.int64)
    kernels.impl.maxpool_forward(x, window, stride, out, argmax)
    return out, PoolContext(x.shape, argmax)


def maxpool2d_backward(ctx: PoolContext, d_out: np.ndarray) -> np.ndarray:
    if d_out.shape != ctx.argmax.shape:
        raise ShapeError(f"maxpool backward: d_out shape {d_out.shape}, expected {ctx.argmax.shape}")
    d_x = np.zeros(ctx.x_shape, dtype=d_out.dtype)
    kernels.impl.maxpool_backward(np.ascontiguousarray(d_out), ctx.argmax, d_x)
    return d_x


class MaxPool2d(Layer):
    name = "maxpool"

    def __init__(self, window: int = 2, stride: int | None = None, name: str = "maxpool"):
        self.window = window
        self.stride = window if stride is None else stride
        self.name = name
        self._ctx = None

    def forward(self, x, train=True):
        out, self._ctx = maxpool2d_forward(x, self.window, self.stride)
        return out

    def backward(self, d_out):
        return maxpool2d_backward(self._require_ctx(), d_out)


# ------------------------------------------------------------------------- linear


@dataclass
class LinearContext:
    x: np.ndarray


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """``y = x @ w.T + b`` for x [N, Din], w [Dout, Din], b [Dout]."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError(f"linear: incompatible shapes x{x.shape} w{w.shape} b{b.shape}")
    return x @ w.T + b, LinearContext(x)


def linear_backward(ctx: LinearContext, w: np.ndarray, d_out: np.ndarray):
    """Return ``(d_x, d_w, d_b)``."""
    if d_out.shape != (ctx.x.shape[0], w.shape[0]):
        raise ShapeError(f"linear backward: d_out shape {d_out.shape}, expected {(ctx.x.shape[0], w.shape[0])}")
    return d_out @ w, d_out.T @ ctx.x, d_out.sum(axis=0)


class Linear(Layer):
    name = "linear"

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator | None = None, dtype=None,
                 name: str = "linear"):
        rng = rng if rng is not None else np.random.default_rng()
        dtype = dtype or default_dtype()
        self.name = name
        self.weight = Param(f"{name}.weight", kaiming_uniform((d_out, d_in), d_in, rng, dtype=dtype))
        self.bias = Param(f"{name}.bias", np.zeros(d_out, dtype=dtype))
        self._ctx = None

    def forward(self, x, train=True):
        out, self._ctx = linear_forward(x, self.weight.value, self.bias.value)
        return out

    def backward(self, d_out):
        d_x, d_w, d_b = linear_backward(self._require_ctx(), self.weight.value, d_out)
        self.weight.grad += d_w
        self.bias.grad += d_b
        return d_x

    def params(self):
        return [self.weight, self.bias]


class Flatten(Layer):
    name = "flatten"

    def __init__(self, name: str = "flatten"):
        self.name = name
        self._ctx = None

    def forward(self, x, train=True):
        self._ctx = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, d_out):
        return d_out.reshape(self._require_ctx())


# ----------------------------------------------------------------- softmax + xent


@dataclass
class XentContext:
    probs: np.ndarray  # float64 [N, K]
    labels: np.ndarray
    dtype: np.dtype


def softmax_xent_forward(logits: np.ndarray, labels) -> tuple[float, XentContext]:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    if logits.ndim != 2:
        raise ShapeError(f"softmax_xent expects [N, K] logits, got shape {logits.shape}")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= k:
        raise ShapeError(f"labels must be integers in [0, {k})")
    z = logits.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_p = z - log_norm[:, None]
    loss = float(-log_p[np.arange(n), labels].mean())
    return loss, XentContext(np.exp(log_p), labels, logits.dtype)


def softmax_xent_backward(ctx: XentContext) -> np.ndarray:
    n = ctx.probs.shape[0]
    d = ctx.probs.copy()
    d[np.arange(n), ctx.labels] -= 1.0
    return (d / n).astype(ctx.dtype)


class SoftmaxCrossEntropy:
    """Loss head; not a :class:`Layer` because it consumes labels and returns a scalar."""

    name = "loss"

    def __init__(self):
        self._ctx = None

    def forward(self, logits, labels) -> float:
        loss, self._ctx = softmax_xent_forward(logits, labels)
        return check_finite(np.array(loss), "loss").item()

    def backward(self) -> np.ndarray:
        if self._ctx is None:
            raise StateError("loss: backward called before forward")
        return softmax_xent_backward(self._ctx)
