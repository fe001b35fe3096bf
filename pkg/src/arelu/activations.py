"""AReLU, its sign-based attention map, and the baseline activation catalog.

AReLU adds a learned element-wise attention term to a plain ReLU::

    F(x) = clamp(alpha) * x          if x < 0
           (1 + sigmoid(beta)) * x   if x >= 0

``alpha`` and ``beta`` are two scalars per activation layer. The attention
map alone (``elsa_attention``) assigns ``clamp(alpha)`` to negative elements
and ``sigmoid(beta)`` to the rest; AReLU is ``relu(x) + attention(x) * x``.

When ``alpha`` leaves ``[0.01, 0.99]`` its gradient is detached (set to
zero) instead of differentiating the clamp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import ConfigError, ShapeError, StateError
from .layers import Layer
from .params import ALPHA_MAX, ALPHA_MIN, Param
from .tensor import default_dtype

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772
RRELU_LOWER = 1.0 / 8.0
RRELU_UPPER = 1.0 / 3.0
PRELU_INIT = 0.25
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def sigmoid_scalar(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype, copy=False)


def clamp_c(alpha: float) -> float:
    return min(ALPHA_MAX, max(ALPHA_MIN, float(alpha)))


# -------------------------------------------------------------------------- AReLU


class AReLUState:
    """The learnable pair (alpha, beta) of one activation layer with gradient accumulators.

    Values live in one-element :class:`Param` arrays so optimizers treat them
    like any other weight; ``alpha`` is flagged for clamp projection and both
    are excluded from weight decay by default.
    """

    def __init__(self, alpha: float = 0.9, beta: float = 2.0, dtype=None, name: str = "arelu",
                 decay: bool = False):
        dtype = dtype or default_dtype()
        self.alpha_param = Param(f"{name}.alpha", np.array([alpha], dtype=dtype), decay=decay, clamp=True)
        self.beta_param = Param(f"{name}.beta", np.array([beta], dtype=dtype), decay=decay)

    alpha = property(lambda self: float(self.alpha_param.value[0]),
                     lambda self, v: self.alpha_param.value.__setitem__(0, v))
    beta = property(lambda self: float(self.beta_param.value[0]),
                    lambda self, v: self.beta_param.value.__setitem__(0, v))
    grad_alpha = property(lambda self: float(self.alpha_param.grad[0]))
    grad_beta = property(lambda self: float(self.beta_param.grad[0]))

    @property
    def negative_slope(self) -> float:
        return clamp_c(self.alpha)

    @property
    def positive_slope(self) -> float:
        return 1.0 + sigmoid_scalar(self.beta)

    def params(self) -> list[Param]:
        return [self.alpha_param, self.beta_param]

    def zero_grad(self) -> None:
        self.alpha_param.zero_grad()
        self.beta_param.zero_grad()

    def __repr__(self):
        return f"AReLUState(alpha={self.alpha:.6g}, beta={self.beta:.6g})"


@dataclass
class ActivationContext:
    x: np.ndarray
    extra: dict[str, Any] = field(default_factory=dict)


def elsa_attention(v: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Sign-based attention map: clamp(alpha) where v < 0, sigmoid(beta) elsewhere."""
    v = np.asarray(v)
    dt = v.dtype.type if np.issubdtype(v.dtype, np.floating) else default_dtype()
    return np.where(v < 0, dt(clamp_c(alpha)), dt(sigmoid_scalar(beta))).astype(dt)


def arelu_forward(x: np.ndarray, state: AReLUState) -> tuple[np.ndarray, ActivationContext]:
    x = np.ascontiguousarray(x)
    out = np.empty_like(x)
    kernels.impl.arelu_forward(x.reshape(-1), state.negative_slope, state.positive_slope, out.reshape(-1))
    return out, ActivationContext(x)


def arelu_backward(ctx: ActivationContext | None, state: AReLUState, d_out: np.ndarray):
    """Return ``(d_x, d_alpha, d_beta)`` and add the parameter gradients into ``state``."""
    if ctx is None:
        raise StateError("arelu: backward called before forward")
    x = ctx.x
    if d_out.shape != x.shape:
        raise ShapeError(f"arelu backward: d_out shape {d_out.shape} does not match input {x.shape}")
    d_out = np.ascontiguousarray(d_out, dtype=x.dtype)
    d_x = np.empty_like(x)
    s_neg, s_pos = kernels.impl.arelu_backward(
        x.reshape(-1), d_out.reshape(-1), state.negative_slope, state.positive_slope, d_x.reshape(-1)
    )
    alpha = state.alpha
    d_alpha = 0.0 if (alpha < ALPHA_MIN or alpha > ALPHA_MAX) else s_neg
    sb = sigmoid_scalar(state.beta)
    d_beta = sb * (1.0 - sb) * s_pos
    state.alpha_param.grad[0] += d_alpha
    state.beta_param.grad[0] += d_beta
    return d_x, d_alpha, d_beta


# ---------------------------------------------------------------------- baselines


@dataclass(frozen=True)
class ActivationKind:
    """An activation identifier plus its fixed hyperparameters."""

    tag: str
    hyper: tuple = ()

    @property
    def learnable(self) -> bool:
        return self.tag in ("arelu", "prelu")


class PReLUState:
    """A single learnable negative slope shared by the whole layer."""

    def __init__(self, slope: float = PRELU_INIT, dtype=None, name: str = "prelu", decay: bool = False):
        self.slope_param = Param(f"{name}.slope", np.array([slope], dtype=dtype or default_dtype()), decay=decay)

    slope = property(lambda self: float(self.slope_param.value[0]),
                     lambda self, v: self.slope_param.value.__setitem__(0, v))
    grad_slope = property(lambda self: float(self.slope_param.grad[0]))

    def params(self) -> list[Param]:
        return [self.slope_param]


def _step(x):
    return x >= 0


# Each entry: forward(x, ctx_extra, **h) and derivative(x, ctx_extra, **h).
def _relu(x, e):
    return np.where(_step(x), x, 0).astype(x.dtype)


def _relu_d(x, e):
    return _step(x).astype(x.dtype)


def _lrelu(x, e, slope=0.01):
    return np.where(_step(x), x, slope * x).astype(x.dtype)


def _lrelu_d(x, e, slope=0.01):
    return np.where(_step(x), 1.0, slope).astype(x.dtype)


def _relu6(x, e):
    return np.clip(x, 0, 6).astype(x.dtype)


def _relu6_d(x, e):
    return ((x >= 0) & (x < 6)).astype(x.dtype)


def _rrelu(x, e):
    return np.where(_step(x), x, e["slopes"] * x).astype(x.dtype)


def _rrelu_d(x, e):
    return np.where(_step(x), 1.0, e["slopes"]).astype(x.dtype)


def _expm1_neg(x):
    return np.expm1(np.minimum(x, 0))


def _elu(x, e, alpha=1.0):
    return np.where(_step(x), x, alpha * _expm1_neg(x)).astype(x.dtype)


def _elu_d(x, e, alpha=1.0):
    return np.where(_step(x), 1.0, alpha * np.exp(np.minimum(x, 0))).astype(x.dtype)


def _celu(x, e, alpha=1.0):
    return np.where(_step(x), x, alpha * _expm1_neg(x / alpha)).astype(x.dtype)


def _celu_d(x, e, alpha=1.0):
    return np.where(_step(x), 1.0, np.exp(np.minimum(x, 0) / alpha)).astype(x.dtype)


def _selu(x, e):
    return (SELU_LAMBDA * np.where(_step(x), x, SELU_ALPHA * _expm1_neg(x))).astype(x.dtype)


def _selu_d(x, e):
    return (SELU_LAMBDA * np.where(_step(x), 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0)))).astype(x.dtype)


def _gelu(x, e):
    return (x * 0.5 * (1.0 + erf(x * _INV_SQRT2))).astype(x.dtype)


def _gelu_d(x, e):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return (cdf + x * pdf).astype(x.dtype)


def _sigmoid(x, e):
    return sigmoid(x)


def _sigmoid_d(x, e):
    s = sigmoid(x)
    return s * (1 - s)


def _tanh(x, e):
    return np.tanh(x)


def _tanh_d(x, e):
    t = np.tanh(x)
    return 1 - t * t


def _softplus(x, e):
    return np.logaddexp(0, x).astype(x.dtype)


def _swish(x, e):
    return x * sigmoid(x)


def _swish_d(x, e):
    s = sigmoid(x)
    return s + x * s * (1 - s)


def _prelu(x, e):
    return np.where(_step(x), x, e["slope"] * x).astype(x.dtype)


def _prelu_d(x, e):
    return np.where(_step(x), 1.0, e["slope"]).astype(x.dtype)


_CATALOG: dict[str, tuple[Callable, Callable, dict]] = {
    "relu": (_relu, _relu_d, {}),
    "lrelu": (_lrelu, _lrelu_d, {"slope": 0.01}),
    "relu6": (_relu6, _relu6_d, {}),
    "rrelu": (_rrelu, _rrelu_d, {}),
    "elu": (_elu, _elu_d, {"alpha": 1.0}),
    "celu": (_celu, _celu_d, {"alpha": 1.0}),
    "selu": (_selu, _selu_d, {}),
    "gelu": (_gelu, _gelu_d, {}),
    "sigmoid": (_sigmoid, _sigmoid_d, {}),
    "tanh": (_tanh, _tanh_d, {}),
    "softplus": (_softplus, _sigmoid, {}),
    "swish": (_swish, _swish_d, {}),
    "prelu": (_prelu, _prelu_d, {}),
}

ACTIVATION_NAMES = ("arelu",) + tuple(_CATALOG)
BASELINE_NAMES = tuple(k for k in _CATALOG if k != "prelu")


def activation_kind(name: str | ActivationKind, **hyper) -> ActivationKind:
    if isinstance(name, ActivationKind):
        return name
    tag = str(name).strip().lower()
    if tag not in ACTIVATION_NAMES:
        raise ConfigError(f"unknown activation {name!r}; expected one of {', '.join(ACTIVATION_NAMES)}")
    defaults = dict(_CATALOG[tag][2]) if tag in _CATALOG else {}
    unknown = set(hyper) - set(defaults)
    if unknown:
        raise ConfigError(f"activation {tag!r} has no hyperparameters {sorted(unknown)}")
    defaults.update(hyper)
    return ActivationKind(tag, tuple(sorted(defaults.items())))


def baseline_forward(kind: str | ActivationKind, x: np.ndarray, mode: str = "train", *,
                     state: PReLUState | None = None, rng: np.random.Generator | None = None):
    """Apply a non-AReLU activation; returns ``(y, context)``.

    RReLU samples one slope per element from U[1/8, 1/3] in ``"train"`` mode
    (using ``rng``) and uses the mean slope in ``"eval"`` mode. PReLU reads
    its slope from ``state`` (a fresh slope of 0.25 if omitted).
    """
    kind = activation_kind(kind)
    if kind.tag == "arelu":
        raise ConfigError("arelu has its own forward; use arelu_forward")
    if mode not in ("train", "eval"):
        raise ConfigError(f"mode must be 'train' or 'eval', got {mode!r}")
    fwd, _, _ = _CATALOG[kind.tag]
    x = np.asarray(x)
    extra: dict[str, Any] = {"kind": kind}
    if kind.tag == "rrelu":
        if mode == "train":
            rng = rng if rng is not None else np.random.default_rng()
            extra["slopes"] = rng.uniform(RRELU_LOWER, RRELU_UPPER, size=x.shape).astype(x.dtype)
        else:
            extra["slopes"] = x.dtype.type((RRELU_LOWER + RRELU_UPPER) / 2)
    elif kind.tag == "prelu":
        state = state if state is not None else PReLUState(dtype=x.dtype)
        extra["state"] = state
        extra["slope"] = x.dtype.type(state.slope)
    return fwd(x, extra, **dict(kind.hyper)), ActivationContext(x, extra)


def baseline_backward(kind: str | ActivationKind, ctx: ActivationContext | None, d_out: np.ndarray):
    """Return ``(d_x, d_param)``; ``d_param`` is the PReLU slope gradient, else ``None``."""
    kind = activation_kind(kind)
    if ctx is None:
        raise StateError(f"{kind.tag}: backward called before forward")
    if d_out.shape != ctx.x.shape:
        raise ShapeError(f"{kind.tag} backward: d_out shape {d_out.shape} does not match input {ctx.x.shape}")
    _, deriv, _ = _CATALOG[kind.tag]
    x = ctx.x
    d_x = (deriv(x, ctx.extra, **dict(kind.hyper)) * d_out).astype(x.dtype)
    if kind.tag != "prelu":
        return d_x, None
    neg = x < 0
    d_slope = float(np.sum(x[neg].astype(np.float64) * d_out[neg].astype(np.float64)))
    ctx.extra["state"].slope_param.grad[0] += d_slope
    return d_x, d_slope


# ------------------------------------------------------------------------- layers


class AReLU(Layer):
    name = "arelu"

    def __init__(self, alpha: float = 0.9, beta: float = 2.0, dtype=None, name: str = "arelu"):
        self.name = name
        self.state = AReLUState(alpha, beta, dtype=dtype, name=name)
        self._ctx = None

    def forward(self, x, train=True):
        out, self._ctx = arelu_forward(x, self.state)
        return out

    def backward(self, d_out):
        d_x, _, _ = arelu_backward(self._ctx, self.state, d_out)
        return d_x

    def params(self):
        return self.state.params()


class Activation(Layer):
    """Any catalog activation other than AReLU, as a layer."""

    def __init__(self, kind: str | ActivationKind, rng: np.random.Generator | None = None, dtype=None,
                 name: str | None = None):
        self.kind = activation_kind(kind)
        if self.kind.tag == "arelu":
            raise ConfigError("use the AReLU layer for arelu")
        self.name = name or self.kind.tag
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state = PReLUState(dtype=dtype, name=self.name) if self.kind.tag == "prelu" else None
        self._ctx = None

    def forward(self, x, train=True):
        out, self._ctx = baseline_forward(self.kind, x, "train" if train else "eval",
                                          state=self.state, rng=self.rng)
        return out

    def backward(self, d_out):
        d_x, _ = baseline_backward(self.kind, self._ctx, d_out)
        return d_x

    def params(self):
        return self.state.params() if self.state is not None else []


def make_activation(kind: str | ActivationKind, *, alpha: float = 0.9, beta: float = 2.0,
                    rng: np.random.Generator | None = None, dtype=None, name: str | None = None) -> Layer:
    kind = activation_kind(kind)
    if kind.tag == "arelu":
        return AReLU(alpha, beta, dtype=dtype, name=name or "arelu")
    return Activation(kind, rng=rng, dtype=dtype, name=name)
