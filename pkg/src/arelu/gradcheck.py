"""Finite-difference oracle for the hand-written backward passes.

``finite_diff`` perturbs each coordinate in place and takes central
differences. ``check_operation`` runs an op under test for a number of random
trials and aggregates the worst relative error, defined as
``|a - n| / max(|a|, |n|, 1e-8)``. Samplers in :data:`CHECKS` keep inputs
away from kinks (ReLU-family zeros, clamp edges, max-pool ties), because the
layers follow one-sided conventions there that no central difference can
confirm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import activations as act
from . import layers as L
from .errors import ConfigError, NonFiniteError

REL_FLOOR = 1e-8
DEFAULT_H = 1e-5
KINK_TOL = 1e-3


class OracleError(NonFiniteError):
    """The function under differentiation returned a non-finite value."""


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)


def _call(fn, params):
    if isinstance(params, Mapping):
        out = fn(**params)
    elif isinstance(params, (list, tuple)):
        out = fn(*params)
    else:
        out = fn(params)
    out = float(out)
    if not math.isfinite(out):
        raise OracleError(f"function evaluated to {out}")
    return out


def _arrays(params) -> list[np.ndarray]:
    if isinstance(params, Mapping):
        arrays = list(params.values())
    elif isinstance(params, (list, tuple)):
        arrays = list(params)
    else:
        arrays = [params]
    for a in arrays:
        if not isinstance(a, np.ndarray) or a.dtype != np.float64:
            raise ConfigError("finite differences need float64 ndarray parameters")
    return arrays


def _restructure(params, grads):
    if isinstance(params, Mapping):
        return dict(zip(params, grads))
    if isinstance(params, (list, tuple)):
        return grads
    return grads[0]


def finite_diff(fn: Callable[..., float], params, h: float = DEFAULT_H):
    """Central-difference gradient of ``fn`` w.r.t. ``params``.

    ``params`` is an array, a sequence of arrays (passed positionally) or a
    mapping (passed as keywords). Arrays are perturbed in place and restored.
    The result mirrors the structure of ``params``.
    """
    if not 1e-6 <= h <= 1e-3:
        raise ConfigError(f"step h must lie in [1e-6, 1e-3], got {h}")
    grads = []
    for a in _arrays(params):
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = _call(fn, params)
            flat[i] = orig - h
            f_minus = _call(fn, params)
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2 * h)
        grads.append(g)
    return _restructure(params, grads)


def kink_mask(fn: Callable[..., float], params, h: float = DEFAULT_H, tol: float = KINK_TOL):
    """Flag coordinates whose forward and backward one-sided differences disagree by more than ``tol``."""
    masks = []
    for a in _arrays(params):
        m = np.zeros(a.shape, dtype=bool)
        flat, mflat = a.reshape(-1), m.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            f0 = _call(fn, params)
            flat[i] = orig + h
            f_plus = _call(fn, params)
            flat[i] = orig - h
            f_minus = _call(fn, params)
            flat[i] = orig
            mflat[i] = abs((f_plus - f0) / h - (f0 - f_minus) / h) > tol
        masks.append(m)
    return _restructure(params, masks)


@dataclass
class ParamError:
    max_rel: float = 0.0
    max_abs: float = 0.0
    worst_index: tuple = ()


@dataclass
class GradCheckReport:
    name: str
    tolerance: float
    trials: int = 0
    per_param: dict[str, ParamError] = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel for e in self.per_param.values()), default=0.0)

    @property
    def max_abs_err(self) -> float:
        return max((e.max_abs for e in self.per_param.values()), default=0.0)

    @property
    def worst(self) -> tuple[str, tuple]:
        if not self.per_param:
            return ("", ())
        name = max(self.per_param, key=lambda k: self.per_param[k].max_rel)
        return name, self.per_param[name].worst_index

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance

    def update(self, param: str, analytic, numeric) -> None:
        rel = relative_error(analytic, numeric)
        err = self.per_param.setdefault(param, ParamError())
        ab = np.abs(np.asarray(analytic, dtype=np.float64) - np.asarray(numeric, dtype=np.float64))
        err.max_abs = max(err.max_abs, float(ab.max(initial=0.0)))
        if rel.size and float(rel.max()) >= err.max_rel:
            err.max_rel = float(rel.max())
            err.worst_index = tuple(int(i) for i in np.unravel_index(int(rel.argmax()), rel.shape))

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        param, idx = self.worst
        return (f"{status} {self.name:<14} trials={self.trials:<5} max_rel={self.max_rel_err:.3e} "
                f"max_abs={self.max_abs_err:.3e} tol={self.tolerance:.0e} worst={param}{list(idx)}")


# An op under test: given an rng, return (scalar_fn, params, analytic_grads) where
# scalar_fn(**params) is the loss and analytic_grads maps each param name to its gradient.
GradCase = tuple[Callable[..., float], dict[str, np.ndarray], dict[str, np.ndarray]]


def check_operation(op: Callable[[np.random.Generator], GradCase], trials: int = 100, tolerance: float = 1e-5,
                    h: float = DEFAULT_H, seed: int = 0, name: str | None = None) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    report = GradCheckReport(name or getattr(op, "__name__", "op"), tolerance)
    for _ in range(trials):
        fn, params, analytic = op(rng)
        numeric = finite_diff(fn, params, h)
        for key in params:
            report.update(key, analytic[key], numeric[key])
        report.trials += 1
    return report


# ------------------------------------------------------------------------ samplers


def away_from(rng: np.random.Generator, size, low: float, high: float, kinks: Sequence[float] = (0.0,),
              margin: float = 1e-3) -> np.ndarray:
    """Uniform samples on [low, high) with every value at least ``margin`` from each kink."""
    x = rng.uniform(low, high, size)
    for _ in range(100):
        bad = np.zeros(x.shape, dtype=bool)
        for k in kinks:
            bad |= np.abs(x - k) <= margin
        if not bad.any():
            return x
        x[bad] = rng.uniform(low, high, int(bad.sum()))
    raise RuntimeError("could not sample away from kinks")


def _arelu_case(rng) -> GradCase:
    x = away_from(rng, (int(rng.integers(1, 17)),), -3, 3)
    w = rng.normal(size=x.shape)
    alpha = np.array([rng.uniform(0.011, 0.989)])
    beta = np.array([rng.uniform(-4, 4)])

    def loss(x, alpha, beta):
        st = act.AReLUState(float(alpha[0]), float(beta[0]), dtype=np.float64)
        y, _ = act.arelu_forward(x, st)
        return float(np.dot(w, y))

    st = act.AReLUState(float(alpha[0]), float(beta[0]), dtype=np.float64)
    _, ctx = act.arelu_forward(x, st)
    d_x, d_a, d_b = act.arelu_backward(ctx, st, w.copy())
    return loss, {"x": x, "alpha": alpha, "beta": beta}, {"x": d_x, "alpha": np.array([d_a]),
                                                          "beta": np.array([d_b])}


_KINKS = {"relu": (0.0,), "lrelu": (0.0,), "relu6": (0.0, 6.0), "rrelu": (0.0,), "elu": (0.0,),
          "celu": (0.0,), "selu": (0.0,), "prelu": (0.0,)}


def _baseline_case(tag: str):
    def case(rng) -> GradCase:
        x = away_from(rng, (int(rng.integers(1, 17)),), -8 if tag == "relu6" else -4,
                      8 if tag == "relu6" else 4, _KINKS.get(tag, ()))
        w = rng.normal(size=x.shape)
        seed = int(rng.integers(2**31))
        if tag == "prelu":
            slope = np.array([rng.uniform(-0.5, 1.0)])

            def loss(x, slope):
                st = act.PReLUState(float(slope[0]), dtype=np.float64)
                return float(np.dot(w, act.baseline_forward("prelu", x, state=st)[0]))

            st = act.PReLUState(float(slope[0]), dtype=np.float64)
            _, ctx = act.baseline_forward("prelu", x, state=st)
            d_x, d_s = act.baseline_backward("prelu", ctx, w.copy())
            return loss, {"x": x, "slope": slope}, {"x": d_x, "slope": np.array([d_s])}

        def loss(x):
            y, _ = act.baseline_forward(tag, x, "train", rng=np.random.default_rng(seed))
            return float(np.dot(w, y))

        _, ctx = act.baseline_forward(tag, x, "train", rng=np.random.default_rng(seed))
        d_x, _ = act.baseline_backward(tag, ctx, w.copy())
        return loss, {"x": x}, {"x": d_x}

    case.__name__ = tag
    return case


def _conv_case(rng) -> GradCase:
    n, c_in, c_out = int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
    h, w_ = int(rng.integers(3, 6)), int(rng.integers(3, 6))
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    k = min(k, h + 2 * pad, w_ + 2 * pad)
    x = rng.normal(size=(n, c_in, h, w_))
    weight = rng.normal(size=(c_out, c_in, k, k))
    bias = rng.normal(size=(c_out,))
    out, ctx = L.conv2d_forward(x, L.ConvParams(weight, bias, stride, pad))
    wts = rng.normal(size=out.shape)

    def loss(x, weight, bias):
        return float(np.sum(wts * L.conv2d_forward(x, L.ConvParams(weight, bias, stride, pad))[0]))

    d_x, d_w, d_b = L.conv2d_backward(ctx, L.ConvParams(weight, bias, stride, pad), wts)
    return loss, {"x": x, "weight": weight, "bias": bias}, {"x": d_x, "weight": d_w, "bias": d_b}


def _maxpool_case(rng) -> GradCase:
    n, c = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    h, w_ = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    window = int(rng.integers(1, min(h, w_) + 1))
    stride = int(rng.integers(1, window + 1))
    size = n * c * h * w_
    # distinct values spaced 0.01 apart: no ties within any window
    x = (rng.permutation(size) * 0.01 - size * 0.005).reshape(n, c, h, w_) + rng.uniform(0, 1e-3)
    out, ctx = L.maxpool2d_forward(x, window, stride)
    wts = rng.normal(size=out.shape)

    def loss(x):
        return float(np.sum(wts * L.maxpool2d_forward(x, window, stride)[0]))

    return loss, {"x": x}, {"x": L.maxpool2d_backward(ctx, wts)}


def _linear_case(rng) -> GradCase:
    n, d_in, d_out = int(rng.integers(1, 9)), int(rng.integers(1, 17)), int(rng.integers(1, 11))
    x, w, b = rng.normal(size=(n, d_in)), rng.normal(size=(d_out, d_in)), rng.normal(size=d_out)
    out, ctx = L.linear_forward(x, w, b)
    wts = rng.normal(size=out.shape)

    def loss(x, w, b):
        return float(np.sum(wts * L.linear_forward(x, w, b)[0]))

    d_x, d_w, d_b = L.linear_backward(ctx, w, wts)
    return loss, {"x": x, "w": w, "b": b}, {"x": d_x, "w": d_w, "b": d_b}


def _xent_case(rng) -> GradCase:
    n, k = int(rng.integers(1, 9)), int(rng.integers(2, 11))
    logits = rng.normal(size=(n, k))
    labels = rng.integers(0, k, size=n)
    _, ctx = L.softmax_xent_forward(logits, labels)

    def loss(logits):
        return L.softmax_xent_forward(logits, labels)[0]

    return loss, {"logits": logits}, {"logits": L.softmax_xent_backward(ctx)}


def _mnist_conv_case(rng) -> GradCase:
    """End-to-end input gradient of a small float64 MNIST-Conv on 8x8 inputs."""
    from .model import MnistConvSpec, build_mnist_conv

    tag = str(rng.choice(["arelu", "tanh", "softplus"]))
    spec = MnistConvSpec(activation=tag, widths=(3, 4, 5), input_size=8,
                         alpha=float(rng.uniform(0.1, 0.9)), beta=float(rng.uniform(-1, 3)))
    model = build_mnist_conv(spec, seed=int(rng.integers(2**31)), dtype=np.float64)
    x = rng.uniform(0, 1, size=(2, 1, 8, 8))
    labels = rng.integers(0, 10, size=2)
    model.zero_grad()
    model.forward_loss(x, labels)
    d_x = model.backward()

    def loss(x):
        return model.forward_loss(x, labels)[0]

    return loss, {"x": x}, {"x": d_x}


CHECKS: dict[str, tuple[Callable[[np.random.Generator], GradCase], int]] = {
    "arelu": (_arelu_case, 1000),
    **{tag: (_baseline_case(tag), 100) for tag in act.BASELINE_NAMES},
    "prelu": (_baseline_case("prelu"), 100),
    "conv2d": (_conv_case, 100),
    "maxpool": (_maxpool_case, 100),
    "linear": (_linear_case, 100),
    "softmax_xent": (_xent_case, 100),
    "mnist_conv": (_mnist_conv_case, 3),
}
TOLERANCES = {"arelu": 1e-6, "mnist_conv": 1e-4}


def run_checks(names: Sequence[str] | None = None, trials: int | None = None, tolerance: float | None = None,
               seed: int = 0) -> list[GradCheckReport]:
    """Run the named built-in checks (all of them by default)."""
    names = list(names) if names else list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown gradcheck op(s) {unknown}; available: {', '.join(CHECKS)}")
    reports = []
    for name in names:
        op, default_trials = CHECKS[name]
        tol = tolerance if tolerance is not None else TOLERANCES.get(name, 1e-5)
        reports.append(check_operation(op, trials or default_trials, tol, seed=seed, name=name))
    return reports
