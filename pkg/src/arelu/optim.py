"""SGD with classical momentum and Adam over :class:`~arelu.params.Param` lists.

Momentum follows the velocity form with the learning rate inside the
velocity::

    v := mu * v + lr * (g + wd * theta)
    theta := theta - v

Weight decay only touches params whose ``decay`` flag is set. After every
step, params flagged ``clamp`` are projected into ``[0.01, 0.99]``.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, TrainingError
from .params import ALPHA_MAX, ALPHA_MIN, Param


def zero_grads(params: Iterable[Param]) -> None:
    for p in params:
        p.zero_grad()


def _check_grads(params: Sequence[Param]) -> None:
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            bad = int(np.size(p.grad) - np.count_nonzero(np.isfinite(p.grad)))
            raise TrainingError(f"non-finite gradient in {p.name}: {bad} of {p.grad.size} entries")


def _project(p: Param) -> None:
    if p.clamp:
        np.clip(p.value, ALPHA_MIN, ALPHA_MAX, out=p.value)


class Optimizer:
    def __init__(self, params: Iterable[Param], lr: float, weight_decay: float = 0.0):
        self.params = list(params)
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        if weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {weight_decay}")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError("a parameter was registered twice")
        self.lr = lr
        self.weight_decay = weight_decay

    def zero_grad(self) -> None:
        zero_grads(self.params)

    def _grad(self, p: Param) -> np.ndarray:
        if self.weight_decay and p.decay:
            return p.grad + self.weight_decay * p.value
        return p.grad

    def step(self) -> None:
        _check_grads(self.params)
        for p in self.params:
            self._update(p)
            _project(p)

    def _update(self, p: Param) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        super().__init__(params, lr, weight_decay)
        if not 0 <= momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {momentum}")
        self.momentum = momentum
        self.velocity = {p.name: np.zeros_like(p.value) for p in self.params}

    def _update(self, p):
        v = self.velocity[p.name]
        g = self._grad(p)
        if self.momentum:
            v *= self.momentum
            v += self.lr * g
        else:
            np.multiply(g, self.lr, out=v, casting="unsafe")
        p.value -= v


class Adam(Optimizer):
    """Bias-corrected Adam; L2 decay is added to the gradient (classic, not AdamW)."""

    def __init__(self, params, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        super().__init__(params, lr, weight_decay)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in self.params}
        self.v = {p.name: np.zeros_like(p.value) for p in self.params}

    def step(self):
        self.t += 1
        super().step()

    def _update(self, p):
        g = self._grad(p)
        m, v = self.m[p.name], self.v[p.name]
        m *= self.beta1
        m += (1 - self.beta1) * g
        v *= self.beta2
        v += (1 - self.beta2) * g * g
        m_hat = m / (1 - self.beta1 ** self.t)
        v_hat = v / (1 - self.beta2 ** self.t)
        p.value -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.value.dtype, copy=False)


class Chain:
    """Steps several optimizers over disjoint parameter sets as one."""

    def __init__(self, *optimizers: Optimizer):
        self.optimizers = [o for o in optimizers if o.params]
        self.params = [p for o in self.optimizers for p in o.params]

    def zero_grad(self):
        zero_grads(self.params)

    def step(self):
        _check_grads(self.params)
        for o in self.optimizers:
            o.step()


def build_optimizer(params: Sequence[Param], kind: str, lr: float, momentum: float = 0.0,
                    weight_decay: float = 0.0, activation_params: str = "shared", activation_lr: float | None = None):
    """Create the optimizer named ``kind`` (``"sgd"`` or ``"adam"``).

    With ``activation_params="momentum"`` the learnable activation scalars
    (AReLU alpha/beta, PReLU slope) get their own momentum-SGD optimizer while
    everything else uses ``kind``.
    """
    kind = kind.lower()
    if kind not in ("sgd", "adam"):
        raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {kind!r}")
    if activation_params not in ("shared", "momentum"):
        raise ConfigError(f"activation_params must be 'shared' or 'momentum', got {activation_params!r}")

    def make(ps):
        if kind == "sgd":
            return SGD(ps, lr, momentum=momentum, weight_decay=weight_decay)
        return Adam(ps, lr, weight_decay=weight_decay)

    if activation_params == "shared":
        return make(params)
    act = [p for p in params if _is_activation_param(p)]
    rest = [p for p in params if not _is_activation_param(p)]
    return Chain(make(rest), SGD(act, activation_lr or lr, momentum=momentum, weight_decay=weight_decay))


def _is_activation_param(p: Param) -> bool:
    return p.name.rsplit(".", 1)[-1] in ("alpha", "beta", "slope")
