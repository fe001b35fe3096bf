from __future__ import annotations

import numpy as np

ALPHA_MIN = 0.01
ALPHA_MAX = 0.99


class Param:
    """A trainable array with its gradient accumulator and optimizer flags.

    ``decay`` controls whether weight decay applies; ``clamp`` marks AReLU's
    suppression factor, which the optimizers project back into
    ``[ALPHA_MIN, ALPHA_MAX]`` after every step.
    """

    __slots__ = ("name", "value", "grad", "decay", "clamp")

    def __init__(self, name: str, value: np.ndarray, decay: bool = True, clamp: bool = False):
        self.name = name
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)
        self.decay = decay
        self.clamp = clamp

    def zero_grad(self) -> None:
        self.grad.fill(0)

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape}, dtype={self.value.dtype})"
