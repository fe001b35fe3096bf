"""Sequential models, the MNIST-Conv reference network, and checkpoints.

Checkpoint layout (all integers little-endian u32)::

    b"ARLU" | version | record count |
    repeated: name length | name (utf-8) | ndim | dims... | float32 LE values
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .activations import AReLU, AReLUState, activation_kind, make_activation
from .errors import ConfigError, FormatError, ShapeError, StateError
from .layers import Conv2d, Flatten, Layer, Linear, MaxPool2d, SoftmaxCrossEntropy
from .params import Param
from .tensor import default_dtype

CHECKPOINT_MAGIC = b"ARLU"
CHECKPOINT_VERSION = 1


class SequentialModel:
    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...] | None = None):
        self.layers = list(layers)
        self.loss = SoftmaxCrossEntropy()
        self.input_shape = tuple(input_shape) if input_shape is not None else None
        self._registry: dict[str, Param] = {}
        for layer in self.layers:
            for p in layer.params():
                if p.name in self._registry:
                    raise ConfigError(f"duplicate parameter name {p.name!r}")
                self._registry[p.name] = p
        self._ready = False

    def params(self) -> list[Param]:
        return list(self._registry.values())

    def named_params(self) -> dict[str, Param]:
        return dict(self._registry)

    def activation_states(self) -> list[AReLUState]:
        return [layer.state for layer in self.layers if isinstance(layer, AReLU)]

    def zero_grad(self) -> None:
        for p in self._registry.values():
            p.zero_grad()

    def _check_input(self, x: np.ndarray) -> None:
        if self.input_shape is not None and tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"model expects inputs of shape [N, {', '.join(map(str, self.input_shape))}], "
                             f"got {tuple(x.shape)}")

    def logits(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._check_input(x)
        out = x
        for layer in self.layers:
            out = layer.forward(out, train=train)
        return out

    def forward_loss(self, x: np.ndarray, labels, train: bool = True) -> tuple[float, np.ndarray]:
        logits = self.logits(x, train=train)
        loss = self.loss.forward(logits, labels)
        self._ready = True
        return loss, logits

    def backward(self) -> np.ndarray:
        """Accumulate every parameter gradient; returns the gradient w.r.t. the input batch."""
        if not self._ready:
            raise StateError("backward called without a preceding forward_loss")
        d = self.loss.backward()
        for layer in reversed(self.layers):
            d = layer.backward(d)
        self._ready = False
        return d

    def predict(self, x: np.ndarray, batch_size: int = 500) -> np.ndarray:
        preds = [np.argmax(self.logits(x[i:i + batch_size]), axis=1) for i in range(0, len(x), batch_size)]
        return np.concatenate(preds) if preds else np.empty(0, dtype=np.int64)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._registry.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._registry) - set(state)
        extra = set(state) - set(self._registry)
        if missing or extra:
            raise FormatError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in self._registry.items():
            if state[name].shape != p.value.shape:
                raise ShapeError(f"{name}: checkpoint shape {state[name].shape}, model shape {p.value.shape}")
            p.value[...] = state[name]


# --------------------------------------------------------------------- MNIST-Conv


@dataclass
class MnistConvSpec:
    activation: str = "arelu"
    widths: tuple[int, int, int] = (32, 64, 128)
    in_channels: int = 1
    input_size: int = 28
    num_classes: int = 10
    alpha: float = 0.9
    beta: float = 2.0
    kernel: int = 3
    padding: int = 1
    activation_decay: bool = False

    def spatial_trace(self) -> list[int]:
        sizes = [self.input_size]
        for _ in range(3):
            conv = sizes[-1] + 2 * self.padding - self.kernel + 1
            if conv < 2:
                raise ShapeError(f"input size {self.input_size} too small for three conv/pool blocks")
            sizes.append(conv // 2)
        return sizes


def build_mnist_conv(spec: MnistConvSpec | None = None, seed: int | np.random.Generator | None = 0,
                     dtype=None) -> SequentialModel:
    """Three conv -> maxpool(2) -> activation blocks, then flatten -> linear."""
    spec = spec or MnistConvSpec()
    if len(spec.widths) != 3 or min(spec.widths) < 1:
        raise ConfigError(f"MNIST-Conv needs three positive channel widths, got {spec.widths}")
    kind = activation_kind(spec.activation)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dtype = dtype or default_dtype()
    final = spec.spatial_trace()[-1]

    layers: list[Layer] = []
    c_in = spec.in_channels
    for i, c_out in enumerate(spec.widths, start=1):
        layers.append(Conv2d(c_in, c_out, spec.kernel, padding=spec.padding, rng=rng, dtype=dtype, name=f"conv{i}"))
        layers.append(MaxPool2d(2, 2, name=f"pool{i}"))
        act = make_activation(kind, alpha=spec.alpha, beta=spec.beta, rng=rng, dtype=dtype, name=f"act{i}")
        for p in act.params():
            p.decay = spec.activation_decay
        layers.append(act)
        c_in = c_out
    layers.append(Flatten())
    layers.append(Linear(c_in * final * final, spec.num_classes, rng=rng, dtype=dtype, name="fc"))
    return SequentialModel(layers, input_shape=(spec.in_channels, spec.input_size, spec.input_size))


def count_params(model: SequentialModel) -> int:
    return sum(p.value.size for p in model.params())


# -------------------------------------------------------------------- checkpoints


def save_checkpoint(model: SequentialModel | dict[str, np.ndarray], path: str | Path) -> None:
    state = model.state_dict() if isinstance(model, SequentialModel) else model
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(state))]
    for name, value in state.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{value.ndim}I", value.ndim, *value.shape))
        chunks.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (magic {data[:4]!r}, expected {CHECKPOINT_MAGIC!r})")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        state: dict[str, np.ndarray] = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, pos)
            name = data[pos + 4:pos + 4 + n].decode("utf-8")
            pos += 4 + n
            (ndim,) = struct.unpack_from("<I", data, pos)
            shape = struct.unpack_from(f"<{ndim}I", data, pos + 4)
            pos += 4 + 4 * ndim
            size = int(np.prod(shape))
            if pos + 4 * size > len(data):
                raise FormatError(f"{path}: truncated record {name!r}")
            state[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape).copy()
            pos += 4 * size
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    return state


def load_checkpoint(model: SequentialModel, path: str | Path) -> SequentialModel:
    model.load_state_dict(read_checkpoint(path))
    return model


def infer_mnist_conv_spec(state: dict[str, np.ndarray], activation: str | None = None) -> MnistConvSpec:
    """Recover the architecture of a saved MNIST-Conv from its parameter shapes.

    Learnable activations are recognised from their parameters; for the
    others ``activation`` must be given (defaults to relu).
    """
    try:
        w = [state[f"conv{i}.weight"] for i in (1, 2, 3)]
        fc = state["fc.weight"]
    except KeyError as exc:
        raise FormatError(f"not an MNIST-Conv checkpoint: missing {exc}") from None
    if "act1.alpha" in state:
        found = "arelu"
    elif "act1.slope" in state:
        found = "prelu"
    else:
        found = None
    if activation is not None and found is not None and activation_kind(activation).tag != found:
        raise ConfigError(f"checkpoint holds {found} parameters but activation {activation!r} was requested")
    widths = tuple(int(x.shape[0]) for x in w)
    final = int(round((fc.shape[1] / widths[2]) ** 0.5))
    kernel = int(w[0].shape[2])
    spec = MnistConvSpec(activation=found or activation or "relu", widths=widths, in_channels=int(w[0].shape[1]),
                         num_classes=int(fc.shape[0]), kernel=kernel, padding=(kernel - 1) // 2)
    spec.input_size = _input_size_for(spec, final)
    return spec


def _input_size_for(spec: MnistConvSpec, final: int) -> int:
    for size in [28] + list(range(4, 257)):
        spec.input_size = size
        try:
            if spec.spatial_trace()[-1] == final:
                return size
        except ShapeError:
            continue
    raise FormatError(f"cannot infer input size for final spatial extent {final}")
