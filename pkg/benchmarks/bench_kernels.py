"""Compare the compiled and pure-numpy kernel backends.

Times each hot kernel on MNIST-Conv-sized tensors (batch 64, float32) and one
full SGD step of the default model, once per available backend::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 64]
"""
import argparse
import timeit

import numpy as np

from arelu import kernels
from arelu.activations import AReLUState, arelu_backward, arelu_forward
from arelu.layers import ConvParams, conv2d_backward, conv2d_forward, maxpool2d_backward, maxpool2d_forward
from arelu.model import build_mnist_conv
from arelu.optim import SGD


def cases(batch: int):
    rng = np.random.default_rng(0)
    f32 = np.float32
    x1 = rng.standard_normal((batch, 1, 28, 28)).astype(f32)
    x2 = rng.standard_normal((batch, 32, 14, 14)).astype(f32)
    act = rng.standard_normal((batch, 64, 14, 14)).astype(f32)
    p1 = ConvParams(rng.standard_normal((32, 1, 3, 3)).astype(f32), np.zeros(32, f32), padding=1)
    p2 = ConvParams(rng.standard_normal((64, 32, 3, 3)).astype(f32), np.zeros(64, f32), padding=1)
    state = AReLUState(0.9, 2.0, dtype=f32)

    def conv(x, p):
        out, ctx = conv2d_forward(x, p)
        conv2d_backward(ctx, p, np.ones_like(out))

    def pool():
        out, ctx = maxpool2d_forward(act, 2)
        maxpool2d_backward(ctx, np.ones_like(out))

    def arelu():
        out, ctx = arelu_forward(act, state)
        arelu_backward(ctx, state, out)

    model = build_mnist_conv(dtype=f32)
    opt = SGD(model.params(), lr=1e-3)
    labels = rng.integers(0, 10, batch)

    def step():
        opt.zero_grad()
        model.forward_loss(x1, labels)
        model.backward()
        opt.step()

    return {
        "conv1 fwd+bwd": lambda: conv(x1, p1),
        "conv2 fwd+bwd": lambda: conv(x2, p2),
        "maxpool fwd+bwd": pool,
        "arelu fwd+bwd": arelu,
        "train step": step,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--batch", type=int, default=64)
    args = parser.parse_args()

    backends = kernels.available_backends()
    times = {}
    for name in backends:
        with kernels.backend(name):
            for label, fn in cases(args.batch).items():
                fn()  # warm-up
                times[label, name] = min(timeit.repeat(fn, number=1, repeat=args.repeat)) * 1e3

    labels = list(cases(1))
    print(f"{'kernel':<18}" + "".join(f"{b + ' ms':>12}" for b in backends)
          + (f"{'speedup':>10}" if len(backends) == 2 else ""))
    for label in labels:
        row = f"{label:<18}" + "".join(f"{times[label, b]:>12.2f}" for b in backends)
        if len(backends) == 2:
            row += f"{times[label, 'python'] / times[label, 'cython']:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
