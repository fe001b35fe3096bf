import os
from pathlib import Path

import numpy as np
import pytest

from arelu import kernels
from arelu.data import write_dataset
from arelu.tensor import precision


def data_dir(name: str) -> Path | None:
    root = os.environ.get("ARELU_DATA_DIR")
    if not root:
        return None
    d = Path(root) / name
    return d if (d / "train-images-idx3-ubyte").exists() or (d / "train-images-idx3-ubyte.gz").exists() else None


@pytest.fixture
def f64():
    with precision("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=kernels.available_backends())
def each_backend(request):
    with kernels.backend(request.param):
        yield request.param


@pytest.fixture
def mnist_dir():
    d = data_dir("mnist")
    if d is None:
        pytest.skip("MNIST not found under $ARELU_DATA_DIR")
    return d


@pytest.fixture
def fashion_dir():
    d = data_dir("fashion-mnist")
    if d is None:
        pytest.skip("Fashion-MNIST not found under $ARELU_DATA_DIR")
    return d


def make_synthetic(root, n_train=192, n_test=96, size=28, seed=0):
    """Noise images with one bright class-specific block: learnable in one epoch."""
    rng = np.random.default_rng(seed)

    def make(n):
        y = rng.integers(0, 10, n)
        x = (rng.random((n, size, size)) * 60).astype(np.uint8)
        s = size // 4
        for i, c in enumerate(y):
            r, col = divmod(int(c), 4)
            x[i, r * s:(r + 1) * s - 1, col * s:(col + 1) * s - 1] = 255
        return x, y

    write_dataset(root / "train", *make(n_train))
    write_dataset(root / "t10k", *make(n_test))
    return root


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    return make_synthetic(tmp_path_factory.mktemp("synth"))
