"""IDX datasets: reading, writing, conversion from image folders, and batching.

IDX files start with a big-endian magic ``0x0000 08 NN`` (unsigned-byte
payload, ``NN`` dimensions), followed by ``NN`` big-endian u32 extents and the
raw bytes. Images use ``0x00000803``, labels ``0x00000801``. Gzipped files
(``.gz``) are read transparently.
"""
from __future__ import annotations

import gzip
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError, ConsistencyError, FormatError
from .tensor import default_dtype

log = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
_UBYTE = 0x08
DATA_DIR_ENV = "ARELU_DATA_DIR"
SPLIT_PREFIX = {"train": "train", "test": "t10k"}


@dataclass
class Dataset:
    images: np.ndarray  # [N, 1, H, W], values in [0, 1]
    labels: np.ndarray  # [N] int64
    num_classes: int = 10

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ConsistencyError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, n: int | None, seed: int = 0) -> "Dataset":
        """The first ``n`` samples after a seeded shuffle (the whole set if ``n`` is None)."""
        if n is None or n >= len(self):
            return self
        if n < 1:
            raise ConfigError(f"subset size must be >= 1, got {n}")
        idx = np.random.default_rng(seed).permutation(len(self))[:n]
        return Dataset(self.images[idx], self.labels[idx], self.num_classes)

    def astype(self, dtype) -> "Dataset":
        return Dataset(self.images.astype(dtype, copy=False), self.labels, self.num_classes)


def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path: str | Path, expected_magic: int | None = None) -> np.ndarray:
    """Parse one IDX file into a uint8 array shaped by its header."""
    path = Path(path)
    with _open(path) as f:
        data = f.read()
    if len(data) < 4:
        raise OSError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", data[:4])
    if expected_magic is not None and magic != expected_magic:
        raise FormatError(f"{path}: magic 0x{magic:08X}, expected 0x{expected_magic:08X}")
    if magic >> 8 != _UBYTE:
        raise FormatError(f"{path}: magic 0x{magic:08X} is not an unsigned-byte IDX file")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if ndim < 1 or len(data) < header:
        raise OSError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    count = int(np.prod(dims))
    if len(data) - header < count:
        raise OSError(f"{path}: truncated payload ({len(data) - header} of {count} bytes)")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=header).reshape(dims)


def write_idx(path: str | Path, array: np.ndarray) -> None:
    array = np.asarray(array)
    if array.dtype != np.uint8:
        if array.min() < 0 or array.max() > 255 or not np.array_equal(array, np.round(array)):
            raise FormatError("IDX payload must be integers in [0, 255]")
        array = array.astype(np.uint8)
    header = struct.pack(f">I{array.ndim}I", (_UBYTE << 8) | array.ndim, *array.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(array).tobytes())


def load_idx(images_path: str | Path, labels_path: str | Path, dtype=None, num_classes: int | None = None) -> Dataset:
    """Load an image/label IDX pair; pixels are scaled by 1/255 into ``[0, 1]``."""
    raw = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if raw.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images_path} holds {raw.shape[0]} images but {labels_path} holds "
                               f"{labels.shape[0]} labels")
    images = (raw.astype(dtype or default_dtype()) / 255)[:, None, :, :]
    k = num_classes if num_classes is not None else max(10, int(labels.max()) + 1) if len(labels) else 10
    if len(labels) and labels.max() >= k:
        raise ConsistencyError(f"label {labels.max()} out of range for {k} classes")
    return Dataset(np.ascontiguousarray(images), labels.astype(np.int64), k)


def write_dataset(prefix: str | Path, images: np.ndarray, labels: np.ndarray) -> tuple[Path, Path]:
    """Write ``prefix-images-idx3-ubyte`` / ``prefix-labels-idx1-ubyte``; images are uint8 [N, H, W]."""
    images = np.asarray(images)
    if images.ndim == 4 and images.shape[1] == 1:
        images = images[:, 0]
    if images.ndim != 3:
        raise FormatError(f"images must be [N, H, W], got shape {images.shape}")
    if len(images) != len(labels):
        raise ConsistencyError(f"{len(images)} images but {len(labels)} labels")
    img_path = Path(f"{prefix}-images-idx3-ubyte")
    lbl_path = Path(f"{prefix}-labels-idx1-ubyte")
    img_path.parent.mkdir(parents=True, exist_ok=True)
    write_idx(img_path, images)
    write_idx(lbl_path, np.asarray(labels).reshape(-1))
    return img_path, lbl_path


def split_paths(directory: str | Path, split: str) -> tuple[Path, Path]:
    """Locate the standard MNIST-style file pair for ``split`` ("train" or "test")."""
    directory = Path(directory)
    prefix = SPLIT_PREFIX.get(split, split)
    found = []
    for kind, nd in (("images", 3), ("labels", 1)):
        stem = f"{prefix}-{kind}-idx{nd}-ubyte"
        for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
            if (directory / name).exists():
                found.append(directory / name)
                break
        else:
            raise FileNotFoundError(f"no {stem}[.gz] in {directory}")
    return found[0], found[1]


def load_split(directory: str | Path, split: str, dtype=None) -> Dataset:
    return load_idx(*split_paths(directory, split), dtype=dtype)


def data_root(default: str | Path | None = None) -> Path | None:
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(default) if default is not None else None


def resolve_dataset_dir(name_or_path: str | Path) -> Path:
    """A path is used as-is if it exists; otherwise it is looked up under ``$ARELU_DATA_DIR``."""
    p = Path(name_or_path)
    if p.is_dir():
        return p
    root = data_root()
    if root is not None and (root / p).is_dir():
        return root / p
    raise FileNotFoundError(f"dataset directory {name_or_path!r} not found (set {DATA_DIR_ENV} or pass a path)")


# ---------------------------------------------------------------------- batching


class BatchIterator:
    """Seeded mini-batches over a dataset; every epoch visits each sample once.

    The permutation for epoch ``e`` is drawn from ``default_rng([seed, e])``,
    so iteration order depends only on (seed, epoch). The last partial batch
    is kept.
    """

    def __init__(self, dataset: Dataset, batch_size: int, seed: int = 0):
        if batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {batch_size}")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed

    def __len__(self) -> int:
        return -(-len(self.dataset) // self.batch_size)

    def order(self, epoch: int = 0) -> np.ndarray:
        return np.random.default_rng([self.seed, epoch]).permutation(len(self.dataset))

    def epoch(self, epoch: int = 0) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        perm = self.order(epoch)
        for start in range(0, len(perm), self.batch_size):
            idx = perm[start:start + self.batch_size]
            yield self.dataset.images[idx], self.dataset.labels[idx]

    def __iter__(self):
        return self.epoch(0)


def batches(dataset: Dataset, batch_size: int, seed: int = 0) -> BatchIterator:
    return BatchIterator(dataset, batch_size, seed)


# -------------------------------------------------------------------- conversion

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".ppm", ".pgm", ".webp"}


@dataclass
class ConversionReport:
    images_path: Path
    labels_path: Path
    written: int
    skipped: list[Path]
    classes: list[str]


def to_grayscale_28(path: Path, size: int = 28) -> np.ndarray:
    """Decode one image, convert to luma (0.299 R + 0.587 G + 0.114 B) and resize bilinearly."""
    from PIL import Image

    with Image.open(path) as im:
        im.load()
        if im.mode in ("L", "I", "F", "I;16"):
            gray = np.asarray(im.convert("F"), dtype=np.float32)
        else:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float32)
            gray = rgb @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
    resized = Image.fromarray(gray, mode="F").resize((size, size), Image.BILINEAR)
    return np.clip(np.rint(np.asarray(resized, dtype=np.float64)), 0, 255).astype(np.uint8)


def convert_to_idx(src: str | Path, out_prefix: str | Path, size: int = 28) -> ConversionReport:
    """Convert a folder with one subdirectory per class into an IDX pair.

    Class labels are assigned in sorted subdirectory-name order. Unreadable
    files are skipped with a warning; a class with no readable image is an
    error.
    """
    src = Path(src)
    classes = sorted(d.name for d in src.iterdir() if d.is_dir()) if src.is_dir() else []
    if not classes:
        raise ConfigError(f"{src}: expected one subdirectory per class")
    if len(classes) > 256:
        raise ConfigError(f"{src}: {len(classes)} classes do not fit in an unsigned-byte label")
    images, labels, skipped = [], [], []
    for label, name in enumerate(classes):
        files = sorted(p for p in (src / name).iterdir() if p.is_file())
        count = 0
        for f in files:
            try:
                images.append(to_grayscale_28(f, size))
            except Exception as exc:  # noqa: BLE001 - any decode failure means "skip"
                if f.suffix.lower() in _IMAGE_SUFFIXES:
                    log.warning("skipping unreadable image %s: %s", f, exc)
                skipped.append(f)
                continue
            labels.append(label)
            count += 1
        if count == 0:
            raise ConfigError(f"class {name!r} in {src} has no readable images")
    if skipped:
        log.warning("skipped %d unreadable files", len(skipped))
    img_path, lbl_path = write_dataset(out_prefix, np.stack(images), np.array(labels, dtype=np.uint8))
    return ConversionReport(img_path, lbl_path, len(labels), skipped, classes)
