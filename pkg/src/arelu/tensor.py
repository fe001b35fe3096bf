"""Dense real-valued tensors.

Tensors are plain C-contiguous ``numpy.ndarray`` objects in row-major
``[N, C, H, W]`` layout. This module adds the contracts the rest of the
package relies on: extents are validated, the working precision is a
process-wide setting (float32 for training, float64 for gradient checks),
and an optional debug mode asserts finiteness.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NonFiniteError, ShapeError

_PRECISIONS = {"float32": np.float32, "float64": np.float64}
_dtype = np.float32
_debug = False


def default_dtype() -> type:
    return _dtype


def set_precision(name: str) -> None:
    global _dtype
    try:
        _dtype = _PRECISIONS[name]
    except KeyError:
        raise ValueError(f"precision must be one of {sorted(_PRECISIONS)}, got {name!r}") from None


@contextmanager
def precision(name: str):
    """Temporarily switch the default precision (``"float32"`` or ``"float64"``)."""
    previous = np.dtype(_dtype).name
    set_precision(name)
    try:
        yield _dtype
    finally:
        set_precision(previous)


def set_debug(enabled: bool) -> None:
    global _debug
    _debug = bool(enabled)


def debug_enabled() -> bool:
    return _debug


def check_finite(t: np.ndarray, where: str = "tensor") -> np.ndarray:
    """In debug mode, raise :class:`NonFiniteError` if ``t`` has NaN/Inf; no-op otherwise."""
    if _debug and not np.all(np.isfinite(t)):
        raise NonFiniteError(f"non-finite values in {where}")
    return t


def validate_shape(shape: int | Iterable[int]) -> tuple[int, ...]:
    dims = (shape,) if isinstance(shape, (int, np.integer)) else tuple(shape)
    if not dims:
        raise ShapeError("shape must have at least one dimension")
    for d in dims:
        if int(d) != d or d < 1:
            raise ShapeError(f"every extent must be a positive integer, got {dims}")
    return tuple(int(d) for d in dims)


def zeros(shape: int | Iterable[int], dtype=None) -> np.ndarray:
    return np.zeros(validate_shape(shape), dtype=dtype or _dtype)


def as_tensor(data, dtype=None) -> np.ndarray:
    """Copy ``data`` into a contiguous tensor of the working precision."""
    arr = np.array(data, dtype=dtype or _dtype, order="C")
    if arr.ndim == 0:
        arr = arr.reshape(1)
    validate_shape(arr.shape)
    return check_finite(arr)


def require_shape(t: np.ndarray, shape: Sequence[int], what: str) -> None:
    if tuple(t.shape) != tuple(shape):
        raise ShapeError(f"{what}: expected shape {tuple(shape)}, got {tuple(t.shape)}")


def map_elementwise(t: np.ndarray, f: Callable[[float], float]) -> np.ndarray:
    """Apply a scalar function to every element; ufuncs take the vectorised path."""
    if isinstance(f, np.ufunc):
        return np.asarray(f(t), dtype=t.dtype)
    flat = np.fromiter((f(v) for v in t.flat), dtype=t.dtype, count=t.size)
    return flat.reshape(t.shape)


def reduce_sum(t: np.ndarray, mask: Callable[[np.ndarray], np.ndarray] | np.ndarray | None = None) -> float:
    """Sum of the elements selected by ``mask``, accumulated in float64.

    ``mask`` is either a boolean array of ``t``'s shape or a vectorised
    predicate such as ``lambda v: v < 0``.
    """
    if mask is None:
        selected = t
    else:
        m = mask(t) if callable(mask) else np.asarray(mask)
        if m.shape != t.shape:
            raise ShapeError(f"mask shape {m.shape} does not match tensor shape {t.shape}")
        selected = t[m]
    return float(np.sum(selected, dtype=np.float64))


def ravel_index(index: Sequence[int], shape: Sequence[int]) -> int:
    flat = 0
    for i, d in zip(index, shape, strict=True):
        if not 0 <= i < d:
            raise IndexError(f"index {tuple(index)} out of bounds for shape {tuple(shape)}")
        flat = flat * d + i
    return flat


def unravel_index(flat: int, shape: Sequence[int]) -> tuple[int, ...]:
    total = int(np.prod(shape))
    if not 0 <= flat < total:
        raise IndexError(f"flat index {flat} out of bounds for shape {tuple(shape)}")
    out = []
    for d in reversed(shape):
        flat, r = divmod(flat, d)
        out.append(r)
    return tuple(reversed(out))
