"""Backend selection for the hot kernels.

The compiled extension ``arelu._ckernels`` is used when it imports; otherwise
the numpy fallback in ``arelu._pykernels`` is. Setting ``ARELU_BACKEND=python``
forces the fallback.
"""
import os
from contextlib import contextmanager
from types import ModuleType

from . import _pykernels
from .errors import ConfigError

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def _initial() -> str:
    wanted = os.environ.get("ARELU_BACKEND", "").strip().lower()
    if wanted:
        if wanted not in _BACKENDS:
            raise ImportError(f"ARELU_BACKEND={wanted!r} unavailable; have {available_backends()}")
        return wanted
    return "cython" if "cython" in _BACKENDS else "python"


BACKEND = _initial()
impl: ModuleType = _BACKENDS[BACKEND]


def set_backend(name: str) -> None:
    global BACKEND, impl
    if name not in _BACKENDS:
        raise ConfigError(f"unknown backend {name!r}; have {available_backends()}")
    BACKEND = name
    impl = _BACKENDS[name]


@contextmanager
def backend(name: str):
    previous = BACKEND
    set_backend(name)
    try:
        yield impl
    finally:
        set_backend(previous)
