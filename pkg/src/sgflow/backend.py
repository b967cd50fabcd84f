"""Kernel backend selection.

Hot numeric kernels exist twice: jit-compiled in `_kernels_numba` and
vectorized pure numpy in `_kernels_numpy`. The active backend is chosen
at import time from the environment variable ``SGFLOW_BACKEND``:

    SGFLOW_BACKEND=numba   force the numba kernels (error if unavailable)
    SGFLOW_BACKEND=numpy   force the pure-numpy fallback
    (unset)                numba when importable, numpy otherwise

`set_backend` switches at runtime; `benchmarks/bench_kernels.py` uses it
to time both paths in one process.
"""

import os

from . import _kernels_numpy

_BACKENDS = {"numpy": _kernels_numpy}
_NUMBA_IMPORT_ERROR = None

try:
    from . import _kernels_numba

    _BACKENDS["numba"] = _kernels_numba
except ImportError as exc:  # numba not installed
    _NUMBA_IMPORT_ERROR = exc

_active = None


def available_backends():
    return sorted(_BACKENDS)


def set_backend(name: str):
    """Select the kernel implementation by name ('numba' or 'numpy')."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}; expected 'numba' or 'numpy'")
    if name not in _BACKENDS:
        raise ImportError(
            f"backend {name!r} requested but numba is not importable "
            f"({_NUMBA_IMPORT_ERROR}); install numba or use SGFLOW_BACKEND=numpy"
        )
    _active = _BACKENDS[name]
    return _active


def active():
    """The currently selected kernel module."""
    return _active


def active_name() -> str:
    return _active.NAME


def _init_from_env():
    requested = os.environ.get("SGFLOW_BACKEND", "").strip().lower()
    if requested:
        set_backend(requested)
    elif "numba" in _BACKENDS:
        set_backend("numba")
    else:
        set_backend("numpy")


_init_from_env()
