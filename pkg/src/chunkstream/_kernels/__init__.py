"""Hot-path kernels with a compiled core and a numpy fallback.

The compiled extension (_core, Cython) is used when importable; otherwise the
numpy implementation (_py) is selected. CHUNKSTREAM_KERNEL=python|cython
forces a backend, and set_backend() switches at runtime (benchmarks, parity
tests). Both backends implement the same two functions with identical
contracts: chunk_mask and masked_softmax.
"""

from __future__ import annotations

import os

from . import _py

_BACKENDS = {"python": _py}

try:
    from . import _core

    _BACKENDS["cython"] = _core
except ImportError:
    _core = None

_forced = os.environ.get("CHUNKSTREAM_KERNEL", "").strip().lower()
if _forced:
    if _forced not in _BACKENDS:
        raise ImportError(
            f"CHUNKSTREAM_KERNEL={_forced!r} requested but that backend is "
            f"unavailable (have: {', '.join(sorted(_BACKENDS))})"
        )
    _impl = _BACKENDS[_forced]
else:
    _impl = _BACKENDS.get("cython", _py)


def backend() -> str:
    """Name of the active backend."""
    for name, mod in _BACKENDS.items():
        if mod is _impl:
            return name
    raise RuntimeError("unreachable: active backend not registered")


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def set_backend(name: str) -> None:
    """Switch the active backend. Not thread-safe; meant for benchmarks/tests."""
    global _impl
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r} (have: {', '.join(sorted(_BACKENDS))})")
    _impl = _BACKENDS[name]


def chunk_mask(n_rows, n_cols, chunk, left, rc, factor=1, row_offset=0, col_offset=0):
    return _impl.chunk_mask(n_rows, n_cols, chunk, left, rc, factor, row_offset, col_offset)


def masked_softmax(scores, mask):
    return _impl.masked_softmax(scores, mask)
