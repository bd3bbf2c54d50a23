"""Kernel backend selection.

Hot attention kernels exist twice: a numba @njit version and a pure-numpy
version.  The active one is picked per call site in this order:

1. explicit ``backend=`` argument,
2. the ``GSA_BACKEND`` environment variable (``numba`` | ``numpy`` | ``auto``),
3. ``auto``: numba when importable, numpy otherwise.

All kernels are sequential regardless of backend so results never depend on
thread count.
"""

from __future__ import annotations

import os
import warnings

ENV_BACKEND = "GSA_BACKEND"
ENV_THREADS = "GSA_THREADS"

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only where numba is absent
    HAS_NUMBA = False

_warned_fallback = False


def resolve_backend(backend: str | None = None) -> str:
    """Return the backend name to use: ``'numba'`` or ``'numpy'``."""
    global _warned_fallback
    choice = backend or os.environ.get(ENV_BACKEND, "auto")
    choice = choice.strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(
            f"unknown backend {choice!r}; expected 'auto', 'numba' or 'numpy'"
        )
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not HAS_NUMBA:
            raise ImportError("backend 'numba' requested but numba is not installed")
        return "numba"
    # auto
    if HAS_NUMBA:
        return "numba"
    if not _warned_fallback:  # pragma: no cover
        warnings.warn("numba not available, falling back to the numpy kernels")
        _warned_fallback = True
    return "numpy"


def configured_threads() -> int:
    """Thread cap from GSA_THREADS (kernels are sequential; this is metadata)."""
    raw = os.environ.get(ENV_THREADS, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def set_threads(n: int | None) -> int:
    """Pin the numba thread pool. Returns the applied count.

    All shipped kernels are sequential, so this only matters for callers
    layering their own parallelism on top; when neither the argument nor
    GSA_THREADS asks for it, numba's threading layer is left untouched.
    """
    requested = n is not None or ENV_THREADS in os.environ
    count = max(1, int(n if n is not None else configured_threads()))
    if HAS_NUMBA and requested:
        import numba

        numba.set_num_threads(count)
    return count
