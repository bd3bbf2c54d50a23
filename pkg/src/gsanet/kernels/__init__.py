"""Backend-dispatched attention kernels.

The three hot kernels (linear content attention, one axial positional pass,
and the quadratic reference bracketing) exist as numba-jitted loops and as
pure-numpy einsums.  Selection order: explicit ``backend=`` argument, then
the ``GSA_BACKEND`` environment variable, then auto-detection.
"""

from __future__ import annotations

from .._backend import HAS_NUMBA, resolve_backend
from . import numpy_impl

KERNEL_NAMES = ("content", "axial_positional", "naive_quadratic")


def _impl(backend: str | None):
    if resolve_backend(backend) == "numba":
        from . import numba_impl

        return numba_impl
    return numpy_impl


def active_backend(backend: str | None = None) -> str:
    return resolve_backend(backend)


def content_attention(k, q, v, softmax_queries=False, backend=None, with_cache=False):
    return _impl(backend).content_attention(
        k, q, v, softmax_queries=softmax_queries, with_cache=with_cache
    )


def axial_positional(q, values, r, axis, window, backend=None, with_cache=False):
    return _impl(backend).axial_positional(
        q, values, r, axis, window, with_cache=with_cache
    )


def naive_quadratic(k, q, v, backend=None):
    return _impl(backend).naive_quadratic(k, q, v)


def warmup(backend: str | None = None, dtype="float64") -> None:
    """Trigger jit compilation outside timed regions (no-op on numpy)."""
    import numpy as np

    if resolve_backend(backend) != "numba":
        return
    shape = (1, 2, 2, 1, 2)
    k = np.zeros(shape, dtype=dtype)
    v = np.ones(shape, dtype=dtype)
    r = np.zeros((3, 2), dtype=dtype)
    content_attention(k, k, v, backend="numba")
    content_attention(k, k, v, softmax_queries=True, backend="numba")
    axial_positional(k, v, r, "col", 2, backend="numba")
    axial_positional(k, v, r, "row", 2, backend="numba")
    naive_quadratic(k, k, v, backend="numba")


__all__ = [
    "KERNEL_NAMES",
    "HAS_NUMBA",
    "active_backend",
    "content_attention",
    "axial_positional",
    "naive_quadratic",
    "warmup",
]
