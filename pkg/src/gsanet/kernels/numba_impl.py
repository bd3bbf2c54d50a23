"""Numba-jitted attention kernels (the fast backend).

Same math as `gsanet.kernels.numpy_impl`, written as fused loops.  All
kernels are sequential (no prange) with a fixed iteration order, so results
are deterministic and independent of the numba thread pool.  Accumulation
happens in float64 even for float32 inputs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from . import numpy_impl


@njit(cache=True)
def _content_kernel(k, q, v, softmax_queries):
    b, h, w, n, kh = k.shape
    vh = v.shape[4]
    out = np.empty((b, h, w, n, vh), dtype=v.dtype)
    ksm = np.empty((h, w, kh), dtype=np.float64)
    ctx = np.empty((kh, vh), dtype=np.float64)
    qrow = np.empty(kh, dtype=np.float64)
    for bi in range(b):
        for ni in range(n):
            # spatial softmax of the keys, one key channel at a time
            for kc in range(kh):
                m = k[bi, 0, 0, ni, kc]
                for x in range(h):
                    for y in range(w):
                        val = k[bi, x, y, ni, kc]
                        if val > m:
                            m = val
                total = 0.0
                for x in range(h):
                    for y in range(w):
                        e = np.exp(k[bi, x, y, ni, kc] - m)
                        ksm[x, y, kc] = e
                        total += e
                inv = 1.0 / total
                for x in range(h):
                    for y in range(w):
                        ksm[x, y, kc] *= inv
            # global context vectors
            for kc in range(kh):
                for vc in range(vh):
                    ctx[kc, vc] = 0.0
            for x in range(h):
                for y in range(w):
                    for kc in range(kh):
                        wgt = ksm[x, y, kc]
                        for vc in range(vh):
                            ctx[kc, vc] += wgt * v[bi, x, y, ni, vc]
            # redistribute per pixel
            for x in range(h):
                for y in range(w):
                    if softmax_queries:
                        m = q[bi, x, y, ni, 0]
                        for kc in range(kh):
                            if q[bi, x, y, ni, kc] > m:
                                m = q[bi, x, y, ni, kc]
                        total = 0.0
                        for kc in range(kh):
                            e = np.exp(q[bi, x, y, ni, kc] - m)
                            qrow[kc] = e
                            total += e
                        inv = 1.0 / total
                        for kc in range(kh):
                            qrow[kc] *= inv
                    else:
                        for kc in range(kh):
                            qrow[kc] = q[bi, x, y, ni, kc]
                    for vc in range(vh):
                        acc = 0.0
                        for kc in range(kh):
                            acc += qrow[kc] * ctx[kc, vc]
                        out[bi, x, y, ni, vc] = acc
    return out


@njit(cache=True)
def _axial_col_kernel(q, values, r, window):
    b, h, w, n, kh = q.shape
    vh = values.shape[4]
    out = np.zeros((b, h, w, n, vh), dtype=values.dtype)
    for bi in range(b):
        for x in range(h):
            lo = max(0, x - window)
            hi = min(h - 1, x + window)
            for y in range(w):
                for ni in range(n):
                    for i in range(lo, hi + 1):
                        ridx = i - x + h - 1
                        wgt = 0.0
                        for kc in range(kh):
                            wgt += q[bi, x, y, ni, kc] * r[ridx, kc]
                        for vc in range(vh):
                            out[bi, x, y, ni, vc] += wgt * values[bi, i, y, ni, vc]
    return out


def content_attention(k, q, v, softmax_queries=False, with_cache=False):
    if with_cache:
        return numpy_impl.content_attention(k, q, v, softmax_queries, with_cache=True)
    return _content_kernel(
        np.ascontiguousarray(k),
        np.ascontiguousarray(q),
        np.ascontiguousarray(v),
        softmax_queries,
    )


def axial_positional(q, values, r, axis, window, with_cache=False):
    if with_cache:
        return numpy_impl.axial_positional(q, values, r, axis, window, with_cache=True)
    if axis == "col":
        return _axial_col_kernel(
            np.ascontiguousarray(q),
            np.ascontiguousarray(values),
            np.ascontiguousarray(r),
            window,
        )
    if axis == "row":
        # reuse the column kernel on the transposed image
        qt = np.ascontiguousarray(q.transpose(0, 2, 1, 3, 4))
        vt = np.ascontiguousarray(values.transpose(0, 2, 1, 3, 4))
        out = _axial_col_kernel(qt, vt, np.ascontiguousarray(r), window)
        return np.ascontiguousarray(out.transpose(0, 2, 1, 3, 4))
    raise ValueError(f"axis must be 'col' or 'row', got {axis!r}")


@njit(cache=True)
def _naive_kernel(ksm, q, v):
    b, npix, n, kh = q.shape
    vh = v.shape[3]
    out = np.empty((b, npix, n, vh), dtype=v.dtype)
    for bi in range(b):
        for ni in range(n):
            for j in range(npix):
                for vc in range(vh):
                    out[bi, j, ni, vc] = 0.0
                for i in range(npix):
                    wgt = 0.0
                    for kc in range(kh):
                        wgt += q[bi, j, ni, kc] * ksm[bi, i, ni, kc]
                    for vc in range(vh):
                        out[bi, j, ni, vc] += wgt * v[bi, i, ni, vc]
    return out


def naive_quadratic(k, q, v):
    b, h, w, n, kh = k.shape
    vh = v.shape[4]
    npix = h * w
    ksm = numpy_impl.spatial_softmax(k).reshape(b, npix, n, kh)
    out = _naive_kernel(
        np.ascontiguousarray(ksm),
        np.ascontiguousarray(q.reshape(b, npix, n, kh)),
        np.ascontiguousarray(v.reshape(b, npix, n, vh)),
    )
    return out.reshape(b, h, w, n, vh)
