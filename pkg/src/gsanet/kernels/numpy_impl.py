"""Pure-numpy attention kernels (the fallback backend).

All kernels take head-split feature maps shaped (batch, H, W, heads, ch).
The einsum calls run unoptimized, i.e. single-threaded with a fixed
summation order, so outputs are bit-reproducible.

These are also the reference implementations for the backward pass: with
``with_cache=True`` they return the intermediates the analytic gradients
need.
"""

from __future__ import annotations

import numpy as np


def spatial_softmax(t: np.ndarray) -> np.ndarray:
    """Softmax over the two spatial axes of a (b, h, w, n, c) tensor."""
    shifted = t - t.max(axis=(1, 2), keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=(1, 2), keepdims=True)


def channel_softmax(t: np.ndarray) -> np.ndarray:
    """Softmax over the trailing channel axis."""
    shifted = t - t.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def content_attention(k, q, v, softmax_queries=False, with_cache=False):
    """Linear-cost content attention: redistribute global context vectors.

    Keys are softmax-normalized over all pixels per (head, key channel); the
    per-head context ``c[n,k,v]`` summarizes the whole image, and queries mix
    the context back per pixel.  Queries stay unnormalized unless
    ``softmax_queries`` asks for the convex-combination variant (softmax over
    the key-channel axis per pixel).
    """
    ksm = spatial_softmax(k)
    qc = channel_softmax(q) if softmax_queries else q
    c = np.einsum("bxynk,bxynv->bnkv", ksm, v, optimize=False)
    out = np.einsum("bxynk,bnkv->bxynv", qc, c, optimize=False)
    if with_cache:
        return out, {"ksm": ksm, "qc": qc, "c": c}
    return out


def position_lookup(r: np.ndarray, extent: int, window: int) -> np.ndarray:
    """Absolute-shift embedding table P[x, i, :] = r[i - x + extent - 1, :].

    Pairs with |i - x| > window are zero.  Equivalent to contracting the
    binary re-indexing tensor with ``r``; realized as a gather because each
    (x, i) selects at most one embedding row.
    """
    offsets = np.arange(extent)[None, :] - np.arange(extent)[:, None]
    p = r[offsets + extent - 1]
    p[np.abs(offsets) > window] = 0.0
    return p


def axial_positional(q, values, r, axis, window, with_cache=False):
    """One axial positional-attention pass (no softmax anywhere).

    Per pixel, the attention weight on an in-window neighbor at offset d
    along the chosen axis is the dot product of the pixel's query with the
    embedding row for d; the pass mixes ``values`` with those weights.
    """
    extent = q.shape[1] if axis == "col" else q.shape[2]
    p = position_lookup(np.asarray(r), extent, window)
    if axis == "col":
        s = np.einsum("bxynk,xik->bxyin", q, p, optimize=False)
        out = np.einsum("bxyin,biynv->bxynv", s, values, optimize=False)
    elif axis == "row":
        s = np.einsum("bxynk,yjk->bxyjn", q, p, optimize=False)
        out = np.einsum("bxyjn,bxjnv->bxynv", s, values, optimize=False)
    else:
        raise ValueError(f"axis must be 'col' or 'row', got {axis!r}")
    if with_cache:
        return out, {"p": p, "s": s}
    return out


def naive_quadratic(k, q, v, chunk_elems: int = 1 << 24):
    """Content attention via the O(N^2) bracketing (Q . softmax(K)^T) . V.

    Numerically equal to `content_attention` by associativity; materializes
    per-pixel attention weights, chunked over output pixels to bound memory.
    """
    b, h, w, n, kh = k.shape
    vh = v.shape[4]
    npix = h * w
    ksm = spatial_softmax(k).reshape(b, npix, n, kh)
    qf = q.reshape(b, npix, n, kh)
    vf = v.reshape(b, npix, n, vh)
    out = np.empty((b, npix, n, vh), dtype=v.dtype)
    chunk = max(1, chunk_elems // max(1, npix * n))
    for start in range(0, npix, chunk):
        sl = slice(start, min(start + chunk, npix))
        wts = np.einsum("bxnk,bink->bxin", qf[:, sl], ksm, optimize=False)
        out[:, sl] = np.einsum("bxin,binv->bxnv", wts, vf, optimize=False)
    return out.reshape(b, h, w, n, vh)
