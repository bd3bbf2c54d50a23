"""The global self-attention (GSA) module.

A GSA module projects its input into keys, queries and values with 1x1
convolutions (each followed by batch norm), then runs two parallel branches
on the shared projections:

* content attention - keys are softmaxed over all pixels, folded with the
  values into per-head global context vectors, and redistributed by the
  (unnormalized) queries.  Cost is linear in the pixel count.
* positional attention - a column-only pass, batch norm, then a row-only
  pass, each weighting in-window neighbors by query . relative-position
  embedding.  No softmax anywhere in this branch.  With a global window the
  cost is N*sqrt(N).

Branch outputs are summed, heads are concatenated back into channels, and a
final batch norm produces the module output.  `gsa_backward` provides exact
analytic gradients of the train-mode forward map for every learnable
parameter and the input.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .kernels import numpy_impl
from .tensor import (
    BatchNormState,
    ShapeError,
    _bn_train,
    _bn_train_backward,
    pointwise_conv,
    seeded_init,
)


@dataclass(frozen=True)
class GsaConfig:
    """Hyperparameters of one GSA module instance."""

    d_in: int
    d_k: int
    d_out: int
    n_heads: int
    h: int
    w: int
    L: int | None = None  # window radius; None means global (max(h, w))
    content_on: bool = True
    col_on: bool = True
    row_on: bool = True
    softmax_on_queries: bool = False
    axial_content: bool = False

    def __post_init__(self):
        if min(self.d_in, self.d_k, self.d_out, self.n_heads, self.h, self.w) < 1:
            raise ValueError("all extents and channel counts must be >= 1")
        if self.d_k % self.n_heads or self.d_out % self.n_heads:
            raise ValueError(
                f"d_k={self.d_k} and d_out={self.d_out} must be divisible by "
                f"n_heads={self.n_heads}"
            )
        if not (self.content_on or self.col_on or self.row_on):
            raise ValueError("at least one attention branch must be enabled")
        if self.L is None:
            object.__setattr__(self, "L", max(self.h, self.w))
        if not 1 <= self.L <= max(self.h, self.w):
            raise ValueError(f"window radius L={self.L} outside [1, max(h, w)]")
        if self.axial_content and not self.content_on:
            raise ValueError("axial_content modifies the content branch; enable it")

    @property
    def head_dk(self) -> int:
        return self.d_k // self.n_heads

    @property
    def head_dv(self) -> int:
        return self.d_out // self.n_heads

    @property
    def positional_on(self) -> bool:
        return self.col_on or self.row_on


@dataclass
class RelPosEmbedding:
    """Relative-shift embeddings, one row per vertical/horizontal offset.

    Row r of ``r_col`` holds the embedding for vertical shift r - (h - 1);
    ``r_row`` uses the symmetric convention along the width.  Shared by all
    heads of a module.
    """

    r_col: np.ndarray | None = None  # (2h-1, head_dk)
    r_row: np.ndarray | None = None  # (2w-1, head_dk)


@dataclass
class GsaWeights:
    """Learnable projections plus every batch norm the module owns."""

    w_q: np.ndarray  # (d_in, d_k)
    w_v: np.ndarray  # (d_in, d_out)
    bn_q: BatchNormState
    bn_v: BatchNormState
    bn_out: BatchNormState
    w_k: np.ndarray | None = None  # (d_in, d_k); only with a content branch
    bn_k: BatchNormState | None = None
    bn_mid: BatchNormState | None = None  # between the two positional passes


def init_gsa_params(cfg: GsaConfig, seed: int, dtype=np.float64):
    """Deterministically initialize weights and embeddings for ``cfg``."""
    rng = np.random.Generator(np.random.PCG64(seed))

    def draw(shape, fan_in=None):
        return seeded_init(shape, "fan_in_normal", int(rng.integers(2**63)),
                           fan_in=fan_in, dtype=dtype)

    weights = GsaWeights(
        w_q=draw((cfg.d_in, cfg.d_k)),
        w_v=draw((cfg.d_in, cfg.d_out)),
        bn_q=BatchNormState.initial(cfg.d_k, dtype=dtype),
        bn_v=BatchNormState.initial(cfg.d_out, dtype=dtype),
        bn_out=BatchNormState.initial(cfg.d_out, dtype=dtype),
    )
    if cfg.content_on:
        weights.w_k = draw((cfg.d_in, cfg.d_k))
        weights.bn_k = BatchNormState.initial(cfg.d_k, dtype=dtype)
    if cfg.col_on and cfg.row_on:
        weights.bn_mid = BatchNormState.initial(cfg.d_out, dtype=dtype)
    emb = RelPosEmbedding()
    if cfg.col_on:
        emb.r_col = draw((2 * cfg.h - 1, cfg.head_dk), fan_in=cfg.head_dk)
    if cfg.row_on:
        emb.r_row = draw((2 * cfg.w - 1, cfg.head_dk), fan_in=cfg.head_dk)
    return weights, emb


_BN_NAMES = ("bn_k", "bn_q", "bn_v", "bn_mid", "bn_out")


def gsa_parameters(weights: GsaWeights, emb: RelPosEmbedding) -> dict[str, np.ndarray]:
    """Flat name -> array view of every learnable parameter present."""
    params: dict[str, np.ndarray] = {}
    for name in ("w_k", "w_q", "w_v"):
        arr = getattr(weights, name)
        if arr is not None:
            params[name] = arr
    for name in ("r_col", "r_row"):
        arr = getattr(emb, name)
        if arr is not None:
            params[name] = arr
    for name in _BN_NAMES:
        st = getattr(weights, name)
        if st is not None:
            params[f"{name}.gamma"] = st.gamma
            params[f"{name}.beta"] = st.beta
    return params


def build_reindex_tensor(extent: int, L: int) -> np.ndarray:
    """Binary tensor I with I[x, i, r] = 1 iff i - x = r - (extent - 1), |i - x| <= L.

    Converts relative-shift embedding rows into an absolute-position lookup.
    """
    if extent < 1:
        raise ValueError(f"extent must be >= 1, got {extent}")
    if L < 1:
        raise ValueError(f"window radius must be >= 1, got {L}")
    x = np.arange(extent)[:, None, None]
    i = np.arange(extent)[None, :, None]
    r = np.arange(2 * extent - 1)[None, None, :]
    hit = (i - x == r - (extent - 1)) & (np.abs(i - x) <= L)
    return hit.astype(np.float64)


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


def _split_heads(t4: np.ndarray, n_heads: int) -> np.ndarray:
    b, h, w, c = t4.shape
    return t4.reshape(b, h, w, n_heads, c // n_heads)


def _merge_heads(t5: np.ndarray) -> np.ndarray:
    b, h, w, n, c = t5.shape
    return t5.reshape(b, h, w, n * c)


def _bn_apply(z, state: BatchNormState, training: bool):
    """Returns (out, train_cache_or_None, new_state)."""
    if training:
        out, cache = _bn_train(z, state.gamma, state.beta, state.epsilon)
        m = state.momentum
        new_state = replace(
            state,
            running_mean=m * state.running_mean + (1.0 - m) * cache.mean,
            running_var=m * state.running_var + (1.0 - m) * cache.var,
        )
        return out, cache, new_state
    inv = 1.0 / np.sqrt(state.running_var + state.epsilon)
    return (z - state.running_mean) * inv * state.gamma + state.beta, None, state


def _softmax_backward(s: np.ndarray, ds: np.ndarray, axes) -> np.ndarray:
    """Jacobian-vector product of softmax given its output ``s``."""
    axes = tuple(axes)
    return s * (ds - (ds * s).sum(axis=axes, keepdims=True))


def kqv_project(x, weights: GsaWeights, cfg: GsaConfig, training: bool = False):
    """Project input into head-split keys, queries and values.

    Each projection is a 1x1 convolution followed by batch norm, then the
    channel axis is split into (heads, per-head channels).  K is None when
    the module has no content branch.
    """
    _validate_input(x, cfg)
    k = q = v = None
    for name, w, bn in (
        ("k", weights.w_k, weights.bn_k),
        ("q", weights.w_q, weights.bn_q),
        ("v", weights.w_v, weights.bn_v),
    ):
        if w is None:
            continue
        z, _, _ = _bn_apply(pointwise_conv(x, w), bn, training)
        z = _split_heads(z, cfg.n_heads)
        if name == "k":
            k = z
        elif name == "q":
            q = z
        else:
            v = z
    return k, q, v


def content_attention(k, q, v, cfg: GsaConfig, backend=None):
    """Content branch output Y^C for head-split K, Q, V."""
    return kernels.content_attention(
        k, q, v, softmax_queries=cfg.softmax_on_queries, backend=backend
    )


def axial_content_attention(k, q, v, cfg: GsaConfig):
    """Column-only then row-only content attention (comparison variant).

    Each pass softmaxes the keys along its own axis and attends within that
    axis only; the row pass consumes the column pass's output as values.
    """
    out, _ = _axial_content_forward(k, q, v, cfg)
    return out


def _axial_content_forward(k, q, v, cfg: GsaConfig):
    qc = numpy_impl.channel_softmax(q) if cfg.softmax_on_queries else q
    ks_col = _axis_softmax(k, 1)
    c_col = np.einsum("bxynk,bxynv->bynkv", ks_col, v, optimize=False)
    y_col = np.einsum("bxynk,bynkv->bxynv", qc, c_col, optimize=False)
    ks_row = _axis_softmax(k, 2)
    c_row = np.einsum("bxynk,bxynv->bxnkv", ks_row, y_col, optimize=False)
    y_row = np.einsum("bxynk,bxnkv->bxynv", qc, c_row, optimize=False)
    cache = {"qc": qc, "ks_col": ks_col, "c_col": c_col, "y_col": y_col,
             "ks_row": ks_row, "c_row": c_row}
    return y_row, cache


def _axis_softmax(t, axis):
    shifted = t - t.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def positional_attention_axis(q, values, r, axis: str, cfg: GsaConfig, backend=None):
    """A single column-only or row-only positional pass."""
    extent = cfg.h if axis == "col" else cfg.w
    if r.shape[0] != 2 * extent - 1:
        raise ShapeError(
            f"embedding rows {r.shape[0]} != 2*{extent}-1 for axis {axis!r}"
        )
    if r.shape[1] != cfg.head_dk:
        raise ShapeError(f"embedding channels {r.shape[1]} != {cfg.head_dk}")
    return kernels.axial_positional(q, values, r, axis, cfg.L, backend=backend)


def positional_attention(q, values, emb: RelPosEmbedding, bn_mid, cfg: GsaConfig,
                         training: bool = False, backend=None):
    """Positional branch Y^W: column pass, batch norm, row pass.

    The row pass consumes the normalized column output as its values while
    the queries stay the original Q.  With a single axis enabled the lone
    pass's output is returned and ``bn_mid`` is unused.
    """
    cur = values
    if cfg.col_on:
        cur = positional_attention_axis(q, cur, emb.r_col, "col", cfg, backend)
        if cfg.row_on:
            merged, _, _ = _bn_apply(_merge_heads(cur), bn_mid, training)
            cur = _split_heads(merged, cfg.n_heads)
    if cfg.row_on:
        cur = positional_attention_axis(q, cur, emb.r_row, "row", cfg, backend)
    return cur


def _validate_input(x, cfg: GsaConfig):
    x = np.asarray(x)
    if x.ndim != 4:
        raise ShapeError(f"expected (batch, h, w, d_in), got shape {x.shape}")
    if x.shape[1:] != (cfg.h, cfg.w, cfg.d_in):
        raise ShapeError(
            f"input shape {x.shape[1:]} does not match config "
            f"({cfg.h}, {cfg.w}, {cfg.d_in})"
        )
    _check_finite("input", x)


def gsa_forward(x, weights: GsaWeights, emb: RelPosEmbedding, cfg: GsaConfig,
                training: bool = False, backend=None) -> np.ndarray:
    """Full GSA module forward: projections, parallel branches, fused output."""
    out, _, _ = _forward_full(x, weights, emb, cfg, training=training,
                              need_cache=False, backend=backend)
    return out


def _forward_full(x, weights, emb, cfg, training=False, need_cache=False,
                  backend=None):
    """Forward pass returning (out, cache, new_bn_states).

    ``cache`` holds every intermediate the backward pass consumes (only
    populated when ``need_cache``); ``new_bn_states`` maps bn names to their
    updated running statistics for callers that commit training steps.
    """
    _validate_input(x, cfg)
    if cfg.content_on and weights.w_k is None:
        raise ShapeError("content branch enabled but W_K is missing")
    if cfg.col_on and emb.r_col is None:
        raise ShapeError("column branch enabled but R_col is missing")
    if cfg.row_on and emb.r_row is None:
        raise ShapeError("row branch enabled but R_row is missing")
    if cfg.col_on and cfg.row_on and weights.bn_mid is None:
        raise ShapeError("both positional passes enabled but bn_mid is missing")
    if need_cache:
        backend = "numpy"  # caches come from the einsum reference path
    cache: dict = {"x": x}
    new_states: dict[str, BatchNormState] = {}

    def project(name, w, bn):
        z = pointwise_conv(x, w)
        out, bn_cache, new_state = _bn_apply(z, bn, training)
        new_states[name] = new_state
        if need_cache:
            cache[f"{name}_cache"] = bn_cache
        return _split_heads(out, cfg.n_heads)

    k = project("bn_k", weights.w_k, weights.bn_k) if weights.w_k is not None else None
    q = project("bn_q", weights.w_q, weights.bn_q)
    v = project("bn_v", weights.w_v, weights.bn_v)
    cache.update(k=k, q=q, v=v)

    b = x.shape[0]
    y_sum = np.zeros((b, cfg.h, cfg.w, cfg.n_heads, cfg.head_dv), dtype=x.dtype)

    if cfg.content_on:
        if cfg.axial_content:
            yc, ccache = _axial_content_forward(k, q, v, cfg)
            if need_cache:
                cache["axial_content"] = ccache
        elif need_cache:
            yc, ccache = numpy_impl.content_attention(
                k, q, v, cfg.softmax_on_queries, with_cache=True
            )
            cache["content"] = ccache
        else:
            yc = kernels.content_attention(
                k, q, v, softmax_queries=cfg.softmax_on_queries, backend=backend
            )
        y_sum = y_sum + yc

    if cfg.positional_on:
        cur = v
        if cfg.col_on:
            if need_cache:
                cur, pc = numpy_impl.axial_positional(
                    q, cur, emb.r_col, "col", cfg.L, with_cache=True
                )
                cache["col"] = pc
                cache["y_col"] = cur
            else:
                cur = kernels.axial_positional(q, cur, emb.r_col, "col", cfg.L,
                                               backend=backend)
            if cfg.row_on:
                mid, mid_cache, new_mid = _bn_apply(_merge_heads(cur),
                                                    weights.bn_mid, training)
                new_states["bn_mid"] = new_mid
                if need_cache:
                    cache["bn_mid_cache"] = mid_cache
                cur = _split_heads(mid, cfg.n_heads)
                if need_cache:
                    cache["v_row"] = cur
        if cfg.row_on:
            if need_cache:
                cache.setdefault("v_row", cur)
                out_row, pr = numpy_impl.axial_positional(
                    q, cur, emb.r_row, "row", cfg.L, with_cache=True
                )
                cache["row"] = pr
                cur = out_row
            else:
                cur = kernels.axial_positional(q, cur, emb.r_row, "row", cfg.L,
                                               backend=backend)
        y_sum = y_sum + cur

    merged = _merge_heads(y_sum)
    out, out_cache, new_out = _bn_apply(merged, weights.bn_out, training)
    new_states["bn_out"] = new_out
    if need_cache:
        cache["bn_out_cache"] = out_cache
        cache["merged"] = merged
    return out, (cache if need_cache else None), new_states


def _scatter_embedding_grad(dp: np.ndarray, extent: int, window: int) -> np.ndarray:
    """Accumulate dL/dP (extent, extent, ch) into embedding rows (2*extent-1, ch)."""
    ch = dp.shape[2]
    dr = np.zeros((2 * extent - 1, ch), dtype=dp.dtype)
    reach = min(window, extent - 1)
    for shift in range(-reach, reach + 1):
        diag = np.diagonal(dp, offset=shift, axis1=0, axis2=1)  # (ch, L_diag)
        dr[shift + extent - 1] = diag.sum(axis=1)
    return dr


def gsa_backward(x, weights: GsaWeights, emb: RelPosEmbedding, cfg: GsaConfig,
                 upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Analytic gradients of the train-mode forward map.

    Returns a dict keyed like `gsa_parameters` plus ``'x'`` for the input
    gradient.  Parameters present in the bundle but unused under ``cfg``
    (dead branches) get exact zeros.
    """
    upstream = np.asarray(upstream)
    _, cache, _ = _forward_full(x, weights, emb, cfg, training=True,
                                need_cache=True)
    if upstream.shape != cache["merged"].shape:
        raise ShapeError(
            f"upstream shape {upstream.shape} != output {cache['merged'].shape}"
        )
    grads = {name: np.zeros_like(arr)
             for name, arr in gsa_parameters(weights, emb).items()}

    d_merged, dg, db = _bn_train_backward(upstream, cache["bn_out_cache"])
    grads["bn_out.gamma"] = dg
    grads["bn_out.beta"] = db
    d_sum = _split_heads(d_merged, cfg.n_heads)

    k, q, v = cache["k"], cache["q"], cache["v"]
    dq = np.zeros_like(q)
    dv = np.zeros_like(v)
    dk = np.zeros_like(k) if k is not None else None

    if cfg.content_on:
        if cfg.axial_content:
            dqc = _axial_content_backward(d_sum, cache["axial_content"],
                                          v, dk, dv, cfg)
        else:
            cc = cache["content"]
            dqc = np.einsum("bxynv,bnkv->bxynk", d_sum, cc["c"], optimize=False)
            dc = np.einsum("bxynk,bxynv->bnkv", cc["qc"], d_sum, optimize=False)
            dksm = np.einsum("bnkv,bxynv->bxynk", dc, v, optimize=False)
            dv += np.einsum("bxynk,bnkv->bxynv", cc["ksm"], dc, optimize=False)
            dk += _softmax_backward(cc["ksm"], dksm, axes=(1, 2))
        if cfg.softmax_on_queries:
            qc = cache["axial_content"]["qc"] if cfg.axial_content \
                else cache["content"]["qc"]
            dq += _softmax_backward(qc, dqc, axes=(4,))
        else:
            dq += dqc

    if cfg.positional_on:
        d_pos = d_sum
        if cfg.row_on:
            rr = cache["row"]
            v_row = cache["v_row"]
            ds2 = np.einsum("bxynv,bxjnv->bxyjn", d_pos, v_row, optimize=False)
            d_vrow = np.einsum("bxyjn,bxynv->bxjnv", rr["s"], d_pos, optimize=False)
            dq += np.einsum("bxyjn,yjk->bxynk", ds2, rr["p"], optimize=False)
            dpr = np.einsum("bxynk,bxyjn->yjk", q, ds2, optimize=False)
            grads["r_row"] = _scatter_embedding_grad(dpr, cfg.w, cfg.L)
            if cfg.col_on:
                d_mid, dg, db = _bn_train_backward(_merge_heads(d_vrow),
                                                   cache["bn_mid_cache"])
                grads["bn_mid.gamma"] = dg
                grads["bn_mid.beta"] = db
                d_col_out = _split_heads(d_mid, cfg.n_heads)
            else:
                dv += d_vrow
                d_col_out = None
        else:
            d_col_out = d_pos
        if cfg.col_on:
            col = cache["col"]
            ds = np.einsum("bxynv,biynv->bxyin", d_col_out, v, optimize=False)
            dv += np.einsum("bxyin,bxynv->biynv", col["s"], d_col_out, optimize=False)
            dq += np.einsum("bxyin,xik->bxynk", ds, col["p"], optimize=False)
            dpc = np.einsum("bxynk,bxyin->xik", q, ds, optimize=False)
            grads["r_col"] = _scatter_embedding_grad(dpc, cfg.h, cfg.L)

    dx = np.zeros_like(np.asarray(x, dtype=np.float64))
    for name, w, d5 in (("k", weights.w_k, dk), ("q", weights.w_q, dq),
                        ("v", weights.w_v, dv)):
        if w is None or d5 is None:
            continue
        dz, dg, db = _bn_train_backward(_merge_heads(d5), cache[f"bn_{name}_cache"])
        grads[f"bn_{name}.gamma"] = dg
        grads[f"bn_{name}.beta"] = db
        grads[f"w_{name}"] = np.einsum("bxyd,bxye->de", x, dz, optimize=False)
        dx += np.einsum("bxye,de->bxyd", dz, w, optimize=False)
    grads["x"] = dx
    return grads


def _axial_content_backward(d_out, ccache, v, dk, dv, cfg):
    """Backward through the column-then-row content passes; returns dQc."""
    qc = ccache["qc"]
    # row pass
    dqc = np.einsum("bxynv,bxnkv->bxynk", d_out, ccache["c_row"], optimize=False)
    dc_row = np.einsum("bxynk,bxynv->bxnkv", qc, d_out, optimize=False)
    dks_row = np.einsum("bxnkv,bxynv->bxynk", dc_row, ccache["y_col"], optimize=False)
    dy_col = np.einsum("bxynk,bxnkv->bxynv", ccache["ks_row"], dc_row, optimize=False)
    dk += _softmax_backward(ccache["ks_row"], dks_row, axes=(2,))
    # column pass
    dqc += np.einsum("bxynv,bynkv->bxynk", dy_col, ccache["c_col"], optimize=False)
    dc_col = np.einsum("bxynk,bxynv->bynkv", qc, dy_col, optimize=False)
    dks_col = np.einsum("bynkv,bxynv->bxynk", dc_col, v, optimize=False)
    dv += np.einsum("bxynk,bynkv->bxynv", ccache["ks_col"], dc_col, optimize=False)
    dk += _softmax_backward(ccache["ks_col"], dks_col, axes=(1,))
    return dqc
