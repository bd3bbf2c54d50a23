"""Minimal dense-tensor primitives.

Everything downstream (attention modules, network builders, verification)
reduces to the handful of operations here: generalized contraction with
Einstein-notation specs, axis-wise softmax, batch normalization, 2x2 average
pooling, pointwise (1x1) convolution and seeded initialization.

Tensors are plain numpy arrays, row-major, float64 by default (float32 is
reserved for benchmarking).  The spatial layout is batch x H x W x C
throughout.  All operations are pure: batch_norm returns an updated state
instead of mutating, and contractions run single-threaded in a fixed
summation order so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

DEFAULT_DTYPE = np.float64

MAX_CONTRACTION_INDICES = 6


class ShapeError(ValueError):
    """Operand shapes are inconsistent with the requested operation."""


class ContractionError(ValueError):
    """A contraction spec is malformed or unsupported."""


def _parse_contraction_spec(spec: str, n_operands: int):
    if "->" not in spec:
        raise ContractionError(f"contraction spec {spec!r} must contain '->'")
    lhs, out = spec.replace(" ", "").split("->", 1)
    terms = lhs.split(",")
    if len(terms) != n_operands:
        raise ContractionError(
            f"spec {spec!r} names {len(terms)} operands, got {n_operands}"
        )
    labels = set("".join(terms))
    if not all(c.isalpha() for c in labels | set(out)):
        raise ContractionError(f"spec {spec!r} may only use letter indices")
    if len(labels) > MAX_CONTRACTION_INDICES:
        raise ContractionError(
            f"spec {spec!r} uses {len(labels)} distinct indices; "
            f"at most {MAX_CONTRACTION_INDICES} are supported"
        )
    missing = set(out) - labels
    if missing:
        raise ContractionError(
            f"output indices {sorted(missing)} of {spec!r} appear in no input"
        )
    return terms, out


def contract(spec: str, *operands: np.ndarray) -> np.ndarray:
    """Einstein-notation contraction, e.g. ``contract('ij,jk->ik', a, b)``.

    Repeated input indices absent from the output are summed.  Summation is
    performed in a fixed order (np.einsum without optimization, which never
    re-brackets or threads), so results are reproducible bit for bit.
    """
    terms, _ = _parse_contraction_spec(spec, len(operands))
    extents: dict[str, int] = {}
    for term, op in zip(terms, operands):
        arr = np.asarray(op)
        if arr.ndim != len(term):
            raise ShapeError(
                f"operand with shape {arr.shape} does not match indices {term!r}"
            )
        for label, extent in zip(term, arr.shape):
            if extents.setdefault(label, extent) != extent:
                raise ShapeError(
                    f"index {label!r} has conflicting extents "
                    f"{extents[label]} and {extent} in spec {spec!r}"
                )
    return np.einsum(spec, *operands, optimize=False)


def softmax(t: np.ndarray, axes) -> np.ndarray:
    """Softmax over the given axes, max-subtracted for stability.

    Each slice obtained by fixing the remaining axes sums to one.
    """
    axes = (axes,) if np.isscalar(axes) else tuple(axes)
    if len(axes) == 0:
        raise ValueError("softmax needs at least one axis")
    t = np.asarray(t)
    for ax in axes:
        if not -t.ndim <= ax < t.ndim:
            raise ValueError(f"axis {ax} out of range for rank-{t.ndim} tensor")
    if not np.all(np.isfinite(t)):
        raise ValueError("softmax input must be finite")
    shifted = t - t.max(axis=axes, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axes, keepdims=True)


@dataclass(frozen=True)
class BatchNormState:
    """Per-channel batch-norm parameters and running statistics."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.9

    @classmethod
    def initial(cls, channels: int, dtype=DEFAULT_DTYPE, epsilon: float = 1e-5,
                momentum: float = 0.9) -> "BatchNormState":
        return cls(
            gamma=np.ones(channels, dtype=dtype),
            beta=np.zeros(channels, dtype=dtype),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            epsilon=epsilon,
            momentum=momentum,
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def batch_norm(t: np.ndarray, state: BatchNormState, training: bool = False):
    """Normalize over all non-channel axes; the channel axis is the last one.

    Returns ``(out, new_state)``.  In inference mode the running statistics
    are applied and the state is returned unchanged; in training mode batch
    statistics (biased variance) are used and the running statistics are
    folded in with ``new = momentum * old + (1 - momentum) * batch``.
    """
    t = np.asarray(t)
    if t.shape[-1] != state.channels:
        raise ShapeError(
            f"channel extent {t.shape[-1]} does not match state ({state.channels})"
        )
    if training:
        out, cache = _bn_train(t, state.gamma, state.beta, state.epsilon)
        _, _, mean, var = cache.mean_var()
        m = state.momentum
        new_state = replace(
            state,
            running_mean=m * state.running_mean + (1.0 - m) * mean,
            running_var=m * state.running_var + (1.0 - m) * var,
        )
        return out, new_state
    inv = 1.0 / np.sqrt(state.running_var + state.epsilon)
    out = (t - state.running_mean) * inv * state.gamma + state.beta
    return out, state


@dataclass
class BnTrainCache:
    """Intermediates needed to backpropagate through train-mode batch norm."""

    xhat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    n: int

    def mean_var(self):
        return self.xhat, self.inv_std, self.mean, self.var


def _bn_train(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float):
    """Train-mode batch norm without the running-stat bookkeeping."""
    axes = tuple(range(x.ndim - 1))
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)  # biased, matches the backward formula below
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    out = xhat * gamma + beta
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return out, BnTrainCache(xhat, inv_std, gamma, mean, var, n)


def _bn_train_backward(dy: np.ndarray, cache: BnTrainCache):
    """Gradients of train-mode batch norm: returns (dx, dgamma, dbeta)."""
    axes = tuple(range(dy.ndim - 1))
    dbeta = dy.sum(axis=axes)
    dgamma = (dy * cache.xhat).sum(axis=axes)
    dxhat = dy * cache.gamma
    n = cache.n
    dx = (cache.inv_std / n) * (
        n * dxhat
        - dxhat.sum(axis=axes)
        - cache.xhat * (dxhat * cache.xhat).sum(axis=axes)
    )
    return dx, dgamma, dbeta


def avg_pool_2x2(t: np.ndarray) -> np.ndarray:
    """2x2 average pooling with stride 2 on a batch x H x W x C tensor."""
    t = np.asarray(t)
    if t.ndim != 4:
        raise ShapeError(f"expected rank-4 input, got shape {t.shape}")
    b, h, w, c = t.shape
    if h % 2 or w % 2:
        raise ShapeError(f"spatial extents must be even, got {h}x{w}")
    return t.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))


def pointwise_conv(t: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """1x1 convolution: per-pixel channel mixing with a (C_in, C_out) matrix.

    No bias; every use site is followed by batch normalization.
    """
    t = np.asarray(t)
    weights = np.asarray(weights)
    if weights.ndim != 2 or t.shape[-1] != weights.shape[0]:
        raise ShapeError(
            f"weights {weights.shape} incompatible with input channels {t.shape[-1]}"
        )
    if t.ndim == 3:
        return contract("xyd,de->xye", t, weights)
    if t.ndim == 4:
        return contract("bxyd,de->bxye", t, weights)
    raise ShapeError(f"expected rank-3 or rank-4 input, got shape {t.shape}")


INIT_SCHEMES = ("fan_in_normal", "zeros", "ones")


def seeded_init(shape, scheme: str, seed: int, fan_in: int | None = None,
                dtype=DEFAULT_DTYPE) -> np.ndarray:
    """Deterministic initialization.

    ``fan_in_normal`` draws N(0, fan_in**-1); by default ``fan_in`` is the
    product of all axes but the last (the usual convention for dense and
    convolution weights) and can be overridden where the reduction axis is
    not the leading one, e.g. relative-position embeddings.
    """
    shape = tuple(int(s) for s in (shape if np.iterable(shape) else (shape,)))
    if scheme == "zeros":
        return np.zeros(shape, dtype=dtype)
    if scheme == "ones":
        return np.ones(shape, dtype=dtype)
    if scheme != "fan_in_normal":
        raise ValueError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
    if fan_in is None:
        fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    rng = np.random.Generator(np.random.PCG64(seed))
    return (rng.standard_normal(shape) * fan_in ** -0.5).astype(dtype, copy=False)
