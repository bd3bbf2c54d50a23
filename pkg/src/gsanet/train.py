"""Desk-scale training of a small GSA classifier.

Exists to exercise the analytic gradients end to end: a pointwise embedding,
a couple of residual GSA blocks, global average pooling and a zero-initialized
linear head, trained with SGD + momentum on a seeded synthetic dataset whose
classes are noisy copies of fixed Gaussian templates (linearly separable for
small noise).

Everything is deterministic given the seeds.  The loss curve serializes as
``step,loss`` CSV.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import GsaConfig
from .model import BatchNormLayer, Conv2dLayer, DenseLayer, GsaModuleLayer


@dataclass(frozen=True)
class ToyNetSpec:
    size: int = 8
    in_channels: int = 3
    width: int = 16
    n_blocks: int = 2
    n_heads: int = 2
    num_classes: int = 4
    content_on: bool = True
    col_on: bool = True
    row_on: bool = True

    def __post_init__(self):
        if not 1 <= self.n_blocks <= 3:
            raise ValueError("toy nets support 1 to 3 GSA blocks")
        if not 2 <= self.size <= 32:
            raise ValueError("toy nets support sizes 2..32")
        if self.width % self.n_heads:
            raise ValueError("width must be divisible by n_heads")


class ToyTrainingDiverged(RuntimeError):
    def __init__(self, step: int, losses):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step
        self.losses = losses


class ToyGsaNet:
    """Embed -> [GSA + residual + ReLU] x n -> GAP -> linear head."""

    def __init__(self, spec: ToyNetSpec, seed: int = 0):
        self.spec = spec
        s, w = spec.size, spec.width
        self.embed = Conv2dLayer("embed", spec.in_channels, w, 1, 1, 0, (s, s))
        self.embed_bn = BatchNormLayer("embed_bn", w, (s, s))
        cfg = GsaConfig(d_in=w, d_k=w, d_out=w, n_heads=spec.n_heads, h=s, w=s,
                        content_on=spec.content_on, col_on=spec.col_on,
                        row_on=spec.row_on)
        self.blocks = [GsaModuleLayer(f"block{i + 1}.gsa", cfg)
                       for i in range(spec.n_blocks)]
        self.head = DenseLayer("head.fc", w, spec.num_classes, zero_init=True)

        from .model import _SeedStream

        seeds = _SeedStream(seed)
        self.embed.init_params(seeds)
        self.embed_bn.init_params(seeds)
        for blk in self.blocks:
            blk.init_params(seeds)
        self.head.init_params(seeds)
        self._cache = None

    def named_params(self):
        params = {}
        params.update(self.embed.named_params())
        params.update(self.embed_bn.named_params())
        for blk in self.blocks:
            params.update(blk.named_params())
        params.update(self.head.named_params())
        return params

    def forward(self, x, training=True, commit=True):
        cache = {"x": x}
        z = self.embed.forward(x)
        z = self.embed_bn.forward(z, training=training, commit=commit)
        a = np.maximum(z, 0.0)
        cache["embed_mask"] = z > 0
        masks = []
        for blk in self.blocks:
            g = blk.forward(a, training=training, commit=commit)
            r = a + g
            masks.append(r > 0)
            a = np.maximum(r, 0.0)
        cache["block_masks"] = masks
        cache["pre_gap"] = a
        gap = a.mean(axis=(1, 2))
        logits = self.head.forward(gap)
        self._cache = cache
        return logits

    def backward(self, dlogits):
        cache = self._cache
        grads = {}
        dgap, g = self.head.backward(dlogits)
        grads.update(g)
        b, h, w, _ = cache["pre_gap"].shape
        da = np.broadcast_to(dgap[:, None, None, :] / (h * w),
                             cache["pre_gap"].shape).copy()
        for blk, mask in zip(reversed(self.blocks),
                             reversed(cache["block_masks"])):
            da = da * mask
            dx_blk, g = blk.backward(da)
            grads.update(g)
            da = da + dx_blk
        da = da * cache["embed_mask"]
        dz, g = self.embed_bn.backward(da)
        grads.update(g)
        grads["embed.weight"] = np.einsum(
            "bxyd,bxye->de", cache["x"], dz, optimize=False
        ).reshape(self.embed.weight.shape)
        return grads


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    batch = logits.shape[0]
    picked = probs[np.arange(batch), labels]
    loss = float(-np.mean(np.log(picked)))
    dlogits = probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    return loss, dlogits / batch


def make_synthetic_dataset(num_classes=4, n_per_class=16, size=8, channels=3,
                           noise=0.25, seed=0):
    """Noisy copies of per-class Gaussian template images, shuffled."""
    rng = np.random.Generator(np.random.PCG64(seed))
    templates = rng.standard_normal((num_classes, size, size, channels))
    xs, ys = [], []
    for c in range(num_classes):
        xs.append(templates[c] + noise
                  * rng.standard_normal((n_per_class, size, size, channels)))
        ys.append(np.full(n_per_class, c, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(len(y))
    return x[order], y[order]


@dataclass
class ToyTrainResult:
    losses: list = field(default_factory=list)
    initial_loss: float = 0.0
    final_loss: float = 0.0

    def curve_csv(self) -> str:
        lines = ["step,loss"]
        lines += [f"{i},{loss:.10g}" for i, loss in enumerate(self.losses)]
        return "\n".join(lines) + "\n"


def evaluate_loss(net: ToyGsaNet, x, y) -> float:
    """Full-set train-mode loss without committing BN statistics."""
    logits = net.forward(x, training=True, commit=False)
    loss, _ = softmax_cross_entropy(logits, y)
    return loss


def train_toy(spec: ToyNetSpec, dataset=None, steps: int = 200, lr: float = 0.05,
              momentum: float = 0.9, batch_size: int = 16, seed: int = 0):
    """Plain SGD with momentum; returns the per-step loss curve.

    Raises `ToyTrainingDiverged` with the failing step index if the loss
    stops being finite.
    """
    net = ToyGsaNet(spec, seed=seed)
    if dataset is None:
        dataset = make_synthetic_dataset(spec.num_classes, 16, spec.size,
                                         spec.in_channels, seed=seed + 1)
    x_all, y_all = dataset
    rng = np.random.Generator(np.random.PCG64(seed + 2))
    params = net.named_params()
    velocity = {name: np.zeros_like(arr) for name, arr in params.items()}

    result = ToyTrainResult()
    result.initial_loss = evaluate_loss(net, x_all, y_all)
    for step in range(steps):
        idx = rng.choice(len(y_all), size=min(batch_size, len(y_all)),
                         replace=False)
        logits = net.forward(x_all[idx], training=True, commit=True)
        loss, dlogits = softmax_cross_entropy(logits, y_all[idx])
        if not np.isfinite(loss):
            raise ToyTrainingDiverged(step, result.losses)
        result.losses.append(loss)
        grads = net.backward(dlogits)
        for name, arr in params.items():
            vel = velocity[name]
            vel *= momentum
            vel += grads[name]
            arr -= lr * vel
    result.final_loss = evaluate_loss(net, x_all, y_all)
    return result, net
