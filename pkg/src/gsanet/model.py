"""Network assembly: stems, bottleneck blocks, and GSA-ResNet variants.

A model is built from a declarative `ModelSpec`.  Building without
initialization ("plan") is cheap and enough for parameter/FLOP accounting;
`init_params` materializes weights deterministically from a seed.

Costs are tracked per weighted layer as `LayerRecord`s with multiplies and
adds tallied separately (one MAC = 1 mult + 1 add).  Elementwise work
(batch norm, ReLU, softmax, pooling) is excluded from the totals and kept
in ``aux_flops``.  Embedding lookups in the positional branch are gathers
and cost no FLOPs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import attention
from .attention import GsaConfig, init_gsa_params
from .tensor import (
    BatchNormState,
    ShapeError,
    _bn_train,
    _bn_train_backward,
    avg_pool_2x2,
    batch_norm,
    pointwise_conv,
    seeded_init,
)

GROUP_BLOCKS = {38: (2, 3, 5, 2), 50: (3, 4, 6, 3), 101: (3, 4, 23, 3)}
GROUP_WIDTHS = (64, 128, 256, 512)
EXPANSION = 4
STEM_CHANNELS = 64
M_RESNET_SCALE = 1.125


@dataclass(frozen=True)
class ModelSpec:
    """Declarative network description."""

    depth: int = 50
    group_uses_gsa: tuple = (False, False, False, False)
    branch_flags: tuple = (True, True, True)  # content, column, row
    variant: str = "standard"  # standard | axial_content | m_resnet50
    input_size: tuple = (224, 224)
    num_classes: int = 1000
    n_heads: int = 8
    blocks_per_group: tuple | None = None

    def __post_init__(self):
        problems = self.validate()
        if problems:
            raise ValueError("invalid model spec: " + "; ".join(problems))
        if self.blocks_per_group is None:
            object.__setattr__(self, "blocks_per_group", GROUP_BLOCKS[self.depth])
        object.__setattr__(self, "group_uses_gsa", tuple(self.group_uses_gsa))
        object.__setattr__(self, "branch_flags", tuple(self.branch_flags))
        object.__setattr__(self, "input_size", tuple(self.input_size))
        object.__setattr__(self, "blocks_per_group", tuple(self.blocks_per_group))

    def validate(self) -> list[str]:
        problems = []
        if self.depth not in GROUP_BLOCKS:
            problems.append(f"depth must be one of {sorted(GROUP_BLOCKS)}, "
                            f"got {self.depth}")
        elif self.blocks_per_group is not None and \
                tuple(self.blocks_per_group) != GROUP_BLOCKS[self.depth]:
            problems.append(
                f"blocks_per_group {tuple(self.blocks_per_group)} does not match "
                f"depth {self.depth} ({GROUP_BLOCKS[self.depth]})")
        if len(self.group_uses_gsa) != 4:
            problems.append("group_uses_gsa needs 4 booleans")
        if len(self.branch_flags) != 3:
            problems.append("branch_flags needs (content, col, row)")
        elif not any(self.branch_flags) and any(self.group_uses_gsa):
            problems.append("at least one attention branch must be enabled")
        if self.variant not in ("standard", "axial_content", "m_resnet50"):
            problems.append(f"unknown variant {self.variant!r}")
        if self.variant == "axial_content" and (len(self.branch_flags) == 3
                                                and not self.branch_flags[0]):
            problems.append("axial_content variant requires the content branch")
        if self.variant == "m_resnet50" and self.depth != 50:
            problems.append("m_resnet50 variant is defined for depth 50")
        if len(self.input_size) != 2 or min(self.input_size) < 32:
            problems.append(f"input_size {self.input_size} too small (min 32)")
        if self.num_classes < 1:
            problems.append("num_classes must be >= 1")
        if self.n_heads < 1:
            problems.append("n_heads must be >= 1")
        return problems

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValueError("model spec JSON must be an object")
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model spec fields: {sorted(unknown)}")
        for key in ("group_uses_gsa", "branch_flags", "input_size",
                    "blocks_per_group"):
            if key in data and data[key] is not None:
                data[key] = tuple(data[key])
        return cls(**data)

    def channel_plan(self):
        """(stem_channels, per-group widths, per-group output channels)."""
        if self.variant != "m_resnet50":
            widths = GROUP_WIDTHS
            outs = tuple(w * EXPANSION for w in widths)
            return STEM_CHANNELS, widths, outs

        def round8(v):
            return max(8, int(round(v / 8)) * 8)

        # halve the block in/out channels, then scale every filter count
        stem = round8(STEM_CHANNELS * M_RESNET_SCALE)
        widths = tuple(round8(w * M_RESNET_SCALE) for w in GROUP_WIDTHS)
        outs = tuple(round8(w * EXPANSION / 2 * M_RESNET_SCALE)
                     for w in GROUP_WIDTHS)
        return stem, widths, outs


@dataclass
class LayerRecord:
    """One weighted layer (or attention op) with its static costs."""

    name: str
    kind: str
    params: int
    mults: int
    adds: int
    aux_flops: int
    in_shape: tuple
    out_shape: tuple

    def as_dict(self):
        d = asdict(self)
        d["in_shape"] = list(self.in_shape)
        d["out_shape"] = list(self.out_shape)
        return d


def _conv_out(extent, ksize, stride, pad):
    return (extent + 2 * pad - ksize) // stride + 1


def conv2d_forward(x, w, stride=1, pad=0):
    """Direct convolution as a sum of shifted pointwise products."""
    b, h, wd, _ = x.shape
    kh, kw, cin, cout = w.shape
    if x.shape[3] != cin:
        raise ShapeError(f"input channels {x.shape[3]} != weight channels {cin}")
    oh = _conv_out(h, kh, stride, pad)
    ow = _conv_out(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    out = np.zeros((b, oh, ow, cout), dtype=x.dtype)
    for di in range(kh):
        for dj in range(kw):
            view = xp[:, di:di + stride * oh:stride, dj:dj + stride * ow:stride, :]
            out += np.einsum("bxyc,co->bxyo", view, w[di, dj], optimize=False)
    return out


def max_pool2d(x, ksize=3, stride=2, pad=1):
    b, h, w, c = x.shape
    oh = _conv_out(h, ksize, stride, pad)
    ow = _conv_out(w, ksize, stride, pad)
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)),
                constant_values=-np.inf)
    out = np.full((b, oh, ow, c), -np.inf, dtype=x.dtype)
    for di in range(ksize):
        for dj in range(ksize):
            view = xp[:, di:di + stride * oh:stride, dj:dj + stride * ow:stride, :]
            np.maximum(out, view, out=out)
    return out


class _SeedStream:
    """Deterministic per-parameter seed source."""

    def __init__(self, seed: int):
        self._rng = np.random.Generator(np.random.PCG64(seed))

    def next(self) -> int:
        return int(self._rng.integers(2**63))


class Conv2dLayer:
    kind = "conv"

    def __init__(self, name, in_ch, out_ch, ksize, stride, pad, in_hw):
        self.name = name
        self.in_ch, self.out_ch = in_ch, out_ch
        self.ksize, self.stride, self.pad = ksize, stride, pad
        self.in_hw = in_hw
        self.out_hw = (_conv_out(in_hw[0], ksize, stride, pad),
                       _conv_out(in_hw[1], ksize, stride, pad))
        self.weight = None

    def init_params(self, seeds: _SeedStream):
        self.weight = seeded_init(
            (self.ksize, self.ksize, self.in_ch, self.out_ch),
            "fan_in_normal", seeds.next())

    def forward(self, x, training=False):
        if self.ksize == 1 and self.stride == 1:
            return pointwise_conv(x, self.weight[0, 0])
        return conv2d_forward(x, self.weight, self.stride, self.pad)

    def named_params(self):
        return {f"{self.name}.weight": self.weight}

    def load_params(self, bundle, prefix=""):
        self.weight = bundle[f"{prefix}{self.name}.weight"]

    def records(self):
        macs = (self.out_hw[0] * self.out_hw[1] * self.out_ch
                * self.ksize * self.ksize * self.in_ch)
        return [LayerRecord(
            self.name, self.kind,
            params=self.ksize * self.ksize * self.in_ch * self.out_ch,
            mults=macs, adds=macs, aux_flops=0,
            in_shape=(*self.in_hw, self.in_ch),
            out_shape=(*self.out_hw, self.out_ch))]


class BatchNormLayer:
    kind = "bn"

    def __init__(self, name, channels, hw):
        self.name = name
        self.channels = channels
        self.hw = hw
        self.state = None
        self._cache = None

    def init_params(self, seeds: _SeedStream):
        self.state = BatchNormState.initial(self.channels)

    def forward(self, x, training=False, commit=True):
        if training:
            out, cache = _bn_train(x, self.state.gamma, self.state.beta,
                                   self.state.epsilon)
            self._cache = cache
            if commit:
                m = self.state.momentum
                self.state = replace(
                    self.state,
                    running_mean=m * self.state.running_mean
                    + (1 - m) * cache.mean,
                    running_var=m * self.state.running_var + (1 - m) * cache.var)
            return out
        out, _ = batch_norm(x, self.state, training=False)
        return out

    def backward(self, dy):
        dx, dgamma, dbeta = _bn_train_backward(dy, self._cache)
        return dx, {f"{self.name}.gamma": dgamma, f"{self.name}.beta": dbeta}

    def named_params(self):
        return {f"{self.name}.gamma": self.state.gamma,
                f"{self.name}.beta": self.state.beta}

    def named_state(self):
        return {**self.named_params(),
                f"{self.name}.running_mean": self.state.running_mean,
                f"{self.name}.running_var": self.state.running_var}

    def load_params(self, bundle, prefix=""):
        self.state = replace(
            self.state,
            gamma=bundle[f"{prefix}{self.name}.gamma"],
            beta=bundle[f"{prefix}{self.name}.beta"],
            running_mean=bundle.get(f"{prefix}{self.name}.running_mean",
                                    self.state.running_mean),
            running_var=bundle.get(f"{prefix}{self.name}.running_var",
                                   self.state.running_var))

    def records(self):
        volume = self.hw[0] * self.hw[1] * self.channels
        return [LayerRecord(self.name, self.kind, params=2 * self.channels,
                            mults=0, adds=0, aux_flops=2 * volume,
                            in_shape=(*self.hw, self.channels),
                            out_shape=(*self.hw, self.channels))]


class DenseLayer:
    kind = "fc"

    def __init__(self, name, in_features, out_features, zero_init=False):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features
        self.zero_init = zero_init
        self.weight = None
        self.bias = None
        self._cache = None

    def init_params(self, seeds: _SeedStream):
        scheme = "zeros" if self.zero_init else "fan_in_normal"
        self.weight = seeded_init((self.in_features, self.out_features),
                                  scheme, seeds.next())
        self.bias = np.zeros(self.out_features)

    def forward(self, x, training=False):
        self._cache = x
        return np.einsum("bi,io->bo", x, self.weight, optimize=False) + self.bias

    def backward(self, dy):
        dw = np.einsum("bi,bo->io", self._cache, dy, optimize=False)
        db = dy.sum(axis=0)
        dx = np.einsum("bo,io->bi", dy, self.weight, optimize=False)
        return dx, {f"{self.name}.weight": dw, f"{self.name}.bias": db}

    def named_params(self):
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def load_params(self, bundle, prefix=""):
        self.weight = bundle[f"{prefix}{self.name}.weight"]
        self.bias = bundle[f"{prefix}{self.name}.bias"]

    def records(self):
        macs = self.in_features * self.out_features
        return [LayerRecord(
            self.name, self.kind,
            params=macs + self.out_features,
            mults=macs, adds=macs, aux_flops=self.out_features,
            in_shape=(self.in_features,), out_shape=(self.out_features,))]


def _window_pairs(extent: int, window: int) -> int:
    """Number of in-window (pixel, neighbor) pairs along one axis."""
    return sum(min(extent - 1, x + window) - max(0, x - window) + 1
               for x in range(extent))


class GsaModuleLayer:
    kind = "gsa"

    def __init__(self, name, cfg: GsaConfig):
        self.name = name
        self.cfg = cfg
        self.weights = None
        self.emb = None
        self._last_x = None

    def init_params(self, seeds: _SeedStream):
        self.weights, self.emb = init_gsa_params(self.cfg, seeds.next())

    def forward(self, x, training=False, commit=True):
        out, _, new_states = attention._forward_full(
            x, self.weights, self.emb, self.cfg, training=training)
        if training and commit:
            for bn_name, state in new_states.items():
                setattr(self.weights, bn_name, state)
        self._last_x = x
        return out

    def backward(self, dy):
        grads = attention.gsa_backward(self._last_x, self.weights, self.emb,
                                       self.cfg, dy)
        dx = grads.pop("x")
        return dx, {f"{self.name}.{k}": v for k, v in grads.items()}

    def named_params(self):
        return {f"{self.name}.{k}": v for k, v in
                attention.gsa_parameters(self.weights, self.emb).items()}

    def named_state(self):
        state = dict(self.named_params())
        for bn_name in ("bn_k", "bn_q", "bn_v", "bn_mid", "bn_out"):
            st = getattr(self.weights, bn_name)
            if st is not None:
                state[f"{self.name}.{bn_name}.running_mean"] = st.running_mean
                state[f"{self.name}.{bn_name}.running_var"] = st.running_var
        return state

    def load_params(self, bundle, prefix=""):
        base = f"{prefix}{self.name}."
        for wname in ("w_k", "w_q", "w_v"):
            if getattr(self.weights, wname) is not None:
                setattr(self.weights, wname, bundle[base + wname])
        for ename in ("r_col", "r_row"):
            if getattr(self.emb, ename) is not None:
                setattr(self.emb, ename, bundle[base + ename])
        for bn_name in ("bn_k", "bn_q", "bn_v", "bn_mid", "bn_out"):
            st = getattr(self.weights, bn_name)
            if st is None:
                continue
            setattr(self.weights, bn_name, replace(
                st,
                gamma=bundle[base + bn_name + ".gamma"],
                beta=bundle[base + bn_name + ".beta"],
                running_mean=bundle.get(base + bn_name + ".running_mean",
                                        st.running_mean),
                running_var=bundle.get(base + bn_name + ".running_var",
                                       st.running_var)))

    def records(self):
        cfg = self.cfg
        n_pix = cfg.h * cfg.w
        params = cfg.d_in * cfg.d_k + cfg.d_in * cfg.d_out  # w_q + w_v
        macs = n_pix * cfg.d_in * (cfg.d_k + cfg.d_out)
        aux = 4 * n_pix * (cfg.d_k + 2 * cfg.d_out)  # projection + output BN
        if cfg.content_on:
            params += cfg.d_in * cfg.d_k + 2 * cfg.d_k  # w_k and its BN
            macs += n_pix * cfg.d_in * cfg.d_k
            per_pass = 2 * n_pix * cfg.d_k * cfg.d_out // cfg.n_heads
            macs += per_pass * (2 if cfg.axial_content else 1)
            aux += 2 * n_pix * cfg.d_k + 3 * n_pix * cfg.d_k  # BN + softmax
        if cfg.col_on:
            params += (2 * cfg.h - 1) * cfg.head_dk
            pairs = _window_pairs(cfg.h, cfg.L)
            macs += cfg.w * pairs * (cfg.d_k + cfg.d_out)
        if cfg.row_on:
            params += (2 * cfg.w - 1) * cfg.head_dk
            pairs = _window_pairs(cfg.w, cfg.L)
            macs += cfg.h * pairs * (cfg.d_k + cfg.d_out)
        params += 2 * cfg.d_k + 2 * cfg.d_out  # bn_q, bn_v
        params += 2 * cfg.d_out  # bn_out
        if cfg.col_on and cfg.row_on:
            params += 2 * cfg.d_out  # bn_mid
            aux += 2 * n_pix * cfg.d_out
        return [LayerRecord(
            self.name, self.kind, params=params, mults=macs, adds=macs,
            aux_flops=aux,
            in_shape=(cfg.h, cfg.w, cfg.d_in),
            out_shape=(cfg.h, cfg.w, cfg.d_out))]


class PoolLayer:
    """Parameter-free pooling (kind: maxpool | avgpool | gap)."""

    def __init__(self, name, kind, in_shape, out_shape, aux):
        self.name = name
        self.kind = kind
        self.in_shape = in_shape
        self.out_shape = out_shape
        self.aux = aux

    def init_params(self, seeds):
        pass

    def forward(self, x, training=False):
        if self.kind == "maxpool":
            return max_pool2d(x)
        if self.kind == "avgpool":
            return avg_pool_2x2(x)
        return x.mean(axis=(1, 2))  # gap

    def named_params(self):
        return {}

    def load_params(self, bundle, prefix=""):
        pass

    def records(self):
        return [LayerRecord(self.name, self.kind, 0, 0, 0, self.aux,
                            self.in_shape, self.out_shape)]


class BottleneckBlock:
    """1x1 reduce -> (3x3 conv | GSA) -> 1x1 expand, with shortcut.

    Convolutional blocks downsample with stride 2 in the 3x3; GSA blocks run
    attention at the incoming resolution and average-pool right after the
    module, mirroring the pooled projection shortcut.
    """

    def __init__(self, name, use_gsa, in_ch, width, out_ch, downsample,
                 in_hw, spec: ModelSpec):
        self.name = name
        self.use_gsa = use_gsa
        self.downsample = downsample
        self.in_hw = in_hw
        self.out_hw = ((in_hw[0] // 2, in_hw[1] // 2) if downsample else in_hw)
        self.in_ch, self.width, self.out_ch = in_ch, width, out_ch

        self.reduce = Conv2dLayer(f"{name}.reduce", in_ch, width, 1, 1, 0, in_hw)
        self.reduce_bn = BatchNormLayer(f"{name}.reduce_bn", width, in_hw)
        if use_gsa:
            content, col, row = spec.branch_flags
            if downsample and (in_hw[0] % 2 or in_hw[1] % 2):
                raise ValueError(
                    f"{name}: odd extents {in_hw} cannot be average-pooled")
            cfg = GsaConfig(
                d_in=width, d_k=width, d_out=width, n_heads=spec.n_heads,
                h=in_hw[0], w=in_hw[1], L=max(in_hw),
                content_on=content, col_on=col, row_on=row,
                axial_content=(spec.variant == "axial_content"))
            self.spatial = GsaModuleLayer(f"{name}.gsa", cfg)
        else:
            stride = 2 if downsample else 1
            self.spatial = Conv2dLayer(f"{name}.conv3", width, width, 3,
                                       stride, 1, in_hw)
            self.spatial_bn = BatchNormLayer(f"{name}.conv3_bn", width,
                                             self.out_hw)
        self.expand = Conv2dLayer(f"{name}.expand", width, out_ch, 1, 1, 0,
                                  self.out_hw)
        self.expand_bn = BatchNormLayer(f"{name}.expand_bn", out_ch, self.out_hw)

        self.project = in_ch != out_ch or downsample
        if self.project:
            # GSA downsampling pools before the 1x1; conv uses stride 2
            stride = 1 if use_gsa else (2 if downsample else 1)
            hw = self.out_hw if use_gsa else in_hw
            self.shortcut = Conv2dLayer(f"{name}.shortcut", in_ch, out_ch, 1,
                                        stride, 0, hw)
            self.shortcut_bn = BatchNormLayer(f"{name}.shortcut_bn", out_ch,
                                              self.out_hw)

    def sublayers(self):
        out = [self.reduce, self.reduce_bn, self.spatial]
        if not self.use_gsa:
            out.append(self.spatial_bn)
        out.extend([self.expand, self.expand_bn])
        if self.project:
            out.extend([self.shortcut, self.shortcut_bn])
        return out

    def init_params(self, seeds):
        for layer in self.sublayers():
            layer.init_params(seeds)

    def forward(self, x, training=False):
        h = np.maximum(self.reduce_bn.forward(self.reduce.forward(x), training),
                       0.0)
        h = self.spatial.forward(h, training)
        if self.use_gsa:
            if self.downsample:
                h = avg_pool_2x2(h)
        else:
            h = self.spatial_bn.forward(h, training)
        h = np.maximum(h, 0.0)
        h = self.expand_bn.forward(self.expand.forward(h), training)
        if self.project:
            s = x
            if self.use_gsa and self.downsample:
                s = avg_pool_2x2(s)
            s = self.shortcut_bn.forward(self.shortcut.forward(s), training)
        else:
            s = x
        return np.maximum(h + s, 0.0)

    def named_params(self):
        out = {}
        for layer in self.sublayers():
            out.update(layer.named_params())
        return out

    def named_state(self):
        out = {}
        for layer in self.sublayers():
            getter = getattr(layer, "named_state", layer.named_params)
            out.update(getter())
        return out

    def load_params(self, bundle, prefix=""):
        for layer in self.sublayers():
            layer.load_params(bundle, prefix)

    def records(self):
        recs = []
        for layer in self.sublayers():
            recs.extend(layer.records())
        return recs


class Model:
    """A built (or planned) network: stem, residual groups, classifier."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        h, w = spec.input_size
        stem_ch, widths, outs = spec.channel_plan()

        self.stem_conv = Conv2dLayer("stem.conv", 3, stem_ch, 7, 2, 3, (h, w))
        hw = self.stem_conv.out_hw
        self.stem_bn = BatchNormLayer("stem.bn", stem_ch, hw)
        pooled = (_conv_out(hw[0], 3, 2, 1), _conv_out(hw[1], 3, 2, 1))
        self.stem_pool = PoolLayer("stem.maxpool", "maxpool",
                                   (*hw, stem_ch), (*pooled, stem_ch),
                                   aux=9 * pooled[0] * pooled[1] * stem_ch)
        hw = pooled

        self.groups: list[list[BottleneckBlock]] = []
        in_ch = stem_ch
        for gi in range(4):
            blocks = []
            for bi in range(spec.blocks_per_group[gi]):
                downsample = gi > 0 and bi == 0
                block = BottleneckBlock(
                    f"group{gi + 1}.block{bi + 1}", spec.group_uses_gsa[gi],
                    in_ch, widths[gi], outs[gi], downsample, hw, spec)
                hw = block.out_hw
                in_ch = outs[gi]
                blocks.append(block)
            self.groups.append(blocks)

        self.final_hw = hw
        self.gap = PoolLayer("head.gap", "gap", (*hw, in_ch), (in_ch,),
                             aux=hw[0] * hw[1] * in_ch)
        self.fc = DenseLayer("head.fc", in_ch, spec.num_classes)
        self.initialized = False

    def init_params(self, seed: int):
        seeds = _SeedStream(seed)
        for layer in self._all_layers():
            layer.init_params(seeds)
        self.initialized = True
        return self

    def _all_layers(self):
        yield self.stem_conv
        yield self.stem_bn
        yield self.stem_pool
        for blocks in self.groups:
            yield from blocks
        yield self.gap
        yield self.fc

    def forward(self, x, training=False):
        x = np.asarray(x)
        if x.ndim != 4 or x.shape[1:3] != self.spec.input_size or x.shape[3] != 3:
            raise ShapeError(
                f"expected (batch, {self.spec.input_size[0]}, "
                f"{self.spec.input_size[1]}, 3), got {x.shape}")
        if not self.initialized:
            raise RuntimeError("model parameters are not initialized")
        h = np.maximum(self.stem_bn.forward(self.stem_conv.forward(x), training),
                       0.0)
        h = self.stem_pool.forward(h)
        for blocks in self.groups:
            for block in blocks:
                h = block.forward(h, training)
        return self.fc.forward(self.gap.forward(h), training)

    def named_params(self):
        out = {}
        for layer in self._all_layers():
            out.update(layer.named_params())
        return out

    def named_state(self):
        out = {}
        for layer in self._all_layers():
            getter = getattr(layer, "named_state", layer.named_params)
            out.update(getter())
        return out

    def load_state(self, bundle: dict):
        for layer in self._all_layers():
            layer.load_params(bundle)
        self.initialized = True

    def records(self) -> list[LayerRecord]:
        recs = []
        for layer in self._all_layers():
            recs.extend(layer.records())
        return recs

    def resolution_schedule(self):
        return [blocks[-1].out_hw[0] for blocks in self.groups]


def plan_model(spec: ModelSpec) -> Model:
    """Structure-only model: records and shapes without parameter arrays."""
    return Model(spec)


def build_model(spec: ModelSpec, seed: int = 0) -> Model:
    """Deterministically built and initialized model."""
    return Model(spec).init_params(seed)


def model_forward(model: Model, x, mode: str = "infer"):
    """Run the classifier; mode is 'infer' (running BN stats) or 'train'."""
    if mode not in ("infer", "train"):
        raise ValueError(f"mode must be 'infer' or 'train', got {mode!r}")
    return model.forward(x, training=(mode == "train"))


def describe_model(model: Model | ModelSpec) -> dict:
    """Stable JSON-ready structure summary with per-layer costs."""
    if isinstance(model, ModelSpec):
        model = plan_model(model)
    layers = [rec.as_dict() for rec in model.records()]
    totals = {
        "params": sum(r["params"] for r in layers),
        "mults": sum(r["mults"] for r in layers),
        "adds": sum(r["adds"] for r in layers),
        "aux_flops": sum(r["aux_flops"] for r in layers),
    }
    return {
        "spec": json.loads(model.spec.to_json()),
        "layers": layers,
        "totals": totals,
        "resolution_schedule": model.resolution_schedule(),
    }
