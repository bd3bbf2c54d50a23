"""Brute-force oracles and property harnesses.

Everything here is written with explicit Python loops over scalars - no
einsum, no contraction engine, no vectorized shortcuts - so agreement with
the fast paths is evidence, not tautology.  Oracles are O(N^2) or worse by
construction and meant for small instances only.

`OracleReport` is the uniform result record; suites emit them as JSON lines
with no environment-dependent fields, so a verify run is byte-reproducible
given its seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .attention import (
    GsaConfig,
    GsaWeights,
    RelPosEmbedding,
    gsa_backward,
    gsa_forward,
    gsa_parameters,
    init_gsa_params,
    positional_attention,
)
from .tensor import BatchNormState

TINY = 1e-300


def rel_err(actual: np.ndarray, reference: np.ndarray) -> tuple[float, float]:
    """(max absolute, scale-relative) error; relative = max|a-b| / max|b|."""
    actual = np.asarray(actual, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    abs_err = float(np.max(np.abs(actual - reference))) if actual.size else 0.0
    scale = float(np.max(np.abs(reference))) if reference.size else 0.0
    return abs_err, abs_err / max(scale, TINY)


@dataclass
class OracleReport:
    suite: str
    case: str
    seed: int
    detail: str
    max_abs_err: float
    max_rel_err: float
    tolerance: float
    passed: bool

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def make_report(suite, case, seed, detail, abs_err, relative, tol) -> OracleReport:
    return OracleReport(
        suite=suite,
        case=case,
        seed=int(seed),
        detail=detail,
        max_abs_err=float(abs_err),
        max_rel_err=float(relative),
        tolerance=float(tol),
        passed=bool(relative <= tol),
    )


# ---------------------------------------------------------------------------
# loop oracles
# ---------------------------------------------------------------------------

def oracle_content_attention(k, q, v, softmax_queries=False):
    """Expanded per-pixel content attention, explicit loops only."""
    h, w, n, kh = k.shape
    vh = v.shape[3]
    out = np.zeros((h, w, n, vh))
    for ni in range(n):
        ksm = np.zeros((h, w, kh))
        for kc in range(kh):
            m = -math.inf
            for x in range(h):
                for y in range(w):
                    m = max(m, float(k[x, y, ni, kc]))
            total = 0.0
            for x in range(h):
                for y in range(w):
                    e = math.exp(float(k[x, y, ni, kc]) - m)
                    ksm[x, y, kc] = e
                    total += e
            for x in range(h):
                for y in range(w):
                    ksm[x, y, kc] /= total
        ctx = np.zeros((kh, vh))
        for x in range(h):
            for y in range(w):
                for kc in range(kh):
                    for vc in range(vh):
                        ctx[kc, vc] += ksm[x, y, kc] * float(v[x, y, ni, vc])
        for x in range(h):
            for y in range(w):
                qrow = [float(q[x, y, ni, kc]) for kc in range(kh)]
                if softmax_queries:
                    m = max(qrow)
                    exps = [math.exp(a - m) for a in qrow]
                    s = sum(exps)
                    qrow = [e / s for e in exps]
                for vc in range(vh):
                    acc = 0.0
                    for kc in range(kh):
                        acc += qrow[kc] * ctx[kc, vc]
                    out[x, y, ni, vc] = acc
    return out


def oracle_axial_content_attention(k, q, v, softmax_queries=False):
    """Column-only then row-only content attention, loops only."""

    def axis_pass(keys, queries, values, axis):
        h, w, n, kh = keys.shape
        vh = values.shape[3]
        res = np.zeros((h, w, n, vh))
        for ni in range(n):
            for fixed in range(w if axis == "col" else h):
                length = h if axis == "col" else w

                def at(arr, pos, c):
                    return (float(arr[pos, fixed, ni, c]) if axis == "col"
                            else float(arr[fixed, pos, ni, c]))

                ksm = np.zeros((length, kh))
                for kc in range(kh):
                    m = max(at(keys, p, kc) for p in range(length))
                    total = 0.0
                    for p in range(length):
                        e = math.exp(at(keys, p, kc) - m)
                        ksm[p, kc] = e
                        total += e
                    for p in range(length):
                        ksm[p, kc] /= total
                ctx = np.zeros((kh, vh))
                for p in range(length):
                    for kc in range(kh):
                        for vc in range(vh):
                            ctx[kc, vc] += ksm[p, kc] * at(values, p, vc)
                for p in range(length):
                    qrow = [at(queries, p, kc) for kc in range(kh)]
                    if softmax_queries:
                        m = max(qrow)
                        exps = [math.exp(a - m) for a in qrow]
                        s = sum(exps)
                        qrow = [e / s for e in exps]
                    for vc in range(vh):
                        acc = 0.0
                        for kc in range(kh):
                            acc += qrow[kc] * ctx[kc, vc]
                        if axis == "col":
                            res[p, fixed, ni, vc] = acc
                        else:
                            res[fixed, p, ni, vc] = acc
        return res

    y_col = axis_pass(k, q, v, "col")
    return axis_pass(k, q, y_col, "row")


def oracle_positional_axis(q, values, r, axis, window):
    """Neighbor-enumeration positional pass: weight = q . r_offset, no softmax."""
    h, w, n, kh = q.shape
    vh = values.shape[3]
    out = np.zeros((h, w, n, vh))
    extent = h if axis == "col" else w
    for x in range(h):
        for y in range(w):
            pos = x if axis == "col" else y
            for ni in range(n):
                for other in range(extent):
                    if abs(other - pos) > window:
                        continue
                    ridx = other - pos + extent - 1
                    wgt = 0.0
                    for kc in range(kh):
                        wgt += float(q[x, y, ni, kc]) * float(r[ridx, kc])
                    for vc in range(vh):
                        if axis == "col":
                            out[x, y, ni, vc] += wgt * float(values[other, y, ni, vc])
                        else:
                            out[x, y, ni, vc] += wgt * float(values[x, other, ni, vc])
    return out


def oracle_bn_infer(t, state: BatchNormState):
    """Pointwise inference batch norm over the trailing channel axis."""
    out = np.zeros_like(t, dtype=np.float64)
    flat = t.reshape(-1, t.shape[-1])
    res = out.reshape(-1, t.shape[-1])
    for idx in range(flat.shape[0]):
        for c in range(flat.shape[1]):
            inv = 1.0 / math.sqrt(float(state.running_var[c]) + state.epsilon)
            res[idx, c] = (float(flat[idx, c]) - float(state.running_mean[c])) \
                * inv * float(state.gamma[c]) + float(state.beta[c])
    return out


def oracle_positional_attention(q, values, emb: RelPosEmbedding, bn_mid,
                                cfg: GsaConfig):
    """Column pass, pointwise batch norm, row pass - all explicit loops."""
    cur = values
    if cfg.col_on:
        cur = oracle_positional_axis(q, cur, emb.r_col, "col", cfg.L)
        if cfg.row_on:
            h, w, n, vh = cur.shape
            merged = cur.reshape(h, w, n * vh)
            cur = oracle_bn_infer(merged, bn_mid).reshape(h, w, n, vh)
    if cfg.row_on:
        cur = oracle_positional_axis(q, cur, emb.r_row, "row", cfg.L)
    return cur


def oracle_gsa_forward(x, weights: GsaWeights, emb: RelPosEmbedding,
                       cfg: GsaConfig):
    """Composed module oracle (inference mode), unbatched (h, w, d_in) input."""
    h, w, _ = x.shape

    def project(wmat, bn, channels):
        z = np.zeros((h, w, wmat.shape[1]))
        for xx in range(h):
            for yy in range(w):
                for e in range(wmat.shape[1]):
                    acc = 0.0
                    for d in range(wmat.shape[0]):
                        acc += float(x[xx, yy, d]) * float(wmat[d, e])
                    z[xx, yy, e] = acc
        z = oracle_bn_infer(z, bn)
        return z.reshape(h, w, cfg.n_heads, channels // cfg.n_heads)

    q = project(weights.w_q, weights.bn_q, cfg.d_k)
    v = project(weights.w_v, weights.bn_v, cfg.d_out)
    total = np.zeros((h, w, cfg.n_heads, cfg.head_dv))
    if cfg.content_on:
        k = project(weights.w_k, weights.bn_k, cfg.d_k)
        if cfg.axial_content:
            total += oracle_axial_content_attention(k, q, v, cfg.softmax_on_queries)
        else:
            total += oracle_content_attention(k, q, v, cfg.softmax_on_queries)
    if cfg.positional_on:
        total += oracle_positional_attention(q, v, emb, weights.bn_mid, cfg)
    merged = total.reshape(h, w, cfg.d_out)
    return oracle_bn_infer(merged, weights.bn_out)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_difference_grads(loss_fn, params: dict[str, np.ndarray],
                            step: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences of ``loss_fn(params)`` per scalar parameter."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss_fn(params)
            flat[i] = keep - step
            down = loss_fn(params)
            flat[i] = keep
            if not (math.isfinite(up) and math.isfinite(down)):
                raise FloatingPointError(
                    f"non-finite loss while perturbing {name}[{i}]"
                )
            gflat[i] = (up - down) / (2.0 * step)
        grads[name] = g
    return grads


def grad_check(loss_fn, params, analytic, step=1e-5, tolerance=1e-5,
               suite="gradients", case="grad_check", seed=0) -> OracleReport:
    """Compare analytic gradients against central differences.

    Per parameter class the error is max|analytic - numeric| divided by
    max(gradient scale, 1): relative for O(1)-or-larger gradients, absolute
    for classes whose true gradient vanishes (where central differences
    return pure rounding noise).
    """
    numeric = finite_difference_grads(loss_fn, params, step=step)
    worst_abs = 0.0
    worst_rel = 0.0
    worst_name = ""
    for name, fd in numeric.items():
        ana = analytic[name]
        abs_err = float(np.max(np.abs(ana - fd))) if fd.size else 0.0
        scale = max(float(np.max(np.abs(fd))), float(np.max(np.abs(ana))), 1.0)
        relative = abs_err / scale
        if relative > worst_rel:
            worst_rel, worst_abs, worst_name = relative, abs_err, name
    return make_report(suite, case, seed, f"worst parameter: {worst_name}",
                       worst_abs, worst_rel, tolerance)


def _randomized_module(cfg: GsaConfig, rng: np.random.Generator):
    """Module params with randomized BN affine/running stats (generic case)."""
    weights, emb = init_gsa_params(cfg, int(rng.integers(2**63)))
    for name in ("bn_k", "bn_q", "bn_v", "bn_mid", "bn_out"):
        st = getattr(weights, name)
        if st is None:
            continue
        c = st.channels
        setattr(weights, name, BatchNormState(
            gamma=1.0 + 0.2 * rng.standard_normal(c),
            beta=0.2 * rng.standard_normal(c),
            running_mean=0.2 * rng.standard_normal(c),
            running_var=1.0 + 0.5 * rng.random(c),
            epsilon=st.epsilon,
            momentum=st.momentum,
        ))
    return weights, emb


def grad_check_gsa(cfg: GsaConfig, seed: int, step: float = 1e-5,
                   tolerance: float = 1e-5, batch: int = 2) -> OracleReport:
    """Finite-difference check of `gsa_backward` on one randomized instance."""
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, emb = _randomized_module(cfg, rng)
    x = rng.standard_normal((batch, cfg.h, cfg.w, cfg.d_in))
    upstream = rng.standard_normal((batch, cfg.h, cfg.w, cfg.d_out))

    params = dict(gsa_parameters(weights, emb))
    params["x"] = x

    def loss(_):
        out = gsa_forward(x, weights, emb, cfg, training=True)
        return float(np.sum(out * upstream))

    analytic = gsa_backward(x, weights, emb, cfg, upstream)
    return grad_check(loss, params, analytic, step=step, tolerance=tolerance,
                      case=f"gsa_backward[{cfg.h}x{cfg.w},heads={cfg.n_heads}]",
                      seed=seed)


# ---------------------------------------------------------------------------
# equivariance checks
# ---------------------------------------------------------------------------

def equivariance_check(kind: str, seed: int, tolerance: float = 1e-10) -> OracleReport:
    """Permutation equivariance of content attention or interior translation
    equivariance of windowed positional attention."""
    rng = np.random.Generator(np.random.PCG64(seed))
    if kind == "permutation":
        from .kernels import numpy_impl

        h, w, n, kh, vh = 4, 4, 2, 3, 3
        k = rng.standard_normal((1, h, w, n, kh))
        q = rng.standard_normal((1, h, w, n, kh))
        v = rng.standard_normal((1, h, w, n, vh))
        out = numpy_impl.content_attention(k, q, v)
        perm = rng.permutation(h * w)

        def permute(t):
            flat = t.reshape(1, h * w, *t.shape[3:])
            return flat[:, perm].reshape(t.shape)

        permuted_out = numpy_impl.content_attention(permute(k), permute(q), permute(v))
        abs_err, relative = rel_err(permuted_out, permute(out))
        return make_report("equivariance", "permutation", seed,
                           f"h={h} w={w} heads={n}", abs_err, relative, tolerance)
    if kind == "translation":
        h, w, n = 12, 5, 2
        window = 2  # < h/4, so interior pixels exist after shifting
        shift = int(rng.integers(1, 3))
        cfg = GsaConfig(d_in=4, d_k=4, d_out=4, n_heads=n, h=h, w=w, L=window,
                        content_on=False)
        weights, emb = _randomized_module(cfg, rng)
        q = rng.standard_normal((1, h, w, n, cfg.head_dk))
        v = rng.standard_normal((1, h, w, n, cfg.head_dv))
        out = positional_attention(q, v, emb, weights.bn_mid, cfg)
        shifted = positional_attention(np.roll(q, shift, axis=1),
                                       np.roll(v, shift, axis=1),
                                       emb, weights.bn_mid, cfg)
        lo, hi = window, h - window - shift  # rows interior before and after
        abs_err, relative = rel_err(shifted[:, lo + shift:hi + shift],
                                    out[:, lo:hi])
        return make_report("equivariance", "translation", seed,
                           f"h={h} w={w} L={window} shift={shift}",
                           abs_err, relative, tolerance)
    raise ValueError(f"unknown equivariance kind {kind!r}")


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def _random_dims(rng):
    h = int(rng.integers(2, 6))
    w = int(rng.integers(2, 6))
    n = int(rng.integers(1, 3))
    kh = int(rng.integers(1, 4))
    vh = int(rng.integers(1, 4))
    return h, w, n, kh, vh


def run_oracle_suite(seed: int, cases: int = 100,
                     tolerance: float = 1e-10) -> list[OracleReport]:
    """Fast paths vs loop oracles: content, positional, and the full module."""
    from .kernels import numpy_impl

    reports = []
    root = np.random.SeedSequence(seed)
    for idx, child in enumerate(root.spawn(cases)):
        rng = np.random.Generator(np.random.PCG64(child))
        case_seed = seed * 1000 + idx
        h, w, n, kh, vh = _random_dims(rng)

        k = rng.standard_normal((1, h, w, n, kh))
        q = rng.standard_normal((1, h, w, n, kh))
        v = rng.standard_normal((1, h, w, n, vh))
        fast = numpy_impl.content_attention(k, q, v)
        ref = oracle_content_attention(k[0], q[0], v[0])
        abs_err, relative = rel_err(fast[0], ref)
        reports.append(make_report("oracles", "content_attention", case_seed,
                                   f"h={h} w={w} n={n} kh={kh} vh={vh}",
                                   abs_err, relative, tolerance))

        d = n * kh
        window = int(rng.integers(1, max(h, w) + 1))
        cfg = GsaConfig(d_in=d, d_k=d, d_out=n * vh, n_heads=n, h=h, w=w,
                        L=window, content_on=False)
        weights, emb = _randomized_module(cfg, rng)
        qq = rng.standard_normal((1, h, w, n, kh))
        vv = rng.standard_normal((1, h, w, n, vh))
        fast = positional_attention(qq, vv, emb, weights.bn_mid, cfg)
        ref = oracle_positional_attention(qq[0], vv[0], emb, weights.bn_mid, cfg)
        abs_err, relative = rel_err(fast[0], ref)
        reports.append(make_report("oracles", "positional_attention", case_seed,
                                   f"h={h} w={w} n={n} L={window}",
                                   abs_err, relative, tolerance))

        full_cfg = GsaConfig(d_in=int(rng.integers(2, 5)), d_k=n * kh,
                             d_out=n * vh, n_heads=n, h=h, w=w)
        weights, emb = _randomized_module(full_cfg, rng)
        x = rng.standard_normal((1, h, w, full_cfg.d_in))
        fast = gsa_forward(x, weights, emb, full_cfg)
        ref = oracle_gsa_forward(x[0], weights, emb, full_cfg)
        abs_err, relative = rel_err(fast[0], ref)
        reports.append(make_report("oracles", "gsa_forward", case_seed,
                                   f"h={h} w={w} n={n} d_in={full_cfg.d_in}",
                                   abs_err, relative, tolerance))
    return reports


def run_equivariance_suite(seed: int, cases: int = 100) -> list[OracleReport]:
    reports = []
    for idx in range(cases):
        reports.append(equivariance_check("permutation", seed * 1000 + idx))
        reports.append(equivariance_check("translation", seed * 1000 + idx))
    return reports


def run_gradient_suite(seed: int, cases: int = 20) -> list[OracleReport]:
    cfg = GsaConfig(d_in=4, d_k=4, d_out=4, n_heads=2, h=3, w=3)
    return [grad_check_gsa(cfg, seed * 1000 + idx) for idx in range(cases)]


def run_variant_suite(seed: int, cases: int = 20) -> list[OracleReport]:
    """The query-softmax switch must change behavior on generic inputs."""
    from .kernels import numpy_impl

    reports = []
    root = np.random.SeedSequence(seed + 17)
    for idx, child in enumerate(root.spawn(cases)):
        rng = np.random.Generator(np.random.PCG64(child))
        h, w, n, kh, vh = _random_dims(rng)
        k = rng.standard_normal((1, h, w, n, kh))
        q = rng.standard_normal((1, h, w, n, kh))
        v = rng.standard_normal((1, h, w, n, vh))
        plain = numpy_impl.content_attention(k, q, v)
        normalized = numpy_impl.content_attention(k, q, v, softmax_queries=True)
        _, relative = rel_err(normalized, plain)
        reports.append(OracleReport(
            suite="variants", case="softmax_on_queries_differs",
            seed=seed * 1000 + idx,
            detail=f"h={h} w={w} n={n} kh={kh}",
            max_abs_err=float(np.max(np.abs(normalized - plain))),
            max_rel_err=float(relative),
            tolerance=1e-3,
            passed=bool(relative > 1e-3),
        ))
    return reports


SUITES = {
    "oracles": run_oracle_suite,
    "equivariance": run_equivariance_suite,
    "gradients": run_gradient_suite,
    "variants": run_variant_suite,
}


def run_suites(names, seed: int, cases: int | None = None) -> list[OracleReport]:
    reports = []
    for name in names:
        if name not in SUITES:
            raise ValueError(f"unknown suite {name!r}; pick from {sorted(SUITES)}")
        runner = SUITES[name]
        reports.extend(runner(seed, cases) if cases else runner(seed))
    return reports
