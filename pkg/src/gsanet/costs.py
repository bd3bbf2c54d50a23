"""Parameter/FLOP accounting and the empirical scaling benchmark.

Conventions (validated against the convolutional ResNet-50 anchor):

* one multiply-accumulate = 1 multiplication + 1 addition, counted
  separately, so FLOPs = 2 x MACs;
* learnable parameters include batch-norm affine pairs and the classifier
  bias; running statistics are excluded;
* softmax, batch norm, ReLU and pooling are excluded from the mult/add
  totals and reported as ``aux_flops`` in the metadata;
* relative-position embedding lookups are gathers, costing no FLOPs.

`scaling_benchmark` times the three attention kernels over growing inputs
and fits log-log slopes for wall time next to the noise-free analytic-FLOP
slopes (1.0 for content, 1.5 for global axial positional, 2.0 for the
quadratic bracketing).
"""

from __future__ import annotations

import csv
import io as _io
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from ._backend import configured_threads, resolve_backend
from .model import ModelSpec, describe_model, plan_model

BN_EPSILON = 1e-5
BN_MOMENTUM = 0.9


@dataclass
class CostReport:
    """Per-layer and total parameter / FLOP accounting."""

    layers: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def total_params(self) -> int:
        return sum(r["params"] for r in self.layers)

    @property
    def total_mults(self) -> int:
        return sum(r["mults"] for r in self.layers)

    @property
    def total_adds(self) -> int:
        return sum(r["adds"] for r in self.layers)

    @property
    def total_flops(self) -> int:
        return self.total_mults + self.total_adds

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "totals": {
                "params": self.total_params,
                "mults": self.total_mults,
                "adds": self.total_adds,
                "flops": self.total_flops,
            },
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CostReport":
        data = json.loads(text)
        return cls(layers=data["layers"], metadata=data["metadata"])

    def to_csv(self) -> str:
        buf = _io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["name", "kind", "params", "mults", "adds", "aux_flops"])
        for rec in self.layers:
            writer.writerow([rec["name"], rec["kind"], rec["params"],
                             rec["mults"], rec["adds"], rec["aux_flops"]])
        writer.writerow(["TOTAL", "", self.total_params, self.total_mults,
                         self.total_adds,
                         sum(r["aux_flops"] for r in self.layers)])
        return buf.getvalue()


def _report(model_or_spec, input_size=None) -> CostReport:
    if isinstance(model_or_spec, ModelSpec):
        spec = model_or_spec
        if input_size is not None:
            spec = replace(spec, input_size=tuple(input_size))
        model = plan_model(spec)
    else:
        model = model_or_spec
        if input_size is not None and tuple(input_size) != model.spec.input_size:
            model = plan_model(replace(model.spec, input_size=tuple(input_size)))
    summary = describe_model(model)
    meta = {
        "input_size": list(model.spec.input_size),
        "flop_convention": "FLOPs = 2 x MACs; mults and adds tallied separately",
        "excluded_from_totals": "softmax, batch norm, ReLU, pooling (see aux_flops)",
        "positional_lookup": "embedding gather, 0 FLOPs",
        "bn_epsilon": BN_EPSILON,
        "bn_momentum": BN_MOMENTUM,
        "aux_flops_total": summary["totals"]["aux_flops"],
    }
    return CostReport(layers=summary["layers"], metadata=meta)


def count_params(model_or_spec) -> CostReport:
    """Count every learnable scalar (conv/fc weights, BN affine, embeddings)."""
    return _report(model_or_spec)


def count_flops(model_or_spec, input_size=None) -> CostReport:
    """Count contraction mults/adds at the given input size."""
    return _report(model_or_spec, input_size=input_size)


# ---------------------------------------------------------------------------
# scaling benchmark
# ---------------------------------------------------------------------------

KERNEL_DEFAULTS = {
    "content": {"d_k": 64, "d_out": 64, "heads": 8},
    "axial_positional": {"d_k": 64, "d_out": 64, "heads": 8},
    "naive_quadratic": {"d_k": 8, "d_out": 8, "heads": 1},
}


def kernel_analytic_flops(kernel: str, side: int, d_k: int, d_out: int,
                          heads: int) -> int:
    """Closed-form FLOPs (2 x MACs) of one kernel invocation at side x side."""
    n = side * side
    if kernel == "content":
        return 2 * (2 * n * d_k * d_out // heads)
    if kernel == "axial_positional":
        return 2 * (2 * n * side * (d_k + d_out))
    if kernel == "naive_quadratic":
        return 2 * (n * n * (d_k + d_out))
    raise ValueError(f"unknown kernel {kernel!r}; pick from {sorted(KERNEL_DEFAULTS)}")


def _run_kernel(kernel, k, q, v, r_col, window, backend):
    if kernel == "content":
        return kernels.content_attention(k, q, v, backend=backend)
    if kernel == "axial_positional":
        col = kernels.axial_positional(q, v, r_col, "col", window, backend=backend)
        return kernels.axial_positional(q, col, r_col, "row", window,
                                        backend=backend)
    return kernels.naive_quadratic(k, q, v, backend=backend)


def fit_loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(np.asarray(xs, dtype=float)),
                            np.log(np.asarray(ys, dtype=float)), 1)[0])


def scaling_benchmark(kernel: str, sizes, reps: int = 5, warmup: int = 2,
                      dtype: str = "float32", backend: str | None = None,
                      seed: int = 0, d_k: int | None = None,
                      d_out: int | None = None, heads: int | None = None) -> dict:
    """Time one kernel over square resolutions and fit log-log slopes.

    ``sizes`` are image side lengths; N = side**2 pixels.  Wall times are the
    only environment-dependent fields and live under ``median_s``/``times_s``.
    """
    if kernel not in KERNEL_DEFAULTS:
        raise ValueError(f"unknown kernel {kernel!r}; pick from {sorted(KERNEL_DEFAULTS)}")
    sizes = sorted(int(s) for s in sizes)
    if len(sizes) < 4 or sizes[-1] ** 2 < 16 * sizes[0] ** 2:
        raise ValueError("need >= 4 sizes spanning at least 16x in pixel count")
    defaults = KERNEL_DEFAULTS[kernel]
    d_k = d_k or defaults["d_k"]
    d_out = d_out or defaults["d_out"]
    heads = heads or defaults["heads"]
    backend_name = resolve_backend(backend)
    np_dtype = np.dtype(dtype)

    kernels.warmup(backend_name, dtype=np_dtype)
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = []
    for side in sizes:
        kh, vh = d_k // heads, d_out // heads
        k = rng.standard_normal((1, side, side, heads, kh)).astype(np_dtype)
        q = rng.standard_normal((1, side, side, heads, kh)).astype(np_dtype)
        v = rng.standard_normal((1, side, side, heads, vh)).astype(np_dtype)
        r = rng.standard_normal((2 * side - 1, kh)).astype(np_dtype)
        times = []
        for rep in range(warmup + reps):
            t0 = time.perf_counter()
            _run_kernel(kernel, k, q, v, r, side, backend_name)
            dt = time.perf_counter() - t0
            if rep >= warmup:
                times.append(dt)
        median = float(np.median(times))
        spread = (max(times) - min(times)) / median if median > 0 else 0.0
        rows.append({
            "side": side,
            "n_pixels": side * side,
            "analytic_flops": kernel_analytic_flops(kernel, side, d_k, d_out,
                                                    heads),
            "median_s": median,
            "times_s": times,
            "unreliable": bool(spread > 0.2),
        })

    n_pixels = [row["n_pixels"] for row in rows]
    report = {
        "kernel": kernel,
        "backend": backend_name,
        "dtype": str(np_dtype),
        "threads": configured_threads(),
        "channels": {"d_k": d_k, "d_out": d_out, "heads": heads},
        "reps": reps,
        "warmup": warmup,
        "seed": seed,
        "sizes": sizes,
        "rows": rows,
        "slope_flops": fit_loglog_slope(n_pixels,
                                        [row["analytic_flops"] for row in rows]),
        "slope_time": fit_loglog_slope(n_pixels,
                                       [row["median_s"] for row in rows]),
        "unreliable": any(row["unreliable"] for row in rows),
    }
    if report["unreliable"]:
        report["note"] = "timing spread exceeded 20% of the median; rerun with more reps"
    return report
