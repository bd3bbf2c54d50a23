"""Command-line interface.

Subcommands: build, describe, count, verify, bench, train-toy, tensor.
Exit codes: 0 success, 1 verification/training failure, 2 usage errors.

Model presets cover the paper-grid configurations; ``table3:<flags>`` picks
attention branches (e.g. ``table3:content+col``) and ``table5:<mask>`` picks
which residual groups use attention (e.g. ``table5:0111``).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as gsat_io
from ._backend import ENV_THREADS, resolve_backend, set_threads
from .costs import CostReport, count_flops, count_params, scaling_benchmark
from .kernels import KERNEL_NAMES
from .model import ModelSpec, build_model, describe_model, plan_model
from .train import ToyNetSpec, ToyTrainingDiverged, train_toy
from .verification import SUITES, run_suites

FIXED_PRESETS = {
    "resnet38": dict(depth=38),
    "resnet50": dict(depth=50),
    "resnet101": dict(depth=101),
    "gsa-resnet38": dict(depth=38, group_uses_gsa=(True,) * 4),
    "gsa-resnet50": dict(depth=50, group_uses_gsa=(True,) * 4),
    "gsa-resnet101": dict(depth=101, group_uses_gsa=(True,) * 4),
    "m-gsa-resnet50": dict(depth=50, group_uses_gsa=(True,) * 4,
                           variant="m_resnet50"),
    "axial-content-50": dict(depth=50, group_uses_gsa=(True,) * 4,
                             variant="axial_content"),
}

_BRANCH_NAMES = ("content", "col", "row")


def preset_names():
    return sorted(FIXED_PRESETS) + ["table3:<flags>", "table5:<mask>"]


def resolve_preset(name: str) -> ModelSpec:
    if name in FIXED_PRESETS:
        return ModelSpec(**FIXED_PRESETS[name])
    if name.startswith("table3:"):
        flags = [f for f in name[len("table3:"):].replace(",", "+").split("+") if f]
        unknown = set(flags) - set(_BRANCH_NAMES)
        if unknown or not flags:
            raise ValueError(
                f"table3 flags must be a +-separated subset of {_BRANCH_NAMES}")
        branch = tuple(b in flags for b in _BRANCH_NAMES)
        return ModelSpec(depth=50, group_uses_gsa=(True,) * 4,
                         branch_flags=branch)
    if name.startswith("table5:"):
        mask = name[len("table5:"):]
        if len(mask) != 4 or set(mask) - {"0", "1"}:
            raise ValueError("table5 mask must be 4 characters of 0/1, "
                             "one per residual group")
        return ModelSpec(depth=50, group_uses_gsa=tuple(c == "1" for c in mask))
    raise ValueError(
        f"unknown preset {name!r}; valid presets: {', '.join(preset_names())}")


def load_spec(args) -> ModelSpec:
    if getattr(args, "spec_file", None):
        text = Path(args.spec_file).read_text()
        spec = ModelSpec.from_json(text)
    elif getattr(args, "preset", None):
        spec = resolve_preset(args.preset)
    else:
        raise ValueError("provide --preset or --spec-file")
    if getattr(args, "input_size", None):
        spec = replace(spec, input_size=args.input_size)
    return spec


def fmt_count(n: float, unit: float, suffix: str) -> str:
    return f"{n / unit:.1f} {suffix}"


def structure_label(spec: ModelSpec) -> str:
    if spec.variant == "m_resnet50":
        return "M-ResNet-50"
    return f"ResNet-{spec.depth}"


def operation_label(spec: ModelSpec) -> str:
    if not any(spec.group_uses_gsa):
        return "Convolution"
    op = "GSA"
    if spec.variant == "axial_content":
        op = "Axial content + positional"
    if not all(spec.group_uses_gsa):
        groups = [str(i + 1) for i, g in enumerate(spec.group_uses_gsa) if g]
        op += f" (groups {','.join(groups)})"
    flags = dict(zip(_BRANCH_NAMES, spec.branch_flags))
    off = [k for k, v in flags.items() if not v]
    if off:
        op += f" (without {'+'.join(off)})"
    return op


def _write_or_print(text: str, output: str | None):
    if output:
        Path(output).write_text(text)
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def cmd_describe(args) -> int:
    spec = load_spec(args)
    summary = describe_model(plan_model(spec))
    if args.format == "json":
        _write_or_print(json.dumps(summary, indent=2, sort_keys=True), args.output)
        return 0
    lines = [f"{'layer':<34}{'kind':<10}{'params':>12}{'mults':>16}{'adds':>16}"]
    for rec in summary["layers"]:
        lines.append(f"{rec['name']:<34}{rec['kind']:<10}{rec['params']:>12}"
                     f"{rec['mults']:>16}{rec['adds']:>16}")
    t = summary["totals"]
    lines.append(f"{'TOTAL':<34}{'':<10}{t['params']:>12}{t['mults']:>16}"
                 f"{t['adds']:>16}")
    lines.append(f"resolution schedule: {summary['resolution_schedule']}")
    _write_or_print("\n".join(lines), args.output)
    return 0


def cmd_count(args) -> int:
    spec = load_spec(args)
    report = count_flops(spec)
    if args.format == "json":
        _write_or_print(report.to_json(), args.output)
        return 0
    if args.format == "csv":
        _write_or_print(report.to_csv(), args.output)
        return 0
    header = f"{'Structure':<14}{'Operation':<34}{'Params':>10}{'FLOPs':>10}"
    row = (f"{structure_label(spec):<14}{operation_label(spec):<34}"
           f"{fmt_count(report.total_params, 1e6, 'M'):>10}"
           f"{fmt_count(report.total_flops, 1e9, 'G'):>10}")
    _write_or_print("\n".join([header, row]), args.output)
    return 0


def cmd_build(args) -> int:
    spec = load_spec(args)
    model = build_model(spec, seed=args.seed)
    n_params = count_params(spec).total_params
    print(f"built {structure_label(spec)} / {operation_label(spec)}: "
          f"{n_params} parameters, seed {args.seed}")
    if args.save_params:
        gsat_io.save_bundle(args.save_params, model.named_state())
        print(f"saved parameter bundle to {args.save_params}")
    return 0


def cmd_verify(args) -> int:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    reports = run_suites(names, seed=args.seed, cases=args.cases)
    lines = [r.to_json() for r in reports]
    failed = [r for r in reports if not r.passed]
    summary = (f"{'FAIL' if failed else 'PASS'}: {len(reports) - len(failed)}"
               f"/{len(reports)} checks passed")
    text = "\n".join(lines + [summary]) + "\n"
    _write_or_print(text, args.output)
    if args.output:
        print(summary)
    return 1 if failed else 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s]
    backends = ["numpy", "numba"] if args.backend == "both" else [args.backend]
    reports = []
    for backend in backends:
        reports.append(scaling_benchmark(
            args.kernel, sizes, reps=args.reps, warmup=args.warmup,
            dtype=args.dtype, backend=None if backend == "auto" else backend,
            seed=args.seed))
    if args.format == "json":
        _write_or_print(json.dumps(reports, indent=2, sort_keys=True),
                        args.output)
        return 0
    lines = []
    for rep in reports:
        lines.append(f"kernel={rep['kernel']} backend={rep['backend']} "
                     f"dtype={rep['dtype']} threads={rep['threads']}")
        lines.append(f"{'side':>6}{'pixels':>10}{'analytic FLOPs':>18}"
                     f"{'median s':>14}")
        for row in rep["rows"]:
            flag = " (unreliable)" if row["unreliable"] else ""
            lines.append(f"{row['side']:>6}{row['n_pixels']:>10}"
                         f"{row['analytic_flops']:>18}"
                         f"{row['median_s']:>14.6f}{flag}")
        lines.append(f"slope: analytic {rep['slope_flops']:.4f}, "
                     f"wall time {rep['slope_time']:.4f}")
    if len(reports) == 2:
        speedups = [a["median_s"] / b["median_s"]
                    for a, b in zip(reports[0]["rows"], reports[1]["rows"])]
        lines.append("numpy/numba speedup per size: "
                     + ", ".join(f"{s:.1f}x" for s in speedups))
    _write_or_print("\n".join(lines), args.output)
    return 0


def cmd_train_toy(args) -> int:
    spec = ToyNetSpec(size=args.size, width=args.width, n_blocks=args.blocks,
                      n_heads=args.heads, num_classes=args.classes)
    try:
        result, _ = train_toy(spec, steps=args.steps, lr=args.lr,
                              momentum=args.momentum,
                              batch_size=args.batch_size, seed=args.seed)
    except ToyTrainingDiverged as exc:
        print(f"training diverged at step {exc.step}", file=sys.stderr)
        return 1
    print(f"initial loss {result.initial_loss:.6f} "
          f"(ln{args.classes} = {np.log(args.classes):.6f})")
    print(f"final loss   {result.final_loss:.6f} after {args.steps} steps")
    if args.curve_out:
        Path(args.curve_out).write_text(result.curve_csv())
        print(f"wrote loss curve to {args.curve_out}")
    return 0


def cmd_tensor(args) -> int:
    arr = gsat_io.load_tensor(args.file)
    if args.action == "info":
        print(f"{args.file}: shape {tuple(arr.shape)}, dtype {arr.dtype}, "
              f"{arr.size} elements")
    else:  # cat
        print(np.array2string(arr, threshold=np.inf, precision=8))
    return 0


def _parse_input_size(text):
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        return (parts[0], parts[0])
    if len(parts) == 2:
        return tuple(parts)
    raise argparse.ArgumentTypeError("input size must be H or H,W")


def _add_model_args(p):
    p.add_argument("--preset", help=f"one of: {', '.join(preset_names())}")
    p.add_argument("--spec-file", help="path to a ModelSpec JSON file")
    p.add_argument("--input-size", type=_parse_input_size, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsanet",
        description="global self-attention networks: builders, cost "
                    "accounting, verification and benchmarks")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker thread cap (default ${ENV_THREADS} or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("describe", help="print the per-layer summary")
    _add_model_args(p)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--output")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("count", help="parameter and FLOP accounting")
    _add_model_args(p)
    p.add_argument("--format", choices=("table", "json", "csv"),
                   default="table")
    p.add_argument("--output")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("build", help="build a model deterministically")
    _add_model_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-params", help="directory for the GSAT bundle")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("verify", help="run oracle/property suites")
    p.add_argument("--suite", choices=("all", *sorted(SUITES)), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=None,
                   help="cases per suite (default: suite-specific)")
    p.add_argument("--output")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="empirical complexity benchmark")
    p.add_argument("--kernel", choices=KERNEL_NAMES, default="content")
    p.add_argument("--sizes", default="8,16,32,64,128",
                   help="comma-separated square sides")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--dtype", choices=("float32", "float64"),
                   default="float32")
    p.add_argument("--backend", choices=("auto", "numpy", "numba", "both"),
                   default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.add_argument("--output")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train-toy", help="train a small GSA classifier")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--curve-out", help="write step,loss CSV here")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("tensor", help="inspect GSAT tensor files")
    p.add_argument("action", choices=("info", "cat"))
    p.add_argument("file")
    p.set_defaults(func=cmd_tensor)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        set_threads(args.threads)
        resolve_backend(None)  # fail early on a bad GSA_BACKEND value
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError,
            gsat_io.TensorFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
