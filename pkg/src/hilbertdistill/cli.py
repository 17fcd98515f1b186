"""Command-line front end.

Exit codes: 0 success, 1 runtime/domain error, 2 usage or config error.
JSON is the machine-readable default; ``--pretty`` switches the train and
bench commands to aligned-column text.  ``HD_SEED`` overrides any configured
seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .activation import activation_mask
from .curve import CurveSpec, Region, build_mapping, render_svg, select_order
from .errors import ConfigError, HilbertDistillError
from .fileio import read_tensor, write_mapping, write_mapping_json, write_vh_mapping
from .harness import HarnessConfig, bench_curve, run_experiment
from .losses import hd_loss, map_features, vhd_loss
from .vh import ActivationMask, vh_mapping


def _parse_region(text: str, n: int) -> Region:
    try:
        extents = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise ConfigError("region", f"not a comma-separated integer list: {text!r}") from exc
    if len(extents) != n:
        raise ConfigError("region", f"expected {n} extents, got {len(extents)}")
    return Region(extents)


def _mapping_format(path: str, explicit: str | None) -> str:
    if explicit:
        return explicit
    return "json" if str(path).endswith(".json") else "hdmt"


def cmd_gen_curve(args) -> int:
    spec = CurveSpec(args.n, args.p)
    region = (
        _parse_region(args.region, args.n)
        if args.region
        else Region((spec.side,) * args.n)
    )
    table = build_mapping(spec, region, args.layout)
    fmt = _mapping_format(args.out, args.format)
    if fmt == "json":
        write_mapping_json(args.out, table)
    else:
        write_mapping(args.out, table)
    if args.svg:
        with open(args.svg, "w") as fh:
            fh.write(render_svg(table))
    print(
        json.dumps(
            {"out": args.out, "entries": table.entry_count, "code_length": table.code_length}
        )
    )
    return 0


def _load_mask(path: str, spec: CurveSpec) -> ActivationMask:
    arr = read_tensor(path)
    if arr.ndim != spec.n:
        raise ValueError(f"mask rank {arr.ndim} does not match dimension {spec.n}")
    if not np.all(np.isin(arr, (0.0, 1.0))):
        raise ValueError("mask tensor must contain only 0/1 values")
    if any(e > spec.side for e in arr.shape):
        raise ValueError(f"mask extents {arr.shape} exceed curve side {spec.side}")
    return ActivationMask.from_array(arr.astype(bool))


def cmd_gen_vh(args) -> int:
    spec = CurveSpec(args.n, args.p)
    mask = _load_mask(args.mask, spec)
    table = vh_mapping(spec, mask.region, mask)
    fmt = _mapping_format(args.out, args.format)
    if fmt == "json":
        write_mapping_json(args.out, table)
    else:
        write_vh_mapping(args.out, table)
    print(
        json.dumps(
            {
                "out": args.out,
                "entries": table.base.entry_count,
                "representatives": table.skipped_count,
            }
        )
    )
    return 0


def _channelled(arr: np.ndarray, spatial_rank: int, name: str) -> np.ndarray:
    if arr.ndim == spatial_rank:
        return arr[None]
    if arr.ndim == spatial_rank + 1:
        return arr
    raise ValueError(
        f"{name} tensor must have rank {spatial_rank} or {spatial_rank + 1}, got {arr.ndim}"
    )


def cmd_loss(args) -> int:
    if not 0.0 < args.theta < 1.0:
        raise ConfigError("theta", "must lie in (0, 1)")
    teacher = _channelled(read_tensor(args.teacher).astype(float), 3, "teacher")
    student = _channelled(read_tensor(args.student).astype(float), 2, "student")
    if teacher.shape[0] != student.shape[0]:
        raise ValueError(
            f"channel counts differ: teacher {teacher.shape[0]}, student {student.shape[0]}"
        )
    t_dim = 3
    if teacher.shape[1] == 1:
        # a depth-1 volume is a plane; the minimum space holding it is 2D
        teacher = teacher[:, 0]
        t_dim = 2
    t_region = Region(teacher.shape[1:])
    s_region = Region(student.shape[1:])
    t_table = build_mapping(
        CurveSpec(t_dim, select_order(t_region, t_dim)), t_region, args.layout
    )
    s_table = build_mapping(CurveSpec(2, select_order(s_region, 2)), s_region, args.layout)
    out: dict = {"kind": args.kind, "pairs": teacher.shape[0]}
    if args.kind == "vhd":
        if not args.teacher_am or not args.student_am:
            raise ConfigError("kind", "vhd needs --teacher-am and --student-am tensors")
        am_t = read_tensor(args.teacher_am).astype(float)
        am_s = read_tensor(args.student_am).astype(float)
        if t_dim == 2 and am_t.ndim == 3 and am_t.shape[0] == 1:
            am_t = am_t[0]
        if am_t.shape != teacher.shape[1:] or am_s.shape != student.shape[1:]:
            raise ValueError("activation mapping extents must match the feature maps")
        reports = [
            vhd_loss(teacher[ch], am_t, t_table, student[ch], am_s, s_table, args.rescale)
            for ch in range(teacher.shape[0])
        ]
        out["teacher_active_fraction"] = float(
            activation_mask(am_t, args.theta).active.mean()
        )
        out["student_active_fraction"] = float(
            activation_mask(am_s, args.theta).active.mean()
        )
    else:
        reports = [
            hd_loss(
                map_features(teacher[ch], t_table),
                map_features(student[ch], s_table),
                args.rescale,
            )
            for ch in range(teacher.shape[0])
        ]
    out["loss"] = float(np.mean([r.value for r in reports]))
    if args.grads:
        gs = np.mean([np.linalg.norm(r.grad_student) for r in reports])
        gt = np.mean([np.linalg.norm(r.grad_teacher) for r in reports])
        out["grad_student_norm"] = float(gs)
        out["grad_teacher_norm"] = float(gt)
    print(json.dumps(out))
    return 0


def _apply_seed_overrides(data: dict, flag_seed: int | None) -> dict:
    if flag_seed is not None:
        data["seed"] = flag_seed
    env_seed = os.environ.get("HD_SEED")
    if env_seed is not None:
        try:
            data["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError("HD_SEED", f"not an integer: {env_seed!r}") from exc
    return data


def cmd_train(args) -> int:
    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "top-level value must be an object")
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError("set", f"expected key=value, got {item!r}")
        try:
            data[key] = json.loads(raw)
        except json.JSONDecodeError:
            data[key] = raw
    if args.loss_kind:
        data["loss_kind"] = args.loss_kind
    data = _apply_seed_overrides(data, args.seed)
    config = HarnessConfig.from_dict(data)
    reports = run_experiment(config)
    payload = {"reports": [r.to_json_obj() for r in reports]}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    if args.pretty:
        print("\n\n".join(r.to_text() for r in reports))
    else:
        print(json.dumps(payload))
    return 0


def cmd_bench(args) -> int:
    sides = []
    for part in args.sides.split(","):
        side = int(part)
        if side < 2 or side & (side - 1):
            raise ConfigError("sides", f"side {side} is not a power of two >= 2")
        sides.append(side)
    specs = [CurveSpec(args.n, side.bit_length() - 1) for side in sides]
    impls = ["numba", "numpy"] if args.impl == "both" else [args.impl]
    rows = None
    for impl in impls:
        res = bench_curve(specs, reps=args.reps, impl=None if impl == "auto" else impl)
        if rows is None:
            rows = [
                {"n": r["n"], "side": r["side"], "p": r["p"], "points": r["points"]}
                for r in res
            ]
        for row, r in zip(rows, res):
            row[f"ms_{impl}"] = r["ms"]
    payload = {"rows": rows}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    if args.pretty:
        cols = list(rows[0].keys())
        widths = {c: max(len(c), *(len(f"{r[c]:.3f}" if isinstance(r[c], float) else str(r[c])) for r in rows)) for c in cols}
        print("  ".join(c.rjust(widths[c]) for c in cols))
        for r in rows:
            print(
                "  ".join(
                    (f"{r[c]:.3f}" if isinstance(r[c], float) else str(r[c])).rjust(widths[c])
                    for c in cols
                )
            )
    else:
        print(json.dumps(payload))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hilbertdistill",
        description="Hilbert-curve feature mapping and distillation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-curve", help="build and export a mapping table")
    g.add_argument("--n", type=int, required=True, choices=(2, 3))
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--region", help="comma-separated extents; defaults to the full cube")
    g.add_argument("--layout", choices=("padded", "compacted"), default="padded")
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=("json", "hdmt"))
    g.add_argument("--svg", help="also render the curve as SVG (n=2 only)")
    g.set_defaults(func=cmd_gen_curve)

    v = sub.add_parser("gen-vh", help="build a variable-length mapping from a mask")
    v.add_argument("--n", type=int, required=True, choices=(2, 3))
    v.add_argument("--p", type=int, required=True)
    v.add_argument("--mask", required=True, help="HDTN tensor of 0/1 values")
    v.add_argument("--out", required=True)
    v.add_argument("--format", choices=("json", "hdmt"))
    v.set_defaults(func=cmd_gen_vh)

    l = sub.add_parser("loss", help="evaluate a distillation loss on tensor files")
    l.add_argument("--teacher", required=True)
    l.add_argument("--student", required=True)
    l.add_argument("--kind", choices=("hd", "vhd"), default="hd")
    l.add_argument("--teacher-am")
    l.add_argument("--student-am")
    l.add_argument("--theta", type=float, default=0.5)
    l.add_argument("--layout", choices=("padded", "compacted"), default="compacted")
    l.add_argument("--rescale", choices=("left", "center"), default="left")
    l.add_argument("--grads", action="store_true")
    l.set_defaults(func=cmd_loss)

    t = sub.add_parser("train", help="run a desk-scale distillation experiment")
    t.add_argument("--config", required=True, help="JSON config file")
    t.add_argument("--loss-kind", choices=("none", "hd", "vhd", "avg", "max", "conv"))
    t.add_argument("--seed", type=int)
    t.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override a config key (value parsed as JSON, else string)",
    )
    t.add_argument("--out")
    t.add_argument("--pretty", action="store_true")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", help="time mapping-table generation")
    b.add_argument("--n", type=int, required=True, choices=(2, 3))
    b.add_argument("--sides", required=True, help="comma-separated power-of-two sides")
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--impl", choices=("auto", "numba", "numpy", "both"), default="auto")
    b.add_argument("--out")
    b.add_argument("--pretty", action="store_true")
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (HilbertDistillError, ValueError, ZeroDivisionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
