"""Command-line interface.

Subcommands: gen (write a generated relation), join / sort (single
experiment), bench (sweep a config file), fit (regime model from sweep
CSV), report (split sweep CSVs into plot-ready series files).
Exit codes: 0 success, 1 usage error, 2 experiment failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path as FsPath

from . import bench as b
from .errors import InsufficientData, RelabError
from .regime import Measurement, fit_regime
from .relation import GenSpec, generate_relation, read_relation, write_relation
from .selector import Operation, Path, Policy
from .specs import MemoryBudget


def _add_gen_args(p: argparse.ArgumentParser, *, two_sided: bool) -> None:
    p.add_argument("--n", type=int, default=1000, help="rows per side")
    if two_sided:
        p.add_argument("--n-right", type=int, default=None,
                       help="right-side rows (default: --n)")
    p.add_argument("--key-domain", type=int, default=None,
                   help="distinct key values (default: n)")
    p.add_argument("--distribution", default="uniform",
                   help="uniform or zipf:S")
    p.add_argument("--payload-width", type=int, default=92,
                   help="payload bytes per row")
    p.add_argument("--seed", type=int, default=0)


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--budget", default="64MB", help="memory budget, e.g. 1MB")
    p.add_argument("--policy", default="auto",
                   choices=[x.value for x in Policy])
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--temp-dir", default=None)
    p.add_argument("--fit-fraction", type=float, default=None,
                   help="budget fraction under which the row path is chosen")
    p.add_argument("--small-input-rows", type=int, default=None,
                   help="total rows under which the row path is chosen")
    p.add_argument("--max-output-rows", type=int, default=None)
    p.add_argument("--csv", default=None, help="append the result row here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relab",
        description="Row-vs-tensor relational execution lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a relation file")
    _add_gen_args(p, two_sided=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("join", help="run one join experiment")
    _add_gen_args(p, two_sided=True)
    _add_run_args(p)
    p.set_defaults(func=cmd_join)

    p = sub.add_parser("sort", help="run one sort experiment")
    _add_gen_args(p, two_sided=False)
    p.add_argument("--keys", default="key",
                   help="sort keys, e.g. 'key,payload:desc'")
    _add_run_args(p)
    p.set_defaults(func=cmd_sort)

    p = sub.add_parser("bench", help="run a sweep from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="sweep CSV path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("fit", help="fit the regime model from a sweep CSV")
    p.add_argument("--input", required=True, action="append",
                   help="sweep CSV (repeatable)")
    p.add_argument("--out", default=None, help="write fits + alpha curve CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="split sweep CSVs into series files")
    p.add_argument("--input", required=True, action="append",
                   help="sweep CSV (repeatable)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def _gen_spec(args, *, seed_offset: int = 0, n_override=None) -> GenSpec:
    n = args.n if n_override is None else n_override
    domain = args.key_domain if args.key_domain is not None else max(1, n)
    return GenSpec(
        n=n,
        key_domain=domain,
        distribution=b.parse_distribution(args.distribution),
        payload_width=args.payload_width,
        seed=args.seed + seed_offset,
    )


def _experiment(args, operation: Operation) -> b.ExperimentConfig:
    kwargs = dict(
        operation=operation,
        gen_left=_gen_spec(args),
        budget=MemoryBudget(b.parse_size(args.budget)),
        policy=Policy(args.policy),
        repetitions=args.reps,
        warmup=args.warmup,
        temp_dir=args.temp_dir,
    )
    if operation is Operation.JOIN:
        n_right = args.n_right if args.n_right is not None else args.n
        kwargs["gen_right"] = _gen_spec(args, seed_offset=1, n_override=n_right)
    else:
        kwargs["sort_keys"] = b.parse_sort_keys(args.keys)
    if args.fit_fraction is not None:
        kwargs["fit_fraction"] = args.fit_fraction
    if args.small_input_rows is not None:
        kwargs["small_input_rows"] = args.small_input_rows
    if args.max_output_rows is not None:
        kwargs["max_output_rows"] = args.max_output_rows
    return b.ExperimentConfig(**kwargs)


def _print_report(report: b.BenchReport) -> None:
    choice = report.path_taken
    lat = report.latency
    print(f"path: {choice.path.value} (reason: {choice.reason.value})")
    print(
        f"latency_s: p50={lat.p50:.6g} p95={lat.p95:.6g}"
        f" p99={lat.p99:.6g} max={lat.max:.6g} over {len(lat.samples)} reps"
    )
    print(
        f"spill: {report.spill.temp_blocks_written} blocks"
        f" ({report.temp_mb:.6g} MB written),"
        f" partition_passes={report.spill.partition_passes},"
        f" sort_runs={report.spill.sort_runs}"
    )
    print(f"peak_mem_bytes: {report.spill.peak_mem_bytes}")
    print(f"output_rows: {report.output_rows}")
    print(f"digest: {report.result_digest.hex}")


def cmd_gen(args) -> int:
    rel = generate_relation(_gen_spec(args))
    write_relation(rel, args.out)
    print(f"wrote {rel.row_count} rows ({rel.schema.row_width} B/row) to {args.out}")
    return 0


def _run_single(args, operation: Operation) -> int:
    config = _experiment(args, operation)
    report = b.run_experiment(config)
    _print_report(report)
    if args.csv:
        b.append_sweep_row(b.report_to_row(report), args.csv)
    return 0


def cmd_join(args) -> int:
    return _run_single(args, Operation.JOIN)


def cmd_sort(args) -> int:
    return _run_single(args, Operation.SORT)


def cmd_bench(args) -> int:
    configs = b.load_config_file(args.config)
    print(f"{len(configs)} experiments from {args.config}", file=sys.stderr)
    rows = b.sweep(configs, progress=sys.stderr)
    b.write_sweep_csv(rows, args.out)
    failures = sum(1 for r in rows if r.path_taken == "error")
    print(f"wrote {len(rows)} rows to {args.out} ({failures} failed cells)")
    return 2 if failures else 0


def measurements_from_rows(rows) -> dict[tuple, list[Measurement]]:
    """Group sweep rows into fit inputs by (operation, path, budget)."""
    groups: dict[tuple, list[Measurement]] = defaultdict(list)
    for r in rows:
        if r.path_taken not in (Path.ROW.value, Path.TENSOR.value):
            continue
        groups[(r.operation, r.path_taken, r.budget_bytes)].append(
            Measurement(
                n=r.n_left,
                m=r.budget_bytes,
                path=Path(r.path_taken),
                wall_times=(r.p50_s,),
                temp_blocks=r.temp_blocks,
            )
        )
    return groups


def cmd_fit(args) -> int:
    rows = []
    for path in args.input:
        rows.extend(b.read_sweep_csv(path))
    out_rows = []
    for (operation, path, budget), ms in sorted(measurements_from_rows(rows).items()):
        try:
            fit = fit_regime(ms)
        except InsufficientData as exc:
            print(f"{operation}/{path}/budget={budget}: not fitted ({exc})")
            continue
        print(
            f"{operation}/{path}/budget={budget}:"
            f" linear_coeff={fit.linear_coeff:.6g} s/row,"
            f" intercept={fit.intercept:.6g} s,"
            f" spill_threshold_rows={fit.spill_threshold_rows}"
        )
        if fit.alpha_curve:
            for n, alpha in fit.alpha_curve:
                print(f"  alpha({n}) = {alpha:.6g} s")
                out_rows.append(
                    (operation, path, budget, f"{fit.linear_coeff:.6g}",
                     f"{fit.intercept:.6g}", fit.spill_threshold_rows, n,
                     f"{alpha:.6g}")
                )
        else:
            print("  no spilling points; purely linear")
            out_rows.append(
                (operation, path, budget, f"{fit.linear_coeff:.6g}",
                 f"{fit.intercept:.6g}", "", "", "")
            )
    if args.out:
        with open(args.out, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                ("operation", "path", "budget_bytes", "linear_coeff_s_per_row",
                 "intercept_s", "spill_threshold_rows", "n", "alpha_s")
            )
            w.writerows(out_rows)
        print(f"wrote {len(out_rows)} fit rows to {args.out}")
    return 0


_SERIES = {
    "join_scaling.csv": (
        ("n", "policy", "budget_bytes", "path_taken", "p50_s", "per_row_us"),
        lambda r: r.operation == "join",
        lambda r: (r.n_left, r.policy, r.budget_bytes, r.path_taken, r.p50_s,
                   b.round_sig(r.p50_s / r.n_left * 1e6) if r.n_left else 0.0),
    ),
    "sort_scaling.csv": (
        ("n", "policy", "budget_bytes", "path_taken", "p50_s", "per_row_us"),
        lambda r: r.operation == "sort",
        lambda r: (r.n_left, r.policy, r.budget_bytes, r.path_taken, r.p50_s,
                   b.round_sig(r.p50_s / r.n_left * 1e6) if r.n_left else 0.0),
    ),
    "peak_memory.csv": (
        ("n", "operation", "policy", "budget_bytes", "peak_mem_bytes"),
        lambda r: True,
        lambda r: (r.n_left, r.operation, r.policy, r.budget_bytes,
                   r.peak_mem_bytes),
    ),
    "tail_latency.csv": (
        ("n", "operation", "policy", "budget_bytes", "p50_s", "p95_s", "p99_s",
         "max_s"),
        lambda r: True,
        lambda r: (r.n_left, r.operation, r.policy, r.budget_bytes, r.p50_s,
                   r.p95_s, r.p99_s, r.max_s),
    ),
    "p99_vs_input.csv": (
        ("n", "operation", "policy", "budget_bytes", "p99_s"),
        lambda r: True,
        lambda r: (r.n_left, r.operation, r.policy, r.budget_bytes, r.p99_s),
    ),
    "temp_io.csv": (
        ("n", "operation", "policy", "budget_bytes", "temp_blocks", "temp_mb"),
        lambda r: True,
        lambda r: (r.n_left, r.operation, r.policy, r.budget_bytes,
                   r.temp_blocks, r.temp_mb),
    ),
}


def cmd_report(args) -> int:
    rows = []
    for path in args.input:
        rows.extend(b.read_sweep_csv(path))
    rows = [r for r in rows if r.path_taken != "error"]
    rows.sort(key=lambda r: (r.operation, r.budget_bytes, r.policy, r.n_left))
    out_dir = FsPath(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (header, keep, project) in _SERIES.items():
        path = out_dir / name
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for r in rows:
                if keep(r):
                    w.writerow(project(r))
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (RelabError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
