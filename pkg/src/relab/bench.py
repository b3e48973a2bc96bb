"""Experiment runner: forced/auto executions with repetition, latency
percentiles, spill metrics, (N, M) sweeps, and plot-ready CSV.

Inputs are generated once per experiment and reused across repetitions;
all randomness flows from the GenSpec seeds, so everything except wall
times is bit-reproducible. The temp directory comes from the config,
the RELAB_TEMP_DIR environment variable, or the system default, in that
order.
"""

from __future__ import annotations

import configparser
import csv
import ctypes
import math
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path as FsPath
from typing import Iterable, Optional, Sequence, TextIO, Union

from .errors import DigestMismatch, EmptySamples, RelabError
from .relation import (
    GenSpec,
    Relation,
    ResultDigest,
    Uniform,
    Zipf,
    generate_relation,
    multiset_digest,
)
from .rowpath import external_sort_row, hash_join_row
from .selector import (
    DEFAULT_FIT_FRACTION,
    DEFAULT_SMALL_INPUT_ROWS,
    Operation,
    Path,
    PathChoice,
    Policy,
    join_signals,
    select_path,
    sort_signals,
)
from .specs import Direction, JoinSpec, MemoryBudget, SortSpec
from .spill import BLOCK_SIZE, SpillStats, TempArena
from .tensorpath import MAX_OUTPUT_ROWS, tensor_join, tensor_sort, to_tensor

TEMP_DIR_ENV = "RELAB_TEMP_DIR"

SWEEP_COLUMNS = (
    "operation",
    "n_left",
    "n_right",
    "key_domain",
    "budget_bytes",
    "policy",
    "path_taken",
    "p50_s",
    "p95_s",
    "p99_s",
    "max_s",
    "temp_blocks",
    "temp_mb",
    "peak_mem_bytes",
    "digest_hex",
)


# glibc mallopt parameter ids
_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3
_allocator_state: Optional[bool] = None


def retain_large_allocations() -> bool:
    """Keep glibc from returning large freed buffers to the kernel.

    Desk-scale operators allocate and free 100MB-class buffers every
    repetition; with default thresholds each repetition pays tens of
    milliseconds of mmap/page-fault churn, which swamps the scaling
    signal being measured. Raising the mmap and trim thresholds lets
    repetitions reuse warm pages, so timings reflect the operator, not
    the page allocator. No-op (returns False) where glibc is absent.
    """
    global _allocator_state
    if _allocator_state is None:
        try:
            libc = ctypes.CDLL("libc.so.6", use_errno=True)
            _allocator_state = (
                libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30) == 1
                and libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30) == 1
            )
        except OSError:
            _allocator_state = False
    return _allocator_state


def percentile(samples: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: ascending index ceil(q/100 * n) - 1.

    The rank is computed with exact rational arithmetic on q, so an
    independent exact implementation always agrees. q must be in
    (0, 100]; q=100 returns the maximum.
    """
    if not samples:
        raise EmptySamples("percentile of no samples")
    if not 0 < q <= 100:
        raise ValueError(f"q must be in (0, 100], got {q}")
    ordered = sorted(samples)
    rank = math.ceil(Fraction(q) * len(ordered) / 100)
    return ordered[rank - 1]


@dataclass(frozen=True)
class LatencyDistribution:
    """Ascending wall-time samples with their nearest-rank percentiles."""

    samples: tuple[float, ...]
    p50: float
    p95: float
    p99: float
    max: float

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "LatencyDistribution":
        ordered = tuple(sorted(float(s) for s in samples))
        return cls(
            samples=ordered,
            p50=percentile(ordered, 50),
            p95=percentile(ordered, 95),
            p99=percentile(ordered, 99),
            max=ordered[-1],
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark cell: inputs, operation, budget, policy, repetition."""

    operation: Operation
    gen_left: GenSpec
    gen_right: Optional[GenSpec] = None
    join_key: str = "key"
    sort_keys: SortSpec = field(default_factory=lambda: SortSpec(("key",)))
    budget: MemoryBudget = field(default_factory=lambda: MemoryBudget(64 * 2**20))
    policy: Policy = Policy.AUTO
    repetitions: int = 30
    warmup: int = 3
    temp_dir: Optional[str] = None
    fit_fraction: float = DEFAULT_FIT_FRACTION
    small_input_rows: int = DEFAULT_SMALL_INPUT_ROWS
    max_output_rows: int = MAX_OUTPUT_ROWS
    label: str = ""

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.operation is Operation.JOIN and self.gen_right is None:
            object.__setattr__(
                self, "gen_right", replace(self.gen_left, seed=self.gen_left.seed + 1)
            )


@dataclass(frozen=True)
class BenchReport:
    config: ExperimentConfig
    path_taken: PathChoice
    latency: LatencyDistribution
    spill: SpillStats
    result_digest: ResultDigest
    output_rows: int

    @property
    def temp_mb(self) -> float:
        return self.spill.temp_blocks_written * BLOCK_SIZE / 2**20


def resolve_temp_dir(config: ExperimentConfig) -> str:
    return config.temp_dir or os.environ.get(TEMP_DIR_ENV) or tempfile.gettempdir()


def _execute(
    config: ExperimentConfig,
    left: Relation,
    right: Optional[Relation],
    path: Path,
    temp_dir: str,
) -> tuple[Relation, SpillStats]:
    if config.operation is Operation.JOIN:
        assert right is not None
        if path is Path.ROW:
            with TempArena(temp_dir) as arena:
                return hash_join_row(
                    left, right, JoinSpec(config.join_key), config.budget, arena
                )
        tl = to_tensor(left, config.join_key)
        tr = to_tensor(right, config.join_key)
        return tensor_join(tl, tr, config.max_output_rows)
    if path is Path.ROW:
        with TempArena(temp_dir) as arena:
            return external_sort_row(left, config.sort_keys, config.budget, arena)
    return tensor_sort(left, config.sort_keys)


def run_experiment(config: ExperimentConfig) -> BenchReport:
    """Generate inputs once, run warmup + repetitions, assemble the report.

    Every repetition's result digest must be identical (DigestMismatch
    otherwise); durations come from a monotonic clock and warmup samples
    never enter the statistics.
    """
    retain_large_allocations()
    temp_dir = resolve_temp_dir(config)
    left = generate_relation(config.gen_left)
    right = (
        generate_relation(config.gen_right)
        if config.operation is Operation.JOIN
        else None
    )
    if config.operation is Operation.JOIN:
        cardinality = max(
            min(config.gen_left.key_domain, config.gen_left.n),
            min(config.gen_right.key_domain, config.gen_right.n),
        )
        signals = join_signals(
            left, right, config.join_key, config.budget, key_cardinality=cardinality
        )
    else:
        signals = sort_signals(left, config.budget)
    choice = select_path(
        signals, config.policy, config.fit_fraction, config.small_input_rows
    )

    samples: list[float] = []
    digests: list[ResultDigest] = []
    rep_stats: Optional[SpillStats] = None
    output_rows = 0
    for rep in range(config.warmup + config.repetitions):
        t0 = time.perf_counter()
        out, stats = _execute(config, left, right, choice.path, temp_dir)
        elapsed = time.perf_counter() - t0
        digests.append(multiset_digest(out))
        output_rows = out.row_count
        if rep >= config.warmup:
            samples.append(elapsed)
            if rep_stats is None:
                rep_stats = stats
        del out
    first = digests[0]
    for i, d in enumerate(digests[1:], start=1):
        if d != first:
            raise DigestMismatch(
                f"repetition {i} digest {d.hex} != {first.hex}"
                f" ({config.label or config.operation.value})"
            )
    assert rep_stats is not None and len(samples) == config.repetitions
    return BenchReport(
        config=config,
        path_taken=choice,
        latency=LatencyDistribution.from_samples(samples),
        spill=rep_stats,
        result_digest=first,
        output_rows=output_rows,
    )


# ---------------------------------------------------------------------------
# Sweep CSV
# ---------------------------------------------------------------------------

def round_sig(x: float, digits: int = 6) -> float:
    """Round to `digits` significant digits (the CSV float precision)."""
    return float(f"{x:.{digits}g}")


@dataclass(frozen=True)
class SweepRow:
    """One CSV data row; float fields carry 6 significant digits."""

    operation: str
    n_left: int
    n_right: int
    key_domain: int
    budget_bytes: int
    policy: str
    path_taken: str
    p50_s: float
    p95_s: float
    p99_s: float
    max_s: float
    temp_blocks: int
    temp_mb: float
    peak_mem_bytes: int
    digest_hex: str


def report_to_row(report: BenchReport) -> SweepRow:
    cfg = report.config
    return SweepRow(
        operation=cfg.operation.value,
        n_left=cfg.gen_left.n,
        n_right=cfg.gen_right.n if cfg.gen_right else 0,
        key_domain=cfg.gen_left.key_domain,
        budget_bytes=cfg.budget.bytes,
        policy=cfg.policy.value,
        path_taken=report.path_taken.path.value,
        p50_s=round_sig(report.latency.p50),
        p95_s=round_sig(report.latency.p95),
        p99_s=round_sig(report.latency.p99),
        max_s=round_sig(report.latency.max),
        temp_blocks=report.spill.temp_blocks_written,
        temp_mb=round_sig(report.temp_mb),
        peak_mem_bytes=report.spill.peak_mem_bytes,
        digest_hex=report.result_digest.hex,
    )


def error_row(config: ExperimentConfig, exc: Exception) -> SweepRow:
    return SweepRow(
        operation=config.operation.value,
        n_left=config.gen_left.n,
        n_right=config.gen_right.n if config.gen_right else 0,
        key_domain=config.gen_left.key_domain,
        budget_bytes=config.budget.bytes,
        policy=config.policy.value,
        path_taken="error",
        p50_s=0.0,
        p95_s=0.0,
        p99_s=0.0,
        max_s=0.0,
        temp_blocks=0,
        temp_mb=0.0,
        peak_mem_bytes=0,
        digest_hex=type(exc).__name__,
    )


def sweep(
    configs: Iterable[ExperimentConfig],
    progress: Optional[TextIO] = None,
) -> list[SweepRow]:
    """Run every config sequentially; a failed cell becomes an error row."""
    rows: list[SweepRow] = []
    for config in configs:
        try:
            row = report_to_row(run_experiment(config))
        except (RelabError, OSError) as exc:
            row = error_row(config, exc)
        rows.append(row)
        if progress is not None:
            print(
                f"{row.operation} n={row.n_left} budget={row.budget_bytes}"
                f" policy={row.policy} -> {row.path_taken}"
                f" p99={row.p99_s}s temp={row.temp_mb}MB",
                file=progress,
                flush=True,
            )
    return rows


def _format_value(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def write_sweep_csv(rows: Sequence[SweepRow], path: Union[str, FsPath]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow(_format_value(getattr(row, c)) for c in SWEEP_COLUMNS)


def append_sweep_row(row: SweepRow, path: Union[str, FsPath]) -> None:
    exists = FsPath(path).exists()
    with open(path, "a", newline="") as f:
        w = csv.writer(f)
        if not exists:
            w.writerow(SWEEP_COLUMNS)
        w.writerow(_format_value(getattr(row, c)) for c in SWEEP_COLUMNS)


def read_sweep_csv(path: Union[str, FsPath]) -> list[SweepRow]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or tuple(reader.fieldnames) != SWEEP_COLUMNS:
            raise ValueError(f"{path}: unexpected sweep CSV columns")
        for rec in reader:
            rows.append(
                SweepRow(
                    operation=rec["operation"],
                    n_left=int(rec["n_left"]),
                    n_right=int(rec["n_right"]),
                    key_domain=int(rec["key_domain"]),
                    budget_bytes=int(rec["budget_bytes"]),
                    policy=rec["policy"],
                    path_taken=rec["path_taken"],
                    p50_s=float(rec["p50_s"]),
                    p95_s=float(rec["p95_s"]),
                    p99_s=float(rec["p99_s"]),
                    max_s=float(rec["max_s"]),
                    temp_blocks=int(rec["temp_blocks"]),
                    temp_mb=float(rec["temp_mb"]),
                    peak_mem_bytes=int(rec["peak_mem_bytes"]),
                    digest_hex=rec["digest_hex"],
                )
            )
    return rows


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

_SIZE_SUFFIXES = {"B": 1, "KB": 2**10, "MB": 2**20, "GB": 2**30}


def parse_size(text: str) -> int:
    """'64MB' -> 67108864; binary units, bare integers are bytes."""
    t = text.strip().upper()
    for suffix in ("GB", "MB", "KB", "B"):
        if t.endswith(suffix):
            return int(float(t[: -len(suffix)]) * _SIZE_SUFFIXES[suffix])
    return int(t)


def parse_distribution(text: str):
    t = text.strip().lower()
    if t == "uniform":
        return Uniform()
    if t.startswith("zipf:"):
        return Zipf(float(t.split(":", 1)[1]))
    raise ValueError(f"unknown distribution {text!r} (use uniform or zipf:S)")


def parse_sort_keys(text: str) -> SortSpec:
    """'key, payload:desc' -> SortSpec with per-key directions."""
    keys = []
    dirs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            name, d = part.split(":", 1)
            keys.append(name.strip())
            dirs.append(Direction(d.strip().lower()))
        else:
            keys.append(part)
            dirs.append(Direction.ASC)
    return SortSpec(tuple(keys), tuple(dirs))


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def load_config_file(path: Union[str, FsPath]) -> list[ExperimentConfig]:
    """Parse a line-oriented key=value config into experiment configs.

    Sections are experiments; [DEFAULT] supplies shared values. The keys
    n, budget, and policy accept comma lists and expand to their cross
    product; key_domain may be the literal `n` to track the row count.
    """
    parser = configparser.ConfigParser()
    with open(path) as f:
        parser.read_file(f)
    configs: list[ExperimentConfig] = []
    for section in parser.sections():
        sec = parser[section]
        operation = Operation(sec.get("operation", "join").lower())
        ns = [int(v) for v in _split_list(sec.get("n", "1000"))]
        budgets = [parse_size(v) for v in _split_list(sec.get("budget", "64MB"))]
        policies = [Policy(v.lower()) for v in _split_list(sec.get("policy", "auto"))]
        payload_width = sec.getint("payload_width", 92)
        distribution = parse_distribution(sec.get("distribution", "uniform"))
        seed = sec.getint("seed", 0)
        seed_right = sec.getint("seed_right", seed + 1)
        reps = sec.getint("repetitions", 30)
        warmup = sec.getint("warmup", 3)
        temp_dir = sec.get("temp_dir", None)
        fit_fraction = sec.getfloat("fit_fraction", DEFAULT_FIT_FRACTION)
        small_input = sec.getint("small_input_rows", DEFAULT_SMALL_INPUT_ROWS)
        max_out = sec.getint("max_output_rows", MAX_OUTPUT_ROWS)
        sort_keys = parse_sort_keys(sec.get("sort_keys", "key"))
        domain_raw = sec.get("key_domain", "n").strip().lower()
        for n in ns:
            key_domain = n if domain_raw == "n" else int(domain_raw)
            key_domain = max(1, key_domain)
            n_right = sec.getint("n_right", n)
            gen_left = GenSpec(n, key_domain, distribution, payload_width, seed)
            gen_right = GenSpec(
                n_right, key_domain, distribution, payload_width, seed_right
            )
            for budget in budgets:
                for policy in policies:
                    configs.append(
                        ExperimentConfig(
                            operation=operation,
                            gen_left=gen_left,
                            gen_right=gen_right if operation is Operation.JOIN else None,
                            sort_keys=sort_keys,
                            budget=MemoryBudget(budget),
                            policy=policy,
                            repetitions=reps,
                            warmup=warmup,
                            temp_dir=temp_dir,
                            fit_fraction=fit_fraction,
                            small_input_rows=small_input,
                            max_output_rows=max_out,
                            label=f"{section}/n={n}/m={budget}/{policy.value}",
                        )
                    )
    return configs
