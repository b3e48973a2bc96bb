"""Runtime choice between the row path and the tensor path.

The decision reads only signals that are cheap to observe when the
operator starts: input sizes, the serialized build-side bytes, a key
cardinality estimate, and the memory budget. No cost formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .relation import Relation
from .specs import MemoryBudget

DEFAULT_FIT_FRACTION = 0.75
DEFAULT_SMALL_INPUT_ROWS = 50_000
CARDINALITY_SAMPLE_ROWS = 4096


class Operation(Enum):
    JOIN = "join"
    SORT = "sort"


class Path(Enum):
    ROW = "row"
    TENSOR = "tensor"


class Policy(Enum):
    AUTO = "auto"
    FORCE_ROW = "force_row"
    FORCE_TENSOR = "force_tensor"


class Reason(Enum):
    FITS_IN_MEMORY = "fits_in_memory"
    SPILL_RISK_HIGH = "spill_risk_high"
    SMALL_INPUT = "small_input"
    FORCED = "forced"


@dataclass(frozen=True)
class RuntimeSignals:
    """Observable inputs to the path decision for one operation."""

    operation: Operation
    n_left: int
    n_right: int
    serialized_bytes_build: int
    key_cardinality_estimate: int
    output_row_width: int
    budget: MemoryBudget
    expected_intermediate_bytes: Optional[int] = None

    def __post_init__(self) -> None:
        for f in ("n_left", "n_right", "serialized_bytes_build",
                  "key_cardinality_estimate", "output_row_width"):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be non-negative")


@dataclass(frozen=True)
class PathChoice:
    path: Path
    reason: Reason
    signals: RuntimeSignals


def estimate_intermediate(signals: RuntimeSignals) -> int:
    """Expected materialized output bytes.

    Joins: n_left * n_right / key_cardinality rows at output width
    (uniform-key expectation). Sorts are size-preserving.
    """
    if signals.operation is Operation.SORT:
        return signals.n_left * signals.output_row_width
    d = max(1, signals.key_cardinality_estimate)
    rows = round(signals.n_left * signals.n_right / d)
    return int(rows) * signals.output_row_width


def with_estimate(signals: RuntimeSignals) -> RuntimeSignals:
    return replace(
        signals, expected_intermediate_bytes=estimate_intermediate(signals)
    )


def select_path(
    signals: RuntimeSignals,
    policy: Policy = Policy.AUTO,
    fit_fraction: float = DEFAULT_FIT_FRACTION,
    small_input_rows: int = DEFAULT_SMALL_INPUT_ROWS,
) -> PathChoice:
    """Pure decision function; identical signals give identical choices.

    Auto rule: the row path when the build side fits comfortably in the
    budget (<= fit_fraction of it) or the whole input is small; the
    tensor path once spilling is the likely alternative.
    """
    if policy is Policy.FORCE_ROW:
        return PathChoice(Path.ROW, Reason.FORCED, signals)
    if policy is Policy.FORCE_TENSOR:
        return PathChoice(Path.TENSOR, Reason.FORCED, signals)
    if signals.serialized_bytes_build <= fit_fraction * signals.budget.bytes:
        return PathChoice(Path.ROW, Reason.FITS_IN_MEMORY, signals)
    if signals.n_left + signals.n_right <= small_input_rows:
        return PathChoice(Path.ROW, Reason.SMALL_INPUT, signals)
    return PathChoice(Path.TENSOR, Reason.SPILL_RISK_HIGH, signals)


def estimate_key_cardinality(
    rel: Relation, key: str, sample_rows: int = CARDINALITY_SAMPLE_ROWS
) -> int:
    """Distinct-key estimate: exact when n <= sample_rows, else scaled.

    Samples an evenly strided subset and applies the first-order
    scale-up d + (sqrt(n/s) - 1) * f1, where f1 counts values seen once
    in the sample. Deterministic for a given relation.
    """
    keys = rel.column(key)
    n = len(keys)
    if n == 0:
        return 0
    if n <= sample_rows:
        return int(len(np.unique(keys)))
    stride = n / sample_rows
    idx = (np.arange(sample_rows) * stride).astype(np.int64)
    sample = keys[idx]
    _, counts = np.unique(sample, return_counts=True)
    d = len(counts)
    f1 = int((counts == 1).sum())
    est = d + (np.sqrt(n / sample_rows) - 1.0) * f1
    return int(min(n, max(d, round(est))))


def join_signals(
    left: Relation,
    right: Relation,
    key: str,
    budget: MemoryBudget,
    key_cardinality: Optional[int] = None,
) -> RuntimeSignals:
    """Signals for an equi-join, build side taken as the smaller input."""
    from .relation import join_output_schema  # local to avoid cycles at import

    lbytes = left.row_count * left.schema.row_width
    rbytes = right.row_count * right.schema.row_width
    if key_cardinality is None:
        key_cardinality = max(
            estimate_key_cardinality(left, key),
            estimate_key_cardinality(right, key),
        )
    out_width = join_output_schema(left.schema, right.schema, key).row_width
    return with_estimate(
        RuntimeSignals(
            operation=Operation.JOIN,
            n_left=left.row_count,
            n_right=right.row_count,
            serialized_bytes_build=min(lbytes, rbytes),
            key_cardinality_estimate=key_cardinality,
            output_row_width=out_width,
            budget=budget,
        )
    )


def sort_signals(rel: Relation, budget: MemoryBudget) -> RuntimeSignals:
    return with_estimate(
        RuntimeSignals(
            operation=Operation.SORT,
            n_left=rel.row_count,
            n_right=0,
            serialized_bytes_build=rel.row_count * rel.schema.row_width,
            key_cardinality_estimate=0,
            output_row_width=rel.schema.row_width,
            budget=budget,
        )
    )
