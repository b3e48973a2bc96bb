"""The dimension-preserving execution path.

Relations become one contiguous array per attribute axis plus a sparse
sorted key axis (distinct keys with grouped row positions). Joins align
the two key axes with a merge over the sorted distinct keys and expand
per-key position-list products; sorts run stable per-axis passes from
least-significant key to most-significant. Nothing here ever touches an
arena: the zero-spill law holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutputTooLarge, UnknownAttribute
from .relation import Bytes, Int64, Relation, Schema, join_output_schema
from .specs import Direction, SortSpec
from .spill import SpillStats

MAX_OUTPUT_ROWS = 2**31


@dataclass(frozen=True)
class TensorRelation:
    """Attribute axes plus a sorted sparse key axis.

    key_values is strictly increasing; positions holds row indices grouped
    by key (offsets[i]:offsets[i+1] slices positions for key_values[i]),
    each group in original row order. The axes are the source columns
    unchanged, so flattening back to a Relation is the identity.
    """

    schema: Schema
    axes: tuple[np.ndarray, ...]
    key: str
    key_values: np.ndarray
    offsets: np.ndarray
    positions: np.ndarray

    def __post_init__(self) -> None:
        if len(self.offsets) != len(self.key_values) + 1:
            raise ValueError("offsets must have one more entry than key_values")
        if len(self.key_values) and not (np.diff(self.key_values) > 0).all():
            raise ValueError("key_values must be strictly increasing")
        if (len(self.offsets) and self.offsets[0] != 0) or (
            np.diff(self.offsets) < 0
        ).any():
            raise ValueError("offsets must start at 0 and be non-decreasing")
        if self.offsets[-1] != len(self.positions):
            raise ValueError("final offset must equal row count")

    @property
    def row_count(self) -> int:
        return len(self.positions)

    def to_relation(self) -> Relation:
        return Relation(self.schema, self.axes)


def _stable_key_order(keys: np.ndarray) -> np.ndarray:
    """argsort(keys, kind="stable"), computed the fastest safe way.

    When key * n + position cannot overflow, sorting those unique
    composites with the cheaper unstable sort reproduces the stable
    order exactly; otherwise fall back to the stable sort.
    """
    n = len(keys)
    if n > 1:
        lo, hi = int(keys.min()), int(keys.max())
        if max(abs(lo), abs(hi) + 1) < (2**62) // n:
            composite = keys * n + np.arange(n, dtype=np.int64)
            return np.argsort(composite, kind="quicksort")
    return np.argsort(keys, kind="stable")


def to_tensor(rel: Relation, key: str) -> TensorRelation:
    """Index a relation on its join key via a stable (key, position) sort."""
    if not isinstance(rel.schema.type_of(key), Int64):
        raise UnknownAttribute(f"key attribute {key!r} must be int64")
    keys = rel.column(key)
    positions = _stable_key_order(keys)
    sk = keys[positions]
    n = len(sk)
    if n:
        bounds = np.flatnonzero(np.concatenate(([True], sk[1:] != sk[:-1])))
        key_values = sk[bounds]
        offsets = np.concatenate([bounds, [n]]).astype(np.int64)
    else:
        key_values = np.empty(0, dtype=np.int64)
        offsets = np.zeros(1, dtype=np.int64)
    return TensorRelation(rel.schema, rel.columns, key, key_values, offsets, positions)


@dataclass(frozen=True)
class AxisAlignment:
    """Intersection of two key axes with both sides' grouped positions."""

    matched_keys: np.ndarray
    left_starts: np.ndarray
    left_counts: np.ndarray
    right_starts: np.ndarray
    right_counts: np.ndarray
    left_positions: np.ndarray
    right_positions: np.ndarray


def key_axis_align(left: TensorRelation, right: TensorRelation) -> AxisAlignment:
    """Match the two sorted distinct-key axes; position lists attach as-is."""
    a, b = left.key_values, right.key_values
    if len(a) == 0 or len(b) == 0:
        e = np.empty(0, dtype=np.int64)
        return AxisAlignment(e, e, e, e, e, left.positions, right.positions)
    ib = np.searchsorted(b, a)
    ib_c = np.minimum(ib, len(b) - 1)
    mask = b[ib_c] == a
    ia = np.flatnonzero(mask)
    ib = ib[ia]
    return AxisAlignment(
        a[ia],
        left.offsets[ia],
        left.offsets[ia + 1] - left.offsets[ia],
        right.offsets[ib],
        right.offsets[ib + 1] - right.offsets[ib],
        left.positions,
        right.positions,
    )


def tensor_join(
    left: TensorRelation,
    right: TensorRelation,
    max_output_rows: int = MAX_OUTPUT_ROWS,
) -> tuple[Relation, SpillStats]:
    """Join by key-axis alignment; never spills.

    For each matched key the two position lists expand to their product,
    then every output column is gathered in one pass per axis. Raises
    OutputTooLarge before materializing if the expansion would exceed
    max_output_rows.
    """
    if left.key != right.key:
        raise UnknownAttribute(
            f"inputs indexed on different keys: {left.key!r} vs {right.key!r}"
        )
    align = key_axis_align(left, right)
    out_schema = join_output_schema(left.schema, right.schema, left.key)
    per_key = align.left_counts * align.right_counts
    total = int(per_key.sum())
    if total > max_output_rows:
        raise OutputTooLarge(f"join would produce {total} rows (cap {max_output_rows})")
    if total == 0:
        stats = SpillStats()
        return Relation.empty(out_schema), stats

    # pair index arithmetic: pair t of matched key g maps to left position
    # local // c_right and right position local % c_right
    idx_t = np.int32 if total <= 2**31 - 1 else np.int64
    cum = np.zeros(len(per_key) + 1, dtype=np.int64)
    np.cumsum(per_key, out=cum[1:])
    local = np.arange(total, dtype=idx_t) - np.repeat(
        cum[:-1].astype(idx_t), per_key
    )
    cr = np.repeat(align.right_counts.astype(idx_t), per_key)
    li_local, ri_local = np.divmod(local, cr)
    left_rows = align.left_positions[
        np.repeat(align.left_starts, per_key) + li_local
    ]
    right_rows = align.right_positions[
        np.repeat(align.right_starts, per_key) + ri_local
    ]

    left_key_idx = left.schema.index(left.key)
    cols = [
        # the key column is the matched key itself: expand it sequentially
        np.repeat(align.matched_keys, per_key)
        if j == left_key_idx
        else axis[left_rows]
        for j, axis in enumerate(left.axes)
    ]
    key_idx = right.schema.index(right.key)
    cols.extend(
        axis[right_rows] for j, axis in enumerate(right.axes) if j != key_idx
    )
    out = Relation(out_schema, tuple(cols))

    index_bytes = (
        left.positions.nbytes
        + right.positions.nbytes
        + left.key_values.nbytes
        + right.key_values.nbytes
        + left.offsets.nbytes
        + right.offsets.nbytes
    )
    # local, cr, li/ri plus expanded starts and final row ids
    expansion_bytes = total * (4 * np.dtype(idx_t).itemsize + 4 * 8)
    out_bytes = sum(c.nbytes for c in cols)
    stats = SpillStats(
        peak_mem_bytes=index_bytes + expansion_bytes + out_bytes,
        peak_build_bytes=0,
    )
    return out, stats


def _stable_axis_order(values: np.ndarray, direction: Direction) -> np.ndarray:
    """Stable sort order of one axis, honoring its direction.

    int64 descending uses the bitwise complement (monotone-reversing,
    overflow-free). Byte axes sort by memcmp over fixed width: the
    (n, w) rows are padded to 8-byte words and passed through stable
    word-level sorts from least to most significant word.
    """
    if values.ndim == 1:
        v = np.invert(values) if direction is Direction.DESC else values
        return np.argsort(v, kind="stable")
    n, w = values.shape
    if w == 0 or n == 0:
        return np.arange(n, dtype=np.int64)
    if direction is Direction.DESC:
        values = np.invert(values)
    n_words = -(-w // 8)
    padded = np.zeros((n, n_words * 8), dtype=np.uint8)
    padded[:, :w] = values
    words = padded.view(">u8")
    order = np.arange(n, dtype=np.int64)
    for j in range(n_words - 1, -1, -1):
        order = order[np.argsort(words[order, j], kind="stable")]
    return order


def tensor_sort(rel: Relation, spec: SortSpec) -> tuple[Relation, SpillStats]:
    """Multi-key sort as stable per-axis passes; never spills.

    One permutation is refined by sorting on each key axis alone, from
    least-significant to most-significant; the final permutation is
    applied column-at-a-time. Equivalent to the comparator oracle,
    including tie order.
    """
    for k in spec.keys:
        rel.schema.index(k)
    n = rel.row_count
    perm = np.arange(n, dtype=np.int64)
    for key, direction in reversed(tuple(zip(spec.keys, spec.directions))):
        axis = rel.column(key)
        perm = perm[_stable_axis_order(axis[perm], direction)]
    out = rel.take(perm)
    stats = SpillStats(
        peak_mem_bytes=2 * perm.nbytes + sum(c.nbytes for c in out.columns),
        peak_build_bytes=0,
    )
    return out, stats
