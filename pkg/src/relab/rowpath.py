"""The linear execution path: memory-budgeted hash join and external sort.

The join builds a hash table when the build side fits the budget and
otherwise partitions both inputs by key hash into the arena, recursing
per partition pair with a reseeded hash. The sort cuts budget-sized
sorted runs and k-way merges them. Memory accounting is in serialized
tuple bytes (widths are fixed, so the estimate is exact); auxiliary
bucket/index arrays travel with the one-block-per-partition slack the
budget contract grants.
"""

from __future__ import annotations

import heapq
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import BudgetTooSmall, UnknownAttribute
from .hashing import hash_i64
from .relation import Int64, Relation, Schema, join_output_schema
from .specs import BuildSide, Direction, JoinSpec, MemoryBudget, SortSpec
from .spill import BLOCK_SIZE, SpillStats, TempArena

JOIN_BASE_SEED = 0x9E3779B97F4A7C15
_RESEED_MULT = 0x2545F4914F6CDD1D  # odd, so reseeding never collapses the seed
_BUCKET_SALT = 0x6A09E667F3BCC909
MAX_RECURSION = 8
MAX_FANOUT = 1024
MERGE_FANIN = 64

_COMPLEMENT = bytes(255 - i for i in range(256))


class _Meter:
    """Tracks the peak of engine-accounted resident bytes."""

    def __init__(self) -> None:
        self.peak = 0

    def bump(self, current: int) -> None:
        if current > self.peak:
            self.peak = current


def _reseed(seed: int, depth: int) -> int:
    return (seed * _RESEED_MULT + depth) & ((1 << 64) - 1)


def _require_int64_key(schema: Schema, key: str, side: str) -> None:
    if not isinstance(schema.type_of(key), Int64):
        raise UnknownAttribute(f"join key {key!r} must be int64 in {side} schema")


def _bucket_pairs(
    build_keys: np.ndarray, probe_keys: np.ndarray, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Hash-table equi-join of two int64 key arrays, returning index pairs.

    Build rows are grouped into power-of-two hash buckets (load <= 0.5);
    each probe key expands to its bucket's candidates, and false
    candidates are dropped by key comparison. Fully vectorized.
    """
    nb = len(build_keys)
    npr = len(probe_keys)
    empty = np.empty(0, dtype=np.int64)
    if nb == 0 or npr == 0:
        return empty, empty
    size = 1 << max(3, (2 * nb - 1).bit_length())
    mask = np.uint64(size - 1)
    bucket_dtype = np.int32 if size <= 2**31 else np.int64
    hb = (hash_i64(build_keys, seed) & mask).astype(bucket_dtype)
    # within-bucket order is irrelevant to the output multiset, so the
    # cheaper unstable sort groups the buckets
    grouped = np.argsort(hb, kind="quicksort")
    counts = np.bincount(hb, minlength=size)
    starts = np.zeros(size + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    hp = (hash_i64(probe_keys, seed) & mask).astype(bucket_dtype)
    cand_counts = counts[hp]
    total = int(cand_counts.sum())
    if total == 0:
        return empty, empty
    cum = np.zeros(npr + 1, dtype=np.int64)
    np.cumsum(cand_counts, out=cum[1:])
    within = np.arange(total, dtype=np.int64) - np.repeat(cum[:-1], cand_counts)
    cand = np.repeat(starts[hp], cand_counts) + within
    build_rows = grouped[cand]
    probe_rows = np.repeat(np.arange(npr, dtype=np.int64), cand_counts)
    eq = build_keys[build_rows] == probe_keys[probe_rows]
    return build_rows[eq], probe_rows[eq]


def _matrix_keys(matrix: np.ndarray, key_offset: int) -> np.ndarray:
    return np.ascontiguousarray(matrix[:, key_offset : key_offset + 8]).view(
        "<i8"
    ).ravel()


class _JoinContext:
    """Shared state for one hash_join_row invocation."""

    def __init__(
        self,
        left: Relation,
        right: Relation,
        key: str,
        build_side: BuildSide,
        budget: MemoryBudget,
        arena: TempArena,
    ):
        self.key = key
        self.build_side = build_side
        self.budget = budget
        self.arena = arena
        self.meter = _Meter()
        self.peak_build = 0
        self.out_schema = join_output_schema(left.schema, right.schema, key)
        if build_side is BuildSide.LEFT:
            self.build_rel, self.probe_rel = left, right
        else:
            self.build_rel, self.probe_rel = right, left
        self.build_width = self.build_rel.schema.row_width
        self.probe_width = self.probe_rel.schema.row_width
        self.build_key_off = self.build_rel.schema.offsets[
            self.build_rel.schema.index(key)
        ]
        self.probe_key_off = self.probe_rel.schema.offsets[
            self.probe_rel.schema.index(key)
        ]
        self.chunks: list[np.ndarray] = []
        self.in_memory_columns: tuple[np.ndarray, ...] = ()
        self.out_bytes = 0
        self._stream_seq = 0

    def next_stream(self, side: str) -> str:
        self._stream_seq += 1
        return f"j{self._stream_seq:06d}-{side}"

    def note_build(self, nbytes: int) -> None:
        if nbytes > self.peak_build:
            self.peak_build = nbytes

    def emit_matrix_pair(
        self,
        build_mat: np.ndarray,
        probe_mat: np.ndarray,
        build_rows: np.ndarray,
        probe_rows: np.ndarray,
    ) -> None:
        """Materialize output rows for one joined partition pair."""
        if len(build_rows) == 0:
            return
        if self.build_side is BuildSide.LEFT:
            lmat, li = build_mat, build_rows
            rmat, ri = probe_mat, probe_rows
            r_key_off = self.probe_key_off
            r_width = self.probe_width
        else:
            lmat, li = probe_mat, probe_rows
            rmat, ri = build_mat, build_rows
            r_key_off = self.build_key_off
            r_width = self.build_width
        right_rows = rmat[ri]
        chunk = np.concatenate(
            [
                lmat[li],
                right_rows[:, :r_key_off],
                right_rows[:, r_key_off + 8 : r_width],
            ],
            axis=1,
        )
        self.chunks.append(chunk)
        self.out_bytes += chunk.nbytes


def hash_join_row(
    left: Relation,
    right: Relation,
    spec: JoinSpec,
    budget: MemoryBudget,
    arena: TempArena,
) -> tuple[Relation, SpillStats]:
    """Equi-join with the output row multiset of the nested-loop oracle.

    In-memory when the serialized build side fits the budget, else
    Grace-style: both sides are hash-partitioned into the arena with
    fanout min(1024, ceil(build_bytes / budget) + 1) and each partition
    pair is joined recursively under a reseeded hash. Raises
    BudgetTooSmall once a partition still exceeds the budget after
    8 recursion levels (unjoinable key skew).
    """
    _require_int64_key(left.schema, spec.key, "left")
    _require_int64_key(right.schema, spec.key, "right")
    start = arena.stats.copy()

    build_side = spec.build_side
    if build_side is None:
        lbytes = left.row_count * left.schema.row_width
        rbytes = right.row_count * right.schema.row_width
        build_side = BuildSide.LEFT if lbytes <= rbytes else BuildSide.RIGHT
    ctx = _JoinContext(left, right, spec.key, build_side, budget, arena)

    est_build = ctx.build_rel.row_count * ctx.build_width
    probe_bytes = ctx.probe_rel.row_count * ctx.probe_width
    if est_build <= budget.bytes:
        _join_in_memory_columns(ctx)
        ctx.meter.bump(est_build + probe_bytes + ctx.out_bytes)
        out = _assemble_columns(ctx)
    else:
        build_mat = ctx.build_rel.serialize()
        probe_mat = ctx.probe_rel.serialize()
        ctx.meter.bump(est_build + probe_bytes)
        _join_partitioned(
            ctx,
            build_mat,
            _matrix_keys(build_mat, ctx.build_key_off),
            probe_mat,
            _matrix_keys(probe_mat, ctx.probe_key_off),
            depth=0,
            seed=JOIN_BASE_SEED,
        )
        out = _assemble_matrix(ctx)

    stats = arena.stats.copy()
    stats.temp_bytes_written -= start.temp_bytes_written
    stats.temp_blocks_written -= start.temp_blocks_written
    stats.temp_bytes_read -= start.temp_bytes_read
    stats.partition_passes -= start.partition_passes
    stats.sort_runs -= start.sort_runs
    stats.peak_mem_bytes = ctx.meter.peak
    stats.peak_build_bytes = ctx.peak_build
    return out, stats


def _join_in_memory_columns(ctx: _JoinContext) -> None:
    """Whole-input hash join straight off the column arrays."""
    build_keys = ctx.build_rel.column(ctx.key)
    probe_keys = ctx.probe_rel.column(ctx.key)
    ctx.note_build(len(build_keys) * ctx.build_width)
    bi, pi = _bucket_pairs(build_keys, probe_keys, JOIN_BASE_SEED ^ _BUCKET_SALT)
    if ctx.build_side is BuildSide.LEFT:
        lrel, li, rrel, ri = ctx.build_rel, bi, ctx.probe_rel, pi
    else:
        lrel, li, rrel, ri = ctx.probe_rel, pi, ctx.build_rel, bi
    cols = [c[li] for c in lrel.columns]
    key_idx = rrel.schema.index(ctx.key)
    cols.extend(c[ri] for j, c in enumerate(rrel.columns) if j != key_idx)
    ctx.in_memory_columns = tuple(cols)
    ctx.out_bytes = sum(c.nbytes for c in cols)


def _assemble_columns(ctx: _JoinContext) -> Relation:
    return Relation(ctx.out_schema, ctx.in_memory_columns)


def _assemble_matrix(ctx: _JoinContext) -> Relation:
    if not ctx.chunks:
        return Relation.empty(ctx.out_schema)
    matrix = ctx.chunks[0] if len(ctx.chunks) == 1 else np.concatenate(ctx.chunks)
    ctx.chunks.clear()
    return Relation.from_matrix(ctx.out_schema, matrix)


def _join_partitioned(
    ctx: _JoinContext,
    build_mat: np.ndarray,
    build_keys: np.ndarray,
    probe_mat: np.ndarray,
    probe_keys: np.ndarray,
    depth: int,
    seed: int,
) -> None:
    est = build_mat.shape[0] * ctx.build_width
    if est <= ctx.budget.bytes:
        ctx.note_build(est)
        bi, pi = _bucket_pairs(build_keys, probe_keys, seed ^ _BUCKET_SALT)
        ctx.meter.bump(
            est + probe_mat.nbytes + ctx.out_bytes + 16 * len(bi)
        )
        ctx.emit_matrix_pair(build_mat, probe_mat, bi, pi)
        return
    if depth >= MAX_RECURSION:
        raise BudgetTooSmall(
            f"build partition of {est} bytes still exceeds budget"
            f" {ctx.budget.bytes} after {MAX_RECURSION} partitioning levels"
        )
    fanout = min(MAX_FANOUT, -(-est // ctx.budget.bytes) + 1)
    ctx.arena.stats.partition_passes += 1
    build_ids = _spill_partitions(ctx, build_mat, build_keys, fanout, seed, "b")
    probe_ids = _spill_partitions(ctx, probe_mat, probe_keys, fanout, seed, "p")
    del build_mat, probe_mat, build_keys, probe_keys
    child_seed = _reseed(seed, depth + 1)
    for bid, pid in zip(build_ids, probe_ids):
        if bid is None or pid is None:
            continue
        bmat = ctx.arena.read_stream_matrix(bid)
        pmat = ctx.arena.read_stream_matrix(pid)
        _join_partitioned(
            ctx,
            bmat,
            _matrix_keys(bmat, ctx.build_key_off),
            pmat,
            _matrix_keys(pmat, ctx.probe_key_off),
            depth + 1,
            child_seed,
        )


def _spill_partitions(
    ctx: _JoinContext,
    matrix: np.ndarray,
    keys: np.ndarray,
    fanout: int,
    seed: int,
    side: str,
) -> list[Optional[str]]:
    """Hash-partition a serialized side into arena streams."""
    part = (hash_i64(keys, seed) % np.uint64(fanout)).astype(np.int32)
    order = np.argsort(part, kind="quicksort")
    bounds = np.searchsorted(part[order], np.arange(fanout + 1, dtype=np.int32))
    ids: list[Optional[str]] = []
    largest = 0
    for p in range(fanout):
        lo, hi = int(bounds[p]), int(bounds[p + 1])
        if lo == hi:
            ids.append(None)
            continue
        sid = ctx.next_stream(side)
        rows = matrix[order[lo:hi]]
        largest = max(largest, rows.nbytes)
        ctx.arena.spill_rows(sid, rows)
        ids.append(sid)
    ctx.meter.bump(matrix.nbytes + largest + fanout * BLOCK_SIZE)
    return ids


# ---------------------------------------------------------------------------
# External merge sort
# ---------------------------------------------------------------------------

def _validate_sort_spec(schema: Schema, spec: SortSpec) -> None:
    for k in spec.keys:
        schema.index(k)


def _decorated_order(rel: Relation, spec: SortSpec, start: int, stop: int) -> np.ndarray:
    """Stable sort order of rows [start, stop) as local indices.

    Single comparison pass over decorated tuples: ints negated for
    descending keys, byte fields complemented. The trailing original
    index makes ties stable.
    """
    n = stop - start
    decorated: list[list] = []
    for key, d in zip(spec.keys, spec.directions):
        idx = rel.schema.index(key)
        t = rel.schema.attributes[idx][1]
        col = rel.columns[idx][start:stop]
        if isinstance(t, Int64):
            vals = col.tolist()
            if d is Direction.DESC:
                vals = [-v for v in vals]
        else:
            raw = col.tobytes()
            w = t.width
            vals = [raw[i * w : (i + 1) * w] for i in range(n)]
            if d is Direction.DESC:
                vals = [v.translate(_COMPLEMENT) for v in vals]
        decorated.append(vals)
    decorated.append(range(n))
    items = sorted(zip(*decorated))
    return np.fromiter((it[-1] for it in items), dtype=np.int64, count=n)


def _row_key_fn(schema: Schema, spec: SortSpec) -> Callable[[bytes], tuple]:
    """Sort-key extractor for canonical row bytes (used while merging)."""
    extractors = []
    for key, d in zip(spec.keys, spec.directions):
        idx = schema.index(key)
        off = schema.offsets[idx]
        t = schema.attributes[idx][1]
        if isinstance(t, Int64):
            if d is Direction.ASC:
                extractors.append(
                    lambda row, off=off: int.from_bytes(
                        row[off : off + 8], "little", signed=True
                    )
                )
            else:
                extractors.append(
                    lambda row, off=off: -int.from_bytes(
                        row[off : off + 8], "little", signed=True
                    )
                )
        else:
            w = t.width
            if d is Direction.ASC:
                extractors.append(lambda row, off=off, w=w: row[off : off + w])
            else:
                extractors.append(
                    lambda row, off=off, w=w: row[off : off + w].translate(
                        _COMPLEMENT
                    )
                )

    def key_of(row: bytes) -> tuple:
        return tuple(f(row) for f in extractors)

    return key_of


def external_sort_row(
    rel: Relation,
    spec: SortSpec,
    budget: MemoryBudget,
    arena: TempArena,
) -> tuple[Relation, SpillStats]:
    """Stable lexicographic sort matching comparison_sort_oracle row-for-row.

    Fits-in-budget inputs sort in memory with zero spill. Otherwise the
    input is cut into sorted runs of at most budget bytes, spilled, and
    merged 64 runs at a time (extra passes when runs exceed the fan-in);
    sort_runs counts every run written to temp, merge outputs included.
    """
    _validate_sort_spec(rel.schema, spec)
    start = arena.stats.copy()
    n = rel.row_count
    width = rel.schema.row_width
    meter = _Meter()
    peak_build = 0

    if n * width <= budget.bytes:
        order = _decorated_order(rel, spec, 0, n)
        out = rel.take(order)
        peak_build = n * width
        meter.bump(2 * n * width)
        stats = SpillStats(peak_mem_bytes=meter.peak, peak_build_bytes=peak_build)
        return out, stats

    matrix = rel.serialize()
    rows_per_run = max(1, budget.bytes // width)
    run_ids: list[str] = []
    for lo in range(0, n, rows_per_run):
        hi = min(lo + rows_per_run, n)
        order = _decorated_order(rel, spec, lo, hi)
        sid = f"run-{len(run_ids):06d}"
        arena.spill_rows(sid, matrix[order + lo])
        arena.stats.sort_runs += 1
        run_ids.append(sid)
        peak_build = max(peak_build, (hi - lo) * width)
    meter.bump(matrix.nbytes + peak_build)
    del matrix

    key_of = _row_key_fn(rel.schema, spec)

    def tagged(sid: str, seq: int) -> Iterator[tuple]:
        for pos, row in enumerate(arena.read_stream(sid)):
            yield key_of(row), seq, pos, row

    merge_seq = len(run_ids)
    while len(run_ids) > MERGE_FANIN:
        next_ids: list[str] = []
        for g in range(0, len(run_ids), MERGE_FANIN):
            group = run_ids[g : g + MERGE_FANIN]
            merged = [
                item[3]
                for item in heapq.merge(
                    *(tagged(sid, i) for i, sid in enumerate(group))
                )
            ]
            sid = f"run-{merge_seq:06d}"
            merge_seq += 1
            flat = np.frombuffer(b"".join(merged), dtype=np.uint8)
            arena.spill_rows(sid, flat.reshape(len(merged), width))
            arena.stats.sort_runs += 1
            next_ids.append(sid)
            meter.bump(2 * len(merged) * width + len(group) * BLOCK_SIZE)
        run_ids = next_ids

    rows = [
        item[3]
        for item in heapq.merge(*(tagged(sid, i) for i, sid in enumerate(run_ids)))
    ]
    meter.bump(2 * len(rows) * width + len(run_ids) * BLOCK_SIZE)
    flat = np.frombuffer(b"".join(rows), dtype=np.uint8)
    out = Relation.from_matrix(rel.schema, flat.reshape(n, width))

    stats = arena.stats.copy()
    stats.temp_bytes_written -= start.temp_bytes_written
    stats.temp_blocks_written -= start.temp_blocks_written
    stats.temp_bytes_read -= start.temp_bytes_read
    stats.partition_passes -= start.partition_passes
    stats.sort_runs -= start.sort_runs
    stats.peak_mem_bytes = meter.peak
    stats.peak_build_bytes = peak_build
    return out, stats
