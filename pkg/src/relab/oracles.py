"""Brute-force reference implementations used to verify both engines.

These deliberately avoid the hash tables, partitioning, and per-axis
passes of the real paths: the join scans every right row per left row,
the sort runs a single comparator-based pass. O(n^2) is fine here.
"""

from __future__ import annotations

import functools
from typing import Optional, Sequence

import numpy as np

from .errors import UnknownAttribute
from .relation import Int64, Relation, join_output_schema
from .specs import Direction


def nested_loop_join_oracle(left: Relation, right: Relation, key: str) -> Relation:
    """All (l, r) pairs with equal key, by scanning right once per left row."""
    schema = join_output_schema(left.schema, right.schema, key)
    lk = left.column(key)
    rk = right.column(key)
    li_parts = []
    ri_parts = []
    for i in range(left.row_count):
        matches = np.flatnonzero(rk == lk[i])
        if len(matches):
            li_parts.append(np.full(len(matches), i, dtype=np.int64))
            ri_parts.append(matches)
    if li_parts:
        li = np.concatenate(li_parts)
        ri = np.concatenate(ri_parts)
    else:
        li = np.empty(0, dtype=np.int64)
        ri = np.empty(0, dtype=np.int64)
    cols = [c[li] for c in left.columns]
    key_idx = right.schema.index(key)
    cols.extend(c[ri] for j, c in enumerate(right.columns) if j != key_idx)
    return Relation(schema, tuple(cols))


def comparison_sort_oracle(
    rel: Relation,
    keys: Sequence[str],
    directions: Optional[Sequence[Direction]] = None,
) -> Relation:
    """Stable lexicographic sort via a single comparator-based pass.

    Ties are broken by original row index. Descending keys are compared
    directly (no value transforms), keeping this independent of the
    engines' decorate-and-sort machinery.
    """
    keys = list(keys)
    for k in keys:
        rel.schema.index(k)  # raises UnknownAttribute
    dirs = list(directions) if directions else [Direction.ASC] * len(keys)
    if len(dirs) != len(keys):
        raise ValueError("directions must match keys in length")

    values = []
    for k in keys:
        idx = rel.schema.index(k)
        t = rel.schema.attributes[idx][1]
        col = rel.columns[idx]
        if isinstance(t, Int64):
            values.append(col.tolist())
        else:
            raw = col.tobytes()
            w = t.width
            values.append([raw[i * w : (i + 1) * w] for i in range(rel.row_count)])

    def cmp(a: int, b: int) -> int:
        for vals, d in zip(values, dirs):
            va, vb = vals[a], vals[b]
            if va == vb:
                continue
            less = va < vb
            if d is Direction.ASC:
                return -1 if less else 1
            return 1 if less else -1
        return a - b  # stable tie-break by original index

    order = sorted(range(rel.row_count), key=functools.cmp_to_key(cmp))
    return rel.take(np.array(order, dtype=np.int64))
