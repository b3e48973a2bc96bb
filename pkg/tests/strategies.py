"""Shared Hypothesis strategies for relation-valued properties."""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from relab import Bytes, Int64, Relation, Schema

small_ints = st.integers(min_value=-(2**40), max_value=2**40)


@st.composite
def schemas(draw, max_extra=2):
    """A schema with an int64 'key' column plus a few extra attributes."""
    attrs = [("key", Int64())]
    n_extra = draw(st.integers(0, max_extra))
    for i in range(n_extra):
        if draw(st.booleans()):
            attrs.append((f"c{i}", Int64()))
        else:
            attrs.append((f"c{i}", Bytes(draw(st.integers(0, 6)))))
    return Schema(tuple(attrs))


@st.composite
def relations(draw, schema=None, max_rows=80, key_range=8):
    """A small relation; narrow key range forces duplicates and ties."""
    if schema is None:
        schema = draw(schemas())
    n = draw(st.integers(0, max_rows))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    cols = []
    for _, t in schema.attributes:
        if isinstance(t, Int64):
            cols.append(rng.integers(-key_range, key_range, n).astype(np.int64))
        else:
            cols.append(rng.integers(0, 256, (n, t.width), dtype=np.uint8))
    return Relation(schema, tuple(cols))


row_batches = st.lists(
    st.binary(min_size=12, max_size=12), min_size=0, max_size=200
)
