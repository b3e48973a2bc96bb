import numpy as np
import pytest
from hypothesis import given

from relab import (
    Bytes,
    Direction,
    GenSpec,
    Int64,
    OutputTooLarge,
    Relation,
    Schema,
    SortSpec,
    Uniform,
    UnknownAttribute,
    Zipf,
    comparison_sort_oracle,
    generate_relation,
    key_axis_align,
    multiset_digest,
    nested_loop_join_oracle,
    tensor_join,
    tensor_sort,
    to_tensor,
)

from .strategies import relations


def test_to_tensor_empty():
    rel = generate_relation(GenSpec(0, 1, Uniform(), 4, seed=0))
    t = to_tensor(rel, "key")
    assert len(t.key_values) == 0
    assert t.offsets.tolist() == [0]
    assert t.row_count == 0


def test_to_tensor_hand_checkable_stability():
    schema = Schema((("key", Int64()), ("p", Bytes(0))))
    rel = Relation(
        schema,
        (np.array([3, 1, 3], dtype=np.int64), np.zeros((3, 0), dtype=np.uint8)),
    )
    t = to_tensor(rel, "key")
    assert t.key_values.tolist() == [1, 3]
    start, stop = t.offsets[1], t.offsets[2]
    assert t.positions[start:stop].tolist() == [0, 2]


def test_to_tensor_round_trip_digest():
    rel = generate_relation(GenSpec(100_000, 777, Zipf(1.1), 12, seed=6))
    t = to_tensor(rel, "key")
    assert multiset_digest(t.to_relation()) == multiset_digest(rel)
    # positions is a permutation

    assert np.sort(t.positions).tolist() == list(range(rel.row_count))


def test_to_tensor_requires_int64_key():
    rel = generate_relation(GenSpec(5, 2, Uniform(), 4, seed=1))
    with pytest.raises(UnknownAttribute):
        to_tensor(rel, "payload")


@given(relations(max_rows=60))
def test_to_tensor_invariants(rel):
    t = to_tensor(rel, "key")
    if len(t.key_values) > 1:
        assert (np.diff(t.key_values) > 0).all()
    assert t.offsets[-1] == rel.row_count
    assert (np.diff(t.offsets) >= 0).all()
    assert sorted(t.positions.tolist()) == list(range(rel.row_count))


def _tensor_from_keys(keys):
    schema = Schema((("key", Int64()), ("p", Bytes(0))))
    rel = Relation(
        schema,
        (
            np.asarray(keys, dtype=np.int64),
            np.zeros((len(keys), 0), dtype=np.uint8),
        ),
    )
    return to_tensor(rel, "key")


def test_alignment_simple_intersection():
    a = _tensor_from_keys([1, 2, 3])
    b = _tensor_from_keys([2, 3, 4])
    align = key_axis_align(a, b)
    assert align.matched_keys.tolist() == [2, 3]


def test_alignment_disjoint_is_empty():
    align = key_axis_align(_tensor_from_keys([1, 2]), _tensor_from_keys([5, 9]))
    assert len(align.matched_keys) == 0


def test_alignment_matches_set_oracle():
    rng = np.random.default_rng(8)
    ka = rng.integers(0, 1000, 1500).astype(np.int64)
    kb = rng.integers(0, 1000, 1500).astype(np.int64)
    align = key_axis_align(_tensor_from_keys(ka), _tensor_from_keys(kb))
    assert align.matched_keys.tolist() == sorted(set(ka) & set(kb))


def test_tensor_join_trivial_example():
    schema = Schema((("key", Int64()), ("v", Bytes(1))))
    left = Relation.from_rows(schema, [(1, b"a")])
    right = Relation.from_rows(schema, [(1, b"x"), (2, b"y")])
    out, stats = tensor_join(to_tensor(left, "key"), to_tensor(right, "key"))
    assert out.row_tuples() == [(1, b"a", b"x")]
    assert stats.temp_blocks_written == 0


def test_tensor_join_zero_spill_structural():
    left = generate_relation(GenSpec(5000, 100, Uniform(), 16, seed=1))
    right = generate_relation(GenSpec(5000, 100, Uniform(), 16, seed=2))
    _, stats = tensor_join(to_tensor(left, "key"), to_tensor(right, "key"))
    assert stats.temp_blocks_written == 0
    assert stats.temp_bytes_written == 0
    assert stats.temp_bytes_read == 0


def test_tensor_join_oracle_equivalence_20k():
    left = generate_relation(GenSpec(20_000, 500, Uniform(), 92, seed=16))
    right = generate_relation(GenSpec(20_000, 500, Uniform(), 92, seed=17))
    out, _ = tensor_join(to_tensor(left, "key"), to_tensor(right, "key"))
    oracle = nested_loop_join_oracle(left, right, "key")
    assert multiset_digest(out) == multiset_digest(oracle)


def test_tensor_join_output_cap():
    left = generate_relation(GenSpec(3000, 1, Uniform(), 0, seed=1))
    right = generate_relation(GenSpec(3000, 1, Uniform(), 0, seed=2))
    with pytest.raises(OutputTooLarge):
        tensor_join(to_tensor(left, "key"), to_tensor(right, "key"), max_output_rows=10_000)


def test_tensor_join_memory_accounting_deterministic():
    left = generate_relation(GenSpec(10_000, 200, Uniform(), 24, seed=3))
    right = generate_relation(GenSpec(10_000, 200, Uniform(), 24, seed=4))
    peaks = set()
    for _ in range(3):
        _, stats = tensor_join(to_tensor(left, "key"), to_tensor(right, "key"))
        peaks.add(stats.peak_mem_bytes)
    assert len(peaks) == 1


@given(relations(max_rows=50))
def test_tensor_join_matches_oracle_property(left):
    right = left.take(np.arange(left.row_count)[::-1][: max(0, left.row_count - 3)])
    out, stats = tensor_join(to_tensor(left, "key"), to_tensor(right, "key"))
    oracle = nested_loop_join_oracle(left, right, "key")
    assert stats.temp_blocks_written == 0
    assert sorted(map(tuple, out.row_tuples())) == sorted(
        map(tuple, oracle.row_tuples())
    )


# --- tensor sort ------------------------------------------------------------


def test_tensor_sort_single_key():
    schema = Schema((("key", Int64()), ("p", Bytes(0))))
    rel = Relation(
        schema, (np.array([2, 1], dtype=np.int64), np.zeros((2, 0), dtype=np.uint8))
    )
    out, stats = tensor_sort(rel, SortSpec(("key",)))
    assert out.column("key").tolist() == [1, 2]
    assert stats.temp_blocks_written == 0


def test_tensor_sort_degenerate_primary():
    # all primary keys tie: order decided by the secondary key, stably
    schema = Schema((("a", Int64()), ("b", Int64()), ("tag", Int64())))
    rel = Relation(
        schema,
        (
            np.zeros(4, dtype=np.int64),
            np.array([2, 1, 2, 1], dtype=np.int64),
            np.arange(4, dtype=np.int64),
        ),
    )
    out, _ = tensor_sort(rel, SortSpec(("a", "b")))
    assert out.column("tag").tolist() == [1, 3, 0, 2]


def test_tensor_sort_three_keys_matches_oracle_50k():
    rng = np.random.default_rng(18)
    n = 50_000
    schema = Schema((("a", Int64()), ("b", Int64()), ("p", Bytes(3))))
    rel = Relation(
        schema,
        (
            rng.integers(0, 16, n).astype(np.int64),
            rng.integers(-4, 4, n).astype(np.int64),
            rng.integers(0, 256, (n, 3), dtype=np.uint8),
        ),
    )
    spec = SortSpec(("a", "p", "b"), (Direction.ASC, Direction.DESC, Direction.ASC))
    out, stats = tensor_sort(rel, spec)
    oracle = comparison_sort_oracle(rel, spec.keys, spec.directions)
    assert stats.temp_blocks_written == 0
    assert out.row_tuples() == oracle.row_tuples()


@given(relations(max_rows=60))
def test_tensor_sort_radix_identity_property(rel):
    keys = list(rel.schema.names)
    dirs = [
        Direction.DESC if i % 2 else Direction.ASC for i in range(len(keys))
    ]
    out, _ = tensor_sort(rel, SortSpec(tuple(keys), tuple(dirs)))
    oracle = comparison_sort_oracle(rel, keys, dirs)
    assert out.row_tuples() == oracle.row_tuples()
