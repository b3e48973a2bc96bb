import numpy as np
import pytest

from relab import (
    GenSpec,
    MemoryBudget,
    Operation,
    Path,
    Policy,
    Reason,
    RuntimeSignals,
    Uniform,
    estimate_intermediate,
    estimate_key_cardinality,
    generate_relation,
    multiset_digest,
    nested_loop_join_oracle,
    select_path,
    tensor_join,
    to_tensor,
    hash_join_row,
    JoinSpec,
    TempArena,
)
from relab.selector import join_signals, sort_signals


def make_signals(
    n_left=1000,
    n_right=1000,
    build_bytes=100_000,
    cardinality=1000,
    width=100,
    budget_bytes=64 * 2**20,
    operation=Operation.JOIN,
):
    return RuntimeSignals(
        operation=operation,
        n_left=n_left,
        n_right=n_right,
        serialized_bytes_build=build_bytes,
        key_cardinality_estimate=cardinality,
        output_row_width=width,
        budget=MemoryBudget(budget_bytes),
    )


def test_estimate_zero_inputs():
    s = make_signals(n_left=0, n_right=0, cardinality=0)
    assert estimate_intermediate(s) == 0


def test_estimate_degenerate_cardinality_is_cross_product():
    s = make_signals(n_left=200, n_right=300, cardinality=1, width=10)
    assert estimate_intermediate(s) == 200 * 300 * 10


def test_estimate_sort_is_input_bytes():
    s = make_signals(n_left=500, width=24, operation=Operation.SORT)
    assert estimate_intermediate(s) == 500 * 24


def test_estimate_tracks_oracle_cardinality_within_20pct():
    # expectation check over 50 seeds, uniform keys, domain == n
    total_est = 0
    total_act = 0
    for seed in range(50):
        left = generate_relation(GenSpec(1000, 1000, Uniform(), 0, seed=seed))
        right = generate_relation(GenSpec(1000, 1000, Uniform(), 0, seed=seed + 1000))
        cl = np.bincount(left.column("key"), minlength=1000)
        cr = np.bincount(right.column("key"), minlength=1000)
        total_act += int((cl * cr).sum())
        s = make_signals(cardinality=1000, width=1)
        total_est += estimate_intermediate(s)
    assert abs(total_est - total_act) / total_act <= 0.20


def test_select_fits_in_memory():
    s = make_signals(build_bytes=10 * 2**20, budget_bytes=64 * 2**20)
    choice = select_path(s, Policy.AUTO)
    assert (choice.path, choice.reason) == (Path.ROW, Reason.FITS_IN_MEMORY)


def test_select_spill_risk_high():
    s = make_signals(
        n_left=1_000_000,
        n_right=1_000_000,
        build_bytes=100 * 2**20,
        budget_bytes=2**20,
    )
    choice = select_path(s, Policy.AUTO)
    assert (choice.path, choice.reason) == (Path.TENSOR, Reason.SPILL_RISK_HIGH)


def test_select_small_input():
    s = make_signals(
        n_left=10_000, n_right=10_000, build_bytes=2 * 2**20, budget_bytes=2**20
    )
    choice = select_path(s, Policy.AUTO)
    assert (choice.path, choice.reason) == (Path.ROW, Reason.SMALL_INPUT)


def test_select_forced():
    s = make_signals()
    assert select_path(s, Policy.FORCE_ROW).reason is Reason.FORCED
    assert select_path(s, Policy.FORCE_ROW).path is Path.ROW
    assert select_path(s, Policy.FORCE_TENSOR).path is Path.TENSOR


def test_select_threshold_boundary():
    budget = 2**20
    at = make_signals(build_bytes=int(0.75 * budget), budget_bytes=budget)
    over = make_signals(
        build_bytes=int(0.75 * budget) + 1,
        budget_bytes=budget,
        n_left=60_000,
        n_right=60_000,
    )
    assert select_path(at, Policy.AUTO).reason is Reason.FITS_IN_MEMORY
    assert select_path(over, Policy.AUTO).reason is Reason.SPILL_RISK_HIGH


def test_select_is_referentially_transparent():
    s = make_signals(build_bytes=3 * 2**20, budget_bytes=2**20)
    choices = {select_path(s, Policy.AUTO) for _ in range(1000)}
    assert len(choices) == 1


def test_signals_reject_negative():
    with pytest.raises(ValueError):
        make_signals(n_left=-1)


def test_key_cardinality_exact_small():
    rel = generate_relation(GenSpec(2000, 64, Uniform(), 0, seed=2))
    exact = len(np.unique(rel.column("key")))
    assert estimate_key_cardinality(rel, "key") == exact


def test_key_cardinality_sampled_in_range():
    rel = generate_relation(GenSpec(100_000, 5000, Uniform(), 0, seed=3))
    est = estimate_key_cardinality(rel, "key")
    assert 1 <= est <= 100_000
    # within a factor of 3 of the truth on uniform data
    truth = len(np.unique(rel.column("key")))
    assert truth / 3 <= est <= truth * 3


def test_semantic_neutrality_both_paths_equal_digest(tmp_path):
    for seed in (1, 2, 3):
        left = generate_relation(GenSpec(4000, 97, Uniform(), 12, seed=seed))
        right = generate_relation(GenSpec(3000, 97, Uniform(), 12, seed=seed + 50))
        with TempArena(tmp_path) as arena:
            row_out, _ = hash_join_row(
                left, right, JoinSpec("key"), MemoryBudget(128 * 1024), arena
            )
        tensor_out, _ = tensor_join(to_tensor(left, "key"), to_tensor(right, "key"))
        oracle = nested_loop_join_oracle(left, right, "key")
        assert (
            multiset_digest(row_out)
            == multiset_digest(tensor_out)
            == multiset_digest(oracle)
        )


def test_signal_builders(tmp_path):
    left = generate_relation(GenSpec(1000, 50, Uniform(), 12, seed=1))
    right = generate_relation(GenSpec(500, 50, Uniform(), 12, seed=2))
    s = join_signals(left, right, "key", MemoryBudget(2**20))
    assert s.operation is Operation.JOIN
    assert s.serialized_bytes_build == 500 * 20
    assert s.output_row_width == 20 + 12
    assert s.expected_intermediate_bytes == estimate_intermediate(s)
    ss = sort_signals(left, MemoryBudget(2**20))
    assert ss.operation is Operation.SORT
    assert ss.serialized_bytes_build == 1000 * 20
