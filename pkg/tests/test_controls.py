import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doublelayer.controls import (FlagState, InnerStrategy, OuterSchedule, inner_select, next_block_lopping,
                                  outer_block, verify_argmax_condition, verify_intermittent)
from doublelayer.errors import InvalidControlError

prox_lists = st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=30)


def test_outer_block_examples():
    single = OuterSchedule.contiguous(5, 5)
    for k in range(4):
        np.testing.assert_array_equal(outer_block(single, k), np.arange(5))
    sched = OuterSchedule(([0, 1], [2, 3]), 4)
    assert [outer_block(sched, k).tolist() for k in range(3)] == [[0, 1], [2, 3], [0, 1]]
    big = OuterSchedule.contiguous(100, 25)
    assert big.s == 4 and all(b.size == 25 for b in big.blocks)
    np.testing.assert_array_equal(outer_block(big, 5), np.arange(25, 50))


def test_contiguous_last_block_may_be_short():
    sched = OuterSchedule.contiguous(10, 4)
    assert [b.size for b in sched.blocks] == [4, 4, 2]
    assert sched.is_partition and sched.min_block_size == 2


def test_schedule_must_cover_every_index():
    with pytest.raises(InvalidControlError):
        OuterSchedule(([0, 1],), 3)
    with pytest.raises(InvalidControlError):
        OuterSchedule(([0], []), 1)
    with pytest.raises(InvalidControlError):
        OuterSchedule(([0, 5],), 2)


def test_verify_intermittent_examples():
    assert verify_intermittent(OuterSchedule.contiguous(7, 7)) == 1
    assert verify_intermittent(OuterSchedule.contiguous(8, 2)) == 4
    overlapping = OuterSchedule(([0], [0, 1], [1, 2], [2]), 3)
    assert not overlapping.is_partition
    assert verify_intermittent(overlapping) == 3


def test_inner_select_examples():
    block = np.array([0, 1, 2])
    prox = np.array([0.1, 0.5, 0.3])
    assert inner_select(InnerStrategy("maxprox"), block, prox).tolist() == [1]
    assert inner_select(InnerStrategy("threshold", 0.5), block, prox).tolist() == [1, 2]
    assert inner_select(InnerStrategy("top", 2), block, prox).tolist() == [1, 2]
    assert inner_select(InnerStrategy("top", 1), block, np.array([0.5, 0.5, 0.1])).tolist() == [0]
    assert inner_select(InnerStrategy("maxprox"), block, np.array([0.5, 0.5, 0.1])).tolist() == [0]
    assert inner_select(InnerStrategy("active"), block, np.array([0.0, 0.2, 0.0])).tolist() == [1]
    assert inner_select(InnerStrategy("all"), block, prox).tolist() == [0, 1, 2]


def test_top_t_ties_prefer_smallest_indices():
    block = np.array([3, 4, 5, 6])
    prox = np.array([1.0, 2.0, 2.0, 2.0])
    assert inner_select(InnerStrategy("top", 2), block, prox).tolist() == [4, 5]


def test_inner_strategy_parsing_and_validation():
    assert InnerStrategy.parse("top:5") == InnerStrategy("top", 5)
    assert InnerStrategy.parse("threshold:0.25") == InnerStrategy("threshold", 0.25)
    assert str(InnerStrategy.parse("MaxProx")) == "maxprox"
    for bad in ("greedy", "top:0", "threshold:1.5", "top:x"):
        with pytest.raises((InvalidControlError, ValueError)):
            InnerStrategy.parse(bad)
    with pytest.raises(InvalidControlError):
        InnerStrategy("top", 30).validate_for(OuterSchedule.contiguous(100, 25))
    with pytest.raises(InvalidControlError):
        inner_select(InnerStrategy("all"), np.array([], dtype=int), np.array([]))


def test_verify_argmax_condition_examples():
    assert not verify_argmax_condition([0], [0, 1], [0.1, 0.5])
    assert verify_argmax_condition([1], [0, 1], [0.1, 0.5])


@settings(max_examples=300, deadline=None)
@given(prox_lists, st.integers(1, 30), st.floats(0, 1))
def test_selection_properties(prox, t, thr):
    prox = np.array(prox)
    block = np.arange(10, 10 + prox.size)
    t = min(t, prox.size)
    mp = inner_select(InnerStrategy("maxprox"), block, prox)
    top = inner_select(InnerStrategy("top", t), block, prox)
    th = inner_select(InnerStrategy("threshold", thr), block, prox)
    act = inner_select(InnerStrategy("active"), block, prox)
    for sel in (mp, top, th, act):
        assert set(sel.tolist()) <= set(block.tolist())
        assert np.all(np.diff(sel) > 0)
    assert mp.size == 1 and top.size == t and th.size >= 1
    assert set(mp.tolist()) <= set(top.tolist())
    for sel in (mp, top, th):
        assert verify_argmax_condition(sel, block, prox)
    assert (act.size == 0) == bool(np.all(prox == 0))
    np.testing.assert_array_equal(inner_select(InnerStrategy("threshold", 0.0), block, prox), block)
    # Determinism.
    np.testing.assert_array_equal(inner_select(InnerStrategy("top", t), block, prox), top)


def test_lopping_with_zero_epsilon_never_skips_positive_blocks():
    sched = OuterSchedule.contiguous(6, 2)
    state = FlagState.start(sched, 1, 0.0)
    seq = []
    for _ in range(9):
        j, compute, stop = next_block_lopping(state, sched, lambda J: 1.0)
        assert compute and not stop
        seq.append(j)
    assert seq == [0, 1, 2] * 3


def test_lopping_stops_after_s_consecutive_skips():
    sched = OuterSchedule.contiguous(4, 2)
    state = FlagState.start(sched, 1, 1e-6)
    j, compute, stop = next_block_lopping(state, sched, lambda J: 0.0)
    assert (j, compute, stop) == (0, False, False)
    j, compute, stop = next_block_lopping(state, sched, lambda J: 0.0)
    assert (j, compute, stop) == (1, False, True)


def test_flagged_block_sits_out_its_next_turns():
    # s = 3, N = 2: block 1 satisfied once, then skipped for its next two turns.
    sched = OuterSchedule.contiguous(3, 1)
    state = FlagState.start(sched, 2, 0.5)
    prox = {0: 1.0, 1: 0.0, 2: 1.0}
    seq = []
    for _ in range(7):
        j, compute, stop = next_block_lopping(state, sched, lambda J: prox[int(J[0])])
        seq.append(j)
        if j == 1:
            prox[1] = 1.0
        assert not stop
    assert seq == [0, 1, 2, 0, 2, 0, 2]
    after = [next_block_lopping(state, sched, lambda J: prox[int(J[0])])[0] for _ in range(2)]
    assert after == [0, 1]


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.lists(st.booleans(), min_size=1, max_size=80))
def test_flag_invariants(s, N, satisfied):
    sched = OuterSchedule.contiguous(s, 1)
    state = FlagState.start(sched, N, 0.5)
    last_seen = {j: 0 for j in range(s)}
    for step, sat in enumerate(satisfied):
        j, compute, stop = next_block_lopping(state, sched, lambda J: 0.0 if sat else 1.0)
        assert compute == (not sat)
        assert 0 <= state.n <= s
        last_seen[j] = step
        # Every block comes back within N + 1 cycles (the schedule is (N s)-intermittent).
        assert all(step - v <= (N + 1) * s for v in last_seen.values())
        if stop:
            assert state.n == s
            break


def test_flag_state_validation():
    with pytest.raises(InvalidControlError):
        FlagState(2, 0, 0.0)
    with pytest.raises(InvalidControlError):
        FlagState(2, 1, -1.0)
