import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patrolkit import (
    Strategy,
    build_index,
    gen_office,
    is_deterministic_update,
    normalize_full,
    normalize_pivot,
    random_strategy,
    strategy_from_json,
    strategy_to_json,
)
from patrolkit.strategy import normalize_rows, normalize_vjp

from conftest import make_k2


# ---------------------------------------------------------------------------
# index construction
# ---------------------------------------------------------------------------


def test_index_k2_mem1():
    index = build_index(make_k2(), 1)
    assert index.n_pairs == 2
    assert index.n_slots == 2


def test_index_k2_mem2():
    index = build_index(make_k2(), 2)
    assert index.n_pairs == 4
    assert index.n_slots == 8


def test_index_office_mem3_matches_combinatorial_count():
    g = gen_office(1)
    index = build_index(g, 3)
    assert index.n_pairs == 14 * 3
    # sum over directed edges of mem(src) * mem(dst)
    expected = sum(3 * 3 for _ in g.edges)
    assert index.n_slots == expected == 234


def test_index_rows_partition_slots():
    index = build_index(gen_office(1), {v: 1 + (i % 3) for i, v in enumerate(gen_office(1).vertices)})
    seen = set()
    for r in range(index.n_pairs):
        sl = index.row_slice(r)
        ids = set(range(sl.start, sl.stop))
        assert not ids & seen
        seen |= ids
        assert (index.slot_src[sl.start : sl.stop] == r).all()
    assert seen == set(range(index.n_slots))


def test_index_requires_full_positive_memory():
    g = make_k2()
    with pytest.raises(ValueError, match="missing vertex"):
        build_index(g, {"a": 1})
    with pytest.raises(ValueError, match=">= 1"):
        build_index(g, {"a": 1, "b": 0})


# ---------------------------------------------------------------------------
# random strategies
# ---------------------------------------------------------------------------


def test_random_strategy_deterministic_from_seed():
    index = build_index(gen_office(1), 2)
    a = random_strategy(index, 123)
    b = random_strategy(index, 123)
    assert np.array_equal(a.probs, b.probs)
    c = random_strategy(index, 124)
    assert not np.array_equal(a.probs, c.probs)


def test_random_strategy_width_one_row_is_unit():
    index = build_index(make_k2(), 1)
    sig = random_strategy(index, 0)
    assert sig.probs[0] == 1.0 and sig.probs[1] == 1.0


def test_random_strategy_rows_are_symmetric_on_average():
    # width-3 row: coordinate means approach 1/3
    index = _line3_index()
    r = next(r for r in range(index.n_pairs) if index.row_width(r) == 3)
    sl = index.row_slice(r)
    acc = np.zeros(3)
    n = 10_000
    for s in range(n):
        acc += random_strategy(index, s).probs[sl.start : sl.stop]
    assert np.all(np.abs(acc / n - 1 / 3) < 0.02)


# ---------------------------------------------------------------------------
# full normalization
# ---------------------------------------------------------------------------


def _line3_index():
    # one row of width 3: vertex with three successors
    from patrolkit import PatrollingGraph, TargetSpec

    g = PatrollingGraph(
        ["h", "x", "y", "z"],
        {"x": TargetSpec(1.0, 1, 1.0)},
        [("h", "x", 1), ("h", "y", 1), ("h", "z", 1),
         ("x", "h", 1), ("y", "h", 1), ("z", "h", 1)],
    )
    return build_index(g, 1)


def test_normalize_full_crops_then_scales():
    index = _line3_index()
    raw = np.ones(index.n_slots)
    raw[0:3] = [0.5, 0.5, -0.2]
    out, _ = normalize_full(Strategy(raw), index)
    assert np.allclose(out.probs[0:3], [0.5, 0.5, 0.0])


def test_normalize_full_two_entry_row():
    index = build_index(make_k2(), 2)
    raw = np.zeros(index.n_slots)
    raw[0:2] = [2.0, 1.0]
    raw[2:] = 0.5
    out, _ = normalize_full(Strategy(raw), index)
    assert np.allclose(out.probs[0:2], [0.5, 0.5])


def test_normalize_full_jacobian_spec_block():
    index = build_index(make_k2(), 2)
    raw = np.full(index.n_slots, 0.4)
    _, jac = normalize_full(Strategy(raw), index)
    expect = np.array([[0.625, -0.625], [-0.625, 0.625]])
    assert np.allclose(jac.blocks[0], expect)


def test_normalize_full_degenerate_row_uniform_zero_jacobian():
    index = build_index(make_k2(), 2)
    raw = np.full(index.n_slots, -1.0)
    out, jac = normalize_full(Strategy(raw), index)
    assert np.allclose(out.probs[0:2], [0.5, 0.5])
    assert np.all(jac.blocks[0] == 0.0)


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=8, max_size=8))
@settings(max_examples=60, deadline=None)
def test_normalize_full_rows_sum_to_one(vals):
    index = build_index(make_k2(), 2)
    out, _ = normalize_full(Strategy(np.array(vals)), index)
    sums = np.add.reduceat(out.probs, index.row_ptr[:-1])
    assert np.all(np.abs(sums - 1.0) < 1e-9)


def test_normalize_full_idempotent_on_normalized():
    index = build_index(gen_office(1), 2)
    sig = random_strategy(index, 5)
    out, _ = normalize_full(sig, index)
    again, _ = normalize_full(out, index)
    assert np.allclose(out.probs, again.probs, atol=1e-15)


def _fd_jacobian(fn, x, h=1e-6):
    n = x.shape[0]
    J = np.zeros((n, n))
    for j in range(n):
        xp = x.copy()
        xp[j] += h
        xm = x.copy()
        xm[j] -= h
        J[:, j] = (fn(xp) - fn(xm)) / (2 * h)
    return J


def _away_from_kinks(x, eps=1e-3):
    return np.all((np.abs(x) > eps) & (np.abs(x - 1.0) > eps))


def test_normalize_full_jacobian_matches_fd():
    index = build_index(gen_office(1), 1)
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 4:
        x = rng.uniform(-0.5, 1.5, size=index.n_slots)
        if not _away_from_kinks(x):
            continue
        checked += 1
        _, jac = normalize_full(Strategy(x), index)
        fd = _fd_jacobian(lambda v: normalize_full(Strategy(v), index)[0].probs, x)
        assert np.allclose(jac.dense(index.n_slots), fd, rtol=1e-4, atol=1e-6)


def test_normalize_rows_fast_path_matches_normalize_full():
    index = build_index(gen_office(1), 2)
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.uniform(-0.5, 1.5, size=index.n_slots)
        full, jac = normalize_full(Strategy(x), index)
        y, sums, cd = normalize_rows(x, index.row_ptr)
        assert np.array_equal(full.probs, y)
        grad = rng.normal(size=index.n_slots)
        assert np.allclose(jac.vjp(grad), normalize_vjp(y, sums, cd, grad, index.row_ptr), atol=1e-12)


# ---------------------------------------------------------------------------
# pivot normalization
# ---------------------------------------------------------------------------


def test_normalize_pivot_fills_remainder():
    index = _line3_index()
    raw = np.ones(index.n_slots)
    raw[0:3] = [0.3, 0.4, 0.9]
    out, _ = normalize_pivot(Strategy(raw), index)
    assert np.allclose(out.probs[0:3], [0.3, 0.4, 0.3])


def test_normalize_pivot_clamps_overflow_and_rescales():
    index = _line3_index()
    raw = np.ones(index.n_slots)
    raw[0:3] = [0.7, 0.7, 0.9]
    out, _ = normalize_pivot(Strategy(raw), index)
    assert np.allclose(out.probs[0:3], [0.5, 0.5, 0.0])


def test_normalize_pivot_jacobian_couples_pivot_to_siblings():
    index = _line3_index()
    raw = np.ones(index.n_slots)
    raw[0:3] = [0.3, 0.4, 0.9]
    _, jac = normalize_pivot(Strategy(raw), index)
    block = jac.blocks[0]
    assert block[2, 0] == -1.0 and block[2, 1] == -1.0
    assert block[0, 0] == 1.0 and block[1, 1] == 1.0
    assert np.all(block[:, 2] == 0.0)


def test_normalize_pivot_identity_on_normalized_interior():
    index = build_index(gen_office(1), 1)
    sig = random_strategy(index, 9)
    out, _ = normalize_pivot(sig, index)
    assert np.allclose(out.probs, sig.probs, atol=1e-12)


def test_normalize_pivot_jacobian_matches_fd():
    index = build_index(make_k2(), 2)
    rng = np.random.default_rng(4)
    checked = 0
    while checked < 4:
        x = rng.uniform(0.05, 0.45, size=index.n_slots)
        if not _away_from_kinks(x):
            continue
        checked += 1
        _, jac = normalize_pivot(Strategy(x), index)
        fd = _fd_jacobian(lambda v: normalize_pivot(Strategy(v), index)[0].probs, x)
        assert np.allclose(jac.dense(index.n_slots), fd, rtol=1e-4, atol=1e-6)


# ---------------------------------------------------------------------------
# deterministic-update test
# ---------------------------------------------------------------------------


def test_deterministic_update_mem1_always_true():
    index = build_index(make_k2(), 1)
    assert is_deterministic_update(index, Strategy(np.array([1.0, 1.0])), 1e-6)


def test_deterministic_update_split_memory():
    index = build_index(make_k2(), 2)
    probs = np.zeros(index.n_slots)
    # row of (a,1): slots to (b,1) and (b,2) get 0.5 each
    sl = index.row_slice(0)
    probs[sl.start] = 0.5
    probs[sl.start + 1] = 0.5
    for r in range(1, index.n_pairs):
        sl = index.row_slice(r)
        probs[sl.start] = 1.0
    sig = Strategy(probs)
    assert not is_deterministic_update(index, sig, 1e-6)
    assert is_deterministic_update(index, sig, 0.6)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_strategy_json_round_trip():
    g = gen_office(1)
    index = build_index(g, {v: 1 + (i % 2) for i, v in enumerate(g.vertices)})
    sig = random_strategy(index, 17)
    text = strategy_to_json(index, sig)
    index2, sig2 = strategy_from_json(g, text)
    assert index2.mem == index.mem
    assert np.allclose(sig2.probs, sig.probs, atol=1e-15)
