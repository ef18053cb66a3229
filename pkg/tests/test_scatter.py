import threading

import numpy as np
import pytest

from gempic_hp1 import Strategy, make_accumulator
from oracles import compensated_replay

ALL = list(Strategy)


def test_make_examples():
    acc = make_accumulator("replicated", 1024, 4)
    assert len(acc.copies) == 4 and all(np.all(c == 0) for c in acc.copies)
    acc = make_accumulator(Strategy.PADDED, 3, 2)
    assert acc.stride == 8 and acc.padding == 5
    acc = make_accumulator("atomic", 10, 16)
    assert acc.storage.shape == (10,) and np.all(acc.storage == 0)


def test_padded_rows_start_on_cache_lines():
    acc = make_accumulator("padded", 13, 5, cache_line_bytes=128)
    assert acc.stride == 16
    for w in range(5):
        assert acc.worker_copy(w).ctypes.data % 128 == 0


def test_pooled_blocks_hold_scratch_after_copy():
    acc = make_accumulator("pooled", 10, 3, scratch_elements=20)
    pool = acc.scratch_pool
    for w in range(3):
        copy_start = w * acc.stride
        scratch_slots = list(pool.slots(w))
        assert scratch_slots[0] >= copy_start + 10
        assert scratch_slots[-1] < (w + 1) * acc.stride


@pytest.mark.parametrize("bad", [(0, 1), (1, 0)])
def test_rejects_zero_sizes(bad):
    with pytest.raises(ValueError):
        make_accumulator("replicated", *bad)


@pytest.mark.parametrize("strategy", ALL)
def test_deposit_twice(strategy):
    acc = make_accumulator(strategy, 8, 2)
    acc.deposit(0, 5, 1.0)
    acc.deposit(0, 5, 1.0)
    assert acc.contribute()[5] == 2.0


@pytest.mark.parametrize("strategy", ALL)
def test_cancelling_deposits(strategy):
    acc = make_accumulator(strategy, 4, 3)
    acc.deposit(0, 1, 0.1234567)
    acc.deposit(2, 1, -0.1234567)
    assert acc.contribute()[1] == 0.0


@pytest.mark.parametrize("strategy", ALL)
def test_index_checks(strategy):
    acc = make_accumulator(strategy, 4, 2)
    with pytest.raises(IndexError):
        acc.deposit(0, 4, 1.0)
    with pytest.raises(IndexError):
        acc.deposit(2, 0, 1.0)


@pytest.mark.parametrize("strategy", ALL)
def test_empty_contribute(strategy):
    assert np.all(make_accumulator(strategy, 6, 3).contribute() == 0.0)


@pytest.mark.parametrize("strategy", ["replicated", "padded", "pooled"])
def test_single_worker_bitwise(strategy, rng):
    acc = make_accumulator(strategy, 50, 1)
    idx = rng.integers(0, 50, 1000)
    val = rng.normal(size=1000)
    for i, v in zip(idx, val):
        acc.deposit(0, int(i), float(v))
    np.testing.assert_array_equal(acc.contribute(), acc.worker_copy(0))


def test_atomic_concurrent_deposits_exact():
    n_workers = 8
    acc = make_accumulator("atomic", 4, n_workers)

    def work(w):
        for _ in range(2000):
            acc.deposit(w, 0, 1.0)

    threads = [threading.Thread(target=work, args=(w,)) for w in range(n_workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert acc.contribute()[0] == n_workers * 2000


def _replay(strategy, n_dofs, n_workers, workers, idx, val, scale=1.0):
    acc = make_accumulator(strategy, n_dofs, n_workers)
    for w, i, v in zip(workers, idx, val):
        acc.deposit(int(w), int(i), float(v) * scale)
    return acc.contribute()


def test_strategies_match_compensated_oracle(rng):
    n_dofs, n_workers, n = 64, 4, 10**5
    idx = rng.integers(0, n_dofs, n)
    val = rng.normal(size=n)
    workers = rng.integers(0, n_workers, n)
    exact = compensated_replay(n_dofs, idx, val)
    scale = np.max(np.abs(exact))
    results = {s: _replay(s, n_dofs, n_workers, workers, idx, val) for s in ALL}
    for s, out in results.items():
        assert np.max(np.abs(out - exact)) / scale <= 1e-12, s
    assert np.max(np.abs(results["replicated"] - results["atomic"])) / scale <= 1e-12
    # padding must not change the arithmetic
    np.testing.assert_array_equal(results["replicated"], results["padded"])
    np.testing.assert_array_equal(results["replicated"], results["pooled"])


@pytest.mark.parametrize("strategy", ["replicated", "padded", "pooled"])
def test_linearity_power_of_two(strategy, rng):
    idx = rng.integers(0, 16, 500)
    val = rng.normal(size=500)
    workers = rng.integers(0, 3, 500)
    base = _replay(strategy, 16, 3, workers, idx, val)
    np.testing.assert_array_equal(_replay(strategy, 16, 3, workers, idx, val, 4.0), 4.0 * base)


def test_replicated_workers_touch_only_own_copy():
    acc = make_accumulator("padded", 5, 3)
    acc.deposit(1, 2, 7.0)
    assert acc.worker_copy(1)[2] == 7.0
    assert np.count_nonzero(acc.storage) == 1


def test_reset():
    for s in ALL:
        acc = make_accumulator(s, 5, 2)
        acc.deposit(1, 3, 1.0)
        acc.reset()
        assert np.all(acc.contribute() == 0)
