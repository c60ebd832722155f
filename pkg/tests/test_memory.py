import numpy as np
import pytest

from hmod.memory import BankError, MemoryBank


def test_init_zero():
    bank = MemoryBank(3, 4, 8, t_start=0.0)
    assert bank.memories.shape == (3, 5, 8)
    assert not bank.memories.any()
    assert not bank.read(2, 4).any()
    assert np.all(bank.last_update == 0.0)
    assert not bank.stored_messages.any()


def test_write_then_read():
    bank = MemoryBank(2, 1, 3)
    v = np.array([1.0, -2.0, 0.5])
    bank.write(1, 1, v, 5.0)
    assert np.array_equal(bank.read(1, 1), v)
    assert bank.last_update[1, 1] == 5.0


def test_time_regression_rejected():
    bank = MemoryBank(2, 1, 3)
    bank.write(0, 0, np.ones(3), 5.0)
    with pytest.raises(BankError):
        bank.write(0, 0, np.ones(3), 3.0)


def test_non_finite_rejected():
    bank = MemoryBank(2, 1, 3)
    with pytest.raises(BankError):
        bank.write(0, 0, np.array([np.nan, 0, 0]), 1.0)


def test_read_all_levels_in_order():
    bank = MemoryBank(1, 2, 2)
    for d in range(3):
        bank.write(0, d, np.full(2, float(d)), 1.0)
    assert [v[0] for v in bank.read_all_levels(0)] == [0.0, 1.0, 2.0]


def test_reads_do_not_mutate():
    bank = MemoryBank(1, 0, 2)
    bank.read(0, 0)[:] = 7.0
    assert not bank.memories.any()
    with pytest.raises(ValueError):
        bank.level(0)[0, 0] = 1.0


def test_snapshot_restore():
    bank = MemoryBank(2, 2, 3)
    bank.write(0, 1, np.ones(3), 2.0)
    snap = bank.snapshot()
    assert snap == bank.snapshot()
    bank.write(0, 1, np.full(3, 9.0), 4.0)
    bank.write(1, 2, np.full(3, 3.0), 4.0)
    bank.restore(snap)
    assert bank.snapshot() == snap
    assert bank.last_update[0, 1] == 2.0


def test_restore_shape_mismatch():
    snap = MemoryBank(2, 2, 3).snapshot()
    with pytest.raises(BankError):
        MemoryBank(2, 3, 3).restore(snap)


def test_level_spans_dyadic():
    bank = MemoryBank(1, 4, 2, delta_t=1800.0)
    spans = [bank.level_span(d) for d in range(1, 5)]
    assert spans == [1800.0, 3600.0, 7200.0, 14400.0]
    assert all(a < b for a, b in zip(spans, spans[1:]))


def test_arrays_round_trip():
    bank = MemoryBank(2, 1, 3, d_message=4)
    bank.write(1, 0, np.arange(3.0), 1.0, message=np.arange(4.0))
    again = MemoryBank.from_arrays(bank.to_arrays(), delta_t=1800.0)
    assert again.snapshot() == bank.snapshot()
