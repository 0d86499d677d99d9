from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from riosim.core import OrderingAttribute
from riosim.sim import EventLoop
from riosim.ssd import FLASH, OPTANE, PmrFull, PmrLog, SsdModel


class Owner:
    def __init__(self):
        self.events = []

    def on_ssd_event(self, ssd, kind, token):
        self.events.append((kind, token))


def device(profile):
    env = EventLoop()
    owner = Owner()
    return env, SsdModel(env, "ssd", profile, owner=owner, seed=1), owner


def test_flush_makes_earlier_writes_durable():
    env, ssd, owner = device(FLASH)
    ssd.submit_write("A", 0, (10,))
    ssd.submit_write("B", 1, (11,))
    ssd.submit_write("C", 2, (12,))
    ssd.flush("F")
    env.run(until=50)
    assert ssd.media == {}
    env.run()
    assert ssd.media == {0: 10, 1: 11, 2: 12}
    assert owner.events[-1] == ("flushed", "F")


def test_flush_waits_for_writes_in_flight():
    env, ssd, owner = device(FLASH)
    ssd.submit_write("A", 0, (10,))
    ssd.flush("F")
    env.run()
    kinds = [k for k, _ in owner.events]
    assert kinds == ["cached", "flushed"]


def test_plp_write_durable_on_arrival():
    env, ssd, _ = device(OPTANE)
    ssd.submit_write("A", 0, (10,))
    env.run()
    ssd.power_loss()
    assert ssd.read(0) == 10


def test_power_loss_drops_unflushed_cache():
    env, ssd, _ = device(FLASH)
    ssd.submit_write("A", 0, (10,))
    env.run()
    assert ssd.read(0) == 10
    ssd.power_loss()
    assert ssd.read(0) is None


def test_completions_after_power_loss_are_ignored():
    env, ssd, owner = device(FLASH)
    ssd.submit_write("A", 0, (10,))
    ssd.power_loss()
    env.run()
    assert owner.events == []


def test_transfer_cap_enforced():
    env, ssd, _ = device(FLASH)
    with pytest.raises(ValueError):
        ssd.submit_write("A", 0, tuple(range(33)))


def rec(seq, persist=False):
    return OrderingAttribute(seq, seq, lba=seq, num=1, group_end=True, persist=persist)


def test_log_survives_crash_with_persist_bits():
    log = PmrLog(8)
    slots = [log.append(rec(s)) for s in (1, 2, 3)]
    log.set_persist(slots[1])
    log.crash()
    log.restart()
    scanned = log.scan()
    assert [a.seq_start for _, a in scanned] == [1, 2, 3]
    assert [a.persist for _, a in scanned] == [False, True, False]


def test_empty_log_scans_empty():
    log = PmrLog(4)
    assert log.head == log.tail
    assert log.scan() == []
    log.crash()
    log.restart()
    assert log.scan() == []


def test_wraparound_keeps_log_order():
    log = PmrLog(4)
    slots = [log.append(rec(s)) for s in (1, 2, 3, 4)]
    assert log.full
    with pytest.raises(PmrFull):
        log.append(rec(5))
    log.release(slots[0])
    log.release(slots[1])
    log.append(rec(5))
    log.append(rec(6))
    assert [a.seq_start for _, a in log.scan()] == [3, 4, 5, 6]
    log.crash()
    log.restart()
    assert [a.seq_start for _, a in log.scan()] == [3, 4, 5, 6]


@given(st.lists(st.sampled_from(["append", "release"]), max_size=80), st.integers(2, 9))
def test_restart_recovers_live_records_in_order(ops, cap):
    log = PmrLog(cap)
    live, seq = [], 0
    for op in ops:
        if op == "append" and not log.full:
            seq += 1
            live.append((log.append(rec(seq)), seq))
        elif op == "release" and live:
            slot, _ = live.pop(0)
            log.release(slot)
    log.crash()
    log.restart()
    assert [a.seq_start for _, a in log.scan()] == [s for _, s in live]


def test_persist_on_released_slot_rejected():
    log = PmrLog(2)
    with pytest.raises(KeyError):
        log.set_persist(0)


def test_stored_bytes_match_golden():
    golden = (Path(__file__).parent / "golden" / "w1_1.hex").read_text().strip()
    log = PmrLog(4)
    slot = log.append(OrderingAttribute(1, 1, lba=100, len=1))
    assert log.slots[slot].hex() == golden
    log.set_persist(slot)
    assert log.slots[slot][1] == 0x81
