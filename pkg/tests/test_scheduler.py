import math

import pytest
from hypothesis import given, strategies as st

from riosim.core import OrderingAttribute, SplitInfo, WriteRequest
from riosim.scheduler import ContractViolation, Scheduler, VolumeLayout, try_merge, try_split


def req(seq, lba, length=1, stream=0, group_end=True, num=1, ordered=True, nreq=1, ipu=False):
    a = OrderingAttribute(seq, seq, lba=lba, len=length, stream_id=stream, group_end=group_end,
                          num=num if group_end else 0, nreq=nreq, ipu=ipu)
    return WriteRequest(a, tuple(range(lba, lba + length)), ordered=ordered)


BIG = VolumeLayout.uniform(stripe_unit_blocks=1 << 20)


def test_ordered_and_orderless_queues_are_separate():
    s = Scheduler(BIG)
    s.add_stream(0, 0)
    s.enqueue(req(1, 0))
    s.enqueue(req(0, 50, ordered=False))
    assert s.pending(0) == 1
    assert s.pending(Scheduler.ORDERLESS) == 1


def test_fifo_within_stream():
    s = Scheduler(BIG, merge_enabled=False)
    s.add_stream(0, 0)
    for g in (1, 2, 3):
        s.enqueue(req(g, g * 10))
    assert [r.attr.seq_start for _, r in s.dispatch(0)] == [1, 2, 3]


def test_streams_do_not_share_queues():
    s = Scheduler(BIG)
    s.add_stream(0, 0)
    s.add_stream(1, 0)
    s.enqueue(req(1, 0, stream=0))
    s.enqueue(req(1, 1, stream=1))
    assert [r.attr.stream_id for _, r in s.dispatch(1)] == [1]
    assert s.pending(0) == 1


def test_plug_window_reports_full():
    s = Scheduler(BIG, plug_depth=2)
    s.add_stream(0, 0)
    assert not s.enqueue(req(1, 0))
    assert s.enqueue(req(2, 1))


def test_consecutive_groups_merge_into_one_attribute():
    out = try_merge([req(1, 100), req(2, 101), req(3, 102)], BIG)
    assert len(out) == 1
    a = out[0].attr
    assert (a.seq_start, a.seq_end, a.lba, a.len, a.nreq) == (1, 3, 100, 3, 3)
    assert out[0].payload_digest == (100, 101, 102)


def test_gap_prevents_merge():
    assert len(try_merge([req(1, 100), req(2, 102)], BIG)) == 2


def test_incomplete_group_does_not_merge_across_groups():
    # group 1 has only one of its two requests in the batch
    out = try_merge([req(1, 100, group_end=False), req(2, 101)], BIG)
    assert len(out) == 2


def test_requests_of_one_group_merge():
    out = try_merge([req(1, 100, group_end=False), req(1, 101, num=2)], BIG)
    assert len(out) == 1
    assert not out[0].attr.merged and out[0].attr.nreq == 2


def test_different_streams_do_not_merge():
    assert len(try_merge([req(1, 100, stream=0), req(1, 101, stream=1)], BIG)) == 2


def test_ipu_does_not_merge_with_normal_write():
    assert len(try_merge([req(1, 100), req(2, 101, ipu=True)], BIG)) == 2


def test_batch_of_two_becomes_one_command():
    s = Scheduler(BIG)
    s.add_stream(0, 0)
    s.enqueue(req(1, 0))
    s.enqueue(req(2, 1))
    assert len(s.dispatch(0)) == 1
    s2 = Scheduler(BIG, merge_enabled=False)
    s2.add_stream(0, 0)
    s2.enqueue(req(1, 0))
    s2.enqueue(req(2, 1))
    assert len(s2.dispatch(0)) == 2


@given(st.integers(1, 200))
def test_k_writes_need_ceil_k_over_cap_commands(k):
    s = Scheduler(BIG, plug_depth=1000)
    s.add_stream(0, 0)
    for i in range(k):
        s.enqueue(req(i + 1, i))
    assert len(s.dispatch(0)) == math.ceil(k / 32)


@given(st.lists(st.tuples(st.integers(1, 40), st.integers(0, 2), st.booleans()), min_size=1, max_size=30))
def test_merge_keeps_blocks_and_cap(shape):
    layout = VolumeLayout.uniform(targets=2, stripe_unit_blocks=16)
    reqs, lba, seq = [], 0, 1
    for length, gap, end in shape:
        r = req(seq, lba, length, group_end=True)
        for part in try_split(r, layout):
            reqs.append(part)
        lba += length + gap
        seq += 1
    out = try_merge(reqs, layout)
    assert [b for r in out for b in r.payload_digest] == [b for r in reqs for b in r.payload_digest]
    for r in out:
        assert r.len <= 32
        assert layout.target_of(r.lba) == layout.target_of(r.lba + r.len - 1)
        assert sum(x.attr.nreq for x in reqs if r.attr.seq_start <= x.attr.seq_start <= r.attr.seq_end
                   and r.lba <= x.lba < r.lba + r.len) == r.attr.nreq


def test_split_across_two_servers():
    layout = VolumeLayout.uniform(targets=2, stripe_unit_blocks=4)
    w2 = req(2, 2, length=4)
    parts = try_split(w2, layout)
    assert len(parts) == 2
    assert {p.target_id for p in parts} == {0, 1}
    assert all(p.attr.split.part_count == 2 for p in parts)
    assert [p.attr.split.part_index for p in parts] == [0, 1]


def test_256k_request_splits_at_transfer_cap():
    parts = try_split(req(1, 0, length=64), BIG)
    assert [p.len for p in parts] == [32, 32]
    assert parts[1].payload_digest == tuple(range(32, 64))


def test_small_request_unchanged():
    r = req(1, 5)
    assert try_split(r, BIG) == [r]
    assert r.attr.split is None


def test_merged_request_can_not_be_split():
    merged = WriteRequest(OrderingAttribute(1, 2, lba=0, len=64), tuple(range(64)))
    with pytest.raises(ContractViolation):
        try_split(merged, BIG)


def test_split_part_can_not_be_split_again():
    part = WriteRequest(OrderingAttribute(1, 1, lba=0, len=64, split=SplitInfo(1, 0, 2)), tuple(range(64)))
    with pytest.raises(ContractViolation):
        try_split(part, BIG)


@given(st.integers(0, 500), st.integers(1, 300), st.sampled_from([1, 3, 8, 32, 100]))
def test_split_parts_tile_the_request(lba, length, su):
    layout = VolumeLayout.uniform(targets=2, ssds_per_target=2, stripe_unit_blocks=su)
    parts = try_split(req(1, lba, length), layout)
    pos = lba
    for p in parts:
        assert p.lba == pos
        assert p.len <= 32
        assert layout.locate(p.lba)[:2] == layout.locate(p.lba + p.len - 1)[:2]
        pos += p.len
    assert pos == lba + length


def test_stream_keeps_its_queue_after_migration():
    s = Scheduler(BIG, num_queues=4)
    s.add_stream(0, 0)
    s.migrate(0, 7)
    s.enqueue(req(1, 0))
    assert [q for q, _ in s.dispatch(0)] == [0]
    assert s.core_of[0] == 7


def test_shared_queue_keeps_each_stream_fifo():
    s = Scheduler(BIG, merge_enabled=False)
    s.add_stream(0, 0)
    s.add_stream(1, 0)
    out = []
    for g in (1, 2):
        s.enqueue(req(g, g, stream=0))
        s.enqueue(req(g, 100 + g, stream=1))
        out += s.dispatch(0) + s.dispatch(1)
    assert {q for q, _ in out} == {0}
    for stream in (0, 1):
        assert [r.attr.seq_start for _, r in out if r.attr.stream_id == stream] == [1, 2]


def test_migration_flushes_pending_requests():
    s = Scheduler(BIG)
    s.add_stream(0, 0)
    s.start_plug(0)
    s.enqueue(req(1, 0))
    s.enqueue(req(2, 5))
    flushed = s.migrate(0, 3)
    assert len(flushed) == 2
    assert s.pending(0) == 0
