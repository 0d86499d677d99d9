"""Sequencer: attributes ordered submissions and completes groups in order."""

from __future__ import annotations

from dataclasses import dataclass, field

from .core import OrderingAttribute, WriteRequest, fingerprint


class SetupError(ValueError):
    pass


class ConnectionLost(RuntimeError):
    """Raised by a wait while the stream is under recovery; retry afterwards."""


@dataclass
class Stream:
    stream_id: int
    nic_queue_id: int = 0
    next_seq: int = 1
    open_group_size: int = 0
    last_seq_per_target: dict = field(default_factory=dict)
    prev_of_last: dict = field(default_factory=dict)
    pending_completions: set = field(default_factory=set)
    released_upto: int = 0
    flush_groups: set = field(default_factory=set)
    pending_flush: bool = False


@dataclass(frozen=True)
class SubmitHandle:
    stream_id: int
    seq: int
    group_end: bool
    req_id: int = 0


class Sequencer:
    """Per-stream sequence numbering and the in-order completion window."""

    def __init__(self, num_streams: int, layout, num_queues: int = 1):
        if num_streams < 1:
            raise SetupError("need at least one stream")
        if layout is None or not layout.targets:
            raise SetupError("volume has no targets")
        self.layout = layout
        self.num_queues = num_queues
        self.streams = [Stream(i, nic_queue_id=i % num_queues) for i in range(num_streams)]
        self._req_id = 0

    def stream(self, stream_id: int) -> Stream:
        if not 0 <= stream_id < len(self.streams):
            raise KeyError(f"unknown stream {stream_id}")
        return self.streams[stream_id]

    def submit(self, stream_id: int, lba: int, length: int, group_end: bool = True,
               flush: bool = False, ipu: bool = False, payload=None) -> tuple[WriteRequest, SubmitHandle]:
        st = self.stream(stream_id)
        if length < 1:
            raise ValueError("zero-length request")
        seq = st.next_seq
        target = self.layout.target_of(lba)
        last = st.last_seq_per_target.get(target, 0)
        if last == seq:
            # an earlier request of this group already went to the target
            prev = st.prev_of_last[target]
        else:
            prev = last
            st.prev_of_last[target] = last
        st.last_seq_per_target[target] = seq
        num = 0
        if group_end:
            num = st.open_group_size + 1
            st.open_group_size = 0
            st.next_seq += 1
            if flush:
                st.flush_groups.add(seq)
        else:
            st.open_group_size += 1
        attr = OrderingAttribute(
            seq_start=seq, seq_end=seq, prev=prev, num=num, lba=lba, len=length,
            ipu=ipu, flush=flush, stream_id=stream_id, group_end=group_end,
        )
        self._req_id += 1
        if payload is None:
            payload = tuple(fingerprint(stream_id, seq, self._req_id, i) for i in range(length))
        req = WriteRequest(attr, tuple(payload), ordered=True, target_id=target, req_id=self._req_id)
        return req, SubmitHandle(stream_id, seq, group_end, self._req_id)

    def on_device_completion(self, stream_id: int, seq: int) -> list[int]:
        """Record a finished group; return the groups now visible to the application."""
        st = self.stream(stream_id)
        if seq <= st.released_upto or seq >= st.next_seq:
            return []
        st.pending_completions.add(seq)
        out = []
        while st.released_upto + 1 in st.pending_completions:
            st.released_upto += 1
            st.pending_completions.discard(st.released_upto)
            out.append(st.released_upto)
        return out

    def is_complete(self, handle: SubmitHandle) -> bool:
        return handle.seq <= self.stream(handle.stream_id).released_upto


def rio_setup(num_streams: int, volume, num_queues: int = 1) -> Sequencer:
    return Sequencer(num_streams, volume, num_queues)
