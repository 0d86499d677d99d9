"""Block-layer ORDER queues: per-stream FIFO, merging, splitting, dispatch."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable

from .core import OrderingAttribute, SplitInfo, WriteRequest
from .ssd import FLASH, SsdProfile


@dataclass(frozen=True)
class TargetSpec:
    target_id: int
    ssds: tuple[SsdProfile, ...]


@dataclass(frozen=True)
class VolumeLayout:
    """Logical volume striped round-robin over every SSD of every target."""

    targets: tuple[TargetSpec, ...]
    stripe_unit_blocks: int = 32

    def __post_init__(self):
        if not self.targets or any(not t.ssds for t in self.targets):
            raise ValueError("volume needs at least one target with at least one SSD")
        if self.stripe_unit_blocks < 1:
            raise ValueError("stripe_unit_blocks must be positive")

    @classmethod
    def uniform(cls, targets=1, ssds_per_target=1, profile: SsdProfile = FLASH, stripe_unit_blocks=32):
        return cls(
            tuple(TargetSpec(t, (profile,) * ssds_per_target) for t in range(targets)),
            stripe_unit_blocks,
        )

    @property
    def devices(self) -> list[tuple[int, int]]:
        # interleave targets so consecutive stripes land on different servers
        out = []
        width = max(len(t.ssds) for t in self.targets)
        for s in range(width):
            for t in self.targets:
                if s < len(t.ssds):
                    out.append((t.target_id, s))
        return out

    def locate(self, lba: int) -> tuple[int, int, int]:
        """Map a volume LBA to ``(target_id, ssd_id, device_lba)``."""
        devs = self.devices
        su = self.stripe_unit_blocks
        stripe, off = divmod(lba, su)
        target_id, ssd_id = devs[stripe % len(devs)]
        return target_id, ssd_id, (stripe // len(devs)) * su + off

    def target_of(self, lba: int) -> int:
        return self.locate(lba)[0]

    def profile_of(self, lba: int) -> SsdProfile:
        t, s, _ = self.locate(lba)
        return self.target(t).ssds[s]

    def max_transfer(self, lba: int) -> int:
        return self.profile_of(lba).max_transfer_blocks

    def stripe_end(self, lba: int) -> int:
        su = self.stripe_unit_blocks
        return (lba // su + 1) * su

    def target(self, target_id: int) -> TargetSpec:
        for t in self.targets:
            if t.target_id == target_id:
                return t
        raise KeyError(target_id)


class ContractViolation(RuntimeError):
    pass


def try_split(req: WriteRequest, layout: VolumeLayout) -> list[WriteRequest]:
    """Cut ``req`` at stripe boundaries, then at the device transfer cap."""
    a = req.attr
    if a.merged:
        raise ContractViolation("a merged request can not be split")
    pieces = []
    lba, end = a.lba, a.lba + a.len
    while lba < end:
        stop = min(end, layout.stripe_end(lba))
        cap = layout.max_transfer(lba)
        while lba < stop:
            n = min(cap, stop - lba)
            pieces.append((lba, n))
            lba += n
    if len(pieces) == 1:
        return [req]
    if a.split is not None:
        raise ContractViolation("request is already a split part")
    parts = []
    for i, (lba, n) in enumerate(pieces):
        off = lba - a.lba
        attr = replace(a, lba=lba, len=n, split=SplitInfo(a.seq_start, i, len(pieces)))
        parts.append(replace(req, attr=attr, payload_digest=req.payload_digest[off:off + n],
                             target_id=layout.target_of(lba)))
    return parts


def _combine(reqs: list[WriteRequest], layout: VolumeLayout) -> WriteRequest:
    if len(reqs) == 1:
        return reqs[0]
    first, last = reqs[0], reqs[-1]
    attr = replace(
        first.attr,
        seq_start=min(r.attr.seq_start for r in reqs),
        seq_end=max(r.attr.seq_end for r in reqs),
        num=sum(r.attr.num for r in reqs),
        len=sum(r.len for r in reqs),
        flush=any(r.attr.flush for r in reqs),
        group_end=last.attr.group_end,
        nreq=sum(r.attr.nreq for r in reqs),
        persist=False,
    )
    payload = tuple(fp for r in reqs for fp in r.payload_digest)
    return replace(first, attr=attr, payload_digest=payload, target_id=layout.target_of(attr.lba))


def _extends(run: list[WriteRequest], r: WriteRequest, layout: VolumeLayout, ordered: bool) -> bool:
    head, last = run[0], run[-1]
    if r.attr.split is not None or last.attr.split is not None:
        return False
    if r.lba != last.lba + last.len:
        return False
    if r.lba + r.len > layout.stripe_end(head.lba):
        return False
    if sum(x.len for x in run) + r.len > layout.max_transfer(head.lba):
        return False
    if ordered:
        if r.attr.stream_id != head.attr.stream_id or r.attr.ipu != head.attr.ipu:
            return False
        if r.attr.seq_start not in (last.attr.seq_end, last.attr.seq_end + 1):
            return False
    return True


def _group_blocks(run: list[WriteRequest]):
    """Split a run into same-sequence blocks and mark which hold a whole group."""
    blocks = []
    for r in run:
        if blocks and not r.attr.merged and not blocks[-1][0][-1].attr.merged \
                and blocks[-1][0][-1].attr.seq_start == r.attr.seq_start:
            blocks[-1][0].append(r)
        else:
            blocks.append(([r], None))
    out = []
    for reqs, _ in blocks:
        if reqs[0].attr.merged:
            complete = True
        else:
            finals = [r for r in reqs if r.attr.group_end]
            complete = bool(finals) and sum(r.attr.nreq for r in reqs) == finals[-1].attr.num
        out.append((reqs, complete))
    return out


def try_merge(queue: Iterable[WriteRequest], layout: VolumeLayout, ordered: bool = True) -> list[WriteRequest]:
    """Coalesce adjacent entries without changing the block order.

    Ordered entries merge only inside one stream, across continuous sequence
    numbers and consecutive LBAs.  A merge that spans several groups must hold
    every one of those groups entirely.
    """
    entries = list(queue)
    runs: list[list[WriteRequest]] = []
    for r in entries:
        if runs and _extends(runs[-1], r, layout, ordered):
            runs[-1].append(r)
        else:
            runs.append([r])
    out = []
    for run in runs:
        if len(run) == 1:
            out.append(run[0])
            continue
        if not ordered:
            out.append(_combine(run, layout))
            continue
        segment: list[WriteRequest] = []
        seg_complete = False
        for reqs, complete in _group_blocks(run):
            if segment and seg_complete and complete:
                segment.extend(reqs)
                continue
            if segment:
                out.append(_combine(segment, layout))
            segment, seg_complete = list(reqs), complete
        out.append(_combine(segment, layout))
    return out


@dataclass
class OrderQueue:
    stream_id: int
    fifo: deque = field(default_factory=deque)
    plug_depth: int = 16
    plugged: bool = False
    opened_at: int | None = None


class Scheduler:
    """ORDER queues for ordered streams plus orderless queues with negative keys."""

    ORDERLESS = -1

    def __init__(self, layout: VolumeLayout, num_queues: int = 1, plug_depth: int = 16,
                 plug_timeout_ticks: int = 20, merge_enabled: bool = True, affinity: bool = True):
        self.layout = layout
        self.num_queues = num_queues
        self.plug_depth = plug_depth
        self.plug_timeout_ticks = plug_timeout_ticks
        self.merge_enabled = merge_enabled
        self.affinity = affinity
        self.queues: dict[int, OrderQueue] = {}
        self.nic_queue: dict[int, int] = {}
        self.core_of: dict[int, int] = {}
        self._spray = 0
        self.commands_out = 0

    def add_stream(self, stream_id: int, nic_queue_id: int):
        self.queues[stream_id] = OrderQueue(stream_id, plug_depth=self.plug_depth)
        self.nic_queue[stream_id] = nic_queue_id
        self.core_of[stream_id] = stream_id

    def queue(self, key: int) -> OrderQueue:
        """The queue for ``key``; negative keys are orderless and created on demand."""
        if key not in self.queues:
            if key >= 0:
                raise KeyError(f"unknown stream {key}")
            self.queues[key] = OrderQueue(key, plug_depth=self.plug_depth)
        return self.queues[key]

    def _queue_for(self, req: WriteRequest) -> OrderQueue:
        return self.queue(req.attr.stream_id if req.ordered else self.ORDERLESS)

    def enqueue(self, req: WriteRequest, now: int = 0) -> bool:
        """Append to the stream's queue.  True when the plug window is full."""
        q = self._queue_for(req)
        if not q.fifo:
            q.opened_at = now
        q.fifo.append(req)
        return not q.plugged and len(q.fifo) >= q.plug_depth

    def start_plug(self, key: int):
        self.queues[key].plugged = True

    def finish_plug(self, key: int):
        self.queues[key].plugged = False
        return self.dispatch(key)

    def pending(self, key: int) -> int:
        q = self.queues.get(key)
        return len(q.fifo) if q else 0

    def dispatch(self, key: int) -> list[tuple[int, WriteRequest]]:
        """Drain one queue into fabric commands, tagged with the NIC send queue."""
        q = self.queues[key]
        entries = list(q.fifo)
        q.fifo.clear()
        q.opened_at = None
        ordered = key >= 0
        cmds: list[WriteRequest] = []
        for r in entries:
            cmds.extend(try_split(r, self.layout))
        if self.merge_enabled:
            cmds = try_merge(cmds, self.layout, ordered=ordered)
        out = []
        for c in cmds:
            if ordered and self.affinity:
                qid = self.nic_queue[key]
            else:
                qid = self._spray % self.num_queues
                self._spray += 1
            out.append((qid, replace(c, target_id=self.layout.target_of(c.lba))))
        self.commands_out += len(out)
        return out

    def migrate(self, stream_id: int, new_core: int) -> list[tuple[int, WriteRequest]]:
        """Stream stealing: pending requests go out before the submitter moves."""
        flushed = self.dispatch(stream_id) if self.pending(stream_id) else []
        self.core_of[stream_id] = new_core
        return flushed
