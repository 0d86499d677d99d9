"""Multi-queue RDMA-like transport with reliable-connection FIFO delivery."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .core import OrderingAttribute, decode_attr

# message kinds
SUBMIT = "write-submit"      # ordered write carrying an encoded attribute
REPLAY = "replay"            # resend of a buffered ordered write after a target failure
WRITE = "write"              # write without ordering metadata (baseline modes)
FLUSH = "flush"              # standalone device flush (baseline modes)
CONTROL = "control"          # synchronous ordering-metadata round trip (horae)
COMPLETION = "completion"
RECOVERY_FETCH = "recovery-fetch"
RECOVERY_REPLY = "recovery-reply"

TWO_SIDED = "two-sided"
ONE_SIDED = "one-sided"


@dataclass(frozen=True)
class CostModel:
    send_initiator: int = 10
    send_target: int = 10
    completion_initiator: int = 5
    completion_target: int = 5
    one_sided_initiator: int = 1


@dataclass
class FabricCommand:
    op: str
    stream_id: int = 0
    record: Optional[bytes] = None
    fingerprints: tuple = ()
    cmd_id: int = 0
    target_id: int = 0
    queue_id: int = 0
    lba: int = 0
    flush: bool = False
    cost_class: str = TWO_SIDED
    retire: tuple = ()          # ((stream_id, watermark), ...)
    certifies: Optional[tuple] = None  # (stream_id, seq) made durable by this completion
    status: str = "ok"

    def __post_init__(self):
        if self.op in (SUBMIT, REPLAY) and self.record is None:
            raise ValueError(f"{self.op} command must carry an encoded attribute")

    @property
    def attr(self) -> Optional[OrderingAttribute]:
        return decode_attr(self.record) if self.record is not None else None


def cpu_cost(cmd: FabricCommand, model: CostModel = CostModel()) -> tuple[int, int]:
    """(initiator ticks, target ticks) spent moving one command."""
    if cmd.cost_class == ONE_SIDED:
        return model.one_sided_initiator, 0
    if cmd.op == COMPLETION:
        return model.completion_initiator, model.completion_target
    return model.send_initiator, model.send_target


class Fabric:
    """One FIFO channel per (queue, target, direction).

    Delivery time is ``now + base + jitter`` but never earlier than the
    previous message on the same channel, so jitter stretches a queue without
    reordering it.  Channels of different queues are unrelated.
    """

    def __init__(self, env, num_queues: int = 1, base_latency_ticks: int = 20,
                 jitter_ticks: int = 10, seed: int = 0, name: str = "fabric"):
        if num_queues < 1:
            raise ValueError("num_queues must be positive")
        self.env = env
        self.name = name
        self.num_queues = num_queues
        self.base = base_latency_ticks
        self.jitter = jitter_ticks
        self.rng = random.Random(seed)
        self.channels: dict[tuple, deque] = {}
        self._last: dict[tuple, int] = {}
        self._msg_no = 0
        self.targets: dict[int, object] = {}
        self.initiator = None
        self.down: set[int] = set()
        self.sent = 0
        self.dropped = 0
        self.tracer = None

    def attach_target(self, target_id: int, target):
        self.targets[target_id] = target

    def attach_initiator(self, initiator):
        self.initiator = initiator

    def send(self, queue_id: int, target_id: int, cmd: FabricCommand, to_target: bool = True) -> bool:
        if not 0 <= queue_id < self.num_queues:
            raise ValueError(f"no such queue {queue_id}")
        if target_id in self.down:
            self.dropped += 1
            return False
        key = (queue_id, target_id, to_target)
        chan = self.channels.get(key)
        if chan is None:
            chan = self.channels[key] = deque()
            self.channels = dict(sorted(self.channels.items()))  # layout independent of send order
        self.sent += 1
        if self.env.explore:
            # delivery order is chosen by the explorer; numbering would only split equal states
            chan.append((0, cmd))
            self.env.schedule(0, self._deliver_head, key)
        else:
            self._msg_no += 1
            chan.append((self._msg_no, cmd))
            when = self.env.now + self.base + (self.rng.randint(0, self.jitter) if self.jitter else 0)
            when = max(when, self._last.get(key, 0))
            self._last[key] = when
            self.env.schedule(when - self.env.now, self._deliver, key, self._msg_no)
        return True

    def _deliver(self, key, msg_no):
        chan = self.channels.get(key)
        if not chan or chan[0][0] != msg_no:
            return  # dropped by a crash
        self._hand_over(key, chan.popleft()[1])

    def _deliver_head(self, key):
        chan = self.channels.get(key)
        if chan:
            self._hand_over(key, chan.popleft()[1])

    def _hand_over(self, key, cmd):
        queue_id, target_id, to_target = key
        if self.tracer is not None:
            self.tracer("deliver", queue=queue_id, target=target_id, op=cmd.op, cmd=cmd.cmd_id)
        if to_target:
            self.targets[target_id].on_message(cmd)
        else:
            self.initiator.on_message(cmd)

    def in_flight(self) -> int:
        return sum(len(c) for c in self.channels.values())

    def fail_target(self, target_id: int):
        """Drop everything in flight to or from ``target_id`` and refuse new sends."""
        self.down.add(target_id)
        for key, chan in self.channels.items():
            if key[1] == target_id:
                self.dropped += len(chan)
                chan.clear()

    def reconnect(self, target_id: int):
        self.down.discard(target_id)

    def drop_all(self):
        for chan in self.channels.values():
            self.dropped += len(chan)
            chan.clear()
