"""SSD device model and the PMR circular log of ordering attributes."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .core import F_LAP, RECORD_SIZE, DecodingError, OrderingAttribute, decode_attr, encode_attr

PMR_APPEND_TICKS = 6  # ~0.6 us to persist one 32 B record
PMR_CAPACITY = (2 * 1024 * 1024) // RECORD_SIZE


@dataclass(frozen=True)
class SsdProfile:
    name: str
    plp: bool
    write_ticks: int = 100
    flush_ticks: int = 1000
    channels: int = 8
    max_transfer_blocks: int = 32
    jitter_ticks: int = 25

    @property
    def block_ticks(self) -> int:
        # bandwidth share of one 4 KB block
        return max(1, -(-self.write_ticks // self.channels))


FLASH = SsdProfile("flash", plp=False, write_ticks=100, flush_ticks=1000)
OPTANE = SsdProfile("optane", plp=True, write_ticks=80, flush_ticks=0)
PROFILES = {"flash": FLASH, "optane": OPTANE}


class SsdModel:
    """Volatile write cache in front of persistent media.

    The owner receives ``on_ssd_event(ssd, kind, token)`` with kind
    ``"cached"`` for each write and ``"flushed"`` for each flush.  Independent
    writes may finish in any order; a flush completes only after every write
    submitted before it reached the cache.
    """

    def __init__(self, env, name: str, profile: SsdProfile, owner=None, seed: int = 0):
        self.env = env
        self.name = name
        self.profile = profile
        self.owner = owner
        self.rng = random.Random(seed)
        self.cache: dict[int, int] = {}
        self.media: dict[int, int] = {}
        self.outstanding: set[int] = set()
        self._next_wid = 0
        self._busy_until = 0
        self.busy_ticks = 0
        self.flush_waiters: list[tuple[object, frozenset]] = []
        self.flushing = False
        self.epoch = 0
        self.writes = 0
        self.flushes = 0

    @property
    def plp(self) -> bool:
        return self.profile.plp

    def submit_write(self, token, dev_lba: int, fingerprints) -> int:
        n = len(fingerprints)
        if n > self.profile.max_transfer_blocks:
            raise ValueError(
                f"{self.name}: write of {n} blocks exceeds max transfer "
                f"{self.profile.max_transfer_blocks}"
            )
        wid = self._next_wid
        self._next_wid += 1
        self.outstanding.add(wid)
        self.writes += 1
        delay = 0
        if not self.env.explore:
            p = self.profile
            start = max(self.env.now, self._busy_until)
            occupy = n * p.block_ticks
            self._busy_until = start + occupy
            self.busy_ticks += occupy
            jitter = self.rng.randint(0, p.jitter_ticks) if p.jitter_ticks else 0
            delay = self._busy_until - self.env.now + max(0, p.write_ticks - p.block_ticks) + jitter
        self.env.schedule(delay, self._cached, self.epoch, wid, token, dev_lba, tuple(fingerprints))
        return wid

    def _cached(self, epoch, wid, token, dev_lba, fingerprints):
        if epoch != self.epoch:
            return
        for i, fp in enumerate(fingerprints):
            self.cache[dev_lba + i] = fp
        self.outstanding.discard(wid)
        self.flush_waiters = [(tok, deps - {wid}) for tok, deps in self.flush_waiters]
        if self.owner is not None:
            self.owner.on_ssd_event(self, "cached", token)
        self._try_start_flush()

    def flush(self, token):
        self.flushes += 1
        self.flush_waiters.append((token, frozenset(self.outstanding)))
        self._try_start_flush()

    def _try_start_flush(self):
        if self.flushing or not self.flush_waiters:
            return
        ready = [w for w in self.flush_waiters if not w[1]]
        if not ready:
            return
        tokens = tuple(w[0] for w in ready)
        self.flush_waiters = [w for w in self.flush_waiters if w[1]]
        self.flushing = True
        delay = 0 if self.env.explore or self.plp else self.profile.flush_ticks
        self.env.schedule(delay, self._flush_done, self.epoch, tokens)

    def _flush_done(self, epoch, tokens):
        if epoch != self.epoch:
            return
        self.media.update(self.cache)
        self.cache.clear()
        self.flushing = False
        if self.owner is not None:
            for token in tokens:
                self.owner.on_ssd_event(self, "flushed", token)
        self._try_start_flush()

    def power_loss(self):
        """Drop everything volatile.  With PLP the cache is destaged first."""
        if self.plp:
            self.media.update(self.cache)
        self.cache.clear()
        self.outstanding.clear()
        self.flush_waiters.clear()
        self.flushing = False
        self._busy_until = 0
        self.epoch += 1

    def read(self, dev_lba: int):
        if dev_lba in self.cache:
            return self.cache[dev_lba]
        return self.media.get(dev_lba)

    def erase(self, dev_lba: int, n: int = 1) -> int:
        erased = 0
        for lba in range(dev_lba, dev_lba + n):
            erased += (self.media.pop(lba, None) is not None) | (self.cache.pop(lba, None) is not None)
        return erased


class PmrFull(RuntimeError):
    pass


class PmrLog:
    """Circular log of 32-byte ordering-attribute records.

    ``slots`` and ``watermarks`` model the persistent region; ``head``,
    ``tail`` and ``size`` are volatile and are lost on :meth:`crash`.
    """

    def __init__(self, capacity: int = PMR_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.slots: list = [None] * capacity
        # per-stream highest sequence whose records were recycled
        self.watermarks: dict[int, int] = {}
        self.head = 0
        self.tail = 0
        self.size = 0
        self.lap = 0
        self.appends = 0
        self.persist_writes = 0

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    @property
    def append_ticks(self) -> int:
        return self.appends * PMR_APPEND_TICKS

    def append(self, attr: OrderingAttribute) -> int:
        if self.full:
            raise PmrFull("PMR log full")
        slot = self.tail
        rec = encode_attr(attr)
        if self.lap & 1:
            rec = rec[:1] + bytes([rec[1] | F_LAP]) + rec[2:]
        self.slots[slot] = rec
        self.tail = (self.tail + 1) % self.capacity
        if self.tail == 0:
            self.lap += 1
        self.size += 1
        self.appends += 1
        return slot

    def get(self, slot: int) -> OrderingAttribute:
        return decode_attr(self.slots[slot])

    def set_persist(self, slot: int):
        rec = self.slots[slot]
        if rec is None:
            raise KeyError(f"slot {slot} is not live")
        # persist is bit 0 of the flag byte: a single in-place byte write
        self.slots[slot] = rec[:1] + bytes([rec[1] | 1]) + rec[2:]
        self.persist_writes += 1

    def release(self, slot: int):
        self.slots[slot] = None
        while self.size and self.slots[self.head] is None:
            self.head = (self.head + 1) % self.capacity
            self.size -= 1

    def retire(self, stream_id: int, seq: int):
        if seq > self.watermarks.get(stream_id, 0):
            self.watermarks[stream_id] = seq

    def scan(self):
        """Live ``(slot, attr)`` pairs in log order; corrupt records truncate the scan."""
        out = []
        for slot in self._order():
            raw = self.slots[slot]
            if raw is None:
                continue
            try:
                out.append((slot, decode_attr(raw)))
            except DecodingError:
                break
        return out

    def _order(self):
        if self.head is not None:
            return [(self.head + i) % self.capacity for i in range(self.size)]
        return self._recovered_order()

    def _recovered_order(self):
        # live records span less than one pass, so in slot order the newer pass
        # (low slots) precedes the older one; the head is where the lap bit flips
        live = [i for i, s in enumerate(self.slots) if s is not None]
        if not live:
            return []
        start = live[0]
        first = self._lap_bit(live[0])
        for i in live:
            if self._lap_bit(i) != first:
                start = i
                break
        return [(start + i) % self.capacity for i in range(self.capacity)]

    def _lap_bit(self, slot: int) -> int:
        return 1 if self.slots[slot][1] & F_LAP else 0

    def crash(self):
        self.head = self.tail = None
        self.size = None

    def restart(self):
        """Rebuild the volatile pointers from record contents."""
        order = [s for s in self._recovered_order() if self.slots[s] is not None]
        if not order:
            self.head = self.tail = 0
            self.size = 0
            return
        self.head = order[0]
        last = order[-1]
        self.tail = (last + 1) % self.capacity
        self.size = (last - self.head) % self.capacity + 1
        self.lap = self._lap_bit(last) + (1 if self.tail == 0 else 0)
