"""Target driver: log attributes, gate submission, toggle persist, complete."""

from __future__ import annotations

import heapq
from collections import defaultdict, deque
from dataclasses import dataclass, field

from .core import OrderingAttribute
from .fabric import (COMPLETION, CONTROL, FLUSH, REPLAY, SUBMIT, WRITE, CostModel,
                     FabricCommand, cpu_cost)
from .ssd import PMR_APPEND_TICKS, PMR_CAPACITY, PmrFull, PmrLog, SsdModel


class ProtocolError(RuntimeError):
    pass


class Target:
    """One storage server: a PMR log plus one or more SSDs.

    Ordered writes are appended to the log before they reach an SSD.  A write
    is released to its SSD only after the previous unit of its stream on this
    server has been fully released (``prev`` and ``prev_count``).
    """

    def __init__(self, env, target_id: int, layout, fabric, pmr_capacity: int = PMR_CAPACITY,
                 seed: int = 0, costs: CostModel = CostModel(), mutations=frozenset()):
        self.env = env
        self.target_id = target_id
        self.name = f"target{target_id}"
        self.layout = layout
        self.fabric = fabric
        self.costs = costs
        self.mutations = frozenset(mutations)
        profiles = layout.target(target_id).ssds
        self.ssds = [SsdModel(env, f"{self.name}.ssd{i}", p, owner=self, seed=seed * 1009 + target_id * 31 + i)
                     for i, p in enumerate(profiles)]
        self.plp = all(s.plp for s in self.ssds)
        self.pmr = PmrLog(pmr_capacity)
        self.tracer = None
        self.cpu_busy = 0
        self.crashed = False
        self.epoch = 0
        self._reset_volatile()

    def _reset_volatile(self):
        self.dispatched: dict[tuple, set] = defaultdict(set)
        self.held: dict[tuple, list] = defaultdict(list)
        self.flush_wait: dict[tuple, list] = {}
        self.flushing: dict[tuple, list] = {}
        self.inflight: dict[tuple, tuple] = {}
        self.backlog: deque = deque()
        self.live: dict[int, list] = defaultdict(list)
        self._cpu_free: dict[int, int] = {}  # one target core per fabric queue
        self._token = 0

    def _trace(self, event, **kw):
        if self.tracer is not None:
            self.tracer(event, target=self.target_id, **kw)

    # arrivals -----------------------------------------------------------

    def on_message(self, cmd: FabricCommand):
        if self.crashed:
            return
        cost = cpu_cost(cmd, self.costs)[1]
        if cmd.op in (SUBMIT, REPLAY, CONTROL):
            cost += PMR_APPEND_TICKS
        self.cpu_busy += cost
        if self.env.explore:
            self.env.schedule(0, self._process, self.epoch, cmd, internal=True)
        else:
            done = max(self.env.now, self._cpu_free.get(cmd.queue_id, 0)) + cost
            self._cpu_free[cmd.queue_id] = done
            self.env.schedule(done - self.env.now, self._process, self.epoch, cmd, internal=True)

    def _process(self, epoch: int, cmd: FabricCommand):
        if self.crashed or epoch != self.epoch:
            return
        if cmd.op in (SUBMIT, REPLAY):
            self._apply_retire(cmd.retire)
            if self.pmr.full or self.backlog:
                self.backlog.append(cmd)
                self._trace("pmr_full", stream=cmd.stream_id, cmd=cmd.cmd_id)
                return
            self._append(cmd)
        elif cmd.op == WRITE:
            self._start_write(cmd)
        elif cmd.op == FLUSH:
            self._flush_all(("raw", cmd))
        elif cmd.op == CONTROL:
            self._complete(cmd)
        else:
            raise ProtocolError(f"{self.name}: unexpected {cmd.op}")

    def _append(self, cmd: FabricCommand):
        attr = cmd.attr
        try:
            slot = self.pmr.append(attr)
        except PmrFull:
            self.backlog.appendleft(cmd)
            return
        heapq.heappush(self.live[attr.stream_id], (attr.seq_end, slot))
        self._trace("pmr_append", stream=attr.stream_id, seq=attr.seq_start, seq_end=attr.seq_end,
                    slot=slot, cmd=cmd.cmd_id)
        if self._gate_open(attr):
            self._dispatch(slot, attr, cmd)
        else:
            self.held[(attr.stream_id, attr.prev)].append((slot, attr, cmd))
            self._trace("hold", stream=attr.stream_id, seq=attr.seq_start, prev=attr.prev, cmd=cmd.cmd_id)

    def _gate_open(self, attr: OrderingAttribute) -> bool:
        if "no-gate" in self.mutations:
            return True
        p = attr.prev
        if p == 0 or p <= self.pmr.watermarks.get(attr.stream_id, 0):
            return True
        return len(self.dispatched[(attr.stream_id, p)]) >= attr.prev_count

    def _dispatch(self, slot: int, attr: OrderingAttribute, cmd: FabricCommand):
        s = attr.stream_id
        self._trace("ssd_dispatch", stream=s, seq=attr.seq_start, seq_end=attr.seq_end,
                    lba=attr.lba, slot=slot, cmd=cmd.cmd_id)
        if "early-persist" in self.mutations:
            self.pmr.set_persist(slot)
        if not attr.marker:
            tid, ssd_id, dev_lba = self.layout.locate(attr.lba)
            if tid != self.target_id:
                raise ProtocolError(f"{self.name}: lba {attr.lba} belongs to target {tid}")
            token = ("d", slot, cmd.cmd_id)
            self.inflight[token] = (slot, attr, cmd)
            self.ssds[ssd_id].submit_write(token, dev_lba, cmd.fingerprints)
        key = (s, attr.seq_end)
        # a set, so a duplicated replay can not open the gate early
        self.dispatched[key].add(record_identity(attr))
        if (attr.flush or attr.marker) and not self.plp:
            self.flush_wait.setdefault(key, []).append((slot, attr, cmd))
        self._maybe_flush(key)
        waiting = self.held.pop(key, None)
        if waiting:
            for slot2, attr2, cmd2 in waiting:
                if self._gate_open(attr2):
                    self._dispatch(slot2, attr2, cmd2)
                else:
                    self.held[key].append((slot2, attr2, cmd2))

    def _maybe_flush(self, key):
        waiting = self.flush_wait.get(key)
        if not waiting:
            return
        ready = [w for w in waiting if len(self.dispatched[key]) >= max(1, w[1].unit_count)]
        if not ready:
            return
        self.flush_wait[key] = [w for w in waiting if w not in ready]
        for slot, attr, cmd in ready:
            self._flush_all(("rec", slot, attr, cmd))

    def _flush_all(self, what):
        self._token += 1
        token = ("f", self._token)
        self.flushing[token] = [len(self.ssds), what]
        self._trace("flush", token=self._token)
        for ssd in self.ssds:
            ssd.flush(token)

    def _start_write(self, cmd: FabricCommand):
        tid, ssd_id, dev_lba = self.layout.locate(cmd.lba)
        if tid != self.target_id:
            raise ProtocolError(f"{self.name}: lba {cmd.lba} belongs to target {tid}")
        self._token += 1
        token = ("w", self._token)
        self.inflight[token] = (None, None, cmd)
        self.ssds[ssd_id].submit_write(token, dev_lba, cmd.fingerprints)

    # device events -------------------------------------------------------

    def on_ssd_event(self, ssd, kind: str, token):
        if self.crashed:
            return
        if kind == "cached":
            info = self.inflight.pop(token, None)
            if info is None:
                raise ProtocolError(f"{self.name}: completion for unknown request {token}")
            slot, attr, cmd = info
            if token[0] == "w":
                if cmd.flush and not ssd.plp:
                    self._flush_all(("raw", cmd))
                else:
                    self._complete(cmd)
                return
            self._trace("cached", stream=attr.stream_id, seq=attr.seq_start, slot=slot, cmd=cmd.cmd_id)
            if self.plp:
                self.pmr.set_persist(slot)
                self._complete(cmd, certifies=(attr.stream_id, attr.seq_end))
            elif not attr.flush:
                self._complete(cmd)
        elif kind == "flushed":
            entry = self.flushing.get(token)
            if entry is None:
                raise ProtocolError(f"{self.name}: unknown flush {token}")
            entry[0] -= 1
            if entry[0]:
                return
            del self.flushing[token]
            what = entry[1]
            if what[0] == "raw":
                self._complete(what[1])
                return
            _, slot, attr, cmd = what
            self.pmr.set_persist(slot)
            self._trace("persist", stream=attr.stream_id, seq=attr.seq_end, slot=slot, cmd=cmd.cmd_id)
            self._complete(cmd, certifies=(attr.stream_id, attr.seq_end))
        else:
            raise ProtocolError(f"{self.name}: unknown SSD event {kind}")

    def _complete(self, cmd: FabricCommand, certifies=None):
        reply = FabricCommand(COMPLETION, stream_id=cmd.stream_id, cmd_id=cmd.cmd_id,
                              target_id=self.target_id, queue_id=cmd.queue_id, certifies=certifies)
        self.cpu_busy += cpu_cost(reply, self.costs)[1]
        self.fabric.send(cmd.queue_id, self.target_id, reply, to_target=False)

    # log space ------------------------------------------------------------

    def _apply_retire(self, retire):
        freed = False
        for stream_id, wm in retire:
            if wm <= self.pmr.watermarks.get(stream_id, 0):
                continue
            self.pmr.retire(stream_id, wm)
            heap = self.live[stream_id]
            while heap and heap[0][0] <= wm:
                seq_end, slot = heapq.heappop(heap)
                self.pmr.release(slot)
                self.dispatched.pop((stream_id, seq_end), None)
                freed = True
        if freed:
            while self.backlog and not self.pmr.full:
                self._append(self.backlog.popleft())

    # failures -------------------------------------------------------------

    def crash(self):
        """Power loss: caches, gate state and log pointers vanish."""
        self.crashed = True
        self.epoch += 1
        for ssd in self.ssds:
            ssd.power_loss()
        self.pmr.crash()
        self._reset_volatile()

    def restart(self, valid=None):
        """Bring the server back.  ``valid`` maps stream -> surviving records."""
        self.pmr.restart()
        self.crashed = False
        for slot, attr in self.pmr.scan():
            heapq.heappush(self.live[attr.stream_id], (attr.seq_end, slot))
        for records in (valid or {}).values():
            for _, attr in records:
                self.dispatched[(attr.stream_id, attr.seq_end)].add(record_identity(attr))

    def erase_record_blocks(self, attr: OrderingAttribute) -> int:
        if attr.marker:
            return 0
        tid, ssd_id, dev_lba = self.layout.locate(attr.lba)
        return self.ssds[ssd_id].erase(dev_lba, attr.len)

    def drop_records(self, slots, erase: bool = True) -> dict:
        """Remove log records (and their blocks) that recovery declared invalid.

        Returns erased block counts per SSD index.
        """
        erased = defaultdict(int)
        for slot in sorted(slots):
            attr = self.pmr.get(slot)
            if erase and not attr.ipu and not attr.marker:
                _, ssd_id, _ = self.layout.locate(attr.lba)
                erased[ssd_id] += self.erase_record_blocks(attr)
            self.pmr.release(slot)
            heap = self.live[attr.stream_id]
            if (attr.seq_end, slot) in heap:
                heap.remove((attr.seq_end, slot))
                heapq.heapify(heap)
        return dict(erased)


@dataclass
class ServerList:
    """Per-server ordering list rebuilt from the PMR after a restart."""

    target_id: int
    plp: bool
    streams: dict = field(default_factory=dict)   # stream -> [(slot, attr)] valid, chain order
    invalid: list = field(default_factory=list)   # slots of live records not in the list
    floors: dict = field(default_factory=dict)    # stream -> recycled watermark
    records_scanned: int = 0
    corrupt: bool = False


def record_identity(attr: OrderingAttribute):
    return (attr.seq_start, attr.seq_end, attr.lba, attr.len, attr.split, attr.marker)


def rebuild_server_list(pmr: PmrLog, plp: bool, target_id: int = 0) -> ServerList:
    """Longest chain-connected, durable-evident prefix of records per stream."""
    out = ServerList(target_id, plp, floors=dict(pmr.watermarks))
    entries = pmr.scan()
    live = sum(1 for s in pmr.slots if s is not None)
    out.records_scanned = len(entries)
    out.corrupt = len(entries) < live
    scanned = {slot for slot, _ in entries}
    out.invalid.extend(i for i, s in enumerate(pmr.slots) if s is not None and i not in scanned)
    by_stream: dict[int, list] = defaultdict(list)
    for slot, attr in entries:
        by_stream[attr.stream_id].append((slot, attr))
    for stream_id, recs in sorted(by_stream.items()):
        floor = pmr.watermarks.get(stream_id, 0)
        units: dict[int, dict] = {}
        for slot, attr in recs:
            if attr.seq_end <= floor:
                continue
            unit = units.setdefault(attr.seq_end, {})
            ident = record_identity(attr)
            if ident in unit:
                # duplicate from a replay: keep the one with the stronger evidence
                old_slot, old = unit[ident]
                if attr.persist and not old.persist:
                    unit[ident] = (slot, attr)
                    out.invalid.append(old_slot)
                else:
                    out.invalid.append(slot)
            else:
                unit[ident] = (slot, attr)
        certified = 0
        if not plp:
            for unit in units.values():
                for _, a in unit.values():
                    if a.persist and (a.flush or a.marker):
                        certified = max(certified, a.seq_end)
        valid = []
        prev_end = prev_count = None
        broken = False
        for end in sorted(units):
            members = list(units[end].values())
            if broken:
                out.invalid.extend(slot for slot, _ in members)
                continue
            head = members[0][1]
            if prev_end is None:
                linked = head.prev == 0 or head.prev <= floor
            else:
                linked = head.prev == prev_end and head.prev_count == prev_count
            if not linked:
                broken = True
                out.invalid.extend(slot for slot, _ in members)
                continue
            for slot, a in members:
                durable = a.persist if plp else a.seq_end <= certified
                if durable:
                    valid.append((slot, a))
                else:
                    broken = True
                    out.invalid.append(slot)
            prev_end, prev_count = end, len(members)
        out.streams[stream_id] = valid
    return out
