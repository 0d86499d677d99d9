"""Initiator driver and cluster assembly.

The initiator turns dispatched ORDER-queue output into fabric commands.  For
every (stream, target) pair it keeps the chain that the target gate follows:
each command names the last sequence of the previous unit on that target and
how many commands that unit had.  When a flush-bearing unit goes out, every
other non-PLP target holding uncertified data of the stream receives a
zero-length flush marker so that the flush certifies the whole stream.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .core import OrderingAttribute, WriteRequest, encode_attr
from .fabric import (COMPLETION, CONTROL, FLUSH, REPLAY, SUBMIT, WRITE, CostModel, Fabric,
                     FabricCommand, cpu_cost)
from .scheduler import Scheduler, VolumeLayout, try_split
from .sequencer import ConnectionLost, Sequencer, SubmitHandle
from .sim import EventLoop, ExploreLoop
from .ssd import PMR_CAPACITY, PROFILES
from .target import Target, record_identity


@dataclass
class CmdState:
    cmd_id: int
    stream_id: int
    target_id: int
    queue_id: int
    attr: OrderingAttribute
    fingerprints: tuple
    groups: tuple
    done: bool = False

    @property
    def identity(self):
        return record_identity(self.attr)


@dataclass
class GroupTrack:
    undispatched: int = 0
    closed: bool = False
    flush: bool = False
    outstanding: set = field(default_factory=set)
    cmds: list = field(default_factory=list)


@dataclass
class ChainState:
    last_end: int = 0
    last_count: int = 0
    cur_end: Optional[int] = None
    cur_count: int = 0
    cur_prev: int = 0
    cur_prev_count: int = 0
    dirty: bool = False
    retire_sent: int = 0


class Initiator:
    def __init__(self, env, layout: VolumeLayout, fabric: Fabric, num_streams: int,
                 num_queues: int = 1, plug_depth: int = 16, plug_timeout_ticks: int = 20,
                 merge_enabled: bool = True, affinity: bool = True, costs: CostModel = CostModel(),
                 software_ticks: int = 10, rio_ticks: int = 1, plp_of=None):
        self.env = env
        self.name = "initiator"
        self.layout = layout
        self.fabric = fabric
        self.costs = costs
        self.software_ticks = software_ticks
        self.rio_ticks = rio_ticks
        self.sequencer = Sequencer(num_streams, layout, num_queues)
        self.sched = Scheduler(layout, num_queues, plug_depth, plug_timeout_ticks, merge_enabled, affinity)
        for st in self.sequencer.streams:
            self.sched.add_stream(st.stream_id, st.nic_queue_id)
        self.plp_of = plp_of or {}
        self.cmds: dict[int, CmdState] = {}
        self.groups: dict[tuple, GroupTrack] = {}
        self.chains: dict[tuple, ChainState] = {}
        self.cert: dict[tuple, int] = defaultdict(int)
        self.wm: dict[int, int] = defaultdict(int)
        self.core_busy: dict[int, int] = defaultdict(int)
        self.sent: dict[str, int] = defaultdict(int)
        self.raw: dict[int, tuple] = {}
        self.release_hooks: list[Callable] = []
        self.dispatch_hooks: list[Callable] = []
        self.submit_hooks: list[Callable] = []
        self.tracer = None
        self._cmd_id = 0
        self._plug_epoch: dict[int, int] = defaultdict(int)
        self._tags: dict[int, list] = defaultdict(list)

    def _trace(self, event, **kw):
        if self.tracer is not None:
            self.tracer(event, **kw)

    def _next_id(self) -> int:
        self._cmd_id += 1
        return self._cmd_id

    def _charge(self, core: int, ticks: int) -> int:
        self.core_busy[core] += ticks
        return ticks

    # ordered path -----------------------------------------------------------

    def submit(self, stream_id: int, lba: int, length: int, group_end: bool = True,
               flush: bool = False, ipu: bool = False, payload=None, core: Optional[int] = None):
        """Attribute and queue one ordered write.  Returns (handle, initiator ticks)."""
        st = self.sequencer.stream(stream_id)
        if flush and not group_end:
            # a barrier inside a group is carried by the group's final request
            st.pending_flush = True
            flush = False
            self._trace("flush_deferred", stream=stream_id, seq=st.next_seq)
        if group_end and st.pending_flush:
            flush = True
            st.pending_flush = False
        req, handle = self.sequencer.submit(stream_id, lba, length, group_end, flush, ipu, payload)
        tr = self.groups.setdefault((stream_id, handle.seq), GroupTrack())
        tr.undispatched += 1
        if group_end:
            tr.closed = True
            tr.flush = flush
        for hook in self.submit_hooks:
            hook(req)
        self._trace("submit", stream=stream_id, seq=handle.seq, lba=lba, len=length,
                    group_end=group_end, flush=flush)
        core = stream_id if core is None else core
        cost = self._charge(core, self.software_ticks + self.rio_ticks)
        if self.sched.enqueue(req, self.env.now):
            cost += self.dispatch(stream_id, core)
        elif (not self.env.explore and self.sched.pending(stream_id) == 1
              and not self.sched.queues[stream_id].plugged):
            self.env.schedule(self.sched.plug_timeout_ticks, self._plug_timeout, stream_id,
                              self._plug_epoch[stream_id], core)
        return handle, cost

    def _plug_timeout(self, key, epoch, core):
        if self._plug_epoch[key] == epoch and self.sched.pending(key):
            self.dispatch(key, core)

    def start_plug(self, stream_id: int):
        self.sched.start_plug(stream_id)

    def finish_plug(self, stream_id: int, core: Optional[int] = None) -> int:
        self.sched.queues[stream_id].plugged = False
        return self.dispatch(stream_id, stream_id if core is None else core)

    def migrate(self, stream_id: int, new_core: int) -> int:
        """Stream stealing: flush the ORDER queue before the submitter moves."""
        cost = self.dispatch(stream_id, self.sched.core_of.get(stream_id, stream_id))
        self.sched.core_of[stream_id] = new_core
        return cost

    def dispatch(self, key: int, core: int = 0) -> int:
        if key < 0:
            return self._dispatch_raw(key, core)
        entries = list(self.sched.queues[key].fifo)
        if not entries:
            return 0
        self._plug_epoch[key] += 1
        out = self.sched.dispatch(key)
        for e in entries:
            self.groups[(key, e.attr.seq_start)].undispatched -= 1
        last_of_unit = {}
        last_flush = {}
        for i, (_, req) in enumerate(out):
            last_of_unit[req.attr.seq_end] = i
            if req.attr.flush:
                last_flush[(req.target_id, req.attr.seq_end)] = i
        cost = 0
        for i, (qid, req) in enumerate(out):
            a = req.attr
            t = req.target_id
            plp = self.plp_of.get(t, False)
            attr, pos = self._chain(key, t, a)
            carries = a.flush and last_flush.get((t, a.seq_end)) == i
            if plp:
                attr = replace(attr, unit_count=pos if carries else 0)
            elif carries:
                attr = replace(attr, flush=True, unit_count=pos)
                self.chains[(key, t)].dirty = False
            else:
                attr = replace(attr, flush=False)
                self.chains[(key, t)].dirty = True
            groups = tuple(range(a.seq_start, a.seq_end + 1))
            cost += self._send_ordered(key, t, qid, attr, req.payload_digest, groups, core)
            if a.flush and last_of_unit[a.seq_end] == i:
                cost += self._send_markers(key, qid, a, groups, core)
        for hook in self.dispatch_hooks:
            hook(key, [r for _, r in out])
        return cost

    def _chain(self, stream_id: int, target_id: int, a: OrderingAttribute):
        ch = self.chains.setdefault((stream_id, target_id), ChainState())
        if ch.cur_end != a.seq_end:
            if ch.cur_end is not None:
                ch.last_end, ch.last_count = ch.cur_end, ch.cur_count
            ch.cur_end = a.seq_end
            ch.cur_count = 0
            ch.cur_prev, ch.cur_prev_count = ch.last_end, ch.last_count
        ch.cur_count += 1
        return replace(a, prev=ch.cur_prev, prev_count=ch.cur_prev_count), ch.cur_count

    def _send_markers(self, stream_id, qid, a, groups, core) -> int:
        cost = 0
        g = a.seq_end
        for (s, t), ch in sorted(self.chains.items()):
            if s != stream_id or not ch.dirty or self.plp_of.get(t, False):
                continue
            marker = OrderingAttribute(seq_start=g, seq_end=g, stream_id=stream_id, lba=0, len=0,
                                       flush=True, nreq=0, marker=True)
            marker, pos = self._chain(stream_id, t, marker)
            marker = replace(marker, unit_count=pos)
            ch.dirty = False
            cost += self._send_ordered(stream_id, t, qid, marker, (), groups, core)
        return cost

    def _send_ordered(self, stream_id, target_id, qid, attr, fps, groups, core, op=SUBMIT) -> int:
        cid = self._next_id()
        st = CmdState(cid, stream_id, target_id, qid, attr, tuple(fps), groups)
        self.cmds[cid] = st
        for g in groups:
            tr = self.groups.get((stream_id, g))
            if tr is not None:
                tr.outstanding.add(cid)
                tr.cmds.append(cid)
        return self._post(st, op, core)

    def _post(self, st: CmdState, op: str, core: int) -> int:
        cmd = FabricCommand(op, stream_id=st.stream_id, record=encode_attr(st.attr),
                            fingerprints=st.fingerprints, cmd_id=st.cmd_id, target_id=st.target_id,
                            queue_id=st.queue_id, retire=self._retire_for(st.stream_id, st.target_id))
        self.sent[op] += 1
        self._trace("send", op=op, stream=st.stream_id, seq=st.attr.seq_start, seq_end=st.attr.seq_end,
                    target=st.target_id, queue=st.queue_id, cmd=st.cmd_id, marker=st.attr.marker)
        self.fabric.send(st.queue_id, st.target_id, cmd)
        return self._charge(core, cpu_cost(cmd, self.costs)[0])

    def _retire_for(self, stream_id: int, target_id: int) -> tuple:
        ch = self.chains.get((stream_id, target_id))
        wm = self.wm[stream_id]
        if ch is None or wm <= ch.retire_sent:
            return ()
        ch.retire_sent = wm
        return ((stream_id, wm),)

    # completions ------------------------------------------------------------

    def on_message(self, cmd: FabricCommand):
        if cmd.op != COMPLETION:
            raise ValueError(f"initiator got {cmd.op}")
        raw = self.raw.pop(cmd.cmd_id, None)
        if raw is not None:
            core, callback = raw
            self._charge(core, cpu_cost(cmd, self.costs)[0])
            callback(cmd)
            return
        st = self.cmds.get(cmd.cmd_id)
        if st is None or st.done:
            return  # duplicate completion
        st.done = True
        s = st.stream_id
        self._charge(self.sched.core_of.get(s, s), cpu_cost(cmd, self.costs)[0])
        if cmd.certifies is not None:
            key = (s, st.target_id)
            self.cert[key] = max(self.cert[key], cmd.certifies[1])
        self._trace("complete", stream=s, seq=st.attr.seq_start, seq_end=st.attr.seq_end,
                    target=st.target_id, cmd=st.cmd_id)
        for g in st.groups:
            tr = self.groups.get((s, g))
            if tr is not None:
                tr.outstanding.discard(st.cmd_id)
                self._check_group(s, g, tr)
        self._advance_wm(s)

    def _check_group(self, s, g, tr):
        if not (tr.closed and tr.undispatched == 0 and not tr.outstanding):
            return
        for r in self.sequencer.on_device_completion(s, g):
            flush = self.groups[(s, r)].flush if (s, r) in self.groups else False
            self._trace("release", stream=s, seq=r, flush=flush)
            for hook in self.release_hooks:
                hook(s, r, flush)

    def _durable(self, st: CmdState) -> bool:
        if not st.done:
            return False
        if self.plp_of.get(st.target_id, False):
            return True
        return self.cert[(st.stream_id, st.target_id)] >= st.attr.seq_end

    def _advance_wm(self, s: int):
        released = self.sequencer.stream(s).released_upto
        while self.wm[s] < released:
            g = self.wm[s] + 1
            tr = self.groups.get((s, g))
            if tr is None or not all(self._durable(self.cmds[c]) for c in tr.cmds if c in self.cmds):
                break
            self.wm[s] = g
            for c in tr.cmds:
                st = self.cmds.get(c)
                if st is not None and st.attr.seq_end <= g:
                    del self.cmds[c]
            del self.groups[(s, g)]

    # replay after a target failure -------------------------------------------

    def buffered_for(self, target_id: int) -> list[CmdState]:
        return [st for _, st in sorted(self.cmds.items()) if st.target_id == target_id]

    def settle(self, target_id: int, keep: set):
        """Count commands whose records survived a target failure as durable."""
        for st in self.buffered_for(target_id):
            if (st.stream_id, st.identity) not in keep or st.done:
                continue
            st.done = True
            if not self.plp_of.get(target_id, False):
                key = (st.stream_id, target_id)
                self.cert[key] = max(self.cert[key], st.attr.seq_end)
            for g in st.groups:
                tr = self.groups.get((st.stream_id, g))
                if tr is not None:
                    tr.outstanding.discard(st.cmd_id)
                    self._check_group(st.stream_id, g, tr)
        for s in range(len(self.sequencer.streams)):
            self._advance_wm(s)

    def replay(self, target_id: int, keep: set, copies: int = 1) -> list[int]:
        """Resend buffered commands whose records did not survive on ``target_id``."""
        resent = []
        for st in self.buffered_for(target_id):
            if (st.stream_id, st.identity) in keep:
                continue
            st.done = False
            for g in st.groups:
                tr = self.groups.get((st.stream_id, g))
                if tr is not None and g > self.sequencer.stream(st.stream_id).released_upto:
                    tr.outstanding.add(st.cmd_id)
            for _ in range(copies):
                self._post(st, REPLAY, self.sched.core_of.get(st.stream_id, st.stream_id))
            resent.append(st.cmd_id)
        return resent

    # baseline paths --------------------------------------------------------------

    def submit_orderless(self, core: int, lba: int, length: int, payload, tag=None,
                         flush: bool = False) -> int:
        """Queue a write with no ordering semantics on the core's own queue."""
        req = WriteRequest(OrderingAttribute(0, 0, lba=lba, len=length, flush=flush),
                           tuple(payload), ordered=False, target_id=self.layout.target_of(lba))
        key = -1 - core
        q = self.sched.queue(key)
        if not q.fifo:
            q.opened_at = self.env.now
        q.fifo.append(req)
        self._tags[key].append(tag)
        cost = self._charge(core, self.software_ticks)
        if not q.plugged and len(q.fifo) >= q.plug_depth:
            cost += self._dispatch_raw(key, core)
        elif not self.env.explore and len(q.fifo) == 1 and not q.plugged:
            self.env.schedule(self.sched.plug_timeout_ticks, self._plug_timeout, key,
                              self._plug_epoch[key], core)
        return cost

    def plug_orderless(self, core: int):
        self.sched.queue(-1 - core).plugged = True

    def unplug_orderless(self, core: int) -> int:
        self.sched.queue(-1 - core).plugged = False
        return self._dispatch_raw(-1 - core, core)

    def _dispatch_raw(self, key: int, core: int) -> int:
        q = self.sched.queues[key]
        entries = list(q.fifo)
        if not entries:
            return 0
        tags = self._tags.pop(key, [])
        self._plug_epoch[key] += 1
        out = self.sched.dispatch(key)
        # map every input block to the command that carries it
        owners = [i for i, e in enumerate(entries) for _ in range(e.len)]
        waiting = defaultdict(set)
        cmd_of_block = []
        for j, (_, c) in enumerate(out):
            cmd_of_block.extend([j] * c.len)
        for blk, i in enumerate(owners):
            waiting[i].add(cmd_of_block[blk])
        pending = {j: set() for j in range(len(out))}
        for i, js in waiting.items():
            for j in js:
                pending[j].add(i)
        remaining = {i: len(js) for i, js in waiting.items()}
        cost = 0

        def done_cb(j):
            def cb(_msg):
                for i in pending[j]:
                    remaining[i] -= 1
                    if remaining[i] == 0 and tags[i] is not None:
                        tags[i]()
            return cb

        for j, (qid, c) in enumerate(out):
            cost += self.send_raw(core, WRITE, c.target_id, qid, lba=c.lba, fps=c.payload_digest,
                                  flush=c.attr.flush, callback=done_cb(j))
        return cost

    def send_raw(self, core: int, op: str, target_id: int, queue_id: int, lba: int = 0,
                 fps: tuple = (), flush: bool = False, callback=None, stream_id: int = 0) -> int:
        cid = self._next_id()
        cmd = FabricCommand(op, stream_id=stream_id, fingerprints=tuple(fps), cmd_id=cid,
                            target_id=target_id, queue_id=queue_id, lba=lba, flush=flush)
        self.raw[cid] = (core, callback or (lambda _m: None))
        self.sent[op] += 1
        self._trace("send", op=op, target=target_id, queue=queue_id, cmd=cid, lba=lba, flush=flush)
        self.fabric.send(queue_id, target_id, cmd)
        return self._charge(core, cpu_cost(cmd, self.costs)[0])

    def write_direct(self, core: int, lba: int, length: int, payload, flush: bool = False,
                     callback=None) -> int:
        """Split-only write, no queueing; the callback fires when every part is done."""
        req = WriteRequest(OrderingAttribute(0, 0, lba=lba, len=length), tuple(payload), ordered=False)
        parts = try_split(req, self.layout)
        left = [len(parts)]

        def cb(_msg):
            left[0] -= 1
            if left[0] == 0 and callback is not None:
                callback()

        qid = core % self.fabric.num_queues
        cost = self._charge(core, self.software_ticks)
        return cost + sum(self.send_raw(core, WRITE, self.layout.target_of(p.lba), qid, lba=p.lba,
                                        fps=p.payload_digest, flush=flush, callback=cb) for p in parts)


@dataclass
class ClusterConfig:
    targets: int = 2
    ssds_per_target: int = 1
    ssd_profile: str = "flash"
    stripe_unit_blocks: int = 32
    num_streams: int = 1
    num_queues: int = 1
    plug_depth: int = 16
    plug_timeout_ticks: int = 20
    merge_enabled: bool = True
    affinity: bool = True
    base_latency_ticks: int = 20
    jitter_ticks: int = 10
    seed: int = 0
    pmr_capacity: int = PMR_CAPACITY
    software_ticks: int = 10
    rio_ticks: int = 1
    mutations: tuple = ()
    initiator_recovery: str = "drop"
    ipu_policy: str = "report-only"

    def __post_init__(self):
        if self.ssd_profile not in PROFILES:
            raise ValueError(f"ssd_profile: unknown profile {self.ssd_profile!r}")
        if self.initiator_recovery not in ("drop", "replay-if-buffered"):
            raise ValueError(f"initiator_recovery: {self.initiator_recovery!r}")
        for key in ("targets", "ssds_per_target", "stripe_unit_blocks", "num_streams",
                    "num_queues", "plug_depth", "pmr_capacity"):
            if getattr(self, key) < 1:
                raise ValueError(f"{key}: must be positive")
        unknown = set(self.mutations) - {"no-gate", "no-rollback", "early-persist"}
        if unknown:
            raise ValueError(f"mutations: unknown {sorted(unknown)}")


@dataclass
class History:
    """What the application asked for, kept outside every simulated node."""

    requests: dict = field(default_factory=lambda: defaultdict(list))  # stream -> [(seq, lba, fps, ipu)]
    merged: dict = field(default_factory=lambda: defaultdict(set))     # stream -> {(a, b)}
    flush_groups: dict = field(default_factory=lambda: defaultdict(set))
    acked: dict = field(default_factory=lambda: defaultdict(int))      # stream -> highest released group
    acked_flush: dict = field(default_factory=lambda: defaultdict(int))

    def on_submit(self, req: WriteRequest):
        a = req.attr
        self.requests[a.stream_id].append((a.seq_start, a.lba, req.payload_digest, a.ipu))
        if a.flush:
            self.flush_groups[a.stream_id].add(a.seq_start)

    def on_dispatch(self, stream_id, commands):
        for c in commands:
            if c.attr.merged:
                self.merged[stream_id].add((c.attr.seq_start, c.attr.seq_end))

    def on_release(self, stream_id, seq, flush):
        self.acked[stream_id] = max(self.acked[stream_id], seq)
        if flush:
            self.acked_flush[stream_id] = max(self.acked_flush[stream_id], seq)

    def groups(self, stream_id) -> dict:
        out = defaultdict(list)
        for seq, lba, fps, ipu in self.requests.get(stream_id, []):
            out[seq].append((lba, fps, ipu))
        return dict(out)


class Cluster:
    """A complete simulated deployment: one initiator, several targets."""

    def __init__(self, cfg: ClusterConfig = ClusterConfig(), explore: bool = False):
        self.cfg = cfg
        self.env = ExploreLoop() if explore else EventLoop()
        profile = PROFILES[cfg.ssd_profile]
        self.layout = VolumeLayout.uniform(cfg.targets, cfg.ssds_per_target, profile, cfg.stripe_unit_blocks)
        self.fabric = Fabric(self.env, cfg.num_queues, cfg.base_latency_ticks, cfg.jitter_ticks, cfg.seed)
        self.costs = CostModel()
        self.targets = {}
        for t in range(cfg.targets):
            tgt = Target(self.env, t, self.layout, self.fabric, cfg.pmr_capacity, cfg.seed, self.costs,
                         cfg.mutations)
            self.targets[t] = tgt
            self.fabric.attach_target(t, tgt)
        self.initiator = self._new_initiator()
        self.history = History()
        self._hook_history()
        self.down = False
        self.recoveries = []

    def _new_initiator(self) -> Initiator:
        cfg = self.cfg
        ini = Initiator(self.env, self.layout, self.fabric, cfg.num_streams, cfg.num_queues,
                        cfg.plug_depth, cfg.plug_timeout_ticks, cfg.merge_enabled, cfg.affinity,
                        self.costs, cfg.software_ticks, cfg.rio_ticks,
                        plp_of={t: tgt.plp for t, tgt in self.targets.items()})
        self.fabric.attach_initiator(ini)
        return ini

    def _hook_history(self):
        ini = self.initiator
        ini.submit_hooks.append(self.history.on_submit)
        ini.dispatch_hooks.append(self.history.on_dispatch)
        ini.release_hooks.append(self.history.on_release)

    def set_tracer(self, tracer):
        self.initiator.tracer = tracer
        self.fabric.tracer = tracer
        for t in self.targets.values():
            t.tracer = tracer

    # library API ----------------------------------------------------------------

    def rio_submit(self, stream_id: int, lba: int, length: int = 1, group_end: bool = True,
                   flush: bool = False, ipu: bool = False) -> SubmitHandle:
        if self.down:
            raise ConnectionLost("cluster is recovering")
        handle, _ = self.initiator.submit(stream_id, lba, length, group_end, flush, ipu)
        return handle

    def flush_plugs(self):
        for s in range(self.cfg.num_streams):
            self.initiator.dispatch(s, s)

    def rio_wait(self, handle: SubmitHandle, limit: Optional[int] = None) -> str:
        """Drive the simulation until the handle's group is visible in order."""
        if self.down:
            raise ConnectionLost("cluster is recovering")
        if self.initiator.sched.pending(handle.stream_id):
            self.initiator.dispatch(handle.stream_id, handle.stream_id)
        done = lambda: self.initiator.sequencer.is_complete(handle)
        if self.env.explore:
            while not done() and self.env.pending:
                self.env.fire(0)
        else:
            self.env.run(until=limit, stop=done)
        if not done():
            raise ConnectionLost(f"group {handle.seq} of stream {handle.stream_id} did not complete")
        return "ok"

    def poll(self, stream_id: int) -> int:
        return self.initiator.sequencer.stream(stream_id).released_upto

    def run(self, until=None):
        if self.env.explore:
            return self.env.run_all()
        return self.env.run(until=until)

    # failures ------------------------------------------------------------------------

    def crash(self, kind: str = "power", target_id: Optional[int] = None):
        """Inject a failure.

        ``power`` loses every node, ``initiator`` only the initiator,
        ``target`` one server and ``storage`` every server while the
        initiator keeps running.
        """
        if kind == "target" or (kind == "storage" and self.cfg.initiator_recovery != "drop"):
            for t in ([target_id] if kind == "target" else sorted(self.targets)):
                self.fabric.fail_target(t)
                self.targets[t].crash()
            return
        if kind == "storage":
            kind = "power"
        self.env.clear()
        self.fabric.drop_all()
        self.down = True
        if kind == "power":
            for t in self.targets.values():
                t.crash()
        elif kind == "initiator":
            for t in self.targets.values():
                t.epoch += 1  # in-flight work is abandoned, caches stay
                t.pmr.crash()
                t._reset_volatile()
        else:
            raise ValueError(f"unknown crash kind {kind!r}")
        self.initiator = None

    def recover(self, kind: str = "power", target_id: Optional[int] = None, copies: int = 1):
        from .recovery import recover_cluster
        report = recover_cluster(self, kind, target_id, copies)
        self.recoveries.append(report)
        return report

    def read_block(self, lba: int):
        t, s, dev = self.layout.locate(lba)
        return self.targets[t].ssds[s].read(dev)

    def media_snapshot(self) -> dict:
        return {(t, i): dict(sorted(ssd.media.items()))
                for t, tgt in self.targets.items() for i, ssd in enumerate(tgt.ssds)}


def rio_setup(num_streams: int = 1, targets: int = 1, ssds_per_target: int = 1, **kw) -> Cluster:
    """Library entry point: a ready cluster with ``num_streams`` streams."""
    if targets < 1 or ssds_per_target < 1:
        from .sequencer import SetupError
        raise SetupError("volume needs at least one target with one SSD")
    return Cluster(ClusterConfig(targets=targets, ssds_per_target=ssds_per_target,
                                 num_streams=num_streams, **kw))
