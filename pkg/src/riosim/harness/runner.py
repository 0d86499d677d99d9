"""Closed-loop workload driver for the four ordering modes.

Each application thread owns one core, one stream and one fabric queue.  A
thread issues groups back to back, keeps at most ``iodepth`` of them in
flight, and advances its clock by whatever CPU time its core was charged
since the previous step, so CPU cost and device speed both bound
throughput.
"""

from __future__ import annotations

from typing import Optional

from ..cluster import Cluster
from ..core import fingerprint
from ..fabric import CONTROL, FLUSH
from .config import TICKS_PER_SECOND, SimConfig
from .metrics import MetricsReport
from .trace import Tracer
from .workloads import GroupSpec, workload_gen


class _Thread:
    def __init__(self, run: "Run", tid: int, gen):
        self.run = run
        self.tid = tid
        self.gen = gen
        self.window = 1 if run.cfg.mode == "sync_nvmeof" else run.cfg.iodepth
        self.outstanding = 0
        self.blocked = False
        self.idle = False
        self.seen_busy = 0
        self.busy_until = 0
        self.seq = 0

    def step(self):
        run = self.run
        env = run.cluster.env
        if env.now >= run.cfg.duration_ticks:
            return
        if self.blocked or self.outstanding >= self.window:
            self.idle = True
            return
        run.plug(self)
        for _ in range(run.cfg.submit_batch):
            if self.blocked or self.outstanding >= self.window:
                break
            self.seq += 1
            self.outstanding += 1
            run.issue(self, self.seq, next(self.gen))
        run.unplug(self)
        busy = run.cluster.initiator.core_busy[self.tid]
        delta, self.seen_busy = busy - self.seen_busy, busy
        self.busy_until = env.now + max(1, delta)
        env.schedule(max(1, delta), self.step)

    def wake(self):
        if self.idle and not self.blocked and self.outstanding < self.window:
            self.idle = False
            self.run.cluster.env.schedule(0, self.step)


class Run:
    def __init__(self, cfg: SimConfig, tracer_out=None):
        self.cfg = cfg
        self.cluster = Cluster(cfg.cluster_config())
        self.tracer: Optional[Tracer] = None
        if tracer_out is not None:
            header = {"config": cfg.as_dict(), "seed": cfg.seed,
                      "queue_pairing": "one completion queue per send queue"}
            self.tracer = Tracer(tracer_out, self.cluster.env, header)
            self.cluster.set_tracer(self.tracer)
        self.threads = [_Thread(self, t, g) for t, g in
                        enumerate(workload_gen(cfg.workload, cfg.threads, cfg.seed, cfg.region_blocks))]
        self.done: list[tuple[int, int, int]] = []
        self._started: dict[tuple, tuple] = {}
        self.plp = self.cluster.layout.profile_of(0).plp
        self.cluster.initiator.release_hooks.append(self._on_release)

    # bookkeeping ------------------------------------------------------------

    def _begin(self, th: _Thread, seq: int, g: GroupSpec):
        self._started[(th.tid, seq)] = (self.cluster.env.now, len(g.writes), g.blocks)

    def _finish(self, th: _Thread, seq: int):
        t0, nreq, blocks = self._started.pop((th.tid, seq))
        now = self.cluster.env.now
        if now <= self.cfg.duration_ticks:
            self.done.append((nreq, blocks, now - t0))
        th.outstanding -= 1
        th.wake()

    def _on_release(self, stream_id, seq, flush):
        self._finish(self.threads[stream_id], seq)

    def _payload(self, th, seq, i, w):
        return tuple(fingerprint(th.tid, seq, i, b) for b in range(w.length))

    # modes ----------------------------------------------------------------------

    def plug(self, th: _Thread):
        if self.cfg.mode == "rio":
            self.cluster.initiator.start_plug(th.tid)
        elif self.cfg.mode == "orderless":
            self.cluster.initiator.plug_orderless(th.tid)

    def unplug(self, th: _Thread):
        if self.cfg.mode == "rio":
            self.cluster.initiator.finish_plug(th.tid, th.tid)
        elif self.cfg.mode == "orderless":
            self.cluster.initiator.unplug_orderless(th.tid)

    def issue(self, th: _Thread, seq: int, g: GroupSpec):
        self._begin(th, seq, g)
        getattr(self, "_issue_" + self.cfg.mode)(th, seq, g)

    def _issue_rio(self, th, seq, g):
        ini = self.cluster.initiator
        last = len(g.writes) - 1
        for i, w in enumerate(g.writes):
            ini.submit(th.tid, w.lba, w.length, group_end=i == last, flush=g.flush and i == last,
                       ipu=w.ipu, core=th.tid)

    def _issue_orderless(self, th, seq, g):
        ini = self.cluster.initiator
        left = [len(g.writes)]

        def one_done():
            left[0] -= 1
            if not left[0]:
                self._finish(th, seq)
        for i, w in enumerate(g.writes):
            ini.submit_orderless(th.tid, w.lba, w.length, self._payload(th, seq, i, w), tag=one_done)

    def _targets_of(self, g: GroupSpec) -> list[int]:
        lay = self.cluster.layout
        return sorted({lay.target_of(w.lba + b) for w in g.writes for b in range(w.length)})

    def _all_then(self, n: int, then):
        left = [n]

        def cb(*_):
            left[0] -= 1
            if not left[0]:
                then()
        return cb

    def _issue_sync_nvmeof(self, th, seq, g):
        """Write, wait, flush every touched device, wait: the next group waits for durability."""
        ini = self.cluster.initiator
        core, qid = th.tid, th.tid % self.cluster.fabric.num_queues
        targets = self._targets_of(g)

        def durable():
            self._finish(th, seq)

        def written():
            if self.plp:
                durable()
                return
            cb = self._all_then(len(targets), durable)
            for t in targets:
                ini.send_raw(core, FLUSH, t, qid, callback=cb)

        cb = self._all_then(len(g.writes), written)
        for i, w in enumerate(g.writes):
            ini.write_direct(core, w.lba, w.length, self._payload(th, seq, i, w), callback=cb)

    def _issue_horae(self, th, seq, g):
        """Synchronous control round trip to every touched target, then asynchronous data and any flush."""
        ini = self.cluster.initiator
        core, qid = th.tid, th.tid % self.cluster.fabric.num_queues
        targets = self._targets_of(g)
        th.blocked = True

        def done():
            if g.flush and not self.plp:
                # ordering is decoupled, durability is not: flagged groups still flush
                fcb = self._all_then(len(targets), lambda: self._finish(th, seq))
                for t in targets:
                    ini.send_raw(core, FLUSH, t, qid, callback=fcb)
            else:
                self._finish(th, seq)

        def data():
            th.blocked = False
            cb = self._all_then(len(g.writes), done)
            for i, w in enumerate(g.writes):
                ini.write_direct(core, w.lba, w.length, self._payload(th, seq, i, w), callback=cb)
            th.wake()

        cb = self._all_then(len(targets), data)
        for t in targets:
            ini.send_raw(core, CONTROL, t, qid, callback=cb, stream_id=th.tid)

    # driver ----------------------------------------------------------------------

    def execute(self) -> MetricsReport:
        env = self.cluster.env
        for th in self.threads:
            env.schedule(0, th.step)
        snap = {}

        def snapshot():
            ini = self.cluster.initiator
            # work charged ahead of the clock lands after the window closes
            end = self.cfg.duration_ticks
            snap["ini"] = sum(min(end, ini.core_busy[th.tid] - max(0, th.busy_until - end))
                              for th in self.threads)
            snap["tgt"] = sum(t.cpu_busy for t in self.cluster.targets.values())
            snap["cmds"] = dict(ini.sent)
        env.schedule(self.cfg.duration_ticks, snapshot)
        env.run(until=self.cfg.duration_ticks)
        report = MetricsReport.build(self.cfg, self.done, snap["ini"], snap["tgt"], snap["cmds"],
                                     TICKS_PER_SECOND)
        if self.tracer is not None:
            self.tracer.close(report.as_dict())
        return report


def run_workload(mode: str, workload: str, config: SimConfig = SimConfig(), trace=None) -> MetricsReport:
    """Run one cell.  ``trace`` is an open text stream for JSON-lines output."""
    cfg = config.with_(mode=mode, workload=workload)
    return Run(cfg, trace).execute()
