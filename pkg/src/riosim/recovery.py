"""Crash recovery: global ordering list, rollback, replay and timing."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable

from .core import OrderingAttribute
from .target import ServerList, rebuild_server_list, record_identity

# cost model of the recovery phase, in ticks
PMR_READ_TICKS = 1         # read one 32 B record out of the PMR
TRANSFER_TICKS = 1         # ship one record to the initiator
MERGE_TICKS = 1            # fold one record into the global list
ERASE_TICKS_PER_BLOCK = 2  # discard one 4 KB block


class CorruptionError(RuntimeError):
    pass


@dataclass
class GlobalOrderingList:
    prefix: dict = field(default_factory=dict)      # stream -> k
    floors: dict = field(default_factory=dict)      # stream -> recycled watermark
    drop: dict = field(default_factory=dict)        # stream -> durable groups beyond k
    replay: dict = field(default_factory=dict)      # target -> cmd ids resent
    corruption: list = field(default_factory=list)

    def groups(self, stream_id: int) -> list[int]:
        return list(range(1, self.prefix.get(stream_id, 0) + 1))


def remerge_splits(parts: Iterable[OrderingAttribute]):
    """Fold split parts back into their parent attributes.

    Returns ``(parents, leftovers)``; a parent appears only if every part of it
    is present and the parts tile one contiguous extent.
    """
    parents, leftovers = [], []
    run: list[OrderingAttribute] = []
    for p in sorted(parts, key=lambda a: (a.seq_start, a.lba)):
        if run and (p.split.part_index != run[-1].split.part_index + 1
                    or p.lba != run[-1].lba + run[-1].len
                    or p.seq_start != run[-1].seq_start
                    or p.split.part_count != run[-1].split.part_count):
            leftovers.extend(run)
            run = []
        if not run and p.split.part_index != 0:
            leftovers.append(p)
            continue
        run.append(p)
        if p.split.part_index == p.split.part_count - 1:
            head = run[0]
            parents.append(replace(head, len=sum(a.len for a in run), split=None,
                                   persist=all(a.persist for a in run)))
            run = []
    leftovers.extend(run)
    return parents, leftovers


def valid_groups(records: Iterable[OrderingAttribute], corruption: list | None = None) -> set[int]:
    """Groups of one stream whose every request is covered by ``records``."""
    count: dict[int, int] = defaultdict(int)
    num: dict[int, int] = {}
    covered: set[int] = set()
    splits = []
    extents = defaultdict(list)
    for a in records:
        if a.marker:
            continue
        if a.merged:
            covered.update(range(a.seq_start, a.seq_end + 1))
            continue
        if a.split is not None:
            splits.append(a)
            continue
        extents[a.seq_start].append((a.lba, a.len))
        count[a.seq_start] += a.nreq
        if a.group_end:
            num[a.seq_start] = a.num
    parents, _ = remerge_splits(splits)
    for a in parents:
        extents[a.seq_start].append((a.lba, a.len))
        count[a.seq_start] += a.nreq
        if a.group_end:
            num[a.seq_start] = a.num
    if corruption is not None:
        for seq, ext in extents.items():
            ext.sort()
            for (l1, n1), (l2, _) in zip(ext, ext[1:]):
                if l2 < l1 + n1:
                    corruption.append(f"group {seq}: overlapping durable extents at lba {l2}")
    return covered | {g for g, n in num.items() if count[g] == n}


def merge_lists(server_lists: dict, mode: str = "initiator", failed: Iterable[int] = ()) -> GlobalOrderingList:
    """Combine per-server lists into the longest durable prefix per stream."""
    if mode not in ("initiator", "target"):
        raise ValueError(f"unknown mode {mode!r}")
    out = GlobalOrderingList()
    streams: set[int] = set()
    for sl in server_lists.values():
        streams.update(sl.streams)
        streams.update(sl.floors)
    for s in sorted(streams):
        floor = max((sl.floors.get(s, 0) for sl in server_lists.values()), default=0)
        recs = [a for sl in server_lists.values() for _, a in sl.streams.get(s, []) if a.seq_end > floor]
        ok = valid_groups(recs, out.corruption)
        k = floor
        while k + 1 in ok:
            k += 1
        out.prefix[s] = k
        out.floors[s] = floor
        out.drop[s] = set() if mode == "target" else {g for g in ok if g > k}
    if out.corruption:
        raise CorruptionError("; ".join(out.corruption))
    return out


# in-place updates --------------------------------------------------------------

class ReportOnly:
    """Leave in-place updates alone and tell the caller which ones survived."""

    name = "report-only"

    def __call__(self, gl: GlobalOrderingList, records) -> dict:
        return {"policy": self.name,
                "retained": [(t, a.stream_id, a.seq_start, a.lba, a.len) for t, a in records]}


class EraseLaterMetadata:
    """Ask the upper layer to drop metadata that points at unordered overwrites."""

    name = "erase-later-metadata"

    def __call__(self, gl: GlobalOrderingList, records) -> dict:
        return {"policy": self.name,
                "invalidate": sorted({(a.stream_id, a.lba + i) for _, a in records for i in range(a.len)}),
                "prefix": dict(gl.prefix)}


IPU_POLICIES = {p.name: p for p in (ReportOnly, EraseLaterMetadata)}


@dataclass
class RollbackReport:
    erased: dict = field(default_factory=lambda: defaultdict(int))  # (target, ssd) -> blocks
    ipu: list = field(default_factory=list)
    hook: dict = field(default_factory=dict)


def rollback(gl: GlobalOrderingList, targets: dict, policy=None, erase: bool = True) -> RollbackReport:
    """Discard every record beyond the prefix and erase its blocks (out-of-place only)."""
    rep = RollbackReport()
    for tid, tgt in sorted(targets.items()):
        for slot, a in tgt.pmr.scan():
            k = gl.prefix.get(a.stream_id, 0)
            if a.seq_end > k and not a.marker:
                if a.ipu:
                    rep.ipu.append((tid, a))
                elif erase:
                    _, ssd_id, dev = tgt.layout.locate(a.lba)
                    rep.erased[(tid, ssd_id)] += tgt.ssds[ssd_id].erase(dev, a.len)
            tgt.pmr.release(slot)
        for s, k in gl.prefix.items():
            tgt.pmr.retire(s, k)
    rep.hook = (policy or ReportOnly())(gl, rep.ipu)
    return rep


def recovery_time_report(server_lists: dict, erased: dict, rtt_ticks: int = 40) -> dict:
    """Order rebuild (servers scan in parallel) and data discard (SSDs in parallel)."""
    scans = [sl.records_scanned for sl in server_lists.values()]
    total = sum(scans)
    order = rtt_ticks + max(scans, default=0) * (PMR_READ_TICKS + TRANSFER_TICKS) + total * MERGE_TICKS
    data = max(erased.values(), default=0) * ERASE_TICKS_PER_BLOCK
    return {"order_rebuild_ticks": order, "data_recovery_ticks": data, "records": total}


@dataclass
class RecoveryReport:
    kind: str
    global_list: GlobalOrderingList
    server_lists: dict
    rollback: RollbackReport | None = None
    replayed: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    degraded: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "prefix": {str(k): v for k, v in sorted(self.global_list.prefix.items())},
            "drop": {str(k): sorted(v) for k, v in sorted(self.global_list.drop.items())},
            "replay": {str(k): v for k, v in sorted(self.replayed.items())},
            "lists": {str(t): {str(s): [a.seq_end for _, a in recs] for s, recs in sorted(sl.streams.items())}
                      for t, sl in sorted(self.server_lists.items())},
            "timing": self.timing,
            "ipu": self.rollback.hook if self.rollback else {},
            "degraded": self.degraded,
        }


def recover_cluster(cluster, kind: str = "power", target_id=None, copies: int = 1) -> RecoveryReport:
    """Run recovery on ``cluster`` after :meth:`Cluster.crash`."""
    cfg = cluster.cfg
    rtt = 2 * cfg.base_latency_ticks
    if kind == "target":
        return _recover_target(cluster, target_id, copies, rtt)
    if kind == "storage" and cfg.initiator_recovery == "replay-if-buffered":
        reports = [_recover_target(cluster, t, copies, rtt) for t in sorted(cluster.targets)]
        rep = reports[-1]
        rep.kind = "storage"
        rep.replayed = {t: r for x in reports for t, r in x.replayed.items()}
        return rep
    lists = {}
    for tid, tgt in sorted(cluster.targets.items()):
        if tgt.pmr.head is None:
            tgt.pmr.restart()
        lists[tid] = rebuild_server_list(tgt.pmr, tgt.plp, tid)
    gl = merge_lists(lists, "initiator")
    policy = IPU_POLICIES[cfg.ipu_policy]()
    rb = rollback(gl, cluster.targets, policy, erase="no-rollback" not in cfg.mutations)
    for tgt in cluster.targets.values():
        tgt.crashed = False
        tgt.restart()
    if kind == "storage":
        for t in cluster.targets:
            cluster.fabric.reconnect(t)
    rep = RecoveryReport(kind, gl, lists, rb)
    rep.timing = recovery_time_report(lists, rb.erased, rtt)
    return rep


def _recover_target(cluster, target_id, copies, rtt) -> RecoveryReport:
    tgt = cluster.targets[target_id]
    tgt.pmr.restart()
    sl = rebuild_server_list(tgt.pmr, tgt.plp, target_id)
    lists = {t: (sl if t == target_id else rebuild_server_list(o.pmr, o.plp, t))
             for t, o in sorted(cluster.targets.items()) if t == target_id or not o.crashed}
    gl = merge_lists(lists, "target", failed=[target_id])
    dropped = sorted(set(sl.invalid))
    erased = {(target_id, i): n for i, n in tgt.drop_records(dropped, erase=True).items()}
    tgt.crashed = False
    tgt.live.clear()
    tgt.restart(sl.streams)
    cluster.fabric.reconnect(target_id)
    rep = RecoveryReport("target", gl, lists)
    ini = cluster.initiator
    if ini is not None:
        keep = {(a.stream_id, record_identity(a)) for recs in sl.streams.values() for _, a in recs}
        ini.settle(target_id, keep)
        rep.replayed[target_id] = ini.replay(target_id, keep, copies)
        gl.replay[target_id] = rep.replayed[target_id]
    else:
        rep.degraded.append(f"target {target_id}: no initiator buffer, nothing replayed")
    rep.timing = recovery_time_report({target_id: sl}, erased, rtt)
    return rep
