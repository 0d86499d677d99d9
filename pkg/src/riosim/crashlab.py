"""Crash injection and the post-recovery validity oracle.

The oracle never looks at the PMR or at recovery output.  It compares the
application's submission history with the fingerprints that are physically on
the SSDs and accepts only states where each stream holds exactly its first k
groups.
"""

from __future__ import annotations

import hashlib
import itertools
import pickle
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .cluster import Cluster, ClusterConfig

CRASH_KINDS = ("power", "initiator", "target", "storage")


@dataclass(frozen=True)
class CrashPlan:
    kind: str = "power"
    target_id: Optional[int] = None
    at_tick: Optional[int] = None      # timed runs
    at_event: Optional[int] = None     # explored runs

    def __post_init__(self):
        if self.kind not in CRASH_KINDS:
            raise ValueError(f"unknown crash kind {self.kind!r}")
        if self.kind == "target" and self.target_id is None:
            raise ValueError("a target crash needs target_id")


# oracle --------------------------------------------------------------------------

def valid_states(n: int) -> list[frozenset]:
    """The n+1 prefix states of a stream with n groups."""
    return [frozenset(range(1, k + 1)) for k in range(n + 1)]


def accepts(present: Iterable[int], n: int, merged: Iterable[tuple] = ()) -> bool:
    """Is ``present`` (the fully durable groups, all others absent) a valid state?"""
    present = set(present)
    k = 0
    while k + 1 in present:
        k += 1
    if present != set(range(1, k + 1)) or k > n:
        return False
    return not any(a <= k < b for a, b in merged)


@dataclass
class Verdict:
    ok: bool
    prefix: dict = field(default_factory=dict)
    reason: str = ""


class ValidStateOracle:
    """Decides validity from media contents and submission history alone."""

    def __init__(self, history, read_block: Callable[[int], object]):
        self.history = history
        self.read = read_block

    def presence(self, stream_id: int) -> dict:
        """group -> 'present' | 'absent' | 'partial' (in-place updates are skipped)."""
        out = {}
        for seq, reqs in sorted(self.history.groups(stream_id).items()):
            blocks = [(lba + i, fp) for lba, fps, ipu in reqs if not ipu for i, fp in enumerate(fps)]
            if not blocks:
                continue
            hits = sum(self.read(lba) == fp for lba, fp in blocks)
            out[seq] = "present" if hits == len(blocks) else "absent" if hits == 0 else "partial"
        return out

    def check(self) -> Verdict:
        prefix = {}
        for s in sorted(self.history.requests):
            state = self.presence(s)
            partial = [g for g, v in state.items() if v == "partial"]
            if partial:
                return Verdict(False, prefix, f"stream {s}: groups {partial} partially durable")
            present = {g for g, v in state.items() if v == "present"}
            n = max(state, default=0)
            if not accepts(present, n, self.history.merged.get(s, ())):
                return Verdict(False, prefix, f"stream {s}: durable groups {sorted(present)} are not a prefix")
            k = len(present)
            prefix[s] = k
            acked = self.history.acked_flush.get(s, 0)
            if acked > k and any(state.get(g) for g in range(k + 1, acked + 1)):
                return Verdict(False, prefix, f"stream {s}: flushed group {acked} lost (prefix {k})")
        return Verdict(True, prefix)


def oracle_for(cluster: Cluster) -> ValidStateOracle:
    return ValidStateOracle(cluster.history, cluster.read_block)


# scenarios -------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """A small workload for exhaustive exploration."""

    groups: tuple = (3, 2)          # groups per stream
    targets: int = 2
    profile: str = "flash"
    stripe_unit_blocks: int = 1
    requests_per_group: int = 1
    flush_last: bool = True
    merge: bool = False
    affinity: bool = True
    mutations: tuple = ()
    contiguous: bool = False        # consecutive LBAs across groups (lets them merge)

    def config(self) -> ClusterConfig:
        return ClusterConfig(
            targets=self.targets, ssd_profile=self.profile, stripe_unit_blocks=self.stripe_unit_blocks,
            num_streams=len(self.groups), num_queues=1 if self.affinity else 2,
            merge_enabled=self.merge, affinity=self.affinity, mutations=tuple(self.mutations),
            pmr_capacity=64, plug_depth=64,
        )

    def build(self) -> Cluster:
        c = Cluster(self.config(), explore=True)
        for s, n in enumerate(self.groups):
            lba = 1000 * s
            for g in range(n):
                for r in range(self.requests_per_group):
                    last = r == self.requests_per_group - 1
                    c.initiator.submit(s, lba, 1, group_end=last,
                                       flush=last and self.flush_last and g == n - 1)
                    lba += 1 if self.contiguous else 3
        c.flush_plugs()
        c.env.canonicalize()
        return c


# exhaustive exploration ---------------------------------------------------------------

@dataclass
class ExploreResult:
    states: int = 0
    crash_points: int = 0
    memo_hits: int = 0
    violations: list = field(default_factory=list)
    outcomes: dict = field(default_factory=dict)   # observation -> count
    schedules: int = 0
    complete: bool = True
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations


def _digest(blob: bytes) -> bytes:
    return hashlib.blake2b(blob, digest_size=16).digest()


def _persistent_key(c: Cluster, kind: str) -> bytes:
    parts = []
    for t in sorted(c.targets):
        tgt = c.targets[t]
        parts.append((tuple(s for s in tgt.pmr.slots), tuple(sorted(tgt.pmr.watermarks.items()))))
        for ssd in tgt.ssds:
            keep_cache = kind == "initiator" or ssd.plp
            parts.append((tuple(sorted(ssd.media.items())),
                          tuple(sorted(ssd.cache.items())) if keep_cache else ()))
    parts.append(tuple(sorted(c.history.acked_flush.items())))
    return _digest(repr((kind, parts)).encode())


def _crash_and_check(blob: bytes, kind: str, observe):
    c = pickle.loads(blob)
    c.crash(kind)
    c.recover(kind)
    verdict = oracle_for(c).check()
    return verdict, (observe(c) if observe else None)


def _actor(c: Cluster, index: int) -> tuple:
    """Which node an enabled event acts on, for the independence relation."""
    handler, args = c.env.pending[index]
    owner = getattr(handler, "__self__", None)
    if owner is c.fabric and handler.__name__ == "_deliver_head":
        _, target_id, to_target = args[0]
        return ("T" if to_target else "I", target_id)
    tgt = getattr(owner, "owner", None)
    if tgt is not None and hasattr(tgt, "target_id"):
        return ("T", tgt.target_id)
    return ("?", None)


def independent(a: tuple, b: tuple) -> bool:
    """Events on different targets commute.

    A target-side event and the initiator receiving from another target's
    channel also commute: the initiator never sends while handling a
    completion.  Everything on the initiator is mutually dependent.
    """
    if "?" in (a[0], b[0]) or (a[0] == "I" and b[0] == "I"):
        return False
    return a[1] != b[1]


class _Stop(Exception):
    pass


def explore_exhaustive(build: Callable[[], Cluster], bound: Optional[int] = None,
                       crash_kinds: tuple = ("power",), observe=None,
                       time_limit: Optional[float] = None, max_violations: int = 1,
                       reduce: bool = False) -> ExploreResult:
    """Visit every reachable state; crash, recover and judge each one.

    States reached by several interleavings are visited once.  With
    ``reduce`` a sleep set per state skips transitions whose successors are
    already covered through a commuting order; every state is still
    visited, so every crash point is still checked.  ``schedules`` counts
    the complete event orders in the explored graph.
    """
    t0 = time.perf_counter()
    res = ExploreResult()
    sleeping: dict = {}   # state -> sleep set it was explored with
    paths: dict = {}      # state -> complete orders below it seen so far
    memo: dict = {}

    def check(c, blob, path):
        for kind in crash_kinds:
            res.crash_points += 1
            pkey = _persistent_key(c, kind)
            if pkey in memo:
                res.memo_hits += 1
                verdict, obs = memo[pkey]
            else:
                verdict, obs = _crash_and_check(blob, kind, observe)
                memo[pkey] = (verdict, obs)
            if obs is not None:
                res.outcomes[obs] = res.outcomes.get(obs, 0) + 1
            if not verdict.ok:
                res.violations.append({"path": list(path), "crash": kind, "reason": verdict.reason})
                if len(res.violations) >= max_violations:
                    raise _Stop

    def visit(blob, key, sleep, path):
        if key in sleeping:
            old = sleeping[key]
            if old.keys() <= sleep.keys():
                return paths[key]
            sleeping[key] = {l: a for l, a in old.items() if l in sleep}
        else:
            if (bound is not None and res.states >= bound) or \
                    (time_limit is not None and time.perf_counter() - t0 > time_limit):
                raise _Stop
            old = None
            sleeping[key] = dict(sleep)
            paths[key] = 0
            res.states += 1
        c = pickle.loads(blob)
        if old is None:
            check(c, blob, path)
        enabled, labels = [], set()
        for i in range(len(c.env.pending)):
            label = c.env.describe(i)
            if label not in labels:  # identical events lead to the same successor
                labels.add(label)
                enabled.append((label, i, _actor(c, i)))
        if not enabled:
            paths[key] = 1
            return 1
        cur = dict(sleep)
        if old is not None:
            cur.update({l: a for l, _, a in enabled if l not in old})  # explored last time
        for label, i, actor in enabled:
            if label in cur:
                continue
            nxt = pickle.loads(blob)
            nxt.env.fire(i)
            b2 = pickle.dumps(nxt)
            child = {l: a for l, a in cur.items() if independent(a, actor)} if reduce else {}
            paths[key] += visit(b2, _digest(b2), child, path + (label,))
            cur[label] = actor
        return paths[key]

    root = pickle.dumps(build())
    try:
        res.schedules = visit(root, _digest(root), {}, ())
    except _Stop:
        res.complete = False
    res.elapsed = time.perf_counter() - t0
    return res


def group_outcome(stream_id: int, groups: Iterable[int]):
    """Observer: which of ``groups`` are durable after recovery."""
    groups = tuple(groups)

    def observe(c: Cluster):
        state = oracle_for(c).presence(stream_id)
        return tuple(g for g in groups if state.get(g) == "present")
    return observe


# randomized runs ---------------------------------------------------------------------

@dataclass(frozen=True)
class FuzzScale:
    streams: int = 4
    targets: int = 2
    ssds_per_target: int = 2
    groups_per_stream: int = 6
    profile: str = "flash"
    horizon_ticks: int = 3000
    affinity: bool = True


@dataclass
class FuzzResult:
    runs: int = 0
    violations: list = field(default_factory=list)
    kinds: dict = field(default_factory=dict)
    digest: str = ""

    @property
    def ok(self) -> bool:
        return not self.violations


def _random_workload(c: Cluster, rng: random.Random, scale: FuzzScale):
    for s in range(scale.streams):
        lba = 4096 * s
        for g in range(scale.groups_per_stream):
            nreq = rng.randint(1, 3)
            for r in range(nreq):
                length = rng.choice((1, 1, 2, 4, 40))
                last = r == nreq - 1
                c.initiator.submit(s, lba, length, group_end=last, flush=last and rng.random() < 0.4)
                lba += length + rng.choice((0, 0, 1))


def fuzz_once(seed: int, scale: FuzzScale = FuzzScale(), mutations: tuple = (),
              kind: Optional[str] = None) -> tuple[str, Verdict]:
    rng = random.Random(seed)
    cfg = ClusterConfig(targets=scale.targets, ssds_per_target=scale.ssds_per_target,
                        ssd_profile=scale.profile, num_streams=scale.streams,
                        num_queues=rng.choice((1, 2, 4)) if scale.affinity else 4, affinity=scale.affinity,
                        stripe_unit_blocks=rng.choice((1, 8, 32)),
                        seed=rng.randrange(2 ** 31), mutations=tuple(mutations), pmr_capacity=4096)
    c = Cluster(cfg)
    _random_workload(c, rng, scale)
    kind = kind or rng.choice(("power", "power", "initiator", "target"))
    c.env.run(until=rng.randint(0, scale.horizon_ticks))
    if kind == "target":
        tid = rng.randrange(scale.targets)
        c.crash("target", tid)
        c.env.run(until=c.env.now + rng.randint(0, 200))
        c.recover("target", tid)
        c.flush_plugs()
        c.env.run()
        streams = c.initiator.sequencer.streams
        stuck = [s.stream_id for s in streams if s.released_upto != s.next_seq - 1]
        if stuck:
            return kind, Verdict(False, {}, f"streams {stuck} did not finish after replay")
        kind_final = "power"
        c.crash(kind_final)
        c.recover(kind_final)
        return kind, oracle_for(c).check()
    c.crash(kind)
    c.recover(kind)
    return kind, oracle_for(c).check()


def fuzz(seed: int, runs: int, scale: FuzzScale = FuzzScale(), mutations: tuple = ()) -> FuzzResult:
    """``runs`` randomized executions, each with one crash at a random instant."""
    res = FuzzResult()
    h = hashlib.blake2b(digest_size=8)
    master = random.Random(seed)
    for _ in range(runs):
        run_seed = master.randrange(2 ** 31)
        kind, verdict = fuzz_once(run_seed, scale, mutations)
        res.runs += 1
        res.kinds[kind] = res.kinds.get(kind, 0) + 1
        h.update(repr((run_seed, kind, verdict.ok, sorted(verdict.prefix.items()))).encode())
        if not verdict.ok:
            res.violations.append({"seed": run_seed, "crash": kind, "reason": verdict.reason})
    res.digest = h.hexdigest()
    return res


def brute_force_valid_count(n: int) -> int:
    """Count the subsets of n groups the oracle accepts, by enumeration."""
    return sum(accepts(set(sub), n) for k in range(n + 1)
               for sub in itertools.combinations(range(1, n + 1), k))
