import itertools

import pytest
from hypothesis import given, strategies as st

from riosim import Cluster, ClusterConfig
from riosim.crashlab import (CrashPlan, FuzzScale, Scenario, ValidStateOracle, accepts,
                             brute_force_valid_count, explore_exhaustive, fuzz, fuzz_once,
                             group_outcome, oracle_for, valid_states)


def prefix_subsets(n):
    """Subsets of 1..n equal to {1..k} for some k, found by enumeration."""
    out = []
    for mask in range(2 ** n):
        sub = {g for g in range(1, n + 1) if mask >> (g - 1) & 1}
        if all(g - 1 in sub for g in sub if g > 1):
            out.append(frozenset(sub))
    return out


def test_brute_force_four_groups():
    assert len(prefix_subsets(4)) == 5
    assert set(valid_states(4)) == set(prefix_subsets(4))
    assert brute_force_valid_count(4) == 5


@given(st.integers(0, 9))
def test_oracle_accepts_exactly_the_prefixes(n):
    expected = set(prefix_subsets(n))
    for k in range(n + 1):
        for sub in itertools.combinations(range(1, n + 1), k):
            assert accepts(sub, n) == (frozenset(sub) in expected)


def test_merged_range_must_be_all_or_nothing():
    assert accepts({1, 2, 3}, 3, merged=[(2, 3)])
    assert accepts({1}, 3, merged=[(2, 3)])
    assert not accepts({1, 2}, 3, merged=[(2, 3)])


def test_crash_plan_validation():
    with pytest.raises(ValueError):
        CrashPlan("meteor")
    with pytest.raises(ValueError):
        CrashPlan("target")
    assert CrashPlan("target", target_id=1).target_id == 1


class FakeHistory:
    def __init__(self, groups, acked_flush=0):
        self.requests = {0: [(g, lba, fps, False) for g, lba, fps in groups]}
        self.merged = {}
        self.acked_flush = {0: acked_flush}

    def groups(self, s):
        out = {}
        for seq, lba, fps, ipu in self.requests[s]:
            out.setdefault(seq, []).append((lba, fps, ipu))
        return out


def test_oracle_flags_partial_group():
    h = FakeHistory([(1, 0, (7, 8))])
    v = ValidStateOracle(h, {0: 7}.get).check()
    assert not v.ok and "partially" in v.reason


def test_oracle_flags_lost_flushed_group():
    h = FakeHistory([(1, 0, (7,)), (2, 1, (9,))], acked_flush=2)
    assert ValidStateOracle(h, {0: 7, 1: 9}.get).check().ok
    for media in ({}, {0: 7}):
        v = ValidStateOracle(h, media.get).check()
        assert not v.ok and "flushed group 2 lost" in v.reason
    h.acked_flush = {0: 1}
    v = ValidStateOracle(h, {0: 7}.get).check()
    assert v.ok and v.prefix == {0: 1}


def test_zero_requests_crash_anywhere():
    res = explore_exhaustive(Scenario(groups=(0,)).build, crash_kinds=("power", "initiator"))
    assert res.ok and res.states == 1


def persist_subset_cluster(durable):
    """Four PLP groups on two servers; only groups in ``durable`` reach the device."""
    c = Cluster(ClusterConfig(targets=2, ssd_profile="optane", stripe_unit_blocks=1, pmr_capacity=16),
                explore=True)
    for g in range(4):
        c.rio_submit(0, g)
    c.flush_plugs()
    c.env.canonicalize()
    held = {c.layout.locate(g - 1) for g in range(1, 5) if g not in durable}
    names = {(c.targets[t].ssds[s].name, dev) for t, s, dev in held}
    while True:
        ok = [i for i, (h, a) in enumerate(c.env.pending)
              if h.__name__ != "_cached" or (h.__self__.name, a[3]) not in names]
        if not ok:
            return c
        c.env.fire(ok[0])


@pytest.mark.parametrize("mask", range(16))
def test_recovery_lands_in_valid_set_for_every_persist_subset(mask):
    durable = {g for g in range(1, 5) if mask >> (g - 1) & 1}
    c = persist_subset_cluster(durable)
    c.crash("power")
    rep = c.recover("power")
    k = rep.global_list.prefix.get(0, 0)
    present = {g for g, v in oracle_for(c).presence(0).items() if v == "present"}
    assert frozenset(present) in prefix_subsets(4)
    assert present == set(range(1, k + 1))
    expect = 0
    while expect + 1 in durable:
        expect += 1
    assert k == expect


@pytest.mark.parametrize("profile", ["flash", "optane"])
def test_small_exploration_is_clean(profile):
    res = explore_exhaustive(Scenario(groups=(2, 1), profile=profile).build,
                             crash_kinds=("power", "initiator"))
    assert res.ok and res.complete
    assert res.schedules >= res.states > 1


def test_sleep_sets_visit_the_same_states():
    build = Scenario(groups=(2, 1)).build
    full = explore_exhaustive(build)
    reduced = explore_exhaustive(build, reduce=True)
    assert full.ok and reduced.ok
    assert full.states == reduced.states
    assert full.crash_points == reduced.crash_points


def test_bound_gives_partial_verdict():
    res = explore_exhaustive(Scenario(groups=(2, 1)).build, bound=10)
    assert not res.complete
    assert res.states == 10


@pytest.mark.parametrize("mutation,extra", [
    ("no-gate", dict(affinity=False, stripe_unit_blocks=8)),
    ("early-persist", {}),
    ("no-rollback", {}),
])
def test_explorer_catches_injected_bugs(mutation, extra):
    res = explore_exhaustive(Scenario(groups=(2, 1), mutations=(mutation,), **extra).build,
                             crash_kinds=("power", "initiator"))
    assert not res.ok
    assert "not a prefix" in res.violations[0]["reason"]
    assert res.violations[0]["path"]


@pytest.mark.parametrize("profile", ["flash", "optane"])
def test_merged_groups_survive_together(profile):
    sc = Scenario(groups=(3,), merge=True, contiguous=True, stripe_unit_blocks=8, profile=profile)
    res = explore_exhaustive(sc.build, crash_kinds=("power", "initiator"),
                             observe=group_outcome(0, (1, 2, 3)))
    assert res.ok
    assert set(res.outcomes) == {(), (1, 2, 3)}


def test_fuzz_is_deterministic():
    a = fuzz(7, 15)
    b = fuzz(7, 15)
    assert a.ok, a.violations
    assert a.digest == b.digest and a.kinds == b.kinds
    assert fuzz(8, 15).digest != a.digest


@pytest.mark.parametrize("kind", ["power", "initiator", "target"])
def test_fuzz_each_crash_kind(kind):
    for seed in range(4):
        got, verdict = fuzz_once(seed, FuzzScale(streams=3), kind=kind)
        assert got == kind
        assert verdict.ok, verdict.reason


def test_fuzz_catches_early_persist():
    res = fuzz(7, 40, FuzzScale(streams=4), mutations=("early-persist",))
    assert not res.ok


@pytest.mark.slow
def test_fuzz_at_full_scale():
    # 36 streams over 2 targets with 2 SSDs each
    res = fuzz(7, 1000, FuzzScale(streams=36))
    assert res.runs == 1000
    assert res.ok, res.violations[:3]
    assert set(res.kinds) == {"power", "initiator", "target"}
