"""Per-thread request streams.

Every thread writes to its own private LBA range.  A workload yields
:class:`GroupSpec` objects; the runner turns them into ordered groups (or
plain writes for the orderless baseline).
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Iterator


class OverlapError(ValueError):
    pass


@dataclass(frozen=True)
class Write:
    lba: int
    length: int
    ipu: bool = False


@dataclass(frozen=True)
class GroupSpec:
    writes: tuple
    flush: bool = False

    @property
    def blocks(self) -> int:
        return sum(w.length for w in self.writes)


_PATTERN = re.compile(r"^(journal3|random4k|seq(\d+)k|batch\((\d+)\)|ipu_mix\(([0-9.]+)\))$")


def parse_workload(kind: str) -> tuple[str, float | int | None]:
    m = _PATTERN.match(kind.strip())
    if not m:
        raise ValueError(f"unknown workload {kind!r} "
                         "(journal3, random4k, seqNk, batch(k), ipu_mix(p))")
    if m.group(2):
        kb = int(m.group(2))
        if kb < 4 or kb % 4:
            raise ValueError(f"{kind}: size must be a positive multiple of 4 KB")
        return "seq", kb // 4
    if m.group(3):
        k = int(m.group(3))
        if k < 1:
            raise ValueError(f"{kind}: batch size must be positive")
        return "batch", k
    if m.group(4):
        p = float(m.group(4))
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{kind}: probability must lie in [0, 1]")
        return "ipu_mix", p
    return m.group(1), None


def thread_ranges(threads: int, region_blocks: int, base: int = 0) -> list[tuple[int, int]]:
    ranges = [(base + t * region_blocks, base + (t + 1) * region_blocks) for t in range(threads)]
    check_disjoint(ranges)
    return ranges


def check_disjoint(ranges) -> None:
    spans = sorted(ranges)
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        if b0 < a1:
            raise OverlapError(f"ranges [{a0}, {a1}) and [{b0}, {b1}) overlap")
    for a0, a1 in spans:
        if a1 <= a0:
            raise OverlapError(f"empty range [{a0}, {a1})")


def _cursor(lo: int, hi: int, start: int, n: int) -> int:
    """Next sequential position; wraps so an n-block write stays inside [lo, hi)."""
    return lo if start + n > hi else start


def generate(kind: str, lo: int, hi: int, rng: random.Random) -> Iterator[GroupSpec]:
    name, arg = parse_workload(kind)
    pos = lo
    if name == "journal3":
        # descriptor + metadata, then the commit record that must follow them durably
        while True:
            pos = _cursor(lo, hi, pos, 3)
            yield GroupSpec((Write(pos, 2),))
            yield GroupSpec((Write(pos + 2, 1),), flush=True)
            pos += 3
    elif name == "random4k":
        while True:
            yield GroupSpec((Write(rng.randrange(lo, hi), 1),))
    elif name == "seq":
        while True:
            pos = _cursor(lo, hi, pos, arg)
            yield GroupSpec((Write(pos, arg),))
            pos += arg
    elif name == "batch":
        # sequential inside a batch, batches scattered: only a batch's own writes merge
        slots = (hi - lo) // arg
        while True:
            pos = lo + rng.randrange(slots) * arg
            yield GroupSpec(tuple(Write(pos + i, 1) for i in range(arg)))
    else:
        written = []
        while True:
            if written and rng.random() < arg:
                yield GroupSpec((Write(rng.choice(written), 1, ipu=True),))
                continue
            pos = _cursor(lo, hi, pos, 1)
            written.append(pos)
            yield GroupSpec((Write(pos, 1),))
            pos += 1


def workload_gen(kind: str, threads: int, seed: int = 0, region_blocks: int = 1 << 18,
                 ranges=None) -> list[Iterator[GroupSpec]]:
    """One seeded group stream per thread, each confined to a private range."""
    if ranges is None:
        ranges = thread_ranges(threads, region_blocks)
    else:
        ranges = list(ranges)
        check_disjoint(ranges)
        if len(ranges) != threads:
            raise ValueError(f"need {threads} ranges, got {len(ranges)}")
    return [generate(kind, lo, hi, random.Random(f"{seed}:{t}")) for t, (lo, hi) in enumerate(ranges)]
