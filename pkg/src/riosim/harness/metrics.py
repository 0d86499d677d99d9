"""Run summary."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field


def percentile(values, q: float) -> int:
    """Nearest-rank percentile; 0 for an empty sample."""
    if not values:
        return 0
    data = sorted(values)
    rank = max(1, math.ceil(q / 100 * len(data)))
    return data[rank - 1]


@dataclass
class MetricsReport:
    mode: str
    workload: str
    threads: int
    duration_ticks: int
    groups: int = 0
    requests: int = 0
    blocks: int = 0
    throughput: float = 0.0            # requests per simulated second
    group_throughput: float = 0.0
    initiator_busy: float = 0.0        # busy fraction of one core per thread
    target_busy: float = 0.0           # busy fraction of one core per queue and target
    cpu_efficiency: float = 0.0        # throughput / initiator utilization
    target_cpu_efficiency: float = 0.0
    commands: dict = field(default_factory=dict)
    p50_latency_ticks: int = 0
    p99_latency_ticks: int = 0
    recovery: dict = field(default_factory=dict)

    @classmethod
    def build(cls, cfg, done: list, ini_busy: int, tgt_busy: int, commands: dict,
              ticks_per_second: int) -> "MetricsReport":
        """``done`` holds (requests, blocks, latency) per finished group."""
        secs = cfg.duration_ticks / ticks_per_second
        r = cls(cfg.mode, cfg.workload, cfg.threads, cfg.duration_ticks)
        r.groups = len(done)
        r.requests = sum(d[0] for d in done)
        r.blocks = sum(d[1] for d in done)
        r.throughput = r.requests / secs
        r.group_throughput = r.groups / secs
        r.initiator_busy = ini_busy / (cfg.duration_ticks * cfg.threads)
        r.target_busy = tgt_busy / (cfg.duration_ticks * cfg.threads * cfg.targets)
        r.cpu_efficiency = r.throughput / r.initiator_busy if r.initiator_busy else 0.0
        r.target_cpu_efficiency = r.throughput / r.target_busy if r.target_busy else 0.0
        r.commands = dict(sorted(commands.items()))
        lat = [d[2] for d in done]
        r.p50_latency_ticks = percentile(lat, 50)
        r.p99_latency_ticks = percentile(lat, 99)
        return r

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def command_count(self) -> int:
        return sum(self.commands.values())
