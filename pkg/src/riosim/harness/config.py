"""Run configuration and the flat ``key = value`` file format."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from ..cluster import ClusterConfig
from ..ssd import PROFILES

MODES = ("rio", "sync_nvmeof", "horae", "orderless")
TICKS_PER_SECOND = 10_000_000  # one tick is 0.1 us


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    mode: str = "rio"
    workload: str = "journal3"
    threads: int = 1
    targets: int = 1
    ssds_per_target: int = 1
    ssd_profile: str = "flash"
    stripe_unit_blocks: int = 32
    iodepth: int = 128               # outstanding groups per thread
    submit_batch: int = 8            # groups submitted under one plug per thread step
    duration_ticks: int = 200_000
    seed: int = 0
    merge: bool = True
    plug_depth: int = 16
    plug_timeout_ticks: int = 20
    base_latency_ticks: int = 20
    jitter_ticks: int = 10
    software_ticks: int = 10         # per-request block layer cost
    rio_ticks: int = 1               # extra per-request cost of ordering attributes
    region_blocks: int = 1 << 18     # private LBA range per thread

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.ssd_profile not in PROFILES:
            raise ConfigError(f"ssd_profile: unknown profile {self.ssd_profile!r}")
        for key in ("threads", "targets", "ssds_per_target", "stripe_unit_blocks", "iodepth",
                    "submit_batch", "duration_ticks", "plug_depth", "region_blocks"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be positive")
        for key in ("plug_timeout_ticks", "base_latency_ticks", "jitter_ticks", "software_ticks",
                    "rio_ticks", "seed"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key}: must not be negative")
        from .workloads import parse_workload
        try:
            parse_workload(self.workload)
        except ValueError as e:
            raise ConfigError(f"workload: {e}") from None

    def cluster_config(self) -> ClusterConfig:
        return ClusterConfig(
            targets=self.targets, ssds_per_target=self.ssds_per_target, ssd_profile=self.ssd_profile,
            stripe_unit_blocks=self.stripe_unit_blocks, num_streams=self.threads,
            num_queues=self.threads, plug_depth=self.plug_depth,
            plug_timeout_ticks=self.plug_timeout_ticks, merge_enabled=self.merge,
            base_latency_ticks=self.base_latency_ticks, jitter_ticks=self.jitter_ticks,
            seed=self.seed, software_ticks=self.software_ticks, rio_ticks=self.rio_ticks,
        )

    def as_dict(self) -> dict:
        return asdict(self)

    def with_(self, **kw) -> "SimConfig":
        return replace(self, **kw)


_TYPES = {f.name: f.type for f in fields(SimConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES[key]
    raw = raw.strip()
    if kind in ("bool", bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind in ("int", int):
        try:
            return int(raw.replace("_", ""))
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    return raw


def parse_pairs(lines) -> dict:
    """``key = value`` lines (``#`` comments) into a checked dict of raw strings."""
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        out[key] = value
    return out


def from_pairs(pairs: dict, base: SimConfig | None = None) -> SimConfig:
    for k in pairs:
        if k not in _TYPES:
            raise ConfigError(f"unknown key {k!r}")
    values = {k: _coerce(k, v) if isinstance(v, str) else v for k, v in pairs.items()}
    return replace(base or SimConfig(), **values)


def load_config(path, base: SimConfig | None = None) -> SimConfig:
    return from_pairs(parse_pairs(Path(path).read_text().splitlines()), base)


def load_grid(text: str) -> list[SimConfig]:
    """A grid file is a config file whose values may be comma-separated lists."""
    pairs = parse_pairs(text.splitlines())
    keys = list(pairs)
    choices = [[v.strip() for v in pairs[k].split(",")] for k in keys]
    return [from_pairs(dict(zip(keys, combo))) for combo in itertools.product(*choices)]
