"""JSON-lines event traces.

The first line is a header carrying the full configuration and seed; every
following line is one event stamped with simulated time.  Keys are sorted so
two runs with the same inputs produce the same bytes.
"""

from __future__ import annotations

import json
from typing import IO, Optional

FORMAT = "riosim-trace/1"


def _plain(v):
    if isinstance(v, (tuple, list)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (int, float, str, bool)) or v is None:
        return v
    return repr(v)


class Tracer:
    def __init__(self, out: IO[str], env, header: Optional[dict] = None):
        self.out = out
        self.env = env
        self.events = 0
        if header is not None:
            self._write({"format": FORMAT, **header})

    def _write(self, obj: dict):
        self.out.write(json.dumps(_plain(obj), sort_keys=True, separators=(",", ":")) + "\n")

    def __call__(self, event: str, **fields):
        self.events += 1
        self._write({"t": self.env.now, "ev": event, **fields})

    def close(self, report: Optional[dict] = None):
        if report is not None:
            self._write({"ev": "report", **report})
        self.out.flush()


def read_trace(path) -> tuple[dict, list[dict]]:
    with open(path) as f:
        lines = [json.loads(line) for line in f if line.strip()]
    if not lines or lines[0].get("format") != FORMAT:
        raise ValueError(f"{path}: not a riosim trace")
    return lines[0], lines[1:]
