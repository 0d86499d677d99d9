#!/usr/bin/env python3
"""CPU efficiency against batch size, normalized to the orderless mode."""

import argparse
import sys

from riosim.harness import SimConfig
from riosim.harness.cli import sweep


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--batches", default="1,2,4,8")
    p.add_argument("--modes", default="orderless,rio,horae,sync_nvmeof")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-merge", action="store_true")
    args = p.parse_args(argv)
    modes = args.modes.split(",")
    batches = [int(b) for b in args.batches.split(",")]
    cells = [SimConfig(mode=m, workload=f"batch({b})", threads=args.threads, merge=not args.no_merge)
             for b in batches for m in modes]
    rows = {(r["mode"], r["workload"]): r for r in sweep(cells)}
    print("batch," + ",".join(modes))
    for b in batches:
        vals = [rows[(m, f"batch({b})")]["normalized_efficiency"] for m in modes]
        print(f"{b}," + ",".join(f"{v:.3f}" for v in vals))
    return 0


if __name__ == "__main__":
    sys.exit(main())
