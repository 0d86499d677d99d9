#!/usr/bin/env python3
"""Throughput of every ordering mode as the thread count grows."""

import argparse
import sys

from riosim.harness import SimConfig
from riosim.harness.cli import sweep, write_table
from riosim.harness.config import MODES


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--workload", default="journal3")
    p.add_argument("--ssd-profile", default="flash", choices=("flash", "optane"))
    p.add_argument("--threads", default="1,2,4,8,12", help="comma separated thread counts")
    p.add_argument("--duration", type=int, default=SimConfig().duration_ticks)
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args(argv)
    cells = [SimConfig(mode=m, workload=args.workload, threads=int(t), ssd_profile=args.ssd_profile,
                       duration_ticks=args.duration)
             for t in args.threads.split(",") for m in MODES]
    write_table(sweep(cells, args.jobs), sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
