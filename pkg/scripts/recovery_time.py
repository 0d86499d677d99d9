#!/usr/bin/env python3
"""Simulated recovery cost against the number of live PMR records."""

import argparse
import statistics
import sys

from riosim import Cluster, ClusterConfig


def measure(records: int, profile: str) -> dict:
    c = Cluster(ClusterConfig(targets=2, ssd_profile=profile, stripe_unit_blocks=1))
    for g in range(records):
        c.initiator.submit(0, g, 1, flush=g == records - 1)
        if g % 16 == 15:
            c.flush_plugs()
    c.flush_plugs()
    c.run()
    c.crash("power")
    return c.recover("power").timing


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--records", default="100,1000,10000")
    p.add_argument("--ssd-profile", default="optane", choices=("flash", "optane"))
    args = p.parse_args(argv)
    sizes = [int(n) for n in args.records.split(",")]
    print("records,order_rebuild_ticks,data_recovery_ticks")
    pts = []
    for n in sizes:
        t = measure(n, args.ssd_profile)
        pts.append((t["records"], t["order_rebuild_ticks"]))
        print(f"{t['records']},{t['order_rebuild_ticks']},{t['data_recovery_ticks']}")
    if len(pts) > 2:
        print(f"# r^2 = {statistics.correlation(*zip(*pts)) ** 2:.6f}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
