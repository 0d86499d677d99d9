"""Command line: ``riosim run | verify | sweep``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .. import crashlab
from .config import MODES, ConfigError, SimConfig, from_pairs, load_config, load_grid
from .runner import Run


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riosim", description="Ordered-write storage fabric simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one workload in one ordering mode")
    run.add_argument("--config", type=Path, help="flat key = value file")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--workload")
    run.add_argument("--threads", type=int)
    run.add_argument("--targets", type=int)
    run.add_argument("--ssds", dest="ssds_per_target", type=int)
    run.add_argument("--ssd-profile", dest="ssd_profile")
    run.add_argument("--seed", type=int)
    run.add_argument("--duration", dest="duration_ticks", type=int)
    run.add_argument("--iodepth", type=int)
    run.add_argument("--no-merge", dest="merge", action="store_const", const=False)
    run.add_argument("--set", dest="overrides", type=_kv, action="append", default=[],
                     metavar="KEY=VALUE", help="override any config key")
    run.add_argument("--trace", type=Path, help="write a JSON-lines trace here")
    run.add_argument("--report", type=Path, help="write the JSON report here (default: stdout)")

    ver = sub.add_parser("verify", help="crash-consistency checking")
    ver.add_argument("--groups", type=int, default=5, help="total ordered groups, spread over streams")
    ver.add_argument("--targets", type=int, default=2)
    ver.add_argument("--streams", type=int, default=2)
    ver.add_argument("--ssd-profile", dest="ssd_profile", default="flash")
    ver.add_argument("--bound", type=int, default=None, help="cap on explored states")
    ver.add_argument("--seed", type=int, default=7)
    ver.add_argument("--fuzz-runs", type=int, default=100)
    ver.add_argument("--fuzz-streams", type=int, default=4)
    ver.add_argument("--mutate", choices=("no-gate", "no-rollback", "early-persist"),
                     help="inject a known bug to check that violations are caught")
    ver.add_argument("--report", type=Path)

    sw = sub.add_parser("sweep", help="run a grid of configurations and print a CSV table")
    sw.add_argument("--grid", required=True,
                    help="grid file, or inline 'key=v1,v2; key2=v3' pairs")
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    return p


def _run_config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    direct = {k: getattr(args, k) for k in ("mode", "workload", "threads", "targets", "ssds_per_target",
                                             "ssd_profile", "seed", "duration_ticks", "iodepth", "merge")
              if getattr(args, k) is not None}
    cfg = from_pairs(direct, cfg)
    return from_pairs(dict(args.overrides), cfg)


def cmd_run(args) -> int:
    cfg = _run_config(args)
    if args.trace:
        with open(args.trace, "w") as f:
            report = Run(cfg, f).execute()
    else:
        report = Run(cfg).execute()
    text = json.dumps(report.as_dict(), sort_keys=True, indent=2)
    if args.report:
        args.report.write_text(text + "\n")
    else:
        print(text)
    return 0


def _split_groups(total: int, streams: int) -> tuple:
    base, extra = divmod(total, streams)
    return tuple(base + (1 if i < extra else 0) for i in range(streams))


def cmd_verify(args) -> int:
    mutations = (args.mutate,) if args.mutate else ()
    scenario = crashlab.Scenario(groups=_split_groups(args.groups, args.streams), targets=args.targets,
                                 profile=args.ssd_profile, mutations=mutations,
                                 affinity=args.mutate != "no-gate",
                                 stripe_unit_blocks=8 if args.mutate == "no-gate" else 1)
    ex = crashlab.explore_exhaustive(scenario.build, bound=args.bound, crash_kinds=("power", "initiator"))
    scale = crashlab.FuzzScale(streams=args.fuzz_streams, targets=args.targets, profile=args.ssd_profile,
                               affinity=args.mutate != "no-gate")
    fz = crashlab.fuzz(args.seed, args.fuzz_runs, scale, mutations)
    verdict = {
        "exhaustive": {"groups": list(scenario.groups), "states": ex.states, "schedules": ex.schedules,
                       "crash_points": ex.crash_points, "complete": ex.complete,
                       "violations": ex.violations[:3], "seconds": round(ex.elapsed, 2)},
        "fuzz": {"runs": fz.runs, "kinds": fz.kinds, "violations": fz.violations[:3], "digest": fz.digest},
        "mutation": args.mutate,
        "ok": ex.ok and fz.ok,
    }
    text = json.dumps(verdict, indent=2, sort_keys=True)
    if args.report:
        args.report.write_text(text + "\n")
    print(text)
    return 0 if verdict["ok"] else 1


SWEEP_COLUMNS = ("mode", "workload", "threads", "ssd_profile", "targets", "ssds_per_target", "seed",
                 "throughput", "group_throughput", "initiator_busy", "target_busy", "cpu_efficiency",
                 "normalized_efficiency", "target_cpu_efficiency", "p50_latency_ticks",
                 "p99_latency_ticks", "commands")


def _cell(cfg: SimConfig) -> dict:
    r = Run(cfg).execute()
    row = {k: getattr(cfg, k) for k in ("mode", "workload", "threads", "ssd_profile", "targets",
                                        "ssds_per_target", "seed")}
    row.update({k: getattr(r, k) for k in ("throughput", "group_throughput", "initiator_busy",
                                           "target_busy", "cpu_efficiency", "target_cpu_efficiency",
                                           "p50_latency_ticks", "p99_latency_ticks")})
    row["commands"] = r.command_count
    return row


def sweep(configs, jobs: int = 1) -> list[dict]:
    """Run every cell; efficiency is also given relative to orderless in the same cell."""
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_cell, configs))
    else:
        rows = [_cell(c) for c in configs]
    key = lambda r: (r["workload"], r["threads"], r["ssd_profile"], r["targets"], r["ssds_per_target"], r["seed"])
    base = {key(r): r["cpu_efficiency"] for r in rows if r["mode"] == "orderless"}
    for r in rows:
        b = base.get(key(r))
        r["normalized_efficiency"] = r["cpu_efficiency"] / b if b else ""
    return rows


def write_table(rows, out) -> None:
    w = csv.DictWriter(out, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})


def cmd_sweep(args) -> int:
    path = Path(args.grid)
    text = path.read_text() if path.exists() else args.grid.replace(";", "\n")
    rows = sweep(load_grid(text), args.jobs)
    if args.out:
        with open(args.out, "w") as f:
            write_table(rows, f)
    else:
        buf = io.StringIO()
        write_table(rows, buf)
        sys.stdout.write(buf.getvalue())
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep}[args.command](args)
    except ConfigError as e:
        print(f"riosim: config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
