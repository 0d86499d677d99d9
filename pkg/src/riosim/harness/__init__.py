"""Benchmark surface: workloads, ordering modes, metrics, traces and the CLI."""

from .config import SimConfig, load_config, load_grid
from .metrics import MetricsReport
from .runner import Run, run_workload
from .workloads import workload_gen

__all__ = ["MetricsReport", "Run", "SimConfig", "load_config", "load_grid", "run_workload", "workload_gen"]
