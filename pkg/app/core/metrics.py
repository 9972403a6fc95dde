"""
Metrics Collection
Prometheus metrics for radialiq runs, flushed to a text file at the end of a command
"""

import logging
import time
from typing import Optional

from prometheus_client import Counter, Histogram, Gauge, CollectorRegistry, write_to_textfile

logger = logging.getLogger("radialiq.metrics")

# Create a custom registry
REGISTRY = CollectorRegistry()

# === Command Metrics ===
commands_total = Counter(
    "radialiq_commands_total",
    "Total CLI commands run",
    ["command", "status"],  # ok, error, usage
    registry=REGISTRY
)

command_duration = Histogram(
    "radialiq_command_duration_seconds",
    "CLI command wall time in seconds",
    ["command"],
    registry=REGISTRY
)

errors_total = Counter(
    "radialiq_errors_total",
    "Domain errors raised, by code",
    ["code"],
    registry=REGISTRY
)

# === Classical Metrics ===
trajectories_total = Counter(
    "radialiq_trajectories_total",
    "Integrated bicharacteristics",
    ["status"],  # converged, left_domain, max_time
    registry=REGISTRY
)

integrator_steps = Counter(
    "radialiq_integrator_steps_total",
    "Accepted adaptive RK4 steps",
    registry=REGISTRY
)

# === Oracle Metrics ===
oracle_solve_duration = Histogram(
    "radialiq_oracle_solve_duration_seconds",
    "Oracle linear solve duration in seconds",
    ["solver"],  # direct, gmres
    registry=REGISTRY
)

oracle_iterations = Gauge(
    "radialiq_oracle_last_iterations",
    "Krylov iterations used by the last oracle solve",
    registry=REGISTRY
)

# === Acceptance Metrics ===
acceptance_results = Counter(
    "radialiq_acceptance_results_total",
    "Acceptance criteria outcomes",
    ["criterion", "status"],  # pass, fail, error
    registry=REGISTRY
)


class MetricsTracker:
    """Helper class to track metrics"""

    @staticmethod
    def track_command(command: str, status: str, duration_s: float) -> None:
        commands_total.labels(command=command, status=status).inc()
        command_duration.labels(command=command).observe(duration_s)

    @staticmethod
    def track_error(code: str) -> None:
        errors_total.labels(code=code).inc()

    @staticmethod
    def track_trajectory(status: str, steps: int) -> None:
        trajectories_total.labels(status=status).inc()
        integrator_steps.inc(steps)

    @staticmethod
    def track_oracle_solve(solver: str, duration_s: float, iterations: int) -> None:
        oracle_solve_duration.labels(solver=solver).observe(duration_s)
        oracle_iterations.set(iterations)

    @staticmethod
    def track_criterion(criterion: str, status: str) -> None:
        acceptance_results.labels(criterion=criterion, status=status).inc()


class Timer:
    """Context manager measuring wall time"""

    def __enter__(self):
        self.start = time.perf_counter()
        self.elapsed = 0.0
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        return False


def write_metrics(path: Optional[str]) -> None:
    """Write the registry in Prometheus text format when a path is configured."""
    if not path:
        return
    try:
        write_to_textfile(path, REGISTRY)
    except OSError as exc:
        logger.warning(f"[METRICS] could not write {path}: {exc}")
