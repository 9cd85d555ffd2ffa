"""Metrics tracking for simulation runs.

Tracks what a verification run spends its time on:
- Kicks applied and coupled steps taken
- Coupling success rate and divergences
- Per-step latency percentiles
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any

from ..interfaces import RunStats, SimulationHook


@dataclass
class StepMetrics:
    """Metrics for a single embedded or coupled step."""

    timestamp: float
    kind: str
    step_ms: float
    coupled: bool
    norm_h1: float


class Metrics:
    """Rolling-window plus cumulative metrics collector.

    Tracks:
    - Volume: replicas, kicks, coupled steps
    - Coupling: attempts, successes, rate
    - Health: divergences
    - Latency: p50, p95, p99 step latency

    Args:
        enabled: Whether to collect metrics
        window_size: Number of recent steps kept for rolling stats
    """

    def __init__(self, enabled: bool = True, window_size: int = 1000):
        self.enabled = enabled
        self.window_size = window_size
        self._steps: deque[StepMetrics] = deque(maxlen=window_size)
        self._lock = threading.Lock()
        self.stats = RunStats()
        self.suites: dict[str, dict[str, Any]] = {}
        self.start_time = time.time()

    def observe_step(self, kind: str, step_ms: float, coupled: bool = True, norm_h1: float = 0.0) -> None:
        if not self.enabled:
            return
        with self._lock:
            self._steps.append(StepMetrics(time.time(), kind, step_ms, coupled, norm_h1))
            self.stats.steps += 1
            self.stats.total_step_ms += step_ms
            if kind == "kick":
                self.stats.kicks += 1
            else:
                self.stats.coupling_attempts += 1
                if coupled:
                    self.stats.coupling_successes += 1

    def observe_divergence(self) -> None:
        if not self.enabled:
            return
        with self._lock:
            self.stats.divergences += 1

    def observe_replicas(self, count: int, failures: int = 0) -> None:
        if not self.enabled:
            return
        with self._lock:
            self.stats.replicas += count
            self.stats.failures += failures

    def get_summary(self) -> dict[str, Any]:
        """Summary of cumulative counters and recent-window latency."""
        uptime = time.time() - self.start_time
        with self._lock:
            latency = sorted(s.step_ms for s in self._steps)
            n = len(latency)
            return {
                "replicas": self.stats.replicas,
                "kicks": self.stats.kicks,
                "coupling_attempts": self.stats.coupling_attempts,
                "coupling_successes": self.stats.coupling_successes,
                "coupling_rate": self.stats.coupling_rate,
                "divergences": self.stats.divergences,
                "failures": self.stats.failures,
                "failure_rate": self.stats.failure_rate,
                "avg_step_ms": self.stats.avg_step_ms,
                "step_latency_p50_ms": latency[n // 2] if n else 0.0,
                "step_latency_p95_ms": latency[int(n * 0.95)] if n else 0.0,
                "step_latency_p99_ms": latency[int(n * 0.99)] if n else 0.0,
                "steps_per_second": self.stats.steps / max(uptime, 1e-9),
                "uptime_seconds": uptime,
                "suites": dict(self.suites),
            }

    def export_prometheus(self) -> str:
        """Prometheus text exposition of the summary."""
        s = self.get_summary()
        lines = [
            "# HELP kicked_cgl_kicks_total Kicks applied",
            "# TYPE kicked_cgl_kicks_total counter",
            f"kicked_cgl_kicks_total {s['kicks']}",
            "",
            "# HELP kicked_cgl_coupling_attempts_total Coupled steps taken",
            "# TYPE kicked_cgl_coupling_attempts_total counter",
            f"kicked_cgl_coupling_attempts_total {s['coupling_attempts']}",
            "",
            "# HELP kicked_cgl_coupling_rate Fraction of coupled steps with matched low modes",
            "# TYPE kicked_cgl_coupling_rate gauge",
            f"kicked_cgl_coupling_rate {s['coupling_rate']:.3f}",
            "",
            "# HELP kicked_cgl_divergences_total Replicas aborted by the divergence guard",
            "# TYPE kicked_cgl_divergences_total counter",
            f"kicked_cgl_divergences_total {s['divergences']}",
            "",
            "# HELP kicked_cgl_step_latency_ms Step latency",
            "# TYPE kicked_cgl_step_latency_ms summary",
            f"kicked_cgl_step_latency_ms{{quantile=\"0.5\"}} {s['step_latency_p50_ms']:.3f}",
            f"kicked_cgl_step_latency_ms{{quantile=\"0.95\"}} {s['step_latency_p95_ms']:.3f}",
            f"kicked_cgl_step_latency_ms{{quantile=\"0.99\"}} {s['step_latency_p99_ms']:.3f}",
        ]
        return "\n".join(lines) + "\n"

    def reset(self) -> None:
        with self._lock:
            self._steps.clear()
            self.stats = RunStats()
            self.suites = {}
            self.start_time = time.time()


class MetricsHook(SimulationHook):
    """SimulationHook that forwards every event to a Metrics collector."""

    def __init__(self, metrics: Metrics | None = None):
        self.metrics = metrics or Metrics()

    def on_kick(self, waiting_time: float, kick_norm_h1: float, step_ms: float) -> None:
        self.metrics.observe_step("kick", step_ms, norm_h1=kick_norm_h1)

    def on_coupled_step(self, coupled: bool, distance_h1: float, step_ms: float) -> None:
        self.metrics.observe_step("coupled", step_ms, coupled=coupled, norm_h1=distance_h1)

    def on_divergence(self, time: float, norm: float) -> None:
        self.metrics.observe_divergence()

    def on_suite_complete(self, suite: str, summary: dict[str, Any]) -> None:
        self.metrics.suites[suite] = summary
