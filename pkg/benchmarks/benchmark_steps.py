#!/usr/bin/env python3
"""
Benchmark Simulation Steps

Times the three inner loops every suite is built from, across truncation sizes:
  - Flow: S_t over a unit time interval
  - Embedded chain: one kick of the chain
  - Coupled pair: one step of the coupled construction

Run with:
    python benchmarks/benchmark_steps.py
"""

from __future__ import annotations

import statistics
import time
import tracemalloc
from typing import Any

from kicked_cgl import ClockSpec, FlowParams, Grid, KickSpec, SpectralField, evolve, make_streams
from kicked_cgl.coupling import CoupledPair, CouplingConfig, coupled_step
from kicked_cgl.kicks import embedded_step
from kicked_cgl.spectral import EnergyParams, scale_to_energy, smooth_random_field
from kicked_cgl.telemetry import Metrics, MetricsHook


def benchmark_size(n_modes: int, repeats: int = 20, seed: int = 0) -> dict[str, Any]:
    """Median wall time of each inner loop for one truncation size."""
    grid = Grid(n_modes=n_modes)
    params = FlowParams()
    spec = KickSpec.power_law(n_modes)
    clock = ClockSpec(1.0)
    config = CouplingConfig(N=min(8, n_modes - 1), N_prime=min(8, n_modes - 1))
    streams = make_streams(seed)
    u0 = scale_to_energy(smooth_random_field(grid, streams.kicks), 10.0, EnergyParams())

    flow_ms = []
    for _ in range(repeats):
        start = time.perf_counter()
        evolve(u0, 1.0, params)
        flow_ms.append((time.perf_counter() - start) * 1000)

    hook = MetricsHook(Metrics(window_size=repeats))
    state = u0
    tracemalloc.start()
    for _ in range(repeats):
        state, _, _ = embedded_step(state, spec, clock, params, streams, hook=hook)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    kick_p50 = hook.metrics.get_summary()["step_latency_p50_ms"]

    hook = MetricsHook(Metrics(window_size=repeats))
    pair = CoupledPair(u0, SpectralField.zeros(grid))
    for _ in range(repeats):
        pair = coupled_step(pair, config, spec, clock, params, streams, hook)
    summary = hook.metrics.get_summary()

    return {
        "n_modes": n_modes,
        "flow_ms": statistics.median(flow_ms),
        "kick_ms": kick_p50,
        "coupled_ms": summary["step_latency_p50_ms"],
        "coupling_rate": summary["coupling_rate"],
        "peak_kib": peak / 1024,
    }


def main() -> None:
    print("=" * 70)
    print("  STEP BENCHMARK - kicked CGL")
    print("=" * 70)
    print(f"{'n_modes':<10} {'flow ms':<12} {'kick ms':<12} {'coupled ms':<12} {'coupled %':<12} {'peak KiB':<10}")
    print("-" * 70)
    for n_modes in (16, 32, 64, 128):
        r = benchmark_size(n_modes)
        print(
            f"{r['n_modes']:<10} {r['flow_ms']:<12.2f} {r['kick_ms']:<12.2f} {r['coupled_ms']:<12.2f} "
            f"{r['coupling_rate']:<12.1%} {r['peak_kib']:<10.1f}"
        )
    print("=" * 70)


if __name__ == "__main__":
    main()
