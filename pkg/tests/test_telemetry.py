#!/usr/bin/env python3
"""Tests for run metrics, event dumps and the CSV/JSON emitters."""

import csv
import json
import math

import numpy as np
import pytest

from kicked_cgl.interfaces import NULL_HOOK, RunStats
from kicked_cgl.telemetry import EventDumper, Metrics, MetricsHook, write_csv, write_json
from kicked_cgl.telemetry.emitters import STOPPING_COLUMNS, trajectory_columns


class TestRunStats:
    """Test derived rates on empty and filled counters."""

    def test_empty_defaults(self):
        stats = RunStats()
        assert stats.coupling_rate == 1.0
        assert stats.avg_step_ms == 0.0
        assert stats.failure_rate == 0.0

    def test_rates(self):
        stats = RunStats(replicas=10, failures=2, coupling_attempts=4, coupling_successes=3, steps=2,
                         total_step_ms=5.0)
        assert stats.failure_rate == 0.2
        assert stats.coupling_rate == 0.75
        assert stats.avg_step_ms == 2.5


class TestMetrics:
    """Test Metrics collector."""

    def test_counts_steps(self):
        metrics = Metrics()
        metrics.observe_step("kick", 1.0)
        metrics.observe_step("coupled", 2.0, coupled=True)
        metrics.observe_step("coupled", 3.0, coupled=False)
        summary = metrics.get_summary()
        assert summary["kicks"] == 1
        assert summary["coupling_attempts"] == 2
        assert summary["coupling_successes"] == 1
        assert summary["coupling_rate"] == 0.5
        assert summary["avg_step_ms"] == pytest.approx(2.0)
        assert summary["step_latency_p50_ms"] == 2.0

    def test_disabled_collects_nothing(self):
        metrics = Metrics(enabled=False)
        metrics.observe_step("kick", 1.0)
        metrics.observe_divergence()
        metrics.observe_replicas(5, 1)
        summary = metrics.get_summary()
        assert summary["kicks"] == 0
        assert summary["divergences"] == 0
        assert summary["replicas"] == 0

    def test_window_is_bounded(self):
        metrics = Metrics(window_size=3)
        for ms in range(10):
            metrics.observe_step("kick", float(ms))
        assert metrics.get_summary()["kicks"] == 10
        assert metrics.get_summary()["step_latency_p50_ms"] == 8.0

    def test_replica_failures(self):
        metrics = Metrics()
        metrics.observe_replicas(20, failures=1)
        assert metrics.get_summary()["failure_rate"] == 0.05

    def test_prometheus_export(self):
        metrics = Metrics()
        metrics.observe_step("kick", 1.0)
        metrics.observe_divergence()
        text = metrics.export_prometheus()
        assert "kicked_cgl_kicks_total 1" in text
        assert "kicked_cgl_divergences_total 1" in text
        assert 'quantile="0.95"' in text

    def test_reset(self):
        metrics = Metrics()
        metrics.observe_step("kick", 1.0)
        metrics.suites["flow"] = {"x": True}
        metrics.reset()
        summary = metrics.get_summary()
        assert summary["kicks"] == 0
        assert summary["suites"] == {}


class TestMetricsHook:
    """Test the hook adapter."""

    def test_forwards_events(self):
        hook = MetricsHook()
        hook.on_kick(0.5, 0.2, 1.5)
        hook.on_coupled_step(True, 0.1, 2.0)
        hook.on_divergence(3.0, 1e7)
        hook.on_suite_complete("flow", {"strang_order": True})
        summary = hook.metrics.get_summary()
        assert summary["kicks"] == 1
        assert summary["coupling_successes"] == 1
        assert summary["divergences"] == 1
        assert summary["suites"] == {"flow": {"strang_order": True}}

    def test_null_hook_accepts_events(self):
        NULL_HOOK.on_kick(0.5, 0.2, 1.5)
        NULL_HOOK.on_coupled_step(False, 0.1, 2.0)
        NULL_HOOK.on_divergence(1.0, math.inf)
        NULL_HOOK.on_suite_complete("flow", {})


class TestEventDumper:
    """Test JSONL event dumps."""

    def test_disabled_writes_nothing(self, tmp_path):
        dumper = EventDumper(enabled=False, path=tmp_path / "events.jsonl")
        dumper.write({"t": 1.0})
        dumper.flush()
        assert not dumper.path.exists()

    def test_buffer_flushes_at_size(self, tmp_path):
        dumper = EventDumper(enabled=True, path=tmp_path / "events.jsonl", buffer_size=2)
        dumper.write({"t": 1.0})
        assert dumper.read_events() == []
        dumper.write({"t": 2.0})
        assert [e["t"] for e in dumper.read_events()] == [1.0, 2.0]

    def test_records_are_sequenced(self, tmp_path):
        dumper = EventDumper(enabled=True, path=tmp_path / "sub" / "events.jsonl")
        dumper.write_many([{"coupled": True}, {"coupled": False}], run="7")
        dumper.flush()
        events = dumper.read_events()
        assert [e["seq"] for e in events] == [1, 2]
        assert all(e["run"] == "7" for e in events)
        assert "timestamp" not in events[0]
        assert dumper.read_events(limit=1) == events[-1:]

    def test_stats_summary(self, tmp_path):
        dumper = EventDumper(enabled=True, path=tmp_path / "events.jsonl")
        assert dumper.get_stats_summary() == {"total_events": 0}
        dumper.write_many([{"coupled": True}, {"coupled": False}, {"kick": 1}], run="0")
        dumper.write({"coupled": True}, run="1")
        dumper.flush()
        stats = dumper.get_stats_summary()
        assert stats["total_events"] == 4
        assert stats["coupled_steps"] == 3
        assert stats["coupling_rate"] == pytest.approx(2 / 3)
        assert stats["runs"] == 2


class TestEmitters:
    """Test the fixed-schema CSV and canonical JSON writers."""

    def test_trajectory_columns(self):
        assert trajectory_columns(2) == ("t", "norm_h1", "H", "re_c1", "im_c1", "re_c2", "im_c2")

    def test_csv_cells(self, tmp_path):
        row = (3, False, 10, 0.1, None, 1.5, 2.5, np.float64(0.25), np.int64(12), np.True_)
        path = write_csv(tmp_path / "out" / "stopping.csv", STOPPING_COLUMNS, [row])
        with open(path) as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == STOPPING_COLUMNS
        assert rows[1] == ["3", "false", "10", "0.1", "", "1.5", "2.5", "0.25", "12", "true"]

    def test_csv_dict_rows(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", ("x", "y"), [{"y": 2, "x": 1}])
        assert path.read_text() == "x,y\n1,2\n"

    def test_csv_row_length_checked(self, tmp_path):
        with pytest.raises(ValueError, match="expected 2"):
            write_csv(tmp_path / "a.csv", ("x", "y"), [(1, 2, 3)])

    def test_csv_is_byte_stable(self, tmp_path):
        rows = [(0.1 + 0.2, 1 / 3)]
        a = write_csv(tmp_path / "a.csv", ("x", "y"), rows).read_bytes()
        b = write_csv(tmp_path / "b.csv", ("x", "y"), rows).read_bytes()
        assert a == b
        assert b"0.30000000000000004" in a

    def test_json_canonical(self, tmp_path):
        payload = {"b": np.arange(3), "a": {"nan": float("nan"), "flag": np.bool_(True), "n": np.int32(4)}}
        path = write_json(tmp_path / "x.json", payload)
        loaded = json.loads(path.read_text())
        assert list(loaded) == ["a", "b"]
        assert loaded["b"] == [0, 1, 2]
        assert loaded["a"] == {"flag": True, "n": 4, "nan": "nan"}
