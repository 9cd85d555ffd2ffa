"""Telemetry and result emission for the kicked CGL laboratory.

Provides run metrics, per-step event dumps and the CSV/JSON emitters.
"""

__all__ = ["Metrics", "MetricsHook", "EventDumper", "write_csv", "write_json"]

from .emitters import write_csv, write_json
from .event_dump import EventDumper
from .metrics import Metrics, MetricsHook
