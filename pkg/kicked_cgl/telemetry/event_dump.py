"""Per-step event dumping for offline analysis.

Writes coupled-run steps and trajectory events to JSONL, one record per line.
"""

from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Any


class EventDumper:
    """Buffered JSONL writer.

    Args:
        enabled: Whether to write dumps
        path: Output file path
        buffer_size: Number of records buffered before writing
        timestamps: Stamp records with wall time (off for reproducible files)
    """

    def __init__(
        self,
        enabled: bool = False,
        path: str | Path = "logs/events.jsonl",
        buffer_size: int = 100,
        timestamps: bool = False,
    ):
        self.enabled = enabled
        self.path = Path(path)
        self.buffer_size = buffer_size
        self.timestamps = timestamps
        self._buffer: list[dict[str, Any]] = []
        self._count = 0

        if self.enabled:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch(exist_ok=True)

    def write(self, event: dict[str, Any], run: str | None = None) -> None:
        if not self.enabled:
            return
        self._count += 1
        record: dict[str, Any] = {"seq": self._count, **event}
        if run is not None:
            record["run"] = run
        if self.timestamps:
            record["timestamp"] = time.time()
        self._buffer.append(record)
        if len(self._buffer) >= self.buffer_size:
            self.flush()

    def write_many(self, events: list[dict[str, Any]], run: str | None = None) -> None:
        for event in events:
            self.write(event, run)

    def flush(self) -> None:
        """Write buffered records to file."""
        if not self._buffer or not self.enabled:
            return
        try:
            with open(self.path, "a") as f:
                for record in self._buffer:
                    f.write(json.dumps(record, sort_keys=True) + "\n")
            self._buffer.clear()
        except OSError as e:
            print(f"⚠ Failed to write event dump: {e}")

    def read_events(self, limit: int | None = None) -> list[dict[str, Any]]:
        """Records in the dump file (the most recent ``limit`` if given)."""
        if not self.path.exists():
            return []
        with open(self.path) as f:
            events = [json.loads(line) for line in f if line.strip()]
        return events[-limit:] if limit else events

    def get_stats_summary(self) -> dict[str, Any]:
        events = self.read_events()
        if not events:
            return {"total_events": 0}
        coupled = [e for e in events if "coupled" in e]
        return {
            "total_events": len(events),
            "coupled_steps": len(coupled),
            "coupling_rate": sum(1 for e in coupled if e["coupled"]) / len(coupled) if coupled else 1.0,
            "runs": len({e.get("run") for e in events}),
        }

    def __del__(self) -> None:
        self.flush()
