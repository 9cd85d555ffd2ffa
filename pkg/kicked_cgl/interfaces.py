"""Lightweight interfaces and base classes - numpy only.

Holds the run statistics record and the hook interface that the simulation
modules call into. Nothing here imports scipy or scikit-learn.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any


@dataclass
class RunStats:
    """Counters accumulated while a suite or experiment runs."""

    replicas: int = 0
    kicks: int = 0
    coupling_attempts: int = 0
    coupling_successes: int = 0
    divergences: int = 0
    failures: int = 0
    steps: int = 0
    total_step_ms: float = 0.0

    @property
    def coupling_rate(self) -> float:
        """Fraction of coupled steps whose low modes were matched."""
        if self.coupling_attempts == 0:
            return 1.0
        return self.coupling_successes / self.coupling_attempts

    @property
    def avg_step_ms(self) -> float:
        """Average wall time of one embedded or coupled step."""
        if self.steps == 0:
            return 0.0
        return self.total_step_ms / self.steps

    @property
    def failure_rate(self) -> float:
        if self.replicas == 0:
            return 0.0
        return self.failures / self.replicas


class SimulationHook(ABC):
    """Callbacks fired by the kick, coupling and suite machinery."""

    @abstractmethod
    def on_kick(self, waiting_time: float, kick_norm_h1: float, step_ms: float) -> None:
        """Called after an embedded step applied a kick."""
        pass

    @abstractmethod
    def on_coupled_step(self, coupled: bool, distance_h1: float, step_ms: float) -> None:
        """Called after a coupled step.

        Args:
            coupled: Whether the low modes were matched by the coupling
            distance_h1: ||u_k - u'_k||_1 after the step
            step_ms: Wall time of the step
        """
        pass

    @abstractmethod
    def on_divergence(self, time: float, norm: float) -> None:
        """Called when a replica aborts on the divergence guard."""
        pass

    def on_suite_complete(self, suite: str, summary: dict[str, Any]) -> None:
        """Called once per suite with its verdict summary (optional)."""
        pass


class NullHook(SimulationHook):
    """Hook that ignores every event."""

    def on_kick(self, waiting_time: float, kick_norm_h1: float, step_ms: float) -> None:
        pass

    def on_coupled_step(self, coupled: bool, distance_h1: float, step_ms: float) -> None:
        pass

    def on_divergence(self, time: float, norm: float) -> None:
        pass


NULL_HOOK = NullHook()

__all__ = [
    "RunStats",
    "SimulationHook",
    "NullHook",
    "NULL_HOOK",
]
