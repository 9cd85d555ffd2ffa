"""Replica fan-out with per-replica failure capture.

Each replica gets its own index (and so its own RNG streams); results come
back in replica order whatever the worker count.
"""

from __future__ import annotations

import concurrent.futures as cf
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Generic, TypeVar

from .errors import DivergenceError, KickedCGLError

T = TypeVar("T")


@dataclass
class ReplicaOutcome(Generic[T]):
    """Result of one replica: a value, or the error that stopped it."""

    index: int
    value: T | None = None
    error: str | None = None
    diverged: bool = False
    elapsed_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None


def guarded_replica(func: Callable[[int], T], index: int, verbose: bool = False) -> ReplicaOutcome[T]:
    """Run ``func(index)``; library errors become a failed outcome instead of raising.

    Errors outside the package hierarchy are programming errors and propagate.
    """
    start = time.perf_counter()
    try:
        value = func(index)
        return ReplicaOutcome(index, value=value, elapsed_ms=(time.perf_counter() - start) * 1000)
    except KickedCGLError as e:
        elapsed = (time.perf_counter() - start) * 1000
        if verbose:
            print(f"⚠ Replica {index} failed after {elapsed:.1f}ms: {e}")
        return ReplicaOutcome(
            index,
            error=f"{type(e).__name__}: {e}",
            diverged=isinstance(e, DivergenceError),
            elapsed_ms=elapsed,
        )


def run_replicas(
    func: Callable[[int], T],
    n: int,
    workers: int = 1,
    offset: int = 0,
    verbose: bool = False,
) -> list[ReplicaOutcome[T]]:
    """Run replicas ``offset .. offset + n - 1`` on a thread pool.

    Args:
        func: Replica body, called with the replica index
        n: Number of replicas
        workers: Pool size (1 runs inline)
        offset: First replica index
        verbose: Print a line per failed replica
    """
    indices = range(offset, offset + n)
    if workers <= 1:
        return [guarded_replica(func, i, verbose) for i in indices]
    with cf.ThreadPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(guarded_replica, func, i, verbose) for i in indices]
        return [f.result() for f in futures]


def successful_values(outcomes: Sequence[ReplicaOutcome[T]]) -> list[T]:
    return [o.value for o in outcomes if o.ok and o.value is not None]


def failure_rate(outcomes: Sequence[ReplicaOutcome[T]]) -> float:
    if not outcomes:
        return 0.0
    return sum(1 for o in outcomes if not o.ok) / len(outcomes)


def divergence_rate(outcomes: Sequence[ReplicaOutcome[T]]) -> float:
    if not outcomes:
        return 0.0
    return sum(1 for o in outcomes if o.diverged) / len(outcomes)


__all__ = [
    "ReplicaOutcome",
    "guarded_replica",
    "run_replicas",
    "successful_values",
    "failure_rate",
    "divergence_rate",
]
