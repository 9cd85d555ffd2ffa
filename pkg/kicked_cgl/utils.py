"""Utility functions for the kicked CGL laboratory.

Common helpers used across the codebase: validation that collects violations,
Cesàro averages and bootstrap confidence intervals.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np
from sklearn.utils import resample

from .errors import InsufficientDataError, Violation

BOOTSTRAP_RESAMPLES = 1000
BOOTSTRAP_SEED = 20240917


def check_positive(
    value: float,
    path: str,
    violations: list[Violation],
    integer: bool = False,
) -> None:
    """Append a violation unless ``value`` is a finite positive number.

    Args:
        value: Value to validate
        path: Dotted config path used in the violation
        violations: List collecting problems
        integer: Also require an ``int`` (bools rejected)
    """
    if integer:
        if not isinstance(value, int) or isinstance(value, bool):
            violations.append(Violation(path, f"must be an integer, got {value!r}"))
            return
    elif not isinstance(value, (int, float)) or isinstance(value, bool):
        violations.append(Violation(path, f"must be a number, got {value!r}"))
        return
    if not np.isfinite(value) or value <= 0:
        violations.append(Violation(path, f"must be positive, got {value!r}"))


def check_range(
    value: float,
    min_val: float,
    max_val: float,
    path: str,
    violations: list[Violation],
) -> None:
    """Append a violation unless ``min_val <= value <= max_val``.

    Example:
        >>> found = []
        >>> check_range(1.5, 0.0, 1.0, "coupling.d", found)
        >>> str(found[0])
        'coupling.d: must be between 0.0 and 1.0, got 1.5'
    """
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        violations.append(Violation(path, f"must be a number, got {value!r}"))
        return
    if not min_val <= value <= max_val:
        violations.append(Violation(path, f"must be between {min_val} and {max_val}, got {value}"))


def require_samples(n: int, minimum: int, what: str = "samples") -> None:
    """Raise ``InsufficientDataError`` when ``n < minimum``."""
    if n < minimum:
        raise InsufficientDataError(f"need at least {minimum} {what}, got {n}")


def cesaro_average(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Running Cesàro averages ``<a>_0^n = (1/(n+1)) sum_{i<=n} a_i``.

    Example:
        >>> cesaro_average([1.0, 3.0, 5.0]).tolist()
        [1.0, 2.0, 3.0]
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return arr
    return np.cumsum(arr) / np.arange(1, arr.size + 1)


def bootstrap_ci(
    samples: Sequence[float] | np.ndarray,
    statistic: Callable[[np.ndarray], float] = np.mean,
    level: float = 0.95,
    n_resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = BOOTSTRAP_SEED,
) -> tuple[float, float]:
    """Percentile bootstrap confidence interval for ``statistic``.

    Uses a fixed resampling seed so repeated runs report identical intervals.

    Returns:
        (low, high) bounds of the interval
    """
    data = np.asarray(samples)
    if data.shape[0] < 2:
        raise InsufficientDataError("bootstrap needs at least 2 samples")
    rng = np.random.RandomState(seed)
    stats = np.empty(n_resamples)
    for b in range(n_resamples):
        stats[b] = statistic(resample(data, random_state=rng))
    tail = 100.0 * (1.0 - level) / 2.0
    low, high = np.percentile(stats, [tail, 100.0 - tail])
    return float(low), float(high)


def intervals_overlap(a: tuple[float, float], b: tuple[float, float]) -> bool:
    """True when two closed intervals intersect."""
    return a[0] <= b[1] and b[0] <= a[1]
