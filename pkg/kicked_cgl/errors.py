"""Exception hierarchy for the kicked CGL laboratory.

Every failure the library raises derives from ``KickedCGLError`` so callers
(the suite runner in particular) can record it per replica and keep going.
"""

from __future__ import annotations

from dataclasses import dataclass


class KickedCGLError(Exception):
    """Base class for all library errors."""


class ShapeError(KickedCGLError, ValueError):
    """Array length does not match the grid it is paired with."""


class ModeIndexError(KickedCGLError, IndexError):
    """Mode index or projection cutoff outside the truncated basis."""


class DivergenceError(KickedCGLError):
    """The flow left the safe region (non-finite state or huge H^1 norm).

    Args:
        time: Flow time at which the guard fired
        norm: H^1 norm observed at that time (may be ``nan``)
    """

    def __init__(self, time: float, norm: float):
        self.time = time
        self.norm = norm
        super().__init__(f"flow diverged at t={time:.6g} (norm_h1={norm:.6g})")


class DegenerateInputError(KickedCGLError, ValueError):
    """A probe was handed two identical states."""


class CalibrationError(KickedCGLError):
    """No alpha in the halving schedule certified monotone decay."""


class CouplingConfigurationError(KickedCGLError, ValueError):
    """Coupling is undefined because some b_j vanishes for j <= N."""


class NumericalDegeneracyError(KickedCGLError):
    """A rejection loop exceeded its iteration cap."""


class ModeError(KickedCGLError, ValueError):
    """An estimator mode is not available for the requested dimension."""


class ProbeInvalidError(KickedCGLError):
    """Preconditions of the squeezing probe do not hold on the window."""


class InsufficientDataError(KickedCGLError):
    """Too few replicas or samples for a statistical estimate."""


class DriftProbeError(KickedCGLError):
    """No (n, R') in the search range produced a drift contraction."""


@dataclass(frozen=True)
class Violation:
    """A single configuration problem, addressed by dotted field path."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


class ConfigError(KickedCGLError):
    """Configuration could not be loaded or failed validation.

    Carries every violation found, not just the first one.
    """

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"{len(self.violations)} configuration violation(s):\n{lines}")

    @property
    def paths(self) -> list[str]:
        return [v.path for v in self.violations]


__all__ = [
    "KickedCGLError",
    "ShapeError",
    "ModeIndexError",
    "DivergenceError",
    "DegenerateInputError",
    "CalibrationError",
    "CouplingConfigurationError",
    "NumericalDegeneracyError",
    "ModeError",
    "ProbeInvalidError",
    "InsufficientDataError",
    "DriftProbeError",
    "Violation",
    "ConfigError",
]
