"""Kicked CGL - simulator and verification lab for the randomly kicked
complex Ginzburg-Landau equation on a bounded interval.

- Spectral sine basis with DST transforms and H^1 energy
- Strang-split deterministic flow with dissipation diagnostics
- Poisson-clock kicks with heavy low-mode noise
- Maximal coupling of kick laws, stopping times and ell
- Mixing curves, stationary proxies and Lyapunov drift probes

Quick start:
    >>> from kicked_cgl import Grid, SpectralField, FlowParams, evolve
    >>> grid = Grid(n_modes=16)
    >>> u = SpectralField.zeros(grid)
    >>> v = evolve(u, 1.0, FlowParams(nu=1.0, beta=1.0))
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    CouplingConfigurationError,
    DivergenceError,
    KickedCGLError,
    ModeError,
    NumericalDegeneracyError,
    ProbeInvalidError,
)
from .flow import FlowParams, evolve
from .interfaces import NULL_HOOK, NullHook, RunStats, SimulationHook
from .kicks import ClockSpec, KickSpec, make_streams, simulate
from .spectral import EnergyParams, Grid, SpectralField

# Coupling, ergodicity, config and suites load on first access.
_LAZY = {
    "CouplingConfig": "coupling",
    "coupled_step": "coupling",
    "run_until_ell": "coupling",
    "tv_oracle": "coupling",
    "TestDictionary": "ergodicity",
    "mixing_curve": "ergodicity",
    "krylov_bogolyubov_estimate": "ergodicity",
    "RunConfig": "config",
    "parse_config": "config",
    "run_suite": "suites",
}


def __getattr__(name: str) -> object:
    """Lazy load heavier modules on first access."""
    module = _LAZY.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    import importlib

    value = getattr(importlib.import_module(f".{module}", __name__), name)
    globals()[name] = value
    return value


__all__ = [
    "__version__",
    "ClockSpec",
    "ConfigError",
    "CouplingConfigurationError",
    "DivergenceError",
    "EnergyParams",
    "FlowParams",
    "Grid",
    "KickSpec",
    "KickedCGLError",
    "ModeError",
    "NULL_HOOK",
    "NullHook",
    "NumericalDegeneracyError",
    "ProbeInvalidError",
    "RunStats",
    "SimulationHook",
    "SpectralField",
    "evolve",
    "make_streams",
    "simulate",
    *_LAZY,
]
