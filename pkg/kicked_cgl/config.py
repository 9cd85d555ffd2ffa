"""Run configuration: JSON document, environment overrides, validation.

A config file holds up to seven sections (grid, flow, energy, kicks,
coupling, experiment, output_dir). Missing sections and fields take their
defaults. Any field can be overridden from the environment as
``KCGL_<SECTION>__<FIELD>`` (for example ``KCGL_COUPLING__N_PRIME=8``) with
the value parsed as a JSON literal. Validation reports every violation with
its dotted path instead of stopping at the first one.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .coupling import CouplingConfig
from .errors import ConfigError, Violation
from .flow import FlowParams
from .kicks import DENSITY_FAMILIES, ClockSpec, KickSpec
from .spectral import EnergyParams, Grid
from .utils import check_positive, check_range

ENV_PREFIX = "KCGL_"
SUITES = ("flow", "kicks", "coupling", "mixing", "stationary", "all")


@dataclass(frozen=True)
class GridConfig:
    L: float = math.pi
    n_modes: int = 32
    n_phys: int = 0


@dataclass(frozen=True)
class FlowConfig:
    nu: float = 1.0
    beta: float = 1.0
    dt_max: float = 1e-2


@dataclass(frozen=True)
class EnergyConfig:
    alpha: float = 0.25
    auto_calibrate: bool = True


@dataclass(frozen=True)
class KickConfig:
    b0: float = 0.5
    decay: float = 1.0
    family: str = "uniform_symmetric"
    scale: float = 1.0
    components: str = "complex"
    lam: float = 1.0


@dataclass(frozen=True)
class CouplingSettings:
    N: int = 8
    N_prime: int = 8
    M: float = 2.0
    d: float = 0.5
    window: int = 200
    max_kicks: int = 500


@dataclass(frozen=True)
class ExperimentConfig:
    replicas: int = 100
    horizon: float = 20.0
    time_grid: tuple[float, ...] = (0.0, 1.0, 2.0, 5.0, 10.0, 20.0)
    seed: int = 0
    suites: tuple[str, ...] = ("flow",)
    workers: int = 1
    failure_budget: float = 0.05
    flow_states: int = 20
    held_out_states: int = 100


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration of one experiment run."""

    grid: GridConfig = field(default_factory=GridConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    kicks: KickConfig = field(default_factory=KickConfig)
    coupling: CouplingSettings = field(default_factory=CouplingSettings)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    output_dir: str = "results"

    # ---------- conversions ----------

    def build_grid(self) -> Grid:
        return Grid(length=self.grid.L, n_modes=self.grid.n_modes, n_phys=self.grid.n_phys)

    def flow_params(self) -> FlowParams:
        return FlowParams(nu=self.flow.nu, beta=self.flow.beta, dt_max=self.flow.dt_max)

    def kick_spec(self, grid: Grid | None = None) -> KickSpec:
        n_modes = (grid or self.build_grid()).n_modes
        return KickSpec.power_law(
            n_modes,
            b0=self.kicks.b0,
            decay=self.kicks.decay,
            family=self.kicks.family,
            scale=self.kicks.scale,
            components=self.kicks.components,  # type: ignore[arg-type]
        )

    def clock(self) -> ClockSpec:
        return ClockSpec(self.kicks.lam)

    def coupling_config(self) -> CouplingConfig:
        c = self.coupling
        return CouplingConfig(N=c.N, N_prime=c.N_prime, M=c.M, d=c.d, window=c.window, max_kicks=c.max_kicks)

    def energy_params(self) -> EnergyParams:
        beta = self.flow.beta if self.flow.beta > 0 else 1.0
        return EnergyParams(alpha=self.energy.alpha, beta=beta)

    # ---------- provenance ----------

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(
        self,
        seed: int | None = None,
        replicas: int | None = None,
        output_dir: str | None = None,
        suites: tuple[str, ...] | None = None,
    ) -> RunConfig:
        """Copy with CLI flags applied; the result is re-validated."""
        exp = self.experiment
        exp = dataclasses.replace(
            exp,
            seed=exp.seed if seed is None else seed,
            replicas=exp.replicas if replicas is None else replicas,
            suites=exp.suites if suites is None else suites,
        )
        cfg = dataclasses.replace(self, experiment=exp, output_dir=output_dir or self.output_dir)
        violations = validate(cfg)
        if violations:
            raise ConfigError(violations)
        return cfg


SECTIONS: dict[str, type] = {
    "grid": GridConfig,
    "flow": FlowConfig,
    "energy": EnergyConfig,
    "kicks": KickConfig,
    "coupling": CouplingSettings,
    "experiment": ExperimentConfig,
}


def _field_types(cls: type) -> dict[str, Any]:
    return {f.name: f.default for f in dataclasses.fields(cls)}


def _coerce(value: Any, default: Any, path: str, violations: list[Violation]) -> Any:
    """Match a raw JSON value against the type of the field default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            violations.append(Violation(path, f"must be a boolean, got {value!r}"))
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            violations.append(Violation(path, f"must be an integer, got {value!r}"))
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            violations.append(Violation(path, f"must be a number, got {value!r}"))
            return value
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            violations.append(Violation(path, f"must be a string, got {value!r}"))
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            violations.append(Violation(path, f"must be a list, got {value!r}"))
            return value
        return tuple(value)
    return value


def _build_section(cls: type, raw: Any, name: str, violations: list[Violation]) -> Any:
    if raw is None:
        return cls()
    if not isinstance(raw, Mapping):
        violations.append(Violation(name, f"section must be an object, got {type(raw).__name__}"))
        return cls()
    defaults = _field_types(cls)
    kwargs = {}
    for key, value in raw.items():
        if key not in defaults:
            violations.append(Violation(f"{name}.{key}", "unknown field"))
            continue
        before = len(violations)
        coerced = _coerce(value, defaults[key], f"{name}.{key}", violations)
        # ill-typed fields keep their default so range checks still run
        if len(violations) == before:
            kwargs[key] = coerced
    return cls(**kwargs)


def apply_env_overrides(raw: dict[str, Any], environ: Mapping[str, str]) -> dict[str, Any]:
    """Merge ``KCGL_<SECTION>__<FIELD>`` variables into a raw config document."""
    merged = {k: (dict(v) if isinstance(v, Mapping) else v) for k, v in raw.items()}
    for key, text in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        parts = key[len(ENV_PREFIX) :].split("__")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        if len(parts) == 1 and parts[0].lower() == "output_dir":
            merged["output_dir"] = value
            continue
        if len(parts) != 2 or parts[0].lower() not in SECTIONS:
            continue
        section = parts[0].lower()
        names = {n.lower(): n for n in _field_types(SECTIONS[section])}
        field_name = names.get(parts[1].lower(), parts[1].lower())
        target = merged.setdefault(section, {})
        if isinstance(target, dict):
            target[field_name] = value
    return merged


def build_config(raw: Mapping[str, Any]) -> RunConfig:
    """RunConfig from a raw document; raises ConfigError listing every violation."""
    violations: list[Violation] = []
    for key in raw:
        if key not in SECTIONS and key != "output_dir":
            violations.append(Violation(key, "unknown section"))
    sections = {name: _build_section(cls, raw.get(name), name, violations) for name, cls in SECTIONS.items()}
    output_dir = raw.get("output_dir", "results")
    if not isinstance(output_dir, str):
        violations.append(Violation("output_dir", f"must be a string, got {output_dir!r}"))
        output_dir = "results"
    cfg = RunConfig(**sections, output_dir=output_dir)
    violations.extend(validate(cfg))
    if violations:
        raise ConfigError(violations)
    return cfg


def parse_config(path: str | Path | None, environ: Mapping[str, str] | None = None) -> RunConfig:
    """Read, override from the environment and validate a JSON config file.

    ``path=None`` starts from an empty document (all defaults).
    """
    raw: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError([Violation(str(path), "config file not found")])
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError([Violation(str(path), f"invalid JSON: {e}")]) from e
        if not isinstance(loaded, dict):
            raise ConfigError([Violation(str(path), "top level must be an object")])
        raw = loaded
    raw = apply_env_overrides(raw, os.environ if environ is None else environ)
    return build_config(raw)


def validate(cfg: RunConfig) -> list[Violation]:
    """Every invariant violation of ``cfg`` with its dotted path."""
    v: list[Violation] = []
    g = cfg.grid
    check_positive(g.L, "grid.L", v)
    check_positive(g.n_modes, "grid.n_modes", v, integer=True)
    if isinstance(g.n_modes, int) and g.n_modes < 4:
        v.append(Violation("grid.n_modes", f"must be >= 4, got {g.n_modes}"))
    if not isinstance(g.n_phys, int) or g.n_phys < 0:
        v.append(Violation("grid.n_phys", f"must be a non-negative integer, got {g.n_phys!r}"))
    elif g.n_phys and isinstance(g.n_modes, int) and g.n_phys < 2 * g.n_modes:
        v.append(Violation("grid.n_phys", f"must be 0 or >= 2 * n_modes, got {g.n_phys}"))

    check_positive(cfg.flow.nu, "flow.nu", v)
    if not cfg.flow.beta >= 0:
        v.append(Violation("flow.beta", f"must be non-negative, got {cfg.flow.beta}"))
    check_positive(cfg.flow.dt_max, "flow.dt_max", v)
    check_positive(cfg.energy.alpha, "energy.alpha", v)

    k = cfg.kicks
    if not k.b0 >= 0:
        v.append(Violation("kicks.b0", f"must be non-negative, got {k.b0}"))
    if not k.decay >= 0:
        v.append(Violation("kicks.decay", f"must be non-negative, got {k.decay}"))
    if k.family not in DENSITY_FAMILIES:
        v.append(Violation("kicks.family", f"must be one of {DENSITY_FAMILIES}, got {k.family!r}"))
    check_positive(k.scale, "kicks.scale", v)
    if k.components not in ("complex", "real"):
        v.append(Violation("kicks.components", f"must be 'complex' or 'real', got {k.components!r}"))
    check_positive(k.lam, "kicks.lam", v)

    c = cfg.coupling
    check_positive(c.N, "coupling.N", v, integer=True)
    if isinstance(c.N, int) and isinstance(g.n_modes, int) and c.N >= g.n_modes:
        v.append(Violation("coupling.N", f"must be < n_modes={g.n_modes}, got {c.N}"))
    if not isinstance(c.N_prime, int) or not 1 <= c.N_prime <= c.N:
        v.append(Violation("coupling.N_prime", f"must satisfy 1 <= N_prime <= N={c.N}, got {c.N_prime!r}"))
    check_positive(c.M, "coupling.M", v)
    if not 0 < c.d <= 1:
        v.append(Violation("coupling.d", f"must lie in (0, 1], got {c.d}"))
    check_positive(c.window, "coupling.window", v, integer=True)
    check_positive(c.max_kicks, "coupling.max_kicks", v, integer=True)

    e = cfg.experiment
    check_positive(e.replicas, "experiment.replicas", v, integer=True)
    check_positive(e.horizon, "experiment.horizon", v)
    grid_t = list(e.time_grid)
    if not grid_t or any(not isinstance(t, (int, float)) for t in grid_t):
        v.append(Violation("experiment.time_grid", "must be a nonempty list of numbers"))
    elif any(b <= a for a, b in zip(grid_t, grid_t[1:])) or grid_t[0] < 0 or grid_t[-1] > e.horizon:
        v.append(Violation("experiment.time_grid", "must be increasing within [0, horizon]"))
    if not isinstance(e.seed, int) or isinstance(e.seed, bool) or e.seed < 0:
        v.append(Violation("experiment.seed", f"must be a non-negative integer, got {e.seed!r}"))
    unknown = [s for s in e.suites if s not in SUITES]
    if unknown or not e.suites:
        v.append(Violation("experiment.suites", f"must be a nonempty subset of {SUITES}, got {list(e.suites)}"))
    check_positive(e.workers, "experiment.workers", v, integer=True)
    check_range(e.failure_budget, 0.0, 1.0, "experiment.failure_budget", v)
    check_positive(e.flow_states, "experiment.flow_states", v, integer=True)
    if e.flow_states == 1 and not isinstance(e.flow_states, bool):
        v.append(Violation("experiment.flow_states", f"must be >= 2, got {e.flow_states}"))
    check_positive(e.held_out_states, "experiment.held_out_states", v, integer=True)

    if any(s in ("coupling", "all") for s in e.suites) and k.b0 == 0:
        v.append(Violation("kicks.b0", "coupling needs b_j != 0 for j <= N, got b0 = 0"))
    return v


__all__ = [
    "ENV_PREFIX",
    "SUITES",
    "GridConfig",
    "FlowConfig",
    "EnergyConfig",
    "KickConfig",
    "CouplingSettings",
    "ExperimentConfig",
    "RunConfig",
    "apply_env_overrides",
    "build_config",
    "parse_config",
    "validate",
]
