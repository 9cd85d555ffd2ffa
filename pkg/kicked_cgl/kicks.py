"""Random kicks at exponential times and the embedded chain.

The forced process is piecewise deterministic: between kicks the state follows
S_t, and at tau_k = t_1 + ... + t_k it jumps by

    eta_k = sum_j b_j xi_jk g_j,   g_j = alpha_j^{-1/2} e_j,

with i.i.d. coordinates xi_jk from a bounded-variation density that charges
every neighbourhood of zero. Sampled at kick times the process is the Markov
chain u_k = S_{t_k}(u_{k-1}) + eta_k.
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
from scipy import stats
from sklearn.linear_model import LinearRegression

from .errors import DivergenceError, ShapeError
from .flow import FlowParams, evolve
from .interfaces import NULL_HOOK, SimulationHook
from .spectral import Components, EnergyParams, Grid, SpectralField, energy
from .utils import require_samples

DENSITY_FAMILIES = ("uniform_symmetric", "triangular", "truncated_gaussian")
MIN_MOMENT_REPLICAS = 100


# ---------- RNG contract ----------

@dataclass
class ReplicaStreams:
    """Independent counter-based streams owned by one replica."""

    clock: np.random.Generator
    kicks: np.random.Generator
    coupling: np.random.Generator
    seed: int = 0
    replica: int = 0


def make_streams(seed: int, replica: int = 0) -> ReplicaStreams:
    """Philox streams for (clock, kicks, coupling) of replica ``replica``."""
    root = np.random.SeedSequence(seed, spawn_key=(replica,))
    clock_ss, kicks_ss, coupling_ss = root.spawn(3)
    return ReplicaStreams(
        clock=np.random.Generator(np.random.Philox(clock_ss)),
        kicks=np.random.Generator(np.random.Philox(kicks_ss)),
        coupling=np.random.Generator(np.random.Philox(coupling_ss)),
        seed=seed,
        replica=replica,
    )


# ---------- laws ----------

@dataclass(frozen=True, eq=False)
class KickSpec:
    """Law of the kicks eta_k.

    Args:
        b: Non-negative coefficients b_j, one per retained mode
        family: Coordinate density (uniform_symmetric, triangular,
            truncated_gaussian)
        scale: Half-width of the coordinate support (sigma for the Gaussian)
        truncation: Gaussian truncation in units of ``scale``
        components: ``complex`` kicks real and imaginary parts independently;
            ``real`` kicks real parts only
    """

    b: np.ndarray
    family: str = "uniform_symmetric"
    scale: float = 1.0
    truncation: float = 3.0
    components: Components = "complex"

    def __post_init__(self) -> None:
        b = np.array(self.b, dtype=float, copy=True)
        if b.ndim != 1:
            raise ShapeError(f"b must be one-dimensional, got shape {b.shape}")
        if not np.all(np.isfinite(b)) or np.any(b < 0):
            raise ValueError("b_j must be finite and non-negative")
        if self.family not in DENSITY_FAMILIES:
            raise ValueError(f"unknown density family {self.family!r}; expected one of {DENSITY_FAMILIES}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.components not in ("complex", "real"):
            raise ValueError(f"components must be 'complex' or 'real', got {self.components!r}")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @classmethod
    def power_law(
        cls,
        n_modes: int,
        b0: float = 0.5,
        decay: float = 1.0,
        family: str = "uniform_symmetric",
        scale: float = 1.0,
        components: Components = "complex",
        n_active: int | None = None,
    ) -> KickSpec:
        """b_j = b0 * j^{-decay} for j <= n_active, zero beyond."""
        j = np.arange(1, n_modes + 1, dtype=float)
        b = b0 * j ** (-decay)
        if n_active is not None:
            b[n_active:] = 0.0
        return cls(b=b, family=family, scale=scale, components=components)

    @cached_property
    def law(self) -> Any:
        """Frozen scipy distribution of one coordinate xi."""
        if self.family == "uniform_symmetric":
            return stats.uniform(loc=-self.scale, scale=2.0 * self.scale)
        if self.family == "triangular":
            return stats.triang(c=0.5, loc=-self.scale, scale=2.0 * self.scale)
        return stats.truncnorm(-self.truncation, self.truncation, loc=0.0, scale=self.scale)

    @property
    def n_active(self) -> int:
        """Largest j with b_j != 0 (0 when the noise vanishes)."""
        nz = np.nonzero(self.b)[0]
        return int(nz[-1] + 1) if nz.size else 0

    @property
    def total_variance(self) -> float:
        """B = sum b_j^2."""
        return float(np.sum(self.b**2))

    def coordinate_dim(self, n: int) -> int:
        return 2 * n if self.components == "complex" else n

    def coordinate_scales(self, n: int) -> np.ndarray:
        """b_j for each real coordinate of the first n modes."""
        if self.components == "complex":
            return np.concatenate([self.b[:n], self.b[:n]])
        return np.array(self.b[:n])

    def sample_xi(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.law.rvs(size=size, random_state=rng), dtype=float)

    def sample_low_coordinates(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """b_j xi_j for the coordinates of the first n modes."""
        return self.coordinate_scales(n) * self.sample_xi(self.coordinate_dim(n), rng)

    def log_coordinate_density(self, y: np.ndarray, n: int) -> np.ndarray:
        """sum_j log q_j(y_j) with q_j(y) = b_j^{-1} p(y / b_j).

        Accepts a single point (shape (dim,)) or a batch (shape (..., dim)).
        """
        scales = self.coordinate_scales(n)
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore"):
            logs = self.law.logpdf(y / scales) - np.log(scales)
        return np.sum(logs, axis=-1)


@dataclass(frozen=True)
class ClockSpec:
    """Exponential waiting times with rate lam."""

    lam: float = 1.0

    def __post_init__(self) -> None:
        if not self.lam > 0 or not math.isfinite(self.lam):
            raise ValueError(f"lam must be positive, got {self.lam}")


def sample_waiting_time(clock: ClockSpec, rng: np.random.Generator) -> float:
    """t ~ Exp(lam), strictly positive."""
    t = 0.0
    while t <= 0.0:
        t = float(rng.exponential(1.0 / clock.lam))
    return t


def kick_from_coordinates(coords: np.ndarray, spec: KickSpec, grid: Grid, lo: int, hi: int) -> np.ndarray:
    """Coefficients on modes [lo, hi) (0-based) from real H-coordinates."""
    count = hi - lo
    inv_sqrt = 1.0 / np.sqrt(grid.eigenvalues[lo:hi])
    out = np.zeros(grid.n_modes, dtype=np.complex128)
    if spec.components == "complex":
        out[lo:hi] = (coords[:count] + 1j * coords[count:]) * inv_sqrt
    else:
        out[lo:hi] = coords * inv_sqrt
    return out


def sample_kick_modes(spec: KickSpec, grid: Grid, rng: np.random.Generator, lo: int = 0) -> np.ndarray:
    """Kick coefficients on modes lo+1..n_modes (modes <= lo left at zero)."""
    hi = grid.n_modes
    scales = spec.b[lo:hi]
    xi = spec.sample_xi(spec.coordinate_dim(hi - lo), rng)
    if spec.components == "complex":
        coords = np.concatenate([scales, scales]) * xi
    else:
        coords = scales * xi
    return kick_from_coordinates(coords, spec, grid, lo, hi)


def sample_kick(spec: KickSpec, grid: Grid, rng: np.random.Generator) -> SpectralField:
    """eta = sum_j b_j xi_j g_j; ||eta||_1^2 = sum_j b_j^2 |xi_j|^2."""
    if spec.b.shape[0] != grid.n_modes:
        raise ShapeError(f"b has {spec.b.shape[0]} entries, grid has {grid.n_modes} modes")
    return SpectralField(sample_kick_modes(spec, grid, rng), grid)


# ---------- chain and trajectories ----------

def embedded_step(
    u: SpectralField,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    streams: ReplicaStreams,
    waiting_time: float | None = None,
    hook: SimulationHook = NULL_HOOK,
) -> tuple[SpectralField, float, SpectralField]:
    """u_next = S_{t_k}(u) + eta_k with fresh t_k and eta_k.

    Returns:
        (u_next, t_k, eta_k)
    """
    start = time.perf_counter()
    t = sample_waiting_time(clock, streams.clock) if waiting_time is None else waiting_time
    eta = sample_kick(spec, u.grid, streams.kicks)
    u_next = evolve(u, t, params) + eta
    hook.on_kick(t, eta.norm_h1(), (time.perf_counter() - start) * 1000.0)
    return u_next, t, eta


@dataclass
class ChainRecord:
    """Embedded chain u_0, u_1, ..., with the waiting times and kicks used."""

    states: list[SpectralField]
    waiting_times: list[float] = field(default_factory=list)
    kicks: list[SpectralField] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)

    def energies(self, energy_params: EnergyParams) -> np.ndarray:
        return np.array([energy(s, energy_params) for s in self.states])

    def norms_h1(self) -> np.ndarray:
        return np.array([s.norm_h1() for s in self.states])


def run_chain(
    u0: SpectralField,
    n_steps: int,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    streams: ReplicaStreams,
    hook: SimulationHook = NULL_HOOK,
) -> ChainRecord:
    """n_steps of the embedded chain started at u0."""
    record = ChainRecord(states=[u0])
    state = u0
    for _ in range(n_steps):
        state, t, eta = embedded_step(state, spec, clock, params, streams, hook=hook)
        record.states.append(state)
        record.waiting_times.append(t)
        record.kicks.append(eta)
    return record


@dataclass
class TrajectoryLog:
    """Piecewise trajectory of the kicked flow on [0, horizon].

    ``states[0]`` is u_0 at tau_0 = 0 and ``states[k]`` the post-kick state at
    ``kick_times[k-1]``.
    """

    horizon: float
    kick_times: list[float] = field(default_factory=list)
    waiting_times: list[float] = field(default_factory=list)
    states: list[SpectralField] = field(default_factory=list)
    sample_times: list[float] = field(default_factory=list)
    samples: list[SpectralField] = field(default_factory=list)
    seed: int = 0
    replica: int = 0
    status: str = "ok"
    failure: str | None = None

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    def count_kicks(self, t: float) -> int:
        """N_t = max{k : tau_k <= t}."""
        return int(np.searchsorted(np.asarray(self.kick_times), t, side="right"))

    def state_at(self, t: float, params: FlowParams) -> SpectralField:
        """u_t = S_{t - tau_{N_t}}(u_{tau_{N_t}}), rebuilt on demand."""
        k = self.count_kicks(t)
        tau = self.kick_times[k - 1] if k > 0 else 0.0
        return evolve(self.states[k], t - tau, params)

    def events(self) -> dict[str, Any]:
        """JSON-ready event record (states are summarised, not stored)."""
        return {
            "seed": self.seed,
            "replica": self.replica,
            "horizon": self.horizon,
            "status": self.status,
            "failure": self.failure,
            "kick_times": list(self.kick_times),
            "waiting_times": list(self.waiting_times),
            "post_kick_norm_h1": [s.norm_h1() for s in self.states],
        }

    def sample_rows(self, energy_params: EnergyParams, n_coeffs: int = 4) -> list[list[float]]:
        """Dense-sample rows: t, norm_h1, H, Re c_1, Im c_1, ..., Re c_J, Im c_J."""
        rows = []
        for t, state in zip(self.sample_times, self.samples):
            row = [t, state.norm_h1(), energy(state, energy_params)]
            for c in state.coeffs[:n_coeffs]:
                row.extend([float(c.real), float(c.imag)])
            rows.append(row)
        return rows


def simulate(
    u0: SpectralField,
    horizon: float,
    sample_times: Sequence[float],
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    streams: ReplicaStreams,
    hook: SimulationHook = NULL_HOOK,
) -> TrajectoryLog:
    """Build the kicked trajectory on [0, horizon] with dense samples.

    A divergence aborts the run and returns the partial log flagged
    ``status="diverged"``.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    pending = sorted(float(s) for s in sample_times)
    if pending and (pending[0] < 0 or pending[-1] > horizon):
        raise ValueError("sample times must lie in [0, horizon]")
    log = TrajectoryLog(horizon=horizon, states=[u0], seed=streams.seed, replica=streams.replica)
    state = u0
    tau = 0.0
    try:
        while True:
            wait = sample_waiting_time(clock, streams.clock)
            next_tau = tau + wait
            while pending and pending[0] < next_tau:
                s = pending.pop(0)
                log.sample_times.append(s)
                log.samples.append(evolve(state, s - tau, params))
            if next_tau > horizon:
                break
            state, _, _ = embedded_step(state, spec, clock, params, streams, waiting_time=wait, hook=hook)
            tau = next_tau
            log.kick_times.append(tau)
            log.waiting_times.append(wait)
            log.states.append(state)
    except DivergenceError as exc:
        log.status = "diverged"
        log.failure = str(exc)
        hook.on_divergence(tau + exc.time, exc.norm)
    return log


# ---------- Poisson clock ----------

def count_kicks(t: float, clock: ClockSpec, rng: np.random.Generator) -> int:
    """N_t for a fresh clock, without touching the PDE."""
    total = 0.0
    n = 0
    while True:
        total += sample_waiting_time(clock, rng)
        if total > t:
            return n
        n += 1


def poisson_exponential_moment(
    clock: ClockSpec,
    t: float,
    replicas: int,
    rng: np.random.Generator,
) -> tuple[float, float, float]:
    """Empirical E exp(-N_t), its standard error, and exp(-(lam - lam/e) t)."""
    values = np.exp(-np.array([count_kicks(t, clock, rng) for _ in range(replicas)], dtype=float))
    exact = math.exp(-(clock.lam - clock.lam / math.e) * t)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(replicas)), exact


# ---------- moments and recurrence ----------

@dataclass
class MomentReport:
    """Per-step empirical E H(u_k)^p and the fitted bound gamma^k H(u_0)^p + C."""

    p: float
    means: np.ndarray
    running_max: np.ndarray
    gamma: float
    constant: float


def moment_estimate(
    chains: Sequence[ChainRecord],
    p: float,
    energy_params: EnergyParams,
    min_replicas: int = MIN_MOMENT_REPLICAS,
) -> MomentReport:
    """sup_k E H(u_k)^p over an ensemble of equal-length chains."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    require_samples(len(chains), min_replicas, "replicas")
    lengths = {len(c) for c in chains}
    if len(lengths) != 1:
        raise ShapeError(f"chains must have equal length, got {sorted(lengths)}")
    table = np.array([c.energies(energy_params) ** p for c in chains])
    means = table.mean(axis=0)
    gamma = _fit_gamma(means)
    k = np.arange(means.size)
    constant = float(max(0.0, np.max(means - gamma**k * means[0])))
    return MomentReport(p, means, np.maximum.accumulate(means), gamma, constant)


def _fit_gamma(means: np.ndarray) -> float:
    """Geometric rate of |m_k - plateau| over the first half of the record."""
    n = means.size
    if n < 4:
        return 0.0
    plateau = float(np.mean(means[-max(1, n // 4):]))
    residual = np.abs(means - plateau)[: max(2, n // 2)]
    scale = residual.max()
    if scale == 0:
        return 0.0
    k = np.nonzero(residual > 1e-12 * scale)[0]
    if k.size < 2:
        return 0.0
    model = LinearRegression().fit(k.reshape(-1, 1), np.log(residual[k]))
    return float(min(math.exp(model.coef_[0]), 1.0 + 1e-12))


def hitting_time_tau_r(chain: ChainRecord, radius: float) -> int | None:
    """First k with ||u_k||_1 <= R, or None when the chain ends first."""
    if not radius > 0:
        raise ValueError(f"R must be positive, got {radius}")
    for k, state in enumerate(chain.states):
        if state.norm_h1() <= radius:
            return k
    return None


def kick_energy_moment(
    spec: KickSpec,
    grid: Grid,
    p: float,
    energy_params: EnergyParams,
    rng: np.random.Generator,
    n: int = 10_000,
) -> float:
    """Monte Carlo E H(eta)^p."""
    return float(np.mean([energy(sample_kick(spec, grid, rng), energy_params) ** p for _ in range(n)]))


def energy_recursion_fit(
    chain: ChainRecord,
    decay_rate: float,
    eps: float,
    energy_params: EnergyParams,
) -> float:
    """Smallest C_eps with H(u_k) <= (1+eps) e^{-a t_k} H(u_{k-1}) + C_eps H(eta_k)."""
    energies = chain.energies(energy_params)
    worst = 0.0
    for k in range(1, len(chain)):
        excess = energies[k] - (1.0 + eps) * math.exp(-decay_rate * chain.waiting_times[k - 1]) * energies[k - 1]
        if excess <= 0:
            continue
        kick_energy = energy(chain.kicks[k - 1], energy_params)
        worst = max(worst, excess / kick_energy if kick_energy > 0 else math.inf)
    return worst


def energy_martingales(
    chain: ChainRecord,
    decay_rate: float,
    lam: float,
    energy_params: EnergyParams,
    kick_moment: float,
) -> tuple[np.ndarray, np.ndarray]:
    """The centred sums controlling the Cesàro average of H(u_k)^3.

    M'_k = sum_{i<=k} (exp(-3 a t_i) - lam / (lam + 3a)) H(u_{i-1})^3 and
    M''_k = sum_{i<=k} (H(eta_i)^3 - m) with m = E H(eta)^3.
    """
    energies = chain.energies(energy_params)
    t = np.asarray(chain.waiting_times)
    mean_factor = lam / (lam + 3.0 * decay_rate)
    first = np.cumsum((np.exp(-3.0 * decay_rate * t) - mean_factor) * energies[:-1] ** 3)
    kicks = np.array([energy(eta, energy_params) ** 3 for eta in chain.kicks])
    second = np.cumsum(kicks - kick_moment)
    return first, second


def disjoint_increment_correlation(
    chains: Sequence[ChainRecord],
    split: int,
    functional: Callable[[SpectralField], float] | None = None,
) -> tuple[float, float]:
    """Correlation across replicas of a kick functional summed over [0, split) and [split, n).

    Returns:
        (correlation, standard error 1/sqrt(n_replicas))
    """
    f = functional or (lambda eta: min(1.0, eta.norm_h1()))
    left = np.array([sum(f(e) for e in c.kicks[:split]) for c in chains])
    right = np.array([sum(f(e) for e in c.kicks[split:]) for c in chains])
    require_samples(len(chains), 3, "replicas")
    corr = float(np.corrcoef(left, right)[0, 1])
    return corr, 1.0 / math.sqrt(len(chains))


__all__ = [
    "DENSITY_FAMILIES",
    "ReplicaStreams",
    "make_streams",
    "KickSpec",
    "ClockSpec",
    "sample_waiting_time",
    "sample_kick",
    "sample_kick_modes",
    "kick_from_coordinates",
    "embedded_step",
    "ChainRecord",
    "run_chain",
    "TrajectoryLog",
    "simulate",
    "count_kicks",
    "poisson_exponential_moment",
    "MomentReport",
    "moment_estimate",
    "hitting_time_tau_r",
    "kick_energy_moment",
    "energy_recursion_fit",
    "energy_martingales",
    "disjoint_increment_correlation",
]
