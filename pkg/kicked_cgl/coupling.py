"""Coupling of two kicked trajectories through their low modes.

Both components share the waiting time t_k and the high-mode part Q_N eta_k
of the kick. The low-mode kicks are drawn from a maximal coupling of the two
shifted densities p(. - P_N S_t u) and p(. - P_N S_t u'), so each component is
on its own an exact copy of the embedded chain. Once the low modes agree the
difference lives in Q_N H and is squeezed by the flow; the stopping times
T1, T2, T3 and the random integer ell record when that regime starts and
whether it holds.
"""

from __future__ import annotations

import math
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from sklearn.linear_model import LinearRegression

from .errors import (
    CouplingConfigurationError,
    ModeError,
    ModeIndexError,
    NumericalDegeneracyError,
    ProbeInvalidError,
)
from .flow import FlowParams, evolve, fit_lipschitz_envelope
from .interfaces import NULL_HOOK, SimulationHook
from .kicks import (
    ChainRecord,
    ClockSpec,
    KickSpec,
    ReplicaStreams,
    energy_martingales,
    make_streams,
    sample_kick_modes,
    sample_waiting_time,
)
from .spectral import EnergyParams, Grid, SpectralField, energy, low_coefficients, project_high
from .utils import bootstrap_ci, cesaro_average, require_samples

MAX_REJECTIONS = 1_000_000
QUADRATURE_MAX_DIM = 3
QUADRATURE_POINTS = {1: 20_000, 2: 600, 3: 120}


@dataclass(frozen=True)
class CouplingConfig:
    """Cutoffs and thresholds of the coupling construction.

    Args:
        N: Low-mode cutoff (modes coupled by the maximal coupling)
        N_prime: Squeezing index, 1 <= N_prime <= N
        M: Threshold of the Cesàro conditions T1 and T2
        d: Radius of the small ball B_d
        window: Confirmation window (kicks) before ell is declared
        max_kicks: Hard cap on coupled steps per run
    """

    N: int = 8
    N_prime: int = 8
    M: float = 2.0
    d: float = 0.5
    window: int = 200
    max_kicks: int = 500

    def __post_init__(self) -> None:
        if not 1 <= self.N_prime <= self.N:
            raise ValueError(f"need 1 <= N_prime <= N, got N_prime={self.N_prime}, N={self.N}")
        if not self.M > 0:
            raise ValueError(f"M must be positive, got {self.M}")
        if not 0 < self.d <= 1:
            raise ValueError(f"d must lie in (0, 1], got {self.d}")
        if self.window < 1 or self.max_kicks < 1:
            raise ValueError("window and max_kicks must be >= 1")

    def check_grid(self, grid: Grid) -> None:
        if self.N >= grid.n_modes:
            raise ModeIndexError(f"N must be < n_modes={grid.n_modes}, got {self.N}")


def check_low_noise(spec: KickSpec, n: int) -> None:
    """Raise unless b_j != 0 for every j <= n."""
    if spec.b.shape[0] < n or np.any(spec.b[:n] == 0):
        zero = [j + 1 for j in range(min(n, spec.b.shape[0])) if spec.b[j] == 0]
        raise CouplingConfigurationError(f"coupling needs b_j != 0 for j <= {n}; zero at j={zero or 'missing'}")


def _cutoff(mean: np.ndarray, spec: KickSpec) -> int:
    dim = np.asarray(mean).shape[-1]
    return dim // 2 if spec.components == "complex" else dim


# ---------- maximal coupling ----------

def log_shifted_density(x: np.ndarray, mean: np.ndarray, spec: KickSpec) -> np.ndarray:
    """log prod_j q_j(x_j - mean_j) (-inf outside the support)."""
    n = _cutoff(mean, spec)
    check_low_noise(spec, n)
    return spec.log_coordinate_density(np.asarray(x, dtype=float) - np.asarray(mean, dtype=float), n)


def shifted_density(x: np.ndarray, mean: np.ndarray, spec: KickSpec) -> float | np.ndarray:
    """prod_j q_j(x_j - mean_j) with q_j(y) = b_j^{-1} p(y / b_j)."""
    out = np.exp(log_shifted_density(x, mean, spec))
    return float(out) if np.ndim(out) == 0 else out


def maximal_coupling_sample(
    mean_p: np.ndarray,
    mean_q: np.ndarray,
    spec: KickSpec,
    rng: np.random.Generator,
    max_iter: int = MAX_REJECTIONS,
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Draw (v, v') with v ~ p(. - mean_p), v' ~ p(. - mean_q) and P(v != v') = TV.

    X ~ p is kept for both components with probability min(1, q(X)/p(X));
    otherwise v' is drawn from the residual of q by repeated proposals
    Y ~ q accepted with probability (1 - p(Y)/q(Y))^+.
    """
    mean_p = np.asarray(mean_p, dtype=float)
    mean_q = np.asarray(mean_q, dtype=float)
    if mean_p.shape != mean_q.shape:
        raise ValueError(f"means differ in shape: {mean_p.shape} vs {mean_q.shape}")
    if not (np.all(np.isfinite(mean_p)) and np.all(np.isfinite(mean_q))):
        raise ValueError("means must be finite")
    n = _cutoff(mean_p, spec)
    check_low_noise(spec, n)

    x = mean_p + spec.sample_low_coordinates(n, rng)
    if np.array_equal(mean_p, mean_q):
        return x, x.copy(), True
    log_u = math.log1p(-rng.random())
    if log_u + log_shifted_density(x, mean_p, spec) <= log_shifted_density(x, mean_q, spec):
        return x, x.copy(), True
    for _ in range(max_iter):
        y = mean_q + spec.sample_low_coordinates(n, rng)
        log_v = math.log1p(-rng.random())
        if log_v + log_shifted_density(y, mean_q, spec) > log_shifted_density(y, mean_p, spec):
            return x, y, False
    raise NumericalDegeneracyError(f"residual sampling did not accept within {max_iter} proposals")


@dataclass(frozen=True)
class TVEstimate:
    """Total-variation distance with an interval (degenerate for exact modes)."""

    value: float
    low: float
    high: float
    mode: str

    def __float__(self) -> float:
        return self.value


def tv_oracle(
    mean_p: np.ndarray,
    mean_q: np.ndarray,
    spec: KickSpec,
    mode: str = "auto",
    n_samples: int = 100_000,
    rng: np.random.Generator | None = None,
    points: int | None = None,
) -> TVEstimate:
    """Independent TV = 1 - int min(p, q) between two shifted kick laws.

    Modes:
        exact: uniform family only, product of one-dimensional overlaps
        quadrature: midpoint tensor grid, coordinate dimension <= 3
        mc: E_p (1 - q/p)^+ with a 95% interval
        auto: exact when available, else quadrature, else mc
    """
    mean_p = np.asarray(mean_p, dtype=float)
    mean_q = np.asarray(mean_q, dtype=float)
    n = _cutoff(mean_p, spec)
    check_low_noise(spec, n)
    dim = mean_p.shape[0]
    if mode == "auto":
        if spec.family == "uniform_symmetric":
            mode = "exact"
        elif dim <= QUADRATURE_MAX_DIM:
            mode = "quadrature"
        else:
            mode = "mc"

    if mode == "exact":
        if spec.family != "uniform_symmetric":
            raise ModeError(f"exact TV is only available for the uniform family, got {spec.family}")
        half = spec.scale * spec.coordinate_scales(n)
        overlap = np.clip(1.0 - np.abs(mean_p - mean_q) / (2.0 * half), 0.0, 1.0)
        tv = float(1.0 - np.prod(overlap))
        return TVEstimate(tv, tv, tv, mode)

    if mode == "quadrature":
        if dim > QUADRATURE_MAX_DIM:
            raise ModeError(f"quadrature needs coordinate dimension <= {QUADRATURE_MAX_DIM}, got {dim}")
        m = points or QUADRATURE_POINTS[dim]
        reach = spec.scale * spec.coordinate_scales(n)
        if spec.family == "truncated_gaussian":
            reach = reach * spec.truncation
        axes = []
        widths = []
        for lo_mean, hi_mean, r in zip(np.minimum(mean_p, mean_q), np.maximum(mean_p, mean_q), reach):
            edges = np.linspace(lo_mean - r, hi_mean + r, m + 1)
            axes.append(0.5 * (edges[1:] + edges[:-1]))
            widths.append(edges[1] - edges[0])
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        p = np.exp(log_shifted_density(mesh, mean_p, spec))
        q = np.exp(log_shifted_density(mesh, mean_q, spec))
        overlap = float(np.sum(np.minimum(p, q)) * np.prod(widths))
        tv = float(np.clip(1.0 - overlap, 0.0, 1.0))
        return TVEstimate(tv, tv, tv, mode)

    if mode == "mc":
        rng = rng or np.random.Generator(np.random.Philox(0))
        xs = mean_p + spec.coordinate_scales(n) * spec.sample_xi(n_samples * dim, rng).reshape(n_samples, dim)
        ratio = np.exp(log_shifted_density(xs, mean_q, spec) - log_shifted_density(xs, mean_p, spec))
        vals = np.maximum(0.0, 1.0 - ratio)
        mean = float(vals.mean())
        half_width = 1.96 * float(vals.std(ddof=1)) / math.sqrt(n_samples)
        return TVEstimate(mean, mean - half_width, mean + half_width, mode)

    raise ModeError(f"unknown TV mode {mode!r}")


# ---------- coupled dynamics ----------

@dataclass(frozen=True, eq=False)
class CoupledPair:
    """State (u_k, u'_k) of a coupled run with the step that produced it."""

    u: SpectralField
    u_prime: SpectralField
    k: int = 0
    waiting_time: float | None = None
    zeta: SpectralField | None = None
    zeta_prime: SpectralField | None = None
    coupled: bool = True
    flow_distance: float = 0.0

    def matched(self, n: int) -> bool:
        """P_N u = P_N u' bit for bit."""
        return bool(np.array_equal(self.u.coeffs[:n], self.u_prime.coeffs[:n]))

    def high_kicks_shared(self, n: int) -> bool:
        if self.zeta is None or self.zeta_prime is None:
            return True
        return bool(np.array_equal(self.zeta.coeffs[n:], self.zeta_prime.coeffs[n:]))

    def distance_h1(self) -> float:
        return (self.u - self.u_prime).norm_h1()

    def in_ball(self, d: float) -> bool:
        return max(self.u.norm_h1(), self.u_prime.norm_h1()) <= d

    def event(self, energy_params: EnergyParams) -> dict[str, Any]:
        return {
            "k": self.k,
            "t_k": self.waiting_time,
            "coupled": self.coupled,
            "distance_h1": self.distance_h1(),
            "H_u": energy(self.u, energy_params),
            "H_u_prime": energy(self.u_prime, energy_params),
        }


def coupled_step(
    pair: CoupledPair,
    config: CouplingConfig,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    streams: ReplicaStreams,
    hook: SimulationHook = NULL_HOOK,
) -> CoupledPair:
    """One step of the pair with a shared t_k and shared high-mode kick."""
    start = time.perf_counter()
    grid = pair.u.grid
    n = config.N
    t = sample_waiting_time(clock, streams.clock)
    su = evolve(pair.u, t, params)
    su_prime = evolve(pair.u_prime, t, params)

    comps = spec.components
    v, v_prime, coupled = maximal_coupling_sample(
        su.low_coordinates(n, comps), su_prime.low_coordinates(n, comps), spec, streams.coupling
    )
    high = sample_kick_modes(spec, grid, streams.kicks, lo=n)

    def advance(s: SpectralField, coords: np.ndarray) -> tuple[SpectralField, SpectralField]:
        low = low_coefficients(coords, n, grid, comps, s.coeffs[:n])
        nxt = np.array(s.coeffs)
        nxt[:n] = low
        nxt[n:] = s.coeffs[n:] + high[n:]
        kick = np.array(high)
        kick[:n] = low - s.coeffs[:n]
        return SpectralField(nxt, grid), SpectralField(kick, grid)

    u_next, zeta = advance(su, v)
    u_prime_next, zeta_prime = advance(su_prime, v_prime)
    result = CoupledPair(
        u=u_next,
        u_prime=u_prime_next,
        k=pair.k + 1,
        waiting_time=t,
        zeta=zeta,
        zeta_prime=zeta_prime,
        coupled=coupled,
        flow_distance=(su - su_prime).norm_h1(),
    )
    hook.on_coupled_step(coupled, result.distance_h1(), (time.perf_counter() - start) * 1000.0)
    return result


def run_coupled(
    u: SpectralField,
    u_prime: SpectralField,
    n_steps: int,
    config: CouplingConfig,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    streams: ReplicaStreams,
    hook: SimulationHook = NULL_HOOK,
) -> list[CoupledPair]:
    config.check_grid(u.grid)
    traj = [CoupledPair(u, u_prime)]
    for _ in range(n_steps):
        traj.append(coupled_step(traj[-1], config, spec, clock, params, streams, hook))
    return traj


# ---------- squeezing ----------

@dataclass
class ContractionReport:
    """Distances and per-step factors on a matched stretch (l, k]."""

    n_prime: int
    distances: np.ndarray
    identity_residual: float
    factors: np.ndarray
    predictors: np.ndarray
    fitted_c: float

    @property
    def mean_log_contraction(self) -> float:
        finite = self.factors[np.isfinite(self.factors) & (self.factors > 0)]
        if finite.size == 0:
            return -math.inf
        return float(np.mean(np.log(finite)))


def foias_prodi_probe(
    trajectory: Sequence[CoupledPair],
    l: int,
    k: int,
    config: CouplingConfig,
    constant: float | None = None,
) -> ContractionReport:
    """Measure ||u_i - u'_i||_1 on (l, k] while the low modes stay matched.

    Predictor per step: C alpha_{N'+1}^{-1/2} t_i^{-1/2} exp(C s_i) with
    s_i = ||u_{i-1}||_1^6 + ||u'_{i-1}||_1^6. C is ``constant`` when given
    (fitted on other pairs), else the smallest constant covering every
    measured factor of this stretch.
    """
    if not 0 <= l < k < len(trajectory):
        raise ValueError(f"need 0 <= l < k < {len(trajectory)}, got l={l}, k={k}")
    n = config.N
    for pair in trajectory[l + 1 : k + 1]:
        if not pair.matched(n) or not pair.high_kicks_shared(n):
            raise ProbeInvalidError(f"low modes not matched or high kicks not shared at step {pair.k}")

    stretch = trajectory[l : k + 1]
    distances = np.array([p.distance_h1() for p in stretch])
    residual = 0.0
    for p in stretch[1:]:
        diff = p.u - p.u_prime
        residual = max(residual, abs(diff.norm_h1() - project_high(diff, n).norm_h1()))

    grid = stretch[0].u.grid
    alpha = grid.eigenvalues[config.N_prime] if config.N_prime < grid.n_modes else grid.eigenvalues[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        factors = distances[1:] / distances[:-1]
    t = np.array([p.waiting_time for p in stretch[1:]], dtype=float)
    base = 1.0 / np.sqrt(alpha * t)
    s = np.array([p.u.norm_h1() ** 6 + p.u_prime.norm_h1() ** 6 for p in stretch[:-1]])
    if constant is not None:
        fitted_c = constant
    else:
        usable = np.isfinite(factors)
        fitted_c = fit_lipschitz_envelope(factors[usable] / base[usable], s[usable]) if usable.any() else 0.0
    predictors = fitted_c * base * np.exp(fitted_c * s)
    return ContractionReport(config.N_prime, distances, residual, factors, predictors, fitted_c)


def matched_prefix(trajectory: Sequence[CoupledPair], n: int) -> int:
    """Largest k such that every step in (0, k] keeps the low modes matched."""
    k = 0
    for pair in trajectory[1:]:
        if not pair.matched(n):
            break
        k = pair.k
    return k


@dataclass
class SqueezingSweep:
    values: list[int]
    mean_log_contraction: dict[int, float]

    def per_step_contraction(self, n_prime: int) -> float:
        return math.exp(self.mean_log_contraction[n_prime])


def squeezing_sweep(
    u: SpectralField,
    perturbation: SpectralField,
    n_prime_values: Sequence[int],
    n_steps: int,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    seed: int,
    base: CouplingConfig | None = None,
) -> SqueezingSweep:
    """Mean log-contraction per N', with N = N' and the same seed for every value.

    The second component starts at u + Q_N(perturbation), so the pair begins
    with matched low modes.
    """
    base = base or CouplingConfig()
    out: dict[int, float] = {}
    for value in n_prime_values:
        config = CouplingConfig(N=value, N_prime=value, M=base.M, d=base.d, window=base.window, max_kicks=base.max_kicks)
        u_prime = u + project_high(perturbation, value)
        traj = run_coupled(u, u_prime, n_steps, config, spec, clock, params, make_streams(seed))
        k = matched_prefix(traj, value)
        if k < 1:
            out[value] = math.nan
            continue
        out[value] = foias_prodi_probe(traj, 0, k, config).mean_log_contraction
    return SqueezingSweep(list(n_prime_values), out)


def select_n_prime(sweep: SqueezingSweep, threshold: float = math.exp(-1.0)) -> int | None:
    """Smallest N' whose measured per-step contraction is below ``threshold``."""
    for value in sorted(sweep.values):
        rate = sweep.mean_log_contraction.get(value, math.nan)
        if math.isfinite(rate) and math.exp(rate) < threshold:
            return value
    return None


# ---------- stopping times ----------

@dataclass
class StoppingRecord:
    """Incremental T1, T2, T3 for the cycle started at ``start``.

    T1 fires when <||u_i||_1^6 + ||u'_i||_1^6> over [start, k] exceeds M,
    T2 when (1/2)|<log t_i>| over (start, k] exceeds M and T3 at the first
    k > start with P_N u_k != P_N u'_k.
    """

    M: float
    start: int = 0
    last: int = -1
    t1: int | None = None
    t2: int | None = None
    t3: int | None = None
    rho: list[int] = field(default_factory=list)
    ell: int | None = None
    unresolved: bool = False
    cycles: int = 0
    _sum_energy: float = 0.0
    _count_energy: int = 0
    _sum_log_t: float = 0.0
    _count_t: int = 0

    @property
    def sigma(self) -> int | None:
        fired = [t for t in (self.t1, self.t2, self.t3) if t is not None]
        return min(fired) if fired else None

    def begin_cycle(self, k: int) -> None:
        """Register a hit rho_i = k and reset the Cesàro sums."""
        if self.rho and k <= self.rho[-1]:
            raise ValueError(f"hitting times must increase, got {k} after {self.rho[-1]}")
        self.rho.append(k)
        self.cycles += 1
        self.start = k
        self.last = k - 1
        self.t1 = self.t2 = self.t3 = None
        self._sum_energy = 0.0
        self._count_energy = 0
        self._sum_log_t = 0.0
        self._count_t = 0

    def update(self, pair: CoupledPair, n: int) -> None:
        if pair.k <= self.last:
            return
        self.last = pair.k
        self._sum_energy += pair.u.norm_h1() ** 6 + pair.u_prime.norm_h1() ** 6
        self._count_energy += 1
        if self.t1 is None and self._sum_energy / self._count_energy > self.M:
            self.t1 = pair.k
        if pair.k == self.start:
            return
        if pair.waiting_time is not None:
            self._sum_log_t += math.log(pair.waiting_time)
            self._count_t += 1
            if self.t2 is None and 0.5 * abs(self._sum_log_t) / self._count_t > self.M:
                self.t2 = pair.k
        if self.t3 is None and not pair.matched(n):
            self.t3 = pair.k

    def summary_row(self) -> dict[str, Any]:
        return {
            "ell": self.ell,
            "unresolved": self.unresolved,
            "cycles": self.cycles,
            "rho": " ".join(str(r) for r in self.rho),
            "t1": self.t1,
            "t2": self.t2,
            "t3": self.t3,
            "sigma": self.sigma,
        }


def stopping_update(record: StoppingRecord, history: Sequence[CoupledPair], config: CouplingConfig) -> StoppingRecord:
    """Feed the not-yet-seen tail of ``history`` into ``record``."""
    if not history:
        raise ValueError("history must be nonempty")
    for pair in history:
        if pair.k >= record.start:
            record.update(pair, config.N)
    return record


def run_sigma(
    u: SpectralField,
    u_prime: SpectralField,
    config: CouplingConfig,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    streams: ReplicaStreams,
) -> StoppingRecord:
    """One cycle from k = 0, stopped at sigma(M) or after max_kicks."""
    config.check_grid(u.grid)
    record = StoppingRecord(config.M)
    record.begin_cycle(0)
    pair = CoupledPair(u, u_prime)
    record.update(pair, config.N)
    while record.sigma is None and pair.k < config.max_kicks:
        pair = coupled_step(pair, config, spec, clock, params, streams)
        record.update(pair, config.N)
    return record


@dataclass
class EllResult:
    record: StoppingRecord
    trajectory: list[CoupledPair]
    window: int

    @property
    def ell(self) -> int | None:
        return self.record.ell

    @property
    def resolved(self) -> bool:
        return self.record.ell is not None

    def events(self, energy_params: EnergyParams) -> list[dict[str, Any]]:
        return [p.event(energy_params) for p in self.trajectory]

    def summary_row(self) -> dict[str, Any]:
        row = self.record.summary_row()
        row["window"] = self.window
        row["steps"] = self.trajectory[-1].k
        return row


def run_until_ell(
    u: SpectralField,
    u_prime: SpectralField,
    config: CouplingConfig,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    streams: ReplicaStreams,
    hook: SimulationHook = NULL_HOOK,
) -> EllResult:
    """Cycle between seeking B_d and monitoring coupling until ell is confirmed.

    A cycle starts at the first step rho_i with the pair in B_d. It is
    confirmed as ell = rho_i once ``window`` further steps pass with neither
    T1, T2 nor T3 firing. After a violation the search for the next hit
    resumes at the following step. Runs that reach ``max_kicks`` are returned
    unresolved.
    """
    config.check_grid(u.grid)
    check_low_noise(spec, config.N)
    record = StoppingRecord(config.M)
    pair = CoupledPair(u, u_prime)
    trajectory = [pair]
    monitoring = False
    while True:
        if monitoring:
            record.update(pair, config.N)
            if record.sigma is not None:
                monitoring = False
            elif pair.k - record.start >= config.window:
                record.ell = record.start
                break
        elif pair.in_ball(config.d):
            record.begin_cycle(pair.k)
            record.update(pair, config.N)
            monitoring = record.sigma is None
        if pair.k >= config.max_kicks:
            record.unresolved = True
            break
        pair = coupled_step(pair, config, spec, clock, params, streams, hook)
        trajectory.append(pair)
    return EllResult(record, trajectory, config.window)


@dataclass(frozen=True)
class EllSummary:
    runs: int
    resolved: int
    mean: float
    second_moment: float

    @property
    def censored_fraction(self) -> float:
        return 1.0 - self.resolved / self.runs if self.runs else 0.0


def summarize_ell(results: Sequence[EllResult]) -> EllSummary:
    """E ell and E ell^2 over the resolved runs."""
    values = np.array([r.ell for r in results if r.resolved], dtype=float)
    if values.size == 0:
        return EllSummary(len(results), 0, math.nan, math.nan)
    return EllSummary(len(results), int(values.size), float(values.mean()), float(np.mean(values**2)))


@dataclass(frozen=True)
class EllGrowth:
    """Affine fit of ell on the load 1 + H(u) + H(u') over a grid of starts.

    ``cells`` holds (load, mean ell, standard error, runs) per distinct load.
    ``envelope`` is the smallest C with E ell <= C * load on every cell.
    """

    intercept: float
    slope: float
    envelope: float
    cells: list[tuple[float, float, float, int]]
    held_out: list[float]
    affine: bool

    def rows(self) -> list[dict[str, float]]:
        return [{"load": c[0], "mean": c[1], "se": c[2], "runs": c[3]} for c in self.cells]


def fit_ell_growth(
    loads: Sequence[float],
    ells: Sequence[float],
    holdout: float = 1.0 / 3.0,
    n_se: float = 3.0,
) -> EllGrowth:
    """Fit E ell = intercept + slope * load on the lighter loads, test the heavier ones.

    The line is fitted on the runs of the lowest ``1 - holdout`` share of
    distinct loads. Growth counts as affine when the mean ell of every
    held-out load stays below the fitted line (slope floored at 0) plus
    ``n_se`` standard errors.
    """
    x = np.asarray(loads, dtype=float)
    y = np.asarray(ells, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"loads and ells must be matching 1-D arrays, got {x.shape} and {y.shape}")
    levels = np.unique(x)
    require_samples(int(levels.size), 3, "distinct loads")
    n_fit = levels.size - max(1, int(round(holdout * levels.size)))
    fit_mask = x <= levels[n_fit - 1]
    model = LinearRegression().fit(x[fit_mask].reshape(-1, 1), y[fit_mask])
    intercept, slope = float(model.intercept_), float(model.coef_[0])

    cells = []
    held_out = []
    affine = True
    for i, level in enumerate(levels):
        sample = y[x == level]
        se = float(sample.std(ddof=1) / math.sqrt(sample.size)) if sample.size > 1 else 0.0
        mean = float(sample.mean())
        cells.append((float(level), mean, se, int(sample.size)))
        if i >= n_fit:
            held_out.append(float(level))
            affine &= mean <= intercept + max(slope, 0.0) * level + n_se * se
    envelope = max(c[1] / c[0] for c in cells)
    return EllGrowth(intercept, slope, envelope, cells, held_out, bool(affine))


@dataclass(frozen=True)
class EllStability:
    """E ell^p from R runs against 2R runs, for p = 1, 2."""

    first: dict[int, float]
    doubled: dict[int, float]
    intervals: dict[int, tuple[float, float]]

    def relative_change(self, p: int) -> float:
        if self.doubled[p] == 0:
            return 0.0 if self.first[p] == 0 else math.inf
        return abs(self.doubled[p] - self.first[p]) / abs(self.doubled[p])

    @property
    def stable(self) -> bool:
        """Every doubled estimate lies in the bootstrap CI of the R-run estimate."""
        return all(low <= self.doubled[p] <= high for p, (low, high) in self.intervals.items())


def ell_moment_stability(
    first: Sequence[float],
    doubled: Sequence[float],
    powers: Sequence[int] = (1, 2),
    level: float = 0.95,
) -> EllStability:
    """Compare E ell^p over ``first`` (R runs) with E ell^p over ``doubled`` (2R runs)."""
    a = np.asarray(first, dtype=float)
    b = np.asarray(doubled, dtype=float)
    require_samples(int(a.size), 2, "resolved runs")
    require_samples(int(b.size), 2, "resolved runs")
    est_a, est_b, cis = {}, {}, {}
    for p in powers:
        est_a[p] = float(np.mean(a**p))
        est_b[p] = float(np.mean(b**p))
        cis[p] = bootstrap_ci(a, statistic=lambda s, p=p: float(np.mean(s**p)), level=level)
    return EllStability(est_a, est_b, cis)


# ---------- martingale tails and coupling slope ----------

def martingale_tail_detector(series: Sequence[float]) -> int | None:
    """min{n : |M_k| / k <= 1 for all observed k >= n}, with M indexed from k = 1.

    Returns None when the last observed term still violates the bound.
    """
    m = np.asarray(series, dtype=float)
    if m.size == 0:
        return 1
    k = np.arange(1, m.size + 1)
    bad = np.nonzero(np.abs(m) / k > 1.0)[0]
    if bad.size == 0:
        return 1
    if bad[-1] == m.size - 1:
        return None
    return int(bad[-1] + 2)


@dataclass(frozen=True)
class EnergyTail:
    """Tail integers of the two energy martingales of one chain.

    ``cesaro`` is the running average <H(u_i)^3>_0^k along the chain.
    """

    t_decay: int | None
    t_kicks: int | None
    cesaro: np.ndarray

    @property
    def tail(self) -> int | None:
        """max of the two tail integers; None while either is unresolved."""
        if self.t_decay is None or self.t_kicks is None:
            return None
        return max(self.t_decay, self.t_kicks)

    @property
    def resolved(self) -> bool:
        return self.tail is not None

    def cesaro_after_tail(self) -> float:
        """Largest Cesàro average of H^3 from the tail integer on."""
        if self.tail is None or self.tail >= self.cesaro.size:
            return math.nan
        return float(self.cesaro[self.tail :].max())


def energy_tail(
    chain: ChainRecord,
    decay_rate: float,
    lam: float,
    energy_params: EnergyParams,
    kick_moment: float,
) -> EnergyTail:
    """Run the tail detector on both energy martingales of ``chain``."""
    if len(chain.waiting_times) == 0:
        raise ValueError("chain must contain at least one kick")
    decay, kicks = energy_martingales(chain, decay_rate, lam, energy_params, kick_moment)
    cubes = chain.energies(energy_params) ** 3
    return EnergyTail(martingale_tail_detector(decay), martingale_tail_detector(kicks), cesaro_average(cubes))


@dataclass(frozen=True)
class CouplingSlope:
    slope: float
    d: float
    samples: int

    @property
    def d_times_slope(self) -> float:
        return self.d * self.slope

    @property
    def small_ball_ok(self) -> bool:
        """d * slope < 1/2."""
        return self.d_times_slope < 0.5


def estimate_coupling_slope(
    distances: Sequence[float],
    failures: Sequence[bool],
    d: float,
    quantile: float = 0.5,
) -> CouplingSlope:
    """Fit P(decoupled | delta) <= slope * delta through the origin near delta = 0.

    Only samples with delta below the given quantile are used.
    """
    x = np.asarray(distances, dtype=float)
    y = np.asarray(failures, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need matching distance/failure samples (at least 2)")
    keep = x <= np.quantile(x, quantile)
    model = LinearRegression(fit_intercept=False).fit(x[keep].reshape(-1, 1), y[keep])
    return CouplingSlope(float(max(model.coef_[0], 0.0)), d, int(keep.sum()))


def coupling_samples(trajectories: Sequence[Sequence[CoupledPair]]) -> tuple[np.ndarray, np.ndarray]:
    """(||S_t u - S_t u'||_1, decoupled flag) for every coupled step."""
    pairs = [(p.flow_distance, not p.coupled) for traj in trajectories for p in traj[1:]]
    if not pairs:
        return np.empty(0), np.empty(0, dtype=bool)
    dist, fail = zip(*pairs)
    return np.array(dist), np.array(fail, dtype=bool)


__all__ = [
    "CouplingConfig",
    "check_low_noise",
    "shifted_density",
    "log_shifted_density",
    "maximal_coupling_sample",
    "TVEstimate",
    "tv_oracle",
    "CoupledPair",
    "coupled_step",
    "run_coupled",
    "ContractionReport",
    "foias_prodi_probe",
    "matched_prefix",
    "SqueezingSweep",
    "squeezing_sweep",
    "select_n_prime",
    "StoppingRecord",
    "stopping_update",
    "run_sigma",
    "EllResult",
    "run_until_ell",
    "EllSummary",
    "summarize_ell",
    "EllGrowth",
    "fit_ell_growth",
    "EllStability",
    "ell_moment_stability",
    "martingale_tail_detector",
    "EnergyTail",
    "energy_tail",
    "CouplingSlope",
    "estimate_coupling_slope",
    "coupling_samples",
]
