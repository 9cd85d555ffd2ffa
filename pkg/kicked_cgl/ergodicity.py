"""Distribution-level diagnostics for the kicked flow.

Distances between laws are estimated in the dual-Lipschitz metric through a
finite dictionary of functionals with ||f||_L = ||f||_inf + Lip(f) <= 1, which
gives a certified lower bound for the true distance. On top of it sit the
mixing curves, the Krylov-Bogolyubov stationary proxy, the Khasminskii
relation between the continuous process and the embedded chain, the Lyapunov
drift probe and the exponential moments of the hitting time of B_d.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats
from scipy.integrate import trapezoid
from sklearn.linear_model import LinearRegression
from sklearn.utils import resample

from .coupling import CoupledPair, CouplingConfig, EllResult, coupled_step
from .errors import DivergenceError, DriftProbeError, InsufficientDataError, ShapeError
from .flow import FlowParams, evolve
from .kicks import ClockSpec, KickSpec, embedded_step, make_streams, run_chain, sample_waiting_time, simulate
from .replicas import divergence_rate, run_replicas, successful_values
from .spectral import EnergyParams, SpectralField, energy
from .utils import BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED, bootstrap_ci, intervals_overlap, require_samples

MIN_ENSEMBLE = 100
DIVERGENCE_BUDGET = 0.05
CENSORING_WARNING = 0.10


# ---------- ensembles and test functionals ----------

@dataclass
class EmpiricalEnsemble:
    """States sampled at a common time, one per replica or per sampling instant."""

    states: list[SpectralField]
    time: float = 0.0
    origin: str = ""
    seeds: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.states:
            grid = self.states[0].grid
            if any(s.grid != grid for s in self.states):
                raise ShapeError("ensemble states must share one grid")

    def __len__(self) -> int:
        return len(self.states)

    def split_halves(self) -> tuple[EmpiricalEnsemble, EmpiricalEnsemble]:
        mid = len(self.states) // 2
        return (
            EmpiricalEnsemble(self.states[:mid], self.time, f"{self.origin}[first]"),
            EmpiricalEnsemble(self.states[mid:], self.time, f"{self.origin}[second]"),
        )

    def mean_energy(self, energy_params: EnergyParams) -> float:
        return float(np.mean([energy(s, energy_params) for s in self.states]))


@dataclass(frozen=True)
class TestFunctional:
    """f(u) = raw(u) / max(1, sup + lip), so that ||f||_L <= 1."""

    __test__ = False

    name: str
    raw: Callable[[SpectralField], float]
    sup: float
    lip: float

    @property
    def scale(self) -> float:
        return 1.0 / max(1.0, self.sup + self.lip)

    @property
    def norm_l(self) -> float:
        """Certified ||f||_L of the rescaled functional."""
        return (self.sup + self.lip) * self.scale

    def __call__(self, u: SpectralField) -> float:
        return self.raw(u) * self.scale

    def times(self, other: TestFunctional) -> TestFunctional:
        """Product of two bounded functionals: sup <= s1 s2, Lip <= s1 l2 + s2 l1."""
        return TestFunctional(
            f"{self.name}*{other.name}",
            lambda u: self.raw(u) * other.raw(u),
            self.sup * other.sup,
            self.sup * other.lip + other.sup * self.lip,
        )


def _coordinate(j: int, part: str, width: float) -> TestFunctional:
    # |sqrt(alpha_j) c_j| <= ||u||_1, so tanh(x/width) is (1/width)-Lipschitz
    def f(u: SpectralField) -> float:
        c = math.sqrt(u.grid.eigenvalues[j - 1]) * u.coeffs[j - 1]
        return math.tanh((c.real if part == "re" else c.imag) / width)

    return TestFunctional(f"tanh_{part}{j}", f, 1.0, 1.0 / width)


def _clipped_norm(width: float) -> TestFunctional:
    return TestFunctional(f"min1_norm/{width:g}", lambda u: min(1.0, u.norm_h1() / width), 1.0, 1.0 / width)


def constant_functional() -> TestFunctional:
    return TestFunctional("const", lambda u: 1.0, 1.0, 0.0)


def distance_functional(anchor: SpectralField, name: str = "dist") -> TestFunctional:
    """min(1, ||w - anchor||_1)."""
    return TestFunctional(name, lambda u: min(1.0, (u - anchor).norm_h1()), 1.0, 1.0)


@dataclass
class TestDictionary:
    """Finite family of functionals with certified ||f||_L <= 1."""

    __test__ = False

    functionals: list[TestFunctional]

    def __post_init__(self) -> None:
        if not self.functionals:
            raise ValueError("dictionary must be nonempty")

    @classmethod
    def default(
        cls,
        n_coords: int = 3,
        widths: Sequence[float] = (0.5, 1.0, 2.0),
        coordinate_width: float = 1.0,
        products: bool = True,
        include_constant: bool = False,
    ) -> TestDictionary:
        coords = [_coordinate(j, part, coordinate_width) for j in range(1, n_coords + 1) for part in ("re", "im")]
        norms = [_clipped_norm(w) for w in widths]
        members = coords + norms
        if products:
            members += [a.times(b) for i, a in enumerate(coords) for b in coords[i + 1 :]]
            members += [a.times(norms[0]) for a in coords]
        if include_constant:
            members.append(constant_functional())
        return cls(members)

    def with_functional(self, functional: TestFunctional) -> TestDictionary:
        return TestDictionary([*self.functionals, functional])

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.functionals]

    def evaluate(self, ensemble: EmpiricalEnsemble) -> np.ndarray:
        """Matrix of f(u) with one row per state and one column per functional."""
        return np.array([[f(u) for f in self.functionals] for u in ensemble.states], dtype=float).reshape(
            len(ensemble), len(self.functionals)
        )


# ---------- distance ----------

@dataclass
class DistanceEstimate:
    """max_f |mean_A f - mean_B f| with per-functional values and bootstrap CIs."""

    value: float
    per_functional: np.ndarray
    names: list[str]
    ci: tuple[float, float]
    per_functional_ci: np.ndarray

    @property
    def argmax(self) -> str:
        return self.names[int(np.argmax(self.per_functional))]


def _bootstrap_gaps(
    fa: np.ndarray,
    fb: np.ndarray,
    n_resamples: int,
    seed: int,
) -> np.ndarray:
    """Signed mean differences for independent resamples of both ensembles."""
    rng = np.random.RandomState(seed)
    gaps = np.empty((n_resamples, fa.shape[1]))
    for b in range(n_resamples):
        gaps[b] = resample(fa, random_state=rng).mean(axis=0) - resample(fb, random_state=rng).mean(axis=0)
    return gaps


def dual_lipschitz_lower_bound(
    a: EmpiricalEnsemble,
    b: EmpiricalEnsemble,
    dictionary: TestDictionary,
    min_samples: int = MIN_ENSEMBLE,
    level: float = 0.95,
    n_resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = BOOTSTRAP_SEED,
) -> DistanceEstimate:
    """Lower bound for ||mu_A - mu_B||*_L over the dictionary."""
    require_samples(min(len(a), len(b)), min_samples, "ensemble members")
    if not math.isclose(a.time, b.time):
        raise ValueError(f"ensembles must be taken at equal times, got {a.time} and {b.time}")
    fa = dictionary.evaluate(a)
    fb = dictionary.evaluate(b)
    gaps = np.abs(fa.mean(axis=0) - fb.mean(axis=0))
    boot = np.abs(_bootstrap_gaps(fa, fb, n_resamples, seed))
    tail = 100.0 * (1.0 - level) / 2.0
    per_ci = np.percentile(boot, [tail, 100.0 - tail], axis=0).T
    low, high = np.percentile(boot.max(axis=1), [tail, 100.0 - tail])
    return DistanceEstimate(float(gaps.max()), gaps, dictionary.names, (float(low), float(high)), per_ci)


def means_agree(
    a: EmpiricalEnsemble,
    b: EmpiricalEnsemble,
    dictionary: TestDictionary,
    level: float = 0.95,
    n_resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = BOOTSTRAP_SEED,
) -> tuple[bool, np.ndarray]:
    """Whether every signed mean difference has a bootstrap CI containing 0.

    Returns:
        (agree, array of (low, high) per functional)
    """
    require_samples(min(len(a), len(b)), 2, "ensemble members")
    gaps = _bootstrap_gaps(dictionary.evaluate(a), dictionary.evaluate(b), n_resamples, seed)
    tail = 100.0 * (1.0 - level) / 2.0
    cis = np.percentile(gaps, [tail, 100.0 - tail], axis=0).T
    return bool(np.all((cis[:, 0] <= 0.0) & (cis[:, 1] >= 0.0))), cis


# ---------- mixing ----------

@dataclass(frozen=True)
class DecayFit:
    """log D = log amplitude - rate * x with x = t (exponential) or log t (power)."""

    model: str
    rate: float
    amplitude: float
    aic: float
    residuals: np.ndarray

    def predict(self, t: np.ndarray) -> np.ndarray:
        x = np.asarray(t, dtype=float) if self.model == "exponential" else np.log(t)
        return self.amplitude * np.exp(-self.rate * x)


def _fit_decay(times: np.ndarray, values: np.ndarray, model: str) -> DecayFit | None:
    keep = (values > 0) & (times > 0)
    if keep.sum() < 3:
        return None
    x = times[keep] if model == "exponential" else np.log(times[keep])
    y = np.log(values[keep])
    reg = LinearRegression().fit(x.reshape(-1, 1), y)
    residuals = y - reg.predict(x.reshape(-1, 1))
    n = y.size
    rss = max(float(np.sum(residuals**2)), 1e-300)
    aic = n * math.log(rss / n) + 4.0
    return DecayFit(model, float(-reg.coef_[0]), float(math.exp(reg.intercept_)), aic, residuals)


@dataclass
class MixingCurve:
    """Dictionary distance between the laws started from u0_a and u0_b over time."""

    times: np.ndarray
    values: np.ndarray
    ci: np.ndarray
    exponential: DecayFit | None
    power: DecayFit | None
    divergence_rate: float
    valid: bool
    embedded: bool = False

    @property
    def preferred_model(self) -> str | None:
        fits = [f for f in (self.exponential, self.power) if f is not None]
        return min(fits, key=lambda f: f.aic).model if fits else None

    def time_to_threshold(self, threshold: float) -> float | None:
        below = np.nonzero(self.values < threshold)[0]
        return float(self.times[below[0]]) if below.size else None

    def rows(self) -> list[tuple[float, float, float, float]]:
        return [(float(t), float(v), float(lo), float(hi)) for t, v, (lo, hi) in zip(self.times, self.values, self.ci)]

    def summary(self) -> dict[str, Any]:
        def fit(f: DecayFit | None) -> dict[str, float] | None:
            return None if f is None else {"rate": f.rate, "amplitude": f.amplitude, "aic": f.aic}

        return {
            "exponential": fit(self.exponential),
            "power": fit(self.power),
            "preferred": self.preferred_model,
            "divergence_rate": self.divergence_rate,
            "valid": self.valid,
            "embedded": self.embedded,
        }


def _sample_ensembles(
    u0: SpectralField,
    times: np.ndarray,
    n_replicas: int,
    offset: int,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    seed: int,
    embedded: bool,
    workers: int,
) -> tuple[list[list[SpectralField]], float]:
    def replica(index: int) -> list[SpectralField]:
        streams = make_streams(seed, index)
        if embedded:
            chain = run_chain(u0, int(times[-1]), spec, clock, params, streams)
            return [chain.states[int(k)] for k in times]
        log = simulate(u0, float(times[-1]), times, spec, clock, params, streams)
        if log.diverged:
            last = log.kick_times[-1] if log.kick_times else 0.0
            raise DivergenceError(last, math.inf)
        return log.samples

    outcomes = run_replicas(replica, n_replicas, workers=workers, offset=offset)
    return successful_values(outcomes), divergence_rate(outcomes)


def mixing_curve(
    u0_a: SpectralField,
    u0_b: SpectralField,
    times: Sequence[float],
    n_replicas: int,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    seed: int,
    dictionary: TestDictionary | None = None,
    embedded: bool = False,
    workers: int = 1,
    divergence_budget: float = DIVERGENCE_BUDGET,
    min_samples: int = MIN_ENSEMBLE,
) -> MixingCurve:
    """Dictionary distance between ensembles from u0_a and u0_b on a time grid.

    With ``embedded=True`` the grid holds kick indices and the embedded chain is
    sampled instead of the continuous process.
    """
    grid_t = np.asarray(times, dtype=float)
    if grid_t.ndim != 1 or grid_t.size == 0 or np.any(np.diff(grid_t) <= 0) or grid_t[0] < 0:
        raise ValueError("time grid must be nonempty, non-negative and increasing")
    dictionary = dictionary or TestDictionary.default()
    runs_a, rate_a = _sample_ensembles(u0_a, grid_t, n_replicas, 0, spec, clock, params, seed, embedded, workers)
    runs_b, rate_b = _sample_ensembles(
        u0_b, grid_t, n_replicas, n_replicas, spec, clock, params, seed, embedded, workers
    )
    rate = max(rate_a, rate_b)
    values = np.empty(grid_t.size)
    ci = np.empty((grid_t.size, 2))
    for i, t in enumerate(grid_t):
        a = EmpiricalEnsemble([run[i] for run in runs_a], float(t), "a")
        b = EmpiricalEnsemble([run[i] for run in runs_b], float(t), "b")
        est = dual_lipschitz_lower_bound(a, b, dictionary, min_samples=min_samples)
        values[i] = est.value
        ci[i] = est.ci
    return MixingCurve(
        grid_t,
        values,
        ci,
        _fit_decay(grid_t, values, "exponential"),
        _fit_decay(grid_t, values, "power"),
        rate,
        rate <= divergence_budget,
        embedded,
    )


def moving_median_nonincreasing(values: Sequence[float], window: int = 5, tol: float = 0.0) -> bool:
    """Whether the running median over ``window`` points never rises by more than ``tol``."""
    arr = np.asarray(values, dtype=float)
    if arr.size < window:
        return True
    medians = np.median(sliding_window_view(arr, window), axis=1)
    return bool(np.all(np.diff(medians) <= tol))


# ---------- stationary measure ----------

@dataclass
class StationaryProxy:
    """Time-averaged samples of one long trajectory past burn-in."""

    continuous: EmpiricalEnsemble
    embedded: EmpiricalEnsemble
    halves: DistanceEstimate | None
    converged: bool

    def mean_energy(self, energy_params: EnergyParams) -> float:
        return self.continuous.mean_energy(energy_params)


def krylov_bogolyubov_estimate(
    u0: SpectralField,
    burn_in: float,
    horizon: float,
    sample_interval: float,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    seed: int,
    dictionary: TestDictionary | None = None,
    min_samples: int = MIN_ENSEMBLE,
) -> StationaryProxy:
    """Cesàro samples on (burn_in, horizon] plus the post-kick states after burn_in.

    The two halves of the continuous sample are compared through the
    dictionary; the proxy is flagged as converged only when every signed
    mean difference has a bootstrap CI containing zero.
    """
    if not 0 <= burn_in < horizon:
        raise ValueError(f"need 0 <= burn_in < horizon, got {burn_in}, {horizon}")
    if not sample_interval > 0:
        raise ValueError(f"sample_interval must be positive, got {sample_interval}")
    dictionary = dictionary or TestDictionary.default()
    sample_times = np.arange(burn_in + sample_interval, horizon + 1e-12, sample_interval)
    sample_times = sample_times[sample_times <= horizon]
    log = simulate(u0, horizon, sample_times, spec, clock, params, make_streams(seed))
    if log.diverged:
        raise DivergenceError(log.kick_times[-1] if log.kick_times else 0.0, math.inf)
    continuous = EmpiricalEnsemble(log.samples, horizon, "continuous", [seed])
    post_kick = [s for tau, s in zip(log.kick_times, log.states[1:]) if tau > burn_in]
    embedded = EmpiricalEnsemble(post_kick, horizon, "embedded", [seed])

    halves = None
    converged = False
    first, second = continuous.split_halves()
    if min(len(first), len(second)) >= min_samples:
        halves = dual_lipschitz_lower_bound(first, second, dictionary, min_samples=min_samples)
        converged, _ = means_agree(first, second, dictionary)
    return StationaryProxy(continuous, embedded, halves, converged)


@dataclass
class KhasminskiiReport:
    """(f, mu) against E_nu int_0^{tau_1} f(u_t) dt / E_nu tau_1."""

    functional: str
    lhs: float
    lhs_ci: tuple[float, float]
    rhs: float
    rhs_ci: tuple[float, float]
    mean_tau: float
    mean_tau_ci: tuple[float, float]

    @property
    def passed(self) -> bool:
        slack = 1e-12 * max(1.0, abs(self.lhs))
        return intervals_overlap((self.lhs_ci[0] - slack, self.lhs_ci[1] + slack), self.rhs_ci)

    def row(self) -> tuple[str, float, float, float, float, float, float, bool]:
        return (
            self.functional,
            self.lhs,
            self.lhs_ci[0],
            self.lhs_ci[1],
            self.rhs,
            self.rhs_ci[0],
            self.rhs_ci[1],
            self.passed,
        )


def _cycle_integral(
    v: SpectralField,
    tau: float,
    f: Callable[[SpectralField], float],
    params: FlowParams,
    points: int,
) -> float:
    h = tau / (points - 1)
    values = np.empty(points)
    state = v
    values[0] = f(state)
    for i in range(1, points):
        state = evolve(state, h, params)
        values[i] = f(state)
    return float(trapezoid(values, dx=h))


def khasminskii_check(
    functional: TestFunctional,
    proxy: StationaryProxy,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    seed: int,
    n_restarts: int = 1000,
    points: int = 33,
    level: float = 0.95,
) -> KhasminskiiReport:
    """Compare the continuous stationary mean with the embedded-chain cycle ratio."""
    require_samples(len(proxy.continuous), 2, "continuous samples")
    require_samples(len(proxy.embedded), 1, "embedded samples")
    lhs_samples = np.array([functional(u) for u in proxy.continuous.states])
    lhs = float(lhs_samples.mean())
    lhs_ci = bootstrap_ci(lhs_samples, level=level) if np.ptp(lhs_samples) > 0 else (lhs, lhs)

    rng = make_streams(seed).clock
    starts = proxy.embedded.states
    integrals = np.empty(n_restarts)
    taus = np.empty(n_restarts)
    for i in range(n_restarts):
        taus[i] = sample_waiting_time(clock, rng)
        integrals[i] = _cycle_integral(starts[i % len(starts)], taus[i], functional, params, points)
    rhs = float(integrals.sum() / taus.sum())
    pairs = np.column_stack([integrals, taus])
    if np.allclose(integrals, taus * rhs):
        rhs_ci = (rhs, rhs)
    else:
        rhs_ci = bootstrap_ci(pairs, statistic=lambda p: p[:, 0].sum() / p[:, 1].sum(), level=level)
    tau_ci = bootstrap_ci(taus, level=level)
    return KhasminskiiReport(functional.name, lhs, lhs_ci, rhs, rhs_ci, float(taus.mean()), tau_ci)


@dataclass
class InvarianceReport:
    names: list[str]
    before: np.ndarray
    after: np.ndarray
    ci: np.ndarray
    passed: bool


def stationary_invariance_check(
    proxy: EmpiricalEnsemble,
    dictionary: TestDictionary,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    seed: int,
) -> InvarianceReport:
    """Push the proxy through one embedded step and compare dictionary means."""
    require_samples(len(proxy), 2, "proxy samples")
    pushed = [embedded_step(u, spec, clock, params, make_streams(seed, i))[0] for i, u in enumerate(proxy.states)]
    after = EmpiricalEnsemble(pushed, proxy.time, f"{proxy.origin}[pushed]")
    agree, ci = means_agree(proxy, after, dictionary)
    return InvarianceReport(
        dictionary.names,
        dictionary.evaluate(proxy).mean(axis=0),
        dictionary.evaluate(after).mean(axis=0),
        ci,
        agree,
    )


# ---------- drift ----------

def lyapunov_function(u: SpectralField, level: float, energy_params: EnergyParams) -> float:
    """F(u) = max(H(u), A)."""
    return max(energy(u, energy_params), level)


@dataclass
class DriftReport:
    """E_u F(u_n) <= a F(u) for ||u||_1 >= R' and E_u F(u_k) <= C' below R'."""

    n: int
    r_prime: float
    a: float
    c_prime: float
    degenerate: bool
    table: list[tuple[int, float, float, int, float]]

    def rows(self) -> list[tuple[int, float, float, int, float]]:
        return list(self.table)


def lyapunov_probe(
    u0_grid: Sequence[SpectralField],
    n_values: Sequence[int],
    level: float,
    r_prime_values: Sequence[float],
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    energy_params: EnergyParams,
    seed: int,
    replicas: int = 100,
    workers: int = 1,
) -> DriftReport:
    """Search (n, R') for a contraction of F = max(H, A) along the embedded chain.

    Raises:
        DriftProbeError: No pair in the search range gives a < 1
    """
    if level < 1:
        raise ValueError(f"A must be >= 1, got {level}")
    if not u0_grid or not n_values or not r_prime_values:
        raise ValueError("u0 grid, n values and R' values must be nonempty")
    n_max = max(n_values)
    norms = np.array([u.norm_h1() for u in u0_grid])
    f0 = np.array([lyapunov_function(u, level, energy_params) for u in u0_grid])
    # expected[g, k] = E F(u_k) from grid point g
    expected = np.empty((len(u0_grid), n_max + 1))
    for g, u0 in enumerate(u0_grid):

        def replica(index: int, u0: SpectralField = u0) -> np.ndarray:
            chain = run_chain(u0, n_max, spec, clock, params, make_streams(seed, index))
            return np.array([lyapunov_function(s, level, energy_params) for s in chain.states])

        values = successful_values(run_replicas(replica, replicas, workers=workers, offset=g * replicas))
        require_samples(len(values), 2, "drift replicas")
        expected[g] = np.mean(values, axis=0)

    table = [(g, float(norms[g]), float(f0[g]), n, float(expected[g, n])) for g in range(len(u0_grid)) for n in n_values]
    degenerate = bool(np.allclose(expected, level, rtol=1e-12) and np.all(f0 == level))
    if degenerate:
        return DriftReport(min(n_values), min(r_prime_values), 1.0, float(level), True, table)

    for n in sorted(n_values):
        for r in sorted(r_prime_values):
            large = norms >= r
            if not large.any():
                continue
            a = float(np.max(expected[large, n] / f0[large]))
            if a < 1.0:
                small = ~large
                c_prime = float(np.max(expected[small, : n + 1])) if small.any() else 0.0
                return DriftReport(n, r, a, c_prime, False, table)
    raise DriftProbeError(f"no (n, R') in n={list(n_values)}, R'={list(r_prime_values)} gives a < 1")


# ---------- hitting times of the small ball ----------

def pair_hitting_time(
    u: SpectralField,
    u_prime: SpectralField,
    d: float,
    config: CouplingConfig,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    seed: int,
    replica: int,
    max_kicks: int,
) -> int | None:
    """tau_d = min{k : ||u_k||_1 v ||u'_k||_1 <= d} for a coupled run, None if censored."""
    pair = CoupledPair(u, u_prime)
    streams = make_streams(seed, replica)
    while not pair.in_ball(d):
        if pair.k >= max_kicks:
            return None
        pair = coupled_step(pair, config, spec, clock, params, streams)
    return pair.k


@dataclass
class HittingReport:
    """Exponential moments E e^{gamma tau_d} per initial pair and gamma."""

    gammas: np.ndarray
    energies: np.ndarray
    moments: np.ndarray
    stable: np.ndarray
    best_gamma: float | None
    slope: float
    intercept: float
    censored_fraction: float
    hitting_times: list[list[int | None]]
    warnings: list[str] = field(default_factory=list)

    def empirical_cdf(self, pair_index: int, k: int) -> float:
        taus = self.hitting_times[pair_index]
        return sum(1 for t in taus if t is not None and t <= k) / len(taus)


def pair_hitting_stats(
    pairs: Sequence[tuple[SpectralField, SpectralField]],
    d: float,
    config: CouplingConfig,
    spec: KickSpec,
    clock: ClockSpec,
    params: FlowParams,
    energy_params: EnergyParams,
    seed: int,
    gammas: Sequence[float] = (0.05, 0.1, 0.2, 0.4),
    replicas: int = 100,
    max_kicks: int = 500,
    stability: float = 0.5,
) -> HittingReport:
    """Estimate E e^{gamma tau_d} and regress it on 1 + H(u) + H(u').

    Censored runs enter with tau_d = max_kicks. An estimate is stable when
    its two replica halves agree within the relative ``stability`` tolerance.
    """
    if not 0 < d <= 1:
        raise ValueError(f"d must lie in (0, 1], got {d}")
    require_samples(replicas, 2, "replicas")
    g = np.asarray(gammas, dtype=float)
    all_taus: list[list[int | None]] = []
    energies = np.empty(len(pairs))
    moments = np.empty((len(pairs), g.size))
    stable = np.ones((len(pairs), g.size), dtype=bool)
    censored = 0
    for p, (u, u_prime) in enumerate(pairs):
        taus = [
            pair_hitting_time(u, u_prime, d, config, spec, clock, params, seed, p * replicas + r, max_kicks)
            for r in range(replicas)
        ]
        all_taus.append(taus)
        censored += sum(1 for t in taus if t is None)
        values = np.array([max_kicks if t is None else t for t in taus], dtype=float)
        energies[p] = 1.0 + energy(u, energy_params) + energy(u_prime, energy_params)
        exp_moments = np.exp(np.outer(values, g))
        moments[p] = exp_moments.mean(axis=0)
        half = replicas // 2
        a, b = exp_moments[:half].mean(axis=0), exp_moments[half:].mean(axis=0)
        stable[p] = np.abs(a - b) <= stability * np.maximum(a, b)

    usable = np.nonzero(stable.all(axis=0))[0]
    best = float(g[usable[-1]]) if usable.size else None
    column = usable[-1] if usable.size else 0
    if len(pairs) >= 2:
        reg = LinearRegression().fit(energies.reshape(-1, 1), moments[:, column])
        slope, intercept = float(reg.coef_[0]), float(reg.intercept_)
    else:
        slope, intercept = 0.0, float(moments[0, column])
    fraction = censored / (len(pairs) * replicas)
    warnings = []
    if fraction > CENSORING_WARNING:
        warnings.append(f"tau_d censored in {fraction:.1%} of runs (max_kicks={max_kicks})")
    return HittingReport(g, energies, moments, stable, best, slope, intercept, fraction, all_taus, warnings)


# ---------- coupled-run consequences ----------

def g_event_complement(ell_values: Sequence[int], lam: float, times: Sequence[float]) -> np.ndarray:
    """Average over ell of P(tau_{2 ell + 1} > t), tau_n ~ Gamma(n, 1/lam)."""
    ells = np.asarray(ell_values, dtype=float)
    if ells.size == 0:
        raise InsufficientDataError("need at least one resolved ell")
    t = np.asarray(times, dtype=float)
    tails = stats.gamma.sf(t[None, :], a=(2.0 * ells + 1.0)[:, None], scale=1.0 / lam)
    return tails.mean(axis=0)


def coupled_distance_curve(
    results: Sequence[EllResult],
    times: Sequence[float],
    params: FlowParams,
) -> np.ndarray:
    """E ||u_t - u'_t||_1 with the continuous paths rebuilt between recorded kicks.

    Times past the last recorded kick of a run are left out of that run's
    contribution.
    """
    t_grid = np.asarray(times, dtype=float)
    table = np.full((len(results), t_grid.size), np.nan)
    for r, result in enumerate(results):
        traj = result.trajectory
        kick_times = np.cumsum([p.waiting_time for p in traj[1:]])
        for i, t in enumerate(t_grid):
            if kick_times.size and t > kick_times[-1]:
                continue
            k = int(np.searchsorted(kick_times, t, side="right"))
            tau = kick_times[k - 1] if k > 0 else 0.0
            pair = traj[k]
            table[r, i] = (evolve(pair.u, t - tau, params) - evolve(pair.u_prime, t - tau, params)).norm_h1()
    with np.errstate(invalid="ignore"):
        return np.nanmean(table, axis=0)


__all__ = [
    "EmpiricalEnsemble",
    "TestFunctional",
    "TestDictionary",
    "constant_functional",
    "distance_functional",
    "DistanceEstimate",
    "dual_lipschitz_lower_bound",
    "means_agree",
    "DecayFit",
    "MixingCurve",
    "mixing_curve",
    "moving_median_nonincreasing",
    "StationaryProxy",
    "krylov_bogolyubov_estimate",
    "KhasminskiiReport",
    "khasminskii_check",
    "InvarianceReport",
    "stationary_invariance_check",
    "lyapunov_function",
    "DriftReport",
    "lyapunov_probe",
    "pair_hitting_time",
    "HittingReport",
    "pair_hitting_stats",
    "g_event_complement",
    "coupled_distance_curve",
]
