"""Deterministic resolving semigroup S_t of the unforced CGL equation.

    du/dt - nu * Laplacian(u) + i * beta * |u|^2 u = 0,   u = 0 on the boundary.

Both pieces of the equation have exact flows: the heat part is diagonal in
the sine basis and the cubic part only rotates the phase pointwise. S_t is the
Strang composition heat(dt/2) o phase(dt) o heat(dt/2) repeated m times. The
probes below measure the a-priori estimates the ergodicity argument rests on:
exponential dissipation of H, the enstrophy budget, t^{-1/2} smoothing and the
local Lipschitz bound.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from sklearn.linear_model import LinearRegression

from .errors import CalibrationError, DegenerateInputError, DivergenceError
from .spectral import EnergyParams, Grid, SpectralField, energy, to_physical, to_spectral

SubstepPolicy = Callable[[float], int]

DIVERGENCE_NORM = 1e6
DECAY_SLACK = 1e-6


@dataclass(frozen=True)
class FlowParams:
    """Coefficients and time stepping of the flow.

    Args:
        nu: Viscosity
        beta: Dispersion coefficient of the cubic term
        dt_max: Largest Strang substep under the default ceiling policy
        substep_policy: Optional override mapping an interval length to a
            number of substeps
        divergence_norm: H^1 norm above which the replica is aborted
    """

    nu: float = 1.0
    beta: float = 1.0
    dt_max: float = 1e-2
    substep_policy: SubstepPolicy | None = field(default=None, compare=False)
    divergence_norm: float = DIVERGENCE_NORM

    def __post_init__(self) -> None:
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if not self.dt_max > 0:
            raise ValueError(f"dt_max must be positive, got {self.dt_max}")

    def substeps(self, t: float) -> int:
        """Number of Strang substeps used on an interval of length t."""
        if self.substep_policy is not None:
            m = int(self.substep_policy(t))
            if m < 1:
                raise ValueError(f"substep policy returned {m} for t={t}")
            return m
        return max(1, math.ceil(t / self.dt_max - 1e-9))

    def with_substeps(self, m: int) -> FlowParams:
        """Copy with a fixed substep count (self-convergence studies)."""
        return replace(self, substep_policy=lambda _t: m)


@dataclass
class FlowDiagnostics:
    """Dense record of a single free-flow run."""

    times: np.ndarray
    energies: np.ndarray
    enstrophy_integral: np.ndarray
    norm_h1: np.ndarray
    fitted_decay_rate: float | None = None

    def fit_decay_rate(self) -> float:
        """Slope -a of the least-squares line through (t, log H)."""
        mask = self.energies > 0
        if mask.sum() < 2:
            self.fitted_decay_rate = math.inf
            return self.fitted_decay_rate
        model = LinearRegression().fit(self.times[mask].reshape(-1, 1), np.log(self.energies[mask]))
        self.fitted_decay_rate = float(-model.coef_[0])
        return self.fitted_decay_rate

    def rows(self) -> list[tuple[float, float, float, float]]:
        """(time, H, enstrophy_integral, norm_h1) rows for the CSV emitter."""
        return list(
            zip(
                self.times.tolist(),
                self.energies.tolist(),
                self.enstrophy_integral.tolist(),
                self.norm_h1.tolist(),
            )
        )

    @staticmethod
    def merge(parts: Sequence[FlowDiagnostics]) -> list[tuple[float, float, float, float]]:
        """Per-replica diagnostics merge by concatenation."""
        out: list[tuple[float, float, float, float]] = []
        for part in parts:
            out.extend(part.rows())
        return out


# ---------- sub-flows ----------

def heat_substep(u: SpectralField, t: float, params: FlowParams) -> SpectralField:
    """Exact flow of du/dt = nu * Laplacian(u): c_j <- exp(-nu alpha_j t) c_j."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    return u.with_coeffs(u.coeffs * np.exp(-params.nu * u.grid.eigenvalues * t))


def phase_rotate(values: np.ndarray, t: float, beta: float) -> np.ndarray:
    """Pointwise exact flow of du/dt = -i beta |u|^2 u on nodal values."""
    return values * np.exp(-1j * beta * np.abs(values) ** 2 * t)


def phase_substep(u: SpectralField, t: float, params: FlowParams) -> SpectralField:
    """Phase rotation on the padded grid followed by truncation to n_modes."""
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if t == 0 or params.beta == 0:
        return u
    return to_spectral(phase_rotate(to_physical(u), t, params.beta), u.grid)


def _strang_steps(u: SpectralField, t: float, params: FlowParams) -> Iterator[tuple[float, np.ndarray]]:
    """Yield (time, coefficients) after each full Strang step."""
    grid = u.grid
    m = params.substeps(t)
    dt = t / m
    half = np.exp(-params.nu * grid.eigenvalues * (dt / 2.0))
    coeffs = np.array(u.coeffs)
    for i in range(m):
        coeffs = coeffs * half
        if params.beta != 0:
            coeffs = to_spectral(
                phase_rotate(to_physical(SpectralField(coeffs, grid)), dt, params.beta), grid
            ).coeffs
        coeffs = coeffs * half
        now = (i + 1) * dt
        _guard(coeffs, grid, now, params)
        yield now, coeffs


def _guard(coeffs: np.ndarray, grid: Grid, now: float, params: FlowParams) -> None:
    norm = float(np.sqrt(np.sum(grid.eigenvalues * np.abs(coeffs) ** 2)))
    if not math.isfinite(norm) or norm > params.divergence_norm:
        raise DivergenceError(now, norm)


def evolve(u: SpectralField, t: float, params: FlowParams) -> SpectralField:
    """The semigroup S_t applied to u.

    Raises:
        ValueError: t < 0
        DivergenceError: the state blew up mid-flow
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if t == 0:
        return u
    if params.beta == 0:
        # splitting is exact for the linear flow
        return heat_substep(u, t, params)
    coeffs = u.coeffs
    for _, coeffs in _strang_steps(u, t, params):
        pass
    return SpectralField(coeffs, u.grid)


def evolve_with_diagnostics(
    u: SpectralField,
    t: float,
    params: FlowParams,
    energy_params: EnergyParams,
) -> tuple[SpectralField, FlowDiagnostics]:
    """Evolve and record H, ||u||_1 and the running int_0^t ||Laplacian u||^2 ds."""
    grid = u.grid
    times = [0.0]
    energies = [energy(u, energy_params)]
    h1 = [u.norm_h1()]
    h2sq = [u.norm_h2() ** 2]
    final = u
    if t > 0:
        for now, coeffs in _strang_steps(u, t, params):
            state = SpectralField(coeffs, grid)
            times.append(now)
            energies.append(energy(state, energy_params))
            h1.append(state.norm_h1())
            h2sq.append(state.norm_h2() ** 2)
            final = state
    times_arr = np.asarray(times)
    h2_arr = np.asarray(h2sq)
    increments = 0.5 * (h2_arr[1:] + h2_arr[:-1]) * np.diff(times_arr)
    integral = np.concatenate([[0.0], np.cumsum(increments)])
    diagnostics = FlowDiagnostics(
        times=times_arr,
        energies=np.asarray(energies),
        enstrophy_integral=integral,
        norm_h1=np.asarray(h1),
    )
    return final, diagnostics


# ---------- calibration of alpha ----------

@dataclass
class CalibrationResult:
    """Outcome of the alpha halving schedule.

    ``decay_rate`` is the certified a: H(S_t u) <= exp(-a t) H(u) held on every
    recorded time of every trial state. ``fitted_slope`` is the smallest
    least-squares slope of log H over the trial states.
    """

    alpha: float
    decay_rate: float
    fitted_slope: float
    schedule: list[float]
    per_state_rates: list[float]

    def energy_params(self, beta: float) -> EnergyParams:
        return EnergyParams(alpha=self.alpha, beta=beta)


def _certified_rate(diag: FlowDiagnostics) -> float:
    """Largest a with H(t_i) <= exp(-a t_i) H(0) on every recorded time."""
    h0 = diag.energies[0]
    if h0 == 0:
        return math.inf
    with np.errstate(divide="ignore"):
        logs = np.log(diag.energies[1:] / h0)
    chords = -logs / diag.times[1:]
    return float(np.min(chords))


def calibrate_alpha(
    params: FlowParams,
    trial_states: Sequence[SpectralField],
    alpha0: float = 0.25,
    horizon: float = 10.0,
    safety: float = 0.95,
    min_alpha: float = 1e-6,
) -> CalibrationResult:
    """Largest alpha from alpha0, alpha0/2, ... certifying exponential decay of H.

    Args:
        params: Flow parameters (beta of H is taken from here)
        trial_states: States the decay must hold for
        alpha0: First alpha tried
        horizon: Length of each free-flow run
        safety: Factor applied to the smallest certified chord rate
        min_alpha: Schedule floor

    Raises:
        ValueError: empty trial set
        CalibrationError: schedule exhausted
    """
    if not trial_states:
        raise ValueError("trial_states must be non-empty")
    beta = params.beta if params.beta > 0 else 1.0
    schedule: list[float] = []
    alpha = alpha0
    while alpha >= min_alpha:
        schedule.append(alpha)
        energy_params = EnergyParams(alpha=alpha, beta=beta)
        rates: list[float] = []
        slopes: list[float] = []
        ok = True
        for state in trial_states:
            _, diag = evolve_with_diagnostics(state, horizon, params, energy_params)
            rate = _certified_rate(diag)
            if rate <= 0:
                ok = False
                break
            rates.append(rate)
            slopes.append(diag.fit_decay_rate())
        if ok:
            finite = [r for r in rates if math.isfinite(r)]
            decay = safety * min(finite) if finite else math.inf
            fitted = min((s for s in slopes if math.isfinite(s)), default=math.inf)
            return CalibrationResult(alpha, decay, fitted, schedule, rates)
        alpha /= 2.0
    raise CalibrationError(f"no alpha >= {min_alpha} certified decay; tried {schedule}")


def dissipation_violations(
    states: Sequence[SpectralField],
    params: FlowParams,
    energy_params: EnergyParams,
    decay_rate: float,
    horizon: float = 10.0,
) -> list[tuple[int, float]]:
    """(state index, time) pairs where H(S_t u) > exp(-a t) H(u) (1 + 1e-6)."""
    violations: list[tuple[int, float]] = []
    for idx, state in enumerate(states):
        _, diag = evolve_with_diagnostics(state, horizon, params, energy_params)
        bound = np.exp(-decay_rate * diag.times) * diag.energies[0] * (1.0 + DECAY_SLACK)
        bad = np.nonzero(diag.energies > bound)[0]
        violations.extend((idx, float(diag.times[i])) for i in bad)
    return violations


# ---------- probes ----------

@dataclass
class EnstrophyReport:
    lhs: float
    rhs: float
    tolerance: float
    passed: bool
    diagnostics: FlowDiagnostics = field(repr=False)


def enstrophy_budget_check(
    u0: SpectralField,
    t: float,
    params: FlowParams,
    energy_params: EnergyParams,
    tol: float = 0.02,
) -> EnstrophyReport:
    """alpha nu int_0^t ||Laplacian u||^2 ds <= H(u0) (1 + tol); reported, not raised."""
    _, diag = evolve_with_diagnostics(u0, t, params, energy_params)
    lhs = energy_params.alpha * params.nu * float(diag.enstrophy_integral[-1])
    rhs = float(diag.energies[0])
    return EnstrophyReport(lhs, rhs, tol, lhs <= rhs * (1.0 + tol), diag)


def smoothing_probe(
    u: SpectralField,
    v: SpectralField,
    t_list: Sequence[float],
    params: FlowParams,
) -> np.ndarray:
    """sqrt(t) ||S_t u - S_t v||_2 / ||u - v||_1 for each t in t_list."""
    denom = (u - v).norm_h1()
    if denom == 0:
        raise DegenerateInputError("smoothing probe needs u != v")
    ratios = np.empty(len(t_list))
    for i, t in enumerate(t_list):
        if not 0 < t <= 1:
            raise ValueError(f"probe times must lie in (0, 1], got {t}")
        diff = evolve(u, t, params) - evolve(v, t, params)
        ratios[i] = math.sqrt(t) * diff.norm_h2() / denom
    return ratios


def lipschitz_probe(u: SpectralField, v: SpectralField, t: float, params: FlowParams) -> float:
    """||S_t u - S_t v||_1 / ||u - v||_1."""
    denom = (u - v).norm_h1()
    if denom == 0:
        raise DegenerateInputError("Lipschitz probe needs u != v")
    return (evolve(u, t, params) - evolve(v, t, params)).norm_h1() / denom


def fit_lipschitz_envelope(quotients: Sequence[float], norm_sums: Sequence[float]) -> float:
    """Smallest C with q_i <= C exp(C s_i) for every sample.

    ``norm_sums`` holds s_i = ||u_i||_1^6 + ||v_i||_1^6.
    """
    q = np.asarray(quotients, dtype=float)
    s = np.asarray(norm_sums, dtype=float)
    q = np.maximum(q, 1e-300)

    def slack(c: float) -> float:
        return float(np.min(math.log(c) + c * s - np.log(q)))

    lo = 1e-12
    if slack(lo) >= 0:
        return lo
    hi = 1.0
    while slack(hi) < 0:
        hi *= 2.0
    return float(brentq(slack, lo, hi, xtol=1e-12))


@dataclass
class OrderStudy:
    substeps: list[int]
    errors: list[float]

    @property
    def ratios(self) -> list[float]:
        """errors[i] / errors[i+1]; about 4 for a second-order scheme."""
        return [a / b if b > 0 else math.inf for a, b in zip(self.errors, self.errors[1:])]


def strang_order_study(
    u: SpectralField,
    t: float,
    params: FlowParams,
    base_substeps: int = 4,
    levels: int = 4,
) -> OrderStudy:
    """Self-convergence: e_m = ||S_t^{(m)} u - S_t^{(2m)} u||_1 for doubling m."""
    counts = [base_substeps * 2**k for k in range(levels + 1)]
    solutions = [evolve(u, t, params.with_substeps(m)) for m in counts]
    errors = [(a - b).norm_h1() for a, b in zip(solutions, solutions[1:])]
    return OrderStudy(counts[:-1], errors)


__all__ = [
    "FlowParams",
    "FlowDiagnostics",
    "heat_substep",
    "phase_rotate",
    "phase_substep",
    "evolve",
    "evolve_with_diagnostics",
    "CalibrationResult",
    "calibrate_alpha",
    "dissipation_violations",
    "EnstrophyReport",
    "enstrophy_budget_check",
    "smoothing_probe",
    "lipschitz_probe",
    "fit_lipschitz_envelope",
    "OrderStudy",
    "strang_order_study",
]
