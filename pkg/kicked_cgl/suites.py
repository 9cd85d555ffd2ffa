"""Verification suites and the run manifest.

Each suite runs the checks of one layer with the configured seed, writes its
tables under the output directory and records a verdict per check. Library
errors raised inside a check fail that check; the manifest is written even
when a suite stops early.
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import stats

from .config import RunConfig
from .coupling import (
    CouplingConfig,
    EllResult,
    EnergyTail,
    coupling_samples,
    ell_moment_stability,
    energy_tail,
    estimate_coupling_slope,
    fit_ell_growth,
    foias_prodi_probe,
    matched_prefix,
    maximal_coupling_sample,
    run_coupled,
    run_sigma,
    run_until_ell,
    select_n_prime,
    squeezing_sweep,
    summarize_ell,
    tv_oracle,
)
from .ergodicity import (
    TestDictionary,
    constant_functional,
    khasminskii_check,
    krylov_bogolyubov_estimate,
    lyapunov_probe,
    mixing_curve,
    moving_median_nonincreasing,
    stationary_invariance_check,
)
from .errors import KickedCGLError
from .flow import (
    CalibrationResult,
    calibrate_alpha,
    dissipation_violations,
    enstrophy_budget_check,
    evolve_with_diagnostics,
    smoothing_probe,
    strang_order_study,
)
from .interfaces import NULL_HOOK, SimulationHook
from .kicks import (
    ClockSpec,
    KickSpec,
    energy_recursion_fit,
    hitting_time_tau_r,
    kick_energy_moment,
    make_streams,
    moment_estimate,
    poisson_exponential_moment,
    run_chain,
    simulate,
)
from .replicas import failure_rate, run_replicas, successful_values
from .spectral import (
    EnergyParams,
    SpectralField,
    energy,
    power_law_random_field,
    project_high,
    scale_to_energy,
    smooth_random_field,
)
from .telemetry.emitters import (
    COUPLING_COLUMNS,
    DISSIPATION_COLUMNS,
    DRIFT_COLUMNS,
    FLOW_COLUMNS,
    KHASMINSKII_COLUMNS,
    MIXING_COLUMNS,
    ORDER_COLUMNS,
    POISSON_COLUMNS,
    STOPPING_COLUMNS,
    trajectory_columns,
    write_csv,
    write_json,
)
from .telemetry.event_dump import EventDumper

SUITE_ORDER = ("flow", "kicks", "coupling", "mixing", "stationary")
ORDER_RATIO_RANGE = (3.2, 4.8)
SMOOTHING_SPREAD = 10.0
MIXING_THRESHOLD = 0.05
ELL_ENERGIES = (0.5, 1.0, 2.0)
TAIL_CHAIN_KICKS = 200
TAIL_REPLICAS = 50
TAIL_RESOLVED_FRACTION = 0.9


@dataclass
class CheckVerdict:
    name: str
    passed: bool
    gated: bool = True
    detail: str = ""


@dataclass
class RunManifest:
    """Provenance and verdicts of one run."""

    config_hash: str
    version: str
    seed: int
    suites: dict[str, list[CheckVerdict]] = field(default_factory=dict)
    files: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    failure_rate: float = 0.0
    failure_budget: float = 0.05
    errors: list[str] = field(default_factory=list)

    @property
    def budget_exceeded(self) -> bool:
        return self.failure_rate > self.failure_budget

    @property
    def passed(self) -> bool:
        return not self.errors and all(v.passed for checks in self.suites.values() for v in checks if v.gated)

    @property
    def exit_code(self) -> int:
        if self.budget_exceeded:
            return 4
        return 0 if self.passed else 2

    def to_dict(self) -> dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "seed": self.seed,
            "suites": {
                name: [
                    {"name": v.name, "passed": v.passed, "gated": v.gated, "detail": v.detail} for v in checks
                ]
                for name, checks in self.suites.items()
            },
            "files": list(self.files),
            "wall_time": self.wall_time,
            "failure_rate": self.failure_rate,
            "failure_budget": self.failure_budget,
            "errors": list(self.errors),
            "passed": self.passed,
            "exit_code": self.exit_code,
        }

    def write(self, path: str | Path) -> Path:
        return write_json(path, self.to_dict())


class SuiteContext:
    """Objects shared by the checks of one run."""

    def __init__(self, config: RunConfig, manifest: RunManifest, hook: SimulationHook = NULL_HOOK):
        self.config = config
        self.manifest = manifest
        self.hook = hook
        self.grid = config.build_grid()
        self.params = config.flow_params()
        self.spec = config.kick_spec(self.grid)
        self.clock = config.clock()
        self.seed = config.experiment.seed
        self.replicas = config.experiment.replicas
        self.workers = config.experiment.workers
        self.out = Path(config.output_dir)
        self._calibration: CalibrationResult | None = None

    def rng(self, tag: int) -> np.random.Generator:
        """Generator for suite-side inputs, disjoint from replica streams."""
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(2**20 + tag,))))

    @property
    def calibration(self) -> CalibrationResult:
        if self._calibration is None:
            rng = self.rng(0)
            trials = [smooth_random_field(self.grid, rng) for _ in range(5)]
            settings = self.config.energy
            floor = 1e-6 if settings.auto_calibrate else settings.alpha
            self._calibration = calibrate_alpha(self.params, trials, alpha0=settings.alpha, min_alpha=floor)
        return self._calibration

    @property
    def energy_params(self) -> EnergyParams:
        return self.calibration.energy_params(self.config.energy_params().beta)

    def emit_csv(self, name: str, columns: tuple[str, ...], rows: Any) -> None:
        path = write_csv(self.out / name, columns, rows)
        self.manifest.files.append(str(path))

    def emit_json(self, name: str, payload: Any) -> None:
        path = write_json(self.out / name, payload)
        self.manifest.files.append(str(path))

    def record_failures(self, rate: float) -> None:
        self.manifest.failure_rate = max(self.manifest.failure_rate, rate)


def _check(
    verdicts: list[CheckVerdict],
    name: str,
    body: Callable[[], tuple[bool, str]],
    gated: bool = True,
) -> None:
    """Run one check; package errors become a failed verdict."""
    try:
        passed, detail = body()
    except KickedCGLError as e:
        passed, detail = False, f"{type(e).__name__}: {e}"
    verdicts.append(CheckVerdict(name, bool(passed), gated, detail))


# ---------- flow ----------

def _flow_suite(ctx: SuiteContext) -> list[CheckVerdict]:
    verdicts: list[CheckVerdict] = []
    rng = ctx.rng(1)
    n_states = ctx.config.experiment.flow_states
    n_order = max(1, n_states // 2)

    def order() -> tuple[bool, str]:
        rows = []
        ok = True
        for i in range(n_order):
            study = strang_order_study(smooth_random_field(ctx.grid, rng), 0.5, ctx.params, base_substeps=8, levels=3)
            ratios = study.ratios
            ok &= all(ORDER_RATIO_RANGE[0] <= r <= ORDER_RATIO_RANGE[1] for r in ratios)
            for m, err, ratio in zip(study.substeps, study.errors, [*ratios, math.nan]):
                rows.append((i, m, err, ratio))
        ctx.emit_csv("order.csv", ORDER_COLUMNS, rows)
        return ok, f"{n_order} states, ratios in {ORDER_RATIO_RANGE}"

    def dissipation() -> tuple[bool, str]:
        cal = ctx.calibration
        held_out = [smooth_random_field(ctx.grid, rng) for _ in range(ctx.config.experiment.held_out_states)]
        bad = dissipation_violations(held_out, ctx.params, ctx.energy_params, cal.decay_rate)
        _, diag = evolve_with_diagnostics(held_out[0], 10.0, ctx.params, ctx.energy_params)
        ctx.emit_csv("flow_diagnostics.csv", FLOW_COLUMNS, diag.rows())
        stride = max(1, diag.times.size // 100)
        bound = np.exp(-cal.decay_rate * diag.times) * diag.energies[0]
        rows = [
            (0, diag.times[i], diag.energies[i], bound[i], bool(diag.energies[i] > bound[i] * (1 + 1e-6)))
            for i in range(0, diag.times.size, stride)
        ]
        ctx.emit_csv("dissipation.csv", DISSIPATION_COLUMNS, rows)
        return not bad, f"alpha={cal.alpha:g}, a={cal.decay_rate:.4g}, {len(bad)} violations on {len(held_out)} states"

    def enstrophy() -> tuple[bool, str]:
        reports = [
            enstrophy_budget_check(smooth_random_field(ctx.grid, rng), 5.0, ctx.params, ctx.energy_params)
            for _ in range(n_states)
        ]
        worst = max(r.lhs / r.rhs for r in reports)
        return all(r.passed for r in reports), f"max lhs/rhs = {worst:.4f} on {n_states} states"

    def smoothing() -> tuple[bool, str]:
        times = np.logspace(-4, -1, 7)
        spreads = []
        for _ in range(n_states):
            u = smooth_random_field(ctx.grid, rng)
            ratios = smoothing_probe(u, u + power_law_random_field(ctx.grid, rng, 0.01), times, ctx.params)
            spreads.append(float(ratios.max() / ratios.min()))
        return max(spreads) < SMOOTHING_SPREAD, f"max spread {max(spreads):.3f} over {n_states} pairs"

    _check(verdicts, "strang_order", order)
    _check(verdicts, "dissipation", dissipation)
    _check(verdicts, "enstrophy_budget", enstrophy)
    _check(verdicts, "smoothing", smoothing)
    return verdicts


# ---------- kicks ----------

def _kicks_suite(ctx: SuiteContext) -> list[CheckVerdict]:
    verdicts: list[CheckVerdict] = []
    energy_params = ctx.energy_params

    def poisson() -> tuple[bool, str]:
        rng = ctx.rng(2)
        rows = []
        ok = True
        for lam in (0.5, 1.0, 2.0):
            for t in (1.0, 3.0, 10.0):
                mean, se, exact = poisson_exponential_moment(ClockSpec(lam), t, 10 * ctx.replicas, rng)
                ok &= abs(mean - exact) <= 3.0 * se + 1e-12
                rows.append((lam, t, mean, se, exact))
        ctx.emit_csv("poisson.csv", POISSON_COLUMNS, rows)
        return ok, "E exp(-N_t) within 3 standard errors"

    u0 = scale_to_energy(smooth_random_field(ctx.grid, ctx.rng(3)), 5.0, energy_params)

    def moments() -> tuple[bool, str]:
        outcomes = run_replicas(
            lambda i: run_chain(u0, 25, ctx.spec, ctx.clock, ctx.params, make_streams(ctx.seed, i)),
            ctx.replicas,
            workers=ctx.workers,
        )
        ctx.record_failures(failure_rate(outcomes))
        chains = successful_values(outcomes)
        gammas = {p: moment_estimate(chains, p, energy_params).gamma for p in (1, 3)}
        c_eps = energy_recursion_fit(chains[0], ctx.calibration.decay_rate, 0.5, energy_params)
        hit = hitting_time_tau_r(chains[0], 1.0)
        return all(g < 1 for g in gammas.values()), f"gamma={gammas}, C_eps={c_eps:.3g}, tau_R(1)={hit}"

    def trajectory() -> tuple[bool, str]:
        exp = ctx.config.experiment
        log = simulate(u0, exp.horizon, exp.time_grid, ctx.spec, ctx.clock, ctx.params, make_streams(ctx.seed), ctx.hook)
        ctx.emit_csv("trajectory.csv", trajectory_columns(4), log.sample_rows(energy_params, 4))
        ctx.emit_json("trajectory_events.json", log.events())
        return not log.diverged, f"{len(log.kick_times)} kicks, status={log.status}"

    _check(verdicts, "poisson_identity", poisson)
    _check(verdicts, "moment_recursion", moments)
    _check(verdicts, "trajectory", trajectory, gated=False)
    return verdicts


# ---------- coupling ----------

def _coupling_suite(ctx: SuiteContext) -> list[CheckVerdict]:
    verdicts: list[CheckVerdict] = []
    config = ctx.config.coupling_config()
    n_draws = 100 * ctx.replicas
    energy_params = ctx.energy_params

    def exactness() -> tuple[bool, str]:
        rng = ctx.rng(4)
        one_d = KickSpec(b=np.array([1.0]), components="real")
        rows = []
        ok = True
        kept_v, kept_w = [], []
        for shift in (0.0, 0.25, 0.5, 1.0, 2.0):
            mp, mq = np.zeros(1), np.array([shift])
            misses = 0
            for _ in range(n_draws):
                v, w, coupled = maximal_coupling_sample(mp, mq, one_d, rng)
                misses += not coupled
                if shift == 0.5:
                    kept_v.append(v[0])
                    kept_w.append(w[0] - shift)
            tv = tv_oracle(mp, mq, one_d).value
            se = math.sqrt(tv * (1 - tv) / n_draws)
            emp = misses / n_draws
            good = abs(emp - tv) <= 3 * se if se > 0 else emp == tv
            ok &= good
            rows.append((shift, emp, tv, se, good))
        three_d = KickSpec(b=np.ones(3), components="real")
        mp, mq = np.zeros(3), np.array([0.3, 0.2, 0.1])
        misses = sum(not maximal_coupling_sample(mp, mq, three_d, rng)[2] for _ in range(n_draws))
        tv = tv_oracle(mp, mq, three_d).value
        se = math.sqrt(tv * (1 - tv) / n_draws)
        good = abs(misses / n_draws - tv) <= 3 * se
        ok &= good
        rows.append(("3d", misses / n_draws, tv, se, good))
        law = stats.uniform(loc=-1.0, scale=2.0)
        p_v = stats.kstest(kept_v, law.cdf).pvalue
        p_w = stats.kstest(kept_w, law.cdf).pvalue
        ctx.emit_csv("coupling_exactness.csv", COUPLING_COLUMNS, rows)
        return ok and min(p_v, p_w) > 0.01, f"marginal KS p-values {p_v:.3f}, {p_w:.3f}"

    rng = ctx.rng(5)
    u = smooth_random_field(ctx.grid, rng, amplitude=0.3)
    perturbation = power_law_random_field(ctx.grid, rng, amplitude=0.05)

    def squeezing() -> tuple[bool, str]:
        traj = run_coupled(u, u + project_high(perturbation, config.N), 20, config, ctx.spec, ctx.clock, ctx.params,
                           make_streams(ctx.seed))
        k = matched_prefix(traj, config.N)
        residual = foias_prodi_probe(traj, 0, k, config).identity_residual if k >= 1 else math.nan
        values = [n for n in (4, 8, 16) if n < ctx.grid.n_modes]
        sweep = squeezing_sweep(u, perturbation, values, 20, ctx.spec, ctx.clock, ctx.params, ctx.seed, config)
        rates = [sweep.mean_log_contraction[n] for n in values]
        improving = all(b < a for a, b in zip(rates, rates[1:])) and all(math.isfinite(r) for r in rates)
        chosen = select_n_prime(sweep)
        ctx.emit_json("squeezing.json", {"values": values, "mean_log_contraction": rates, "selected_n_prime": chosen,
                                         "identity_residual": residual})
        return residual <= 1e-10 and improving, f"residual={residual:.2e}, rates={rates}, N'={chosen}"

    tuned: dict[str, CouplingConfig] = {}

    def slope() -> tuple[bool, str]:
        trajectories = []
        for i in range(max(5, ctx.replicas // 10)):
            r = ctx.rng(100 + i)
            a = _in_ball(smooth_random_field(ctx.grid, r), config.d)
            b = _in_ball(smooth_random_field(ctx.grid, r), config.d)
            trajectories.append(run_coupled(a, b, 10, config, ctx.spec, ctx.clock, ctx.params, make_streams(ctx.seed, i)))
        fit = estimate_coupling_slope(*coupling_samples(trajectories), d=config.d)
        d = config.d if fit.slope <= 0 else min(config.d, 0.25 / fit.slope)
        tuned["config"] = CouplingConfig(config.N, config.N_prime, config.M, d, config.window, config.max_kicks)
        return fit.small_ball_ok, f"slope={fit.slope:.4g}, d*slope={fit.d_times_slope:.3g}, tuned d={d:.4g}"

    def survival() -> tuple[bool, str]:
        cfg = tuned.get("config", config)

        def replica(i: int) -> bool:
            r = ctx.rng(10_000 + i)
            a = _in_ball(smooth_random_field(ctx.grid, r), cfg.d)
            b = _in_ball(smooth_random_field(ctx.grid, r), cfg.d)
            return run_sigma(a, b, cfg, ctx.spec, ctx.clock, ctx.params, make_streams(ctx.seed, i)).sigma is None

        outcomes = run_replicas(replica, ctx.replicas, workers=ctx.workers)
        ctx.record_failures(failure_rate(outcomes))
        survived = successful_values(outcomes)
        n = len(survived)
        if n == 0:
            return False, "every replica failed"
        frac = sum(survived) / n
        sd = math.sqrt(max(frac * (1 - frac), 1e-12) / n)
        return frac >= 0.5 - 2 * sd, f"survival {frac:.3f} over {n} runs (d={cfg.d:.4g}, M={cfg.M})"

    def ell() -> tuple[bool, str]:
        cfg = tuned.get("config", config)
        per_cell = max(2, ctx.replicas // 20)
        base = smooth_random_field(ctx.grid, ctx.rng(20_000))
        base_prime = smooth_random_field(ctx.grid, ctx.rng(20_001))
        starts = [
            (scale_to_energy(base, h, energy_params), scale_to_energy(base_prime, h_prime, energy_params))
            for h in ELL_ENERGIES
            for h_prime in ELL_ENERGIES
        ]

        def replica(i: int) -> EllResult:
            u, u_prime = starts[i // (2 * per_cell)]
            return run_until_ell(u, u_prime, cfg, ctx.spec, ctx.clock, ctx.params, make_streams(ctx.seed, i), ctx.hook)

        outcomes = run_replicas(replica, len(starts) * 2 * per_cell, workers=ctx.workers)
        ctx.record_failures(failure_rate(outcomes))
        loads, doubled, first = [], [], []
        for o in outcomes:
            if not o.ok or o.value is None or not o.value.resolved:
                continue
            u, u_prime = starts[o.index // (2 * per_cell)]
            loads.append(1.0 + energy(u, energy_params) + energy(u_prime, energy_params))
            doubled.append(o.value.ell)
            if o.index % (2 * per_cell) < per_cell:
                first.append(o.value.ell)
        results = successful_values(outcomes)
        if results:
            dumper = EventDumper(enabled=True, path=ctx.out / "couple_events.jsonl", buffer_size=500)
            if dumper.path.exists():
                dumper.path.write_text("")
            dumper.write_many(results[0].events(energy_params), run="0")
            dumper.flush()
            ctx.manifest.files.append(str(dumper.path))
        ctx.emit_csv("stopping.csv", STOPPING_COLUMNS, [r.summary_row() for r in results])
        summary = summarize_ell(results)
        growth = fit_ell_growth(loads, doubled)
        stability = ell_moment_stability(first, doubled)
        ctx.emit_json("ell_growth.json", {
            "intercept": growth.intercept,
            "slope": growth.slope,
            "envelope": growth.envelope,
            "held_out": growth.held_out,
            "cells": growth.rows(),
            "moments_R": stability.first,
            "moments_2R": stability.doubled,
            "relative_change": {p: stability.relative_change(p) for p in stability.first},
            "censored_fraction": summary.censored_fraction,
        })
        return growth.affine and stability.stable, (
            f"E ell={summary.mean:.3g}, E ell^2={summary.second_moment:.3g}, "
            f"change on doubling {stability.relative_change(1):.1%}/{stability.relative_change(2):.1%}, "
            f"slope={growth.slope:.3g}, censored={summary.censored_fraction:.2f}"
        )

    def martingale_tails() -> tuple[bool, str]:
        u0 = scale_to_energy(smooth_random_field(ctx.grid, ctx.rng(30_000)), 2.0, energy_params)
        decay_rate = ctx.calibration.decay_rate
        moment = kick_energy_moment(ctx.spec, ctx.grid, 3, energy_params, ctx.rng(30_001), n=n_draws)

        def replica(i: int) -> EnergyTail:
            chain = run_chain(u0, TAIL_CHAIN_KICKS, ctx.spec, ctx.clock, ctx.params, make_streams(ctx.seed, i))
            return energy_tail(chain, decay_rate, ctx.clock.lam, energy_params, moment)

        outcomes = run_replicas(replica, min(ctx.replicas, TAIL_REPLICAS), workers=ctx.workers)
        ctx.record_failures(failure_rate(outcomes))
        tails = successful_values(outcomes)
        if not tails:
            return False, "every replica failed"
        resolved = [t for t in tails if t.resolved]
        frac = len(resolved) / len(tails)
        mean_tail = float(np.mean([t.tail for t in resolved])) if resolved else math.nan
        worst = max((t.cesaro_after_tail() for t in resolved), default=math.nan)
        return frac >= TAIL_RESOLVED_FRACTION, (
            f"resolved {frac:.2f} of {len(tails)} chains, mean T={mean_tail:.3g}, max <H^3> after T={worst:.3g}"
        )

    _check(verdicts, "maximal_coupling_exactness", exactness)
    _check(verdicts, "squeezing", squeezing)
    _check(verdicts, "coupling_slope", slope, gated=False)
    _check(verdicts, "sigma_survival", survival)
    _check(verdicts, "ell_tails", ell)
    _check(verdicts, "martingale_tails", martingale_tails)
    return verdicts


def _in_ball(u: SpectralField, d: float) -> SpectralField:
    """u rescaled to ||u||_1 = d / 2."""
    return u * (0.5 * d / u.norm_h1())


# ---------- mixing ----------

def _mixing_suite(ctx: SuiteContext) -> list[CheckVerdict]:
    verdicts: list[CheckVerdict] = []

    def mixing() -> tuple[bool, str]:
        u0_a = scale_to_energy(smooth_random_field(ctx.grid, ctx.rng(6)), 10.0, ctx.energy_params)
        u0_b = SpectralField.zeros(ctx.grid)
        curve = mixing_curve(
            u0_a, u0_b, ctx.config.experiment.time_grid, ctx.replicas, ctx.spec, ctx.clock, ctx.params,
            ctx.seed, workers=ctx.workers,
        )
        ctx.record_failures(curve.divergence_rate)
        ctx.emit_csv("mixing.csv", MIXING_COLUMNS, curve.rows())
        ctx.emit_json("mixing_fit.json", curve.summary())
        hit = curve.time_to_threshold(MIXING_THRESHOLD)
        tol = float(np.max(curve.ci[:, 1] - curve.ci[:, 0])) / 2.0
        trend = moving_median_nonincreasing(curve.values[1:], window=min(5, curve.values.size - 1), tol=tol)
        ok = curve.valid and hit is not None and hit <= 50.0 / ctx.clock.lam and trend
        return ok, f"threshold time={hit}, trend={trend}, preferred={curve.preferred_model}"

    _check(verdicts, "mixing", mixing)
    return verdicts


# ---------- stationary ----------

def _stationary_suite(ctx: SuiteContext) -> list[CheckVerdict]:
    verdicts: list[CheckVerdict] = []
    horizon = max(ctx.config.experiment.horizon, 2.0 * ctx.replicas / ctx.clock.lam)
    burn_in = horizon / 4.0
    interval = (horizon - burn_in) / (2 * ctx.replicas)
    energy_params = ctx.energy_params
    dictionary = TestDictionary.default()
    state: dict[str, Any] = {}

    def proxy() -> tuple[bool, str]:
        p = krylov_bogolyubov_estimate(
            SpectralField.zeros(ctx.grid), burn_in, horizon, interval, ctx.spec, ctx.clock, ctx.params, ctx.seed,
            dictionary,
        )
        state["proxy"] = p
        mean_h = p.mean_energy(energy_params)
        ctx.emit_json("stationary.json", {
            "horizon": horizon,
            "burn_in": burn_in,
            "samples": len(p.continuous),
            "kick_samples": len(p.embedded),
            "mean_energy": mean_h,
            "halves_distance": None if p.halves is None else p.halves.value,
            "converged": p.converged,
        })
        return p.converged and math.isfinite(mean_h), f"int H dmu ~ {mean_h:.4g}, converged={p.converged}"

    def khasminskii() -> tuple[bool, str]:
        p = state["proxy"]
        functionals = [
            constant_functional(),
            next(f for f in dictionary.functionals if f.name == "min1_norm/1"),
            dictionary.functionals[0],
        ]
        reports = [
            khasminskii_check(f, p, ctx.spec, ctx.clock, ctx.params, ctx.seed, n_restarts=10 * ctx.replicas)
            for f in functionals
        ]
        ctx.emit_csv("khasminskii.csv", KHASMINSKII_COLUMNS, [r.row() for r in reports])
        return all(r.passed for r in reports), ", ".join(f"{r.functional}: {r.lhs:.3f}/{r.rhs:.3f}" for r in reports)

    def drift() -> tuple[bool, str]:
        p = state.get("proxy")
        norms = [u.norm_h1() for u in p.continuous.states] if p is not None else [1.0]
        r_values = [float(np.percentile(norms, q)) for q in (50, 90)]
        base = smooth_random_field(ctx.grid, ctx.rng(7))
        grid = [scale_to_energy(base, h, energy_params) for h in (2.0, 8.0, 32.0)]
        report = lyapunov_probe(
            grid, (1, 2, 4, 8), 1.0, r_values, ctx.spec, ctx.clock, ctx.params, energy_params, ctx.seed,
            replicas=max(20, ctx.replicas // 5), workers=ctx.workers,
        )
        ctx.emit_csv("drift.csv", DRIFT_COLUMNS, report.rows())
        return report.a < 1 and not report.degenerate, f"n={report.n}, R'={report.r_prime:.3g}, a={report.a:.3g}"

    def invariance() -> tuple[bool, str]:
        p = state["proxy"]
        report = stationary_invariance_check(p.embedded, dictionary, ctx.spec, ctx.clock, ctx.params, ctx.seed)
        return report.passed, f"{len(p.embedded)} kick-time samples"

    _check(verdicts, "stationary_proxy", proxy, gated=False)
    if "proxy" in state:
        _check(verdicts, "khasminskii", khasminskii)
        _check(verdicts, "stationary_invariance", invariance, gated=False)
    else:
        verdicts.append(CheckVerdict("khasminskii", False, True, "no stationary proxy"))
    _check(verdicts, "lyapunov_drift", drift)
    return verdicts


SUITES: dict[str, Callable[[SuiteContext], list[CheckVerdict]]] = {
    "flow": _flow_suite,
    "kicks": _kicks_suite,
    "coupling": _coupling_suite,
    "mixing": _mixing_suite,
    "stationary": _stationary_suite,
}


def run_suite(name: str, config: RunConfig, hook: SimulationHook = NULL_HOOK) -> RunManifest:
    """Run one suite (or ``all``) and write ``manifest.json`` in the output directory."""
    from . import __version__

    if name != "all" and name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {(*SUITE_ORDER, 'all')}")
    names = SUITE_ORDER if name == "all" else (name,)
    manifest = RunManifest(
        config.config_hash(), __version__, config.experiment.seed, failure_budget=config.experiment.failure_budget
    )
    start = time.perf_counter()
    ctx = SuiteContext(config, manifest, hook)
    try:
        ctx.out.mkdir(parents=True, exist_ok=True)
        for suite in names:
            verdicts = SUITES[suite](ctx)
            manifest.suites[suite] = verdicts
            hook.on_suite_complete(suite, {v.name: v.passed for v in verdicts})
    except KickedCGLError as e:
        manifest.errors.append(f"{type(e).__name__}: {e}")
    finally:
        manifest.wall_time = time.perf_counter() - start
        manifest.files.append(str(ctx.out / "manifest.json"))
        manifest.write(ctx.out / "manifest.json")
    return manifest


__all__ = ["CheckVerdict", "RunManifest", "SuiteContext", "SUITE_ORDER", "run_suite"]
