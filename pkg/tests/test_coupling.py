#!/usr/bin/env python3
"""Tests for maximal coupling, coupled steps, squeezing and stopping times."""

import math

import numpy as np
import pytest
from scipy import stats

from kicked_cgl.coupling import (
    CoupledPair,
    CouplingConfig,
    EllResult,
    EnergyTail,
    SqueezingSweep,
    StoppingRecord,
    check_low_noise,
    coupled_step,
    coupling_samples,
    ell_moment_stability,
    energy_tail,
    estimate_coupling_slope,
    fit_ell_growth,
    foias_prodi_probe,
    martingale_tail_detector,
    matched_prefix,
    maximal_coupling_sample,
    run_coupled,
    run_sigma,
    run_until_ell,
    select_n_prime,
    shifted_density,
    squeezing_sweep,
    stopping_update,
    summarize_ell,
    tv_oracle,
)
from kicked_cgl.errors import (
    CouplingConfigurationError,
    InsufficientDataError,
    ModeError,
    ModeIndexError,
    NumericalDegeneracyError,
    ProbeInvalidError,
)
from kicked_cgl.flow import FlowParams, evolve
from kicked_cgl.kicks import (
    ClockSpec,
    KickSpec,
    embedded_step,
    energy_martingales,
    kick_energy_moment,
    make_streams,
    run_chain,
)
from kicked_cgl.spectral import (
    EnergyParams,
    Grid,
    SpectralField,
    project_high,
    scale_to_energy,
    smooth_random_field,
)


@pytest.fixture
def grid():
    return Grid(n_modes=8)


@pytest.fixture
def long_grid():
    # alpha_j = j^2 / 100 keeps linear decay well above roundoff
    return Grid(length=10 * math.pi, n_modes=8)


@pytest.fixture
def spec():
    return KickSpec.power_law(8, b0=0.5, decay=1.0)


@pytest.fixture
def params():
    return FlowParams(dt_max=0.05)


@pytest.fixture
def config():
    return CouplingConfig(N=4, N_prime=4, M=10.0, d=0.5, window=20, max_kicks=60)


def one_dim(family="uniform_symmetric", b=1.0):
    return KickSpec(b=np.array([b, 1.0]), family=family, components="real")


class TestConfig:
    """Test coupling configuration checks."""

    @pytest.mark.parametrize(
        "kwargs",
        [{"N": 2, "N_prime": 3}, {"N_prime": 0}, {"M": 0.0}, {"d": 0.0}, {"d": 1.5}, {"window": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            CouplingConfig(**kwargs)

    def test_cutoff_below_grid(self, grid):
        with pytest.raises(ModeIndexError):
            CouplingConfig(N=8, N_prime=8).check_grid(grid)

    def test_low_noise_required(self):
        spec = KickSpec.power_law(8, n_active=2)
        check_low_noise(spec, 2)
        with pytest.raises(CouplingConfigurationError, match="j=\\[3, 4\\]"):
            check_low_noise(spec, 4)


class TestMaximalCoupling:
    """Test the coupled draw of two shifted kick laws."""

    def test_shifted_density_uniform(self):
        spec = one_dim(b=0.5)
        assert shifted_density(np.array([0.2]), np.array([0.0]), spec) == pytest.approx(1.0)
        assert shifted_density(np.array([0.7]), np.array([0.0]), spec) == 0.0

    def test_equal_means_always_coupled(self, spec):
        mean = np.linspace(-1, 1, 6)
        v, w, coupled = maximal_coupling_sample(mean, mean, spec, np.random.default_rng(0))
        assert coupled
        assert np.array_equal(v, w)

    def test_disjoint_supports_never_coupled(self):
        spec = one_dim()
        v, w, coupled = maximal_coupling_sample(np.array([0.0]), np.array([5.0]), spec, np.random.default_rng(1))
        assert not coupled
        assert abs(v[0]) <= 1.0
        assert abs(w[0] - 5.0) <= 1.0

    def test_rejection_cap(self):
        with pytest.raises(NumericalDegeneracyError):
            maximal_coupling_sample(
                np.array([0.0]), np.array([5.0]), one_dim(), np.random.default_rng(2), max_iter=0
            )

    def test_mean_validation(self, spec):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            maximal_coupling_sample(np.zeros(4), np.zeros(6), spec, rng)
        with pytest.raises(ValueError):
            maximal_coupling_sample(np.full(4, np.nan), np.zeros(4), spec, rng)

    @pytest.mark.parametrize("family", ["uniform_symmetric", "triangular", "truncated_gaussian"])
    def test_marginals_and_disagreement(self, family):
        """Each component has the right law; P(v != v') matches the TV distance."""
        spec = one_dim(family)
        rng = np.random.default_rng(3)
        shift = 0.5
        draws = [maximal_coupling_sample(np.array([0.0]), np.array([shift]), spec, rng) for _ in range(4000)]
        v = np.array([d[0][0] for d in draws])
        w = np.array([d[1][0] for d in draws])
        law = spec.law
        assert stats.kstest(v, law.cdf).pvalue > 1e-3
        assert stats.kstest(w - shift, law.cdf).pvalue > 1e-3
        disagree = np.mean([not d[2] for d in draws])
        tv = tv_oracle(np.array([0.0]), np.array([shift]), spec).value
        se = math.sqrt(tv * (1 - tv) / 4000)
        assert abs(disagree - tv) <= 4 * se


class TestTVOracle:
    """Test the total-variation oracle."""

    def test_exact_uniform(self):
        tv = tv_oracle(np.array([0.0]), np.array([0.5]), one_dim(), mode="exact")
        assert tv.value == pytest.approx(0.25)
        assert tv.low == tv.high == tv.value

    def test_exact_product(self):
        spec = KickSpec(b=np.ones(3), components="real")
        tv = tv_oracle(np.zeros(2), np.array([0.5, 1.0]), spec, mode="exact")
        assert tv.value == pytest.approx(1 - 0.75 * 0.5)

    def test_quadrature_agrees_with_exact(self):
        spec = one_dim()
        exact = tv_oracle(np.array([0.0]), np.array([0.3]), spec, mode="exact").value
        quad = tv_oracle(np.array([0.0]), np.array([0.3]), spec, mode="quadrature").value
        assert quad == pytest.approx(exact, abs=1e-3)

    def test_mc_interval_covers_quadrature(self):
        spec = one_dim("triangular")
        quad = tv_oracle(np.array([0.0]), np.array([0.4]), spec, mode="quadrature").value
        mc = tv_oracle(
            np.array([0.0]), np.array([0.4]), spec, mode="mc", n_samples=50_000, rng=np.random.default_rng(4)
        )
        assert mc.low - 1e-3 <= quad <= mc.high + 1e-3

    def test_auto_modes(self, spec):
        assert tv_oracle(np.zeros(2), np.ones(2), spec).mode == "exact"
        tri = KickSpec.power_law(8, family="triangular")
        assert tv_oracle(np.zeros(2), np.ones(2), tri).mode == "quadrature"
        assert tv_oracle(np.zeros(8), np.ones(8), tri, n_samples=1000).mode == "mc"

    def test_mode_errors(self, spec):
        tri = KickSpec.power_law(8, family="triangular")
        with pytest.raises(ModeError):
            tv_oracle(np.zeros(2), np.ones(2), tri, mode="exact")
        with pytest.raises(ModeError):
            tv_oracle(np.zeros(4), np.ones(4), tri, mode="quadrature")
        with pytest.raises(ModeError):
            tv_oracle(np.zeros(2), np.ones(2), spec, mode="bogus")

    def test_far_means(self):
        assert tv_oracle(np.array([0.0]), np.array([3.0]), one_dim()).value == 1.0


class TestCoupledStep:
    """Test one step of the coupled pair."""

    def test_identical_states_stay_identical(self, grid, spec, params, config):
        u = smooth_random_field(grid, np.random.default_rng(0))
        traj = run_coupled(u, u, 5, config, spec, ClockSpec(), params, make_streams(1))
        assert len(traj) == 6
        assert all(p.coupled and p.distance_h1() == 0.0 for p in traj)
        assert [p.k for p in traj] == list(range(6))

    def test_step_structure(self, grid, spec, params, config):
        u = smooth_random_field(grid, np.random.default_rng(1))
        v = smooth_random_field(grid, np.random.default_rng(2))
        nxt = coupled_step(CoupledPair(u, v), config, spec, ClockSpec(), params, make_streams(2))
        assert nxt.k == 1
        assert nxt.waiting_time > 0
        assert nxt.high_kicks_shared(config.N)
        np.testing.assert_allclose(
            nxt.u.coeffs, (evolve(u, nxt.waiting_time, params) + nxt.zeta).coeffs, atol=1e-12
        )
        np.testing.assert_allclose(
            nxt.u_prime.coeffs, (evolve(v, nxt.waiting_time, params) + nxt.zeta_prime).coeffs, atol=1e-12
        )
        assert nxt.flow_distance > 0
        assert nxt.matched(config.N) == nxt.coupled

    def test_close_pair_couples(self, grid, spec, params, config):
        """Low modes that differ only through the flow are glued by the kick."""
        u = smooth_random_field(grid, np.random.default_rng(1))
        pert = smooth_random_field(grid, np.random.default_rng(2), amplitude=1e-3)
        v = u + project_high(pert, config.N)
        nxt = coupled_step(CoupledPair(u, v), config, spec, ClockSpec(), params, make_streams(2))
        su = evolve(u, nxt.waiting_time, params)
        sv = evolve(v, nxt.waiting_time, params)
        assert not np.array_equal(su.coeffs[: config.N], sv.coeffs[: config.N])
        assert nxt.coupled
        assert nxt.matched(config.N)
        assert nxt.high_kicks_shared(config.N)

    @pytest.mark.slow
    def test_marginals_match_embedded_chain(self, grid, spec, params, config):
        """Each component of a coupled step has the law of one embedded step."""
        u = smooth_random_field(grid, np.random.default_rng(3), amplitude=0.3)
        u_prime = smooth_random_field(grid, np.random.default_rng(4), amplitude=0.3)
        n = 400
        coupled = [
            coupled_step(CoupledPair(u, u_prime), config, spec, ClockSpec(), params, make_streams(20, i))
            for i in range(n)
        ]

        def features(states):
            return {
                "low": np.array([s.coeffs[0].real for s in states]),
                "high": np.array([s.coeffs[config.N].real for s in states]),
                "norm": np.array([s.norm_h1() for s in states]),
            }

        for start, side in ((u, [p.u for p in coupled]), (u_prime, [p.u_prime for p in coupled])):
            reference = [embedded_step(start, spec, ClockSpec(), params, make_streams(21, i))[0] for i in range(n)]
            got, want = features(side), features(reference)
            for key in got:
                assert stats.ks_2samp(got[key], want[key]).pvalue > 1e-3, key

    def test_pair_helpers(self, grid):
        a = SpectralField.basis(grid, 1, 0.3)
        b = SpectralField.basis(grid, 2, 0.1)
        pair = CoupledPair(a, b)
        assert pair.distance_h1() == pytest.approx(math.sqrt(0.09 + 0.04))
        assert pair.in_ball(0.31)
        assert not pair.in_ball(0.25)
        assert not pair.matched(2)
        assert pair.matched(0)
        event = pair.event(EnergyParams())
        assert event["k"] == 0 and event["coupled"]

    def test_coupling_samples(self, grid, spec, params, config):
        u = smooth_random_field(grid, np.random.default_rng(3))
        traj = run_coupled(u, SpectralField.zeros(grid), 4, config, spec, ClockSpec(), params, make_streams(3))
        dist, fail = coupling_samples([traj, traj])
        assert dist.shape == (8,) and fail.dtype == bool
        empty_dist, empty_fail = coupling_samples([])
        assert empty_dist.size == 0 and empty_fail.size == 0


class TestSqueezing:
    """Test contraction measurements on matched stretches."""

    def matched_run(self, grid, spec, params, config, steps=5):
        u = smooth_random_field(grid, np.random.default_rng(4))
        pert = smooth_random_field(grid, np.random.default_rng(5), amplitude=1e-4)
        u_prime = u + project_high(pert, config.N)
        return run_coupled(u, u_prime, steps, config, spec, ClockSpec(), params, make_streams(6))

    def test_contraction_on_matched_stretch(self, grid, spec, params, config):
        traj = self.matched_run(grid, spec, params, config)
        k = matched_prefix(traj, config.N)
        assert k >= 1
        report = foias_prodi_probe(traj, 0, k, config)
        assert report.identity_residual <= 1e-10
        assert report.factors.shape == (k,)
        assert report.distances.shape == (k + 1,)
        assert report.fitted_c > 0

    def test_linear_factors_are_exact(self, long_grid, spec):
        """Without the cubic term a single high mode decays at exp(-alpha t)."""
        config = CouplingConfig(N=4, N_prime=4, window=20, max_kicks=60)
        linear = FlowParams(beta=0.0)
        u = smooth_random_field(long_grid, np.random.default_rng(4))
        u_prime = u + SpectralField.basis(long_grid, config.N + 1, 1e-2)
        traj = run_coupled(u, u_prime, 6, config, spec, ClockSpec(), linear, make_streams(6))
        assert matched_prefix(traj, config.N) == 6
        report = foias_prodi_probe(traj, 0, 6, config)
        t = np.array([p.waiting_time for p in traj[1:]])
        expected = np.exp(-long_grid.eigenvalues[config.N] * t)
        np.testing.assert_allclose(report.factors, expected, rtol=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_constant_holds_on_unseen_pairs(self, long_grid, spec, seed):
        """sqrt(x) e^{-x} <= 1/sqrt(2e) bounds every linear factor without refitting."""
        config = CouplingConfig(N=4, N_prime=4, window=20, max_kicks=60)
        linear = FlowParams(beta=0.0)
        universal = 1.0 / math.sqrt(2.0 * math.e)
        rng = np.random.default_rng(100 + seed)
        u = smooth_random_field(long_grid, rng)
        pert = smooth_random_field(long_grid, rng, amplitude=1e-2, rate=0.1)
        traj = run_coupled(u, u + project_high(pert, config.N), 8, config, spec, ClockSpec(), linear,
                           make_streams(200 + seed))
        held = foias_prodi_probe(traj, 0, 8, config, constant=universal)
        assert held.fitted_c == universal
        assert np.all(held.factors <= held.predictors * (1 + 1e-9))
        fitted = foias_prodi_probe(traj, 0, 8, config)
        assert fitted.fitted_c <= universal * (1 + 1e-6)

    def test_contraction_index_range(self, grid, spec, params, config):
        traj = self.matched_run(grid, spec, params, config, steps=2)
        with pytest.raises(ValueError):
            foias_prodi_probe(traj, 1, 1, config)
        with pytest.raises(ValueError):
            foias_prodi_probe(traj, 0, 5, config)

    def test_contraction_rejects_unmatched(self, grid, spec, params, config):
        u = SpectralField.basis(grid, 1, 0.5)
        pair = CoupledPair(u, SpectralField.zeros(grid), k=1, waiting_time=1.0)
        with pytest.raises(ProbeInvalidError):
            foias_prodi_probe([CoupledPair(u, u), pair], 0, 1, config)

    def test_select_n_prime(self):
        sweep = SqueezingSweep([2, 4, 8], {2: -0.5, 4: -1.5, 8: -3.0})
        assert select_n_prime(sweep) == 4
        assert sweep.per_step_contraction(8) == pytest.approx(math.exp(-3.0))
        assert select_n_prime(SqueezingSweep([2], {2: math.nan})) is None

    def test_linear_sweep_improves_with_cutoff(self, long_grid, spec):
        """Raising N' removes slower modes from the difference."""
        linear = FlowParams(beta=0.0)
        u = smooth_random_field(long_grid, np.random.default_rng(7))
        pert = smooth_random_field(long_grid, np.random.default_rng(8), amplitude=1e-2, rate=0.1)
        sweep = squeezing_sweep(u, pert, [2, 4, 6], 4, spec, ClockSpec(), linear, seed=9)
        rates = [sweep.mean_log_contraction[v] for v in (2, 4, 6)]
        assert all(math.isfinite(r) for r in rates)
        assert rates[0] > rates[1] > rates[2]

    def test_weakly_nonlinear_sweep_improves_with_cutoff(self, long_grid):
        weak = KickSpec.power_law(8, b0=0.01)
        params = FlowParams(beta=1.0, dt_max=0.05)
        u = smooth_random_field(long_grid, np.random.default_rng(10), amplitude=0.05)
        pert = smooth_random_field(long_grid, np.random.default_rng(11), amplitude=1e-3, rate=0.1)
        sweep = squeezing_sweep(u, pert, [2, 4, 6], 4, weak, ClockSpec(), params, seed=12)
        rates = [sweep.mean_log_contraction[v] for v in (2, 4, 6)]
        assert rates[0] > rates[1] > rates[2]
        assert select_n_prime(sweep, threshold=math.exp(rates[1] + 1e-9)) == 4


class TestStoppingTimes:
    """Test T1, T2, T3 bookkeeping."""

    def test_t1_fires_on_large_norm(self, grid):
        record = StoppingRecord(M=1.0)
        record.begin_cycle(0)
        zero = SpectralField.zeros(grid)
        record.update(CoupledPair(zero, zero), 4)
        big = SpectralField.basis(grid, 1, 2.0)
        record.update(CoupledPair(big, big, k=1, waiting_time=1.0), 4)
        assert record.t1 == 1
        assert record.sigma == 1

    def test_t2_fires_on_short_wait(self, grid):
        record = StoppingRecord(M=1.0)
        record.begin_cycle(0)
        zero = SpectralField.zeros(grid)
        record.update(CoupledPair(zero, zero), 4)
        record.update(CoupledPair(zero, zero, k=1, waiting_time=1e-3), 4)
        assert record.t2 == 1
        assert record.t1 is None

    def test_t3_fires_on_mismatch(self, grid):
        record = StoppingRecord(M=100.0)
        record.begin_cycle(3)
        zero = SpectralField.zeros(grid)
        other = SpectralField.basis(grid, 2, 0.01)
        record.update(CoupledPair(zero, other, k=3, waiting_time=1.0), 4)
        assert record.t3 is None
        record.update(CoupledPair(zero, other, k=4, waiting_time=1.0), 4)
        assert record.t3 == 4

    def test_updates_are_idempotent(self, grid):
        record = StoppingRecord(M=1.0)
        record.begin_cycle(0)
        zero = SpectralField.zeros(grid)
        pair = CoupledPair(zero, zero, k=0)
        stopping_update(record, [pair, pair, pair], CouplingConfig())
        assert record.last == 0
        with pytest.raises(ValueError):
            stopping_update(record, [], CouplingConfig())

    def test_cycles_must_increase(self):
        record = StoppingRecord(M=1.0)
        record.begin_cycle(5)
        with pytest.raises(ValueError):
            record.begin_cycle(5)
        record.begin_cycle(6)
        assert record.rho == [5, 6]
        assert record.cycles == 2

    def test_run_sigma_immediate(self, grid, spec, params, config):
        u = SpectralField.basis(grid, 1, 1.0)
        tiny = CouplingConfig(N=4, N_prime=4, M=1e-6)
        record = run_sigma(u, u, tiny, spec, ClockSpec(), params, make_streams(0))
        assert record.sigma == 0

    def test_ell_from_rest(self, grid, spec, params, config):
        """From u = u' = 0 the pair is in B_d at once and stays coupled."""
        zero = SpectralField.zeros(grid)
        result = run_until_ell(zero, zero, config, spec, ClockSpec(), params, make_streams(10))
        assert result.resolved
        assert result.ell == 0
        row = result.summary_row()
        assert row["window"] == config.window
        assert row["steps"] == config.window
        assert len(result.events(EnergyParams())) == config.window + 1

    def test_ell_unresolved(self, grid, spec, params):
        config = CouplingConfig(N=4, N_prime=4, d=1e-6, max_kicks=10)
        u = SpectralField.basis(grid, 1, 1.0)
        result = run_until_ell(u, u, config, spec, ClockSpec(), params, make_streams(11))
        assert not result.resolved
        assert result.record.unresolved
        assert result.trajectory[-1].k == 10

    def test_ell_needs_low_noise(self, grid, params, config):
        spec = KickSpec.power_law(8, n_active=2)
        zero = SpectralField.zeros(grid)
        with pytest.raises(CouplingConfigurationError):
            run_until_ell(zero, zero, config, spec, ClockSpec(), params, make_streams(0))

    @pytest.mark.parametrize("seed", range(5))
    def test_low_modes_glued_after_ell(self, grid, spec, params, seed):
        """From distinct starts, P_N u_k = P_N u'_k for every k > ell."""
        config = CouplingConfig(N=4, N_prime=4, M=10.0, d=1.0, window=20, max_kicks=300)
        u = SpectralField.basis(grid, 1, 0.1)
        u_prime = SpectralField.basis(grid, 2, 0.05)
        result = run_until_ell(u, u_prime, config, spec, ClockSpec(), params, make_streams(30, seed))
        traj = result.trajectory
        assert not traj[0].matched(config.N)
        assert [p.k for p in traj] == list(range(len(traj)))
        if not result.resolved:
            assert result.record.unresolved
            return
        ell = result.ell
        assert traj[ell].in_ball(config.d)
        assert len(traj) == ell + config.window + 1
        assert all(p.matched(config.N) and p.coupled for p in traj[ell + 1 :])

    def test_some_runs_resolve(self, grid, spec, params):
        config = CouplingConfig(N=4, N_prime=4, M=10.0, d=1.0, window=20, max_kicks=300)
        u = SpectralField.basis(grid, 1, 0.1)
        u_prime = SpectralField.basis(grid, 2, 0.05)
        results = [
            run_until_ell(u, u_prime, config, spec, ClockSpec(), params, make_streams(30, seed))
            for seed in range(5)
        ]
        assert any(r.resolved for r in results)

    def test_summarize_ell(self):
        def result(ell):
            record = StoppingRecord(M=1.0, ell=ell, unresolved=ell is None)
            return EllResult(record, [], 10)

        summary = summarize_ell([result(2), result(4), result(None)])
        assert summary.runs == 3
        assert summary.resolved == 2
        assert summary.mean == pytest.approx(3.0)
        assert summary.second_moment == pytest.approx(10.0)
        assert summary.censored_fraction == pytest.approx(1 / 3)
        assert math.isnan(summarize_ell([result(None)]).mean)


class TestTailsAndSlope:
    """Test the martingale tail detector and the coupling slope fit."""

    @pytest.mark.parametrize(
        "series,expected",
        [([], 1), ([0.5, 0.5], 1), ([3.0, 0.5, 0.1], 2), ([0.1, 5.0], None), ([0.1, 5.0, 0.2, 0.3], 3)],
    )
    def test_tail_detector(self, series, expected):
        assert martingale_tail_detector(series) == expected

    def test_slope_recovers_rate(self):
        rng = np.random.default_rng(12)
        x = rng.uniform(0, 0.5, 20_000)
        fail = rng.random(x.size) < 0.8 * x
        slope = estimate_coupling_slope(x, fail, d=1.0, quantile=1.0)
        assert slope.slope == pytest.approx(0.8, rel=0.1)
        assert slope.samples == x.size
        assert not slope.small_ball_ok

    def test_slope_without_failures(self):
        slope = estimate_coupling_slope([0.1, 0.2, 0.3], [False] * 3, d=0.5)
        assert slope.slope == 0.0
        assert slope.small_ball_ok

    def test_slope_shapes(self):
        with pytest.raises(ValueError):
            estimate_coupling_slope([0.1], [True], d=0.5)

    @pytest.mark.slow
    def test_energy_tail_on_chain(self, grid, spec, params):
        energy_params = EnergyParams()
        u0 = scale_to_energy(smooth_random_field(grid, np.random.default_rng(13)), 2.0, energy_params)
        chain = run_chain(u0, 150, spec, ClockSpec(), params, make_streams(14))
        moment = kick_energy_moment(spec, grid, 3, energy_params, np.random.default_rng(15), n=2000)
        tail = energy_tail(chain, 1.0, 1.0, energy_params, moment)
        assert tail.resolved
        decay, kicks = energy_martingales(chain, 1.0, 1.0, energy_params, moment)
        k = np.arange(1, decay.size + 1)
        for series in (decay, kicks):
            assert np.all(np.abs(series[tail.tail - 1 :]) / k[tail.tail - 1 :] <= 1.0)
        cubes = chain.energies(energy_params) ** 3
        np.testing.assert_allclose(tail.cesaro, np.cumsum(cubes) / np.arange(1, cubes.size + 1))
        assert tail.cesaro_after_tail() == pytest.approx(tail.cesaro[tail.tail :].max())

    def test_energy_tail_properties(self):
        cesaro = np.array([8.0, 4.0, 3.0, 2.5])
        assert EnergyTail(2, 3, cesaro).tail == 3
        assert EnergyTail(2, 3, cesaro).cesaro_after_tail() == 2.5
        assert EnergyTail(None, 3, cesaro).tail is None
        assert not EnergyTail(2, None, cesaro).resolved
        assert math.isnan(EnergyTail(5, 1, cesaro).cesaro_after_tail())

    def test_energy_tail_needs_kicks(self, grid):
        with pytest.raises(ValueError):
            energy_tail(run_chain(SpectralField.zeros(grid), 0, KickSpec.power_law(8), ClockSpec(),
                                  FlowParams(), make_streams(0)), 1.0, 1.0, EnergyParams(), 1.0)


class TestEllGrowth:
    """Test the affine fit of ell on the load and the moment stability check."""

    def test_affine_data(self):
        loads = np.repeat([2.0, 3.0, 4.0, 5.0, 6.0], 30)
        # zero-mean spread within each load
        ells = 1.0 + 2.0 * loads + np.tile(np.linspace(-1.0, 1.0, 30), 5)
        growth = fit_ell_growth(loads, ells)
        assert growth.affine
        assert growth.slope == pytest.approx(2.0)
        assert growth.intercept == pytest.approx(1.0)
        assert growth.held_out == [5.0, 6.0]
        assert [c[3] for c in growth.cells] == [30] * 5
        assert growth.envelope == pytest.approx(max(c[1] / c[0] for c in growth.cells))
        assert growth.rows()[0]["load"] == 2.0

    def test_quadratic_data_rejected(self):
        rng = np.random.default_rng(17)
        loads = np.repeat([2.0, 3.0, 4.0, 5.0, 6.0], 30)
        ells = 3.0 * loads**2 + rng.normal(0.0, 0.5, loads.size)
        assert not fit_ell_growth(loads, ells).affine

    def test_needs_three_loads(self):
        with pytest.raises(InsufficientDataError):
            fit_ell_growth([2.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            fit_ell_growth([2.0, 3.0], [1.0])

    def test_stable_when_doubling_repeats_the_sample(self):
        first = np.arange(1.0, 21.0)
        stability = ell_moment_stability(first, np.concatenate([first, first]))
        assert stability.stable
        assert stability.relative_change(1) == 0.0
        assert stability.relative_change(2) == 0.0
        low, high = stability.intervals[1]
        assert low <= stability.first[1] <= high

    def test_unstable_when_tail_appears(self):
        first = np.arange(1.0, 21.0)
        stability = ell_moment_stability(first, np.concatenate([first, np.full(20, 100.0)]))
        assert not stability.stable
        assert stability.relative_change(1) > 0.1
