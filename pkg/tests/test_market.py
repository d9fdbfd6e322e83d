"""Market scenarios, claim-size fits and wealth propagation."""

import logging

import numpy as np
import pytest

from volterra_ri.errors import FitError, ParameterError, ShapeError
from volterra_ri.kernels import DiscreteGrid
from volterra_ri.market import (
    ClaimFamily,
    MarketParams,
    moment_fit,
    propagate_wealth,
    simulate_scenarios,
)


@pytest.fixture
def market():
    return MarketParams()


@pytest.fixture
def gamma_claims():
    return moment_fit("gamma", 1.0, 1.2)


def flat_intensity(n_paths, grid, level=0.2):
    return np.full((n_paths, len(grid)), level)


class TestMarketParams:
    def test_defaults(self, market):
        assert market.nu1(0.0) == pytest.approx(0.02)
        assert market.constant_rates

    def test_eta_below_theta(self):
        with pytest.raises(ParameterError):
            MarketParams(theta=0.3, eta=0.2)

    def test_nonpositive_sigma(self):
        with pytest.raises(ParameterError):
            MarketParams(sigma=0.0)

    def test_rate_integral_callable(self):
        m = MarketParams(r=lambda t: 0.05 + 0.01 * t)
        assert m.rate_integral(0.0, 2.0) == pytest.approx(0.12, rel=1e-10)
        assert not m.constant_rates

    def test_rate_integral_vectorized(self, market):
        np.testing.assert_allclose(market.rate_integral(np.array([0.0, 1.0]), 3.0), [0.15, 0.10])


class TestClaims:
    @pytest.mark.parametrize("family", ["gamma", "lognormal", "bounded_uniform"])
    def test_moment_fit(self, family):
        c = moment_fit(family, 1.0, 1.2)
        assert float(c.dist.mean()) == pytest.approx(1.0, rel=1e-12)
        assert float(c.dist.moment(2)) == pytest.approx(1.2, rel=1e-12)
        x = c.sample(np.random.default_rng(0), 200000)
        assert x.mean() == pytest.approx(1.0, abs=4 * np.sqrt(0.2 / 200000))
        assert np.all(x >= 0)

    def test_exponential_needs_matching_moments(self):
        with pytest.raises(FitError):
            moment_fit("exponential", 1.0, 1.2)
        assert moment_fit("exponential", 1.0, 2.0).family is ClaimFamily.EXPONENTIAL

    def test_uniform_cannot_go_negative(self):
        with pytest.raises(FitError):
            moment_fit("bounded_uniform", 1.0, 3.0)

    def test_moment_inequality(self):
        with pytest.raises(FitError):
            moment_fit("gamma", 1.0, 0.9)

    def test_point_mass(self):
        c = moment_fit("bounded_uniform", 1.0, 1.0)
        np.testing.assert_array_equal(c.sample(np.random.default_rng(0), 4), 1.0)
        with pytest.raises(FitError):
            moment_fit("gamma", 1.0, 1.0)

    def test_cap(self):
        c = moment_fit("bounded_uniform", 1.0, 1.2, z_max=2.0)
        assert c.bounded and c.support_max == pytest.approx(1.0 + np.sqrt(0.6))
        with pytest.raises(FitError):
            moment_fit("bounded_uniform", 1.0, 1.2, z_max=1.5)
        with pytest.raises(FitError):
            moment_fit("gamma", 1.0, 1.2, z_max=5.0)

    def test_unknown_family(self):
        with pytest.raises(FitError):
            moment_fit("pareto", 1.0, 1.2)

    def test_gamma_unbounded(self, gamma_claims):
        assert not gamma_claims.bounded and np.isinf(gamma_claims.support_max)


class TestScenarios:
    def test_common_random_numbers(self, market, gamma_claims):
        grid = DiscreteGrid(0.0, 1.0, 64)
        lam = flat_intensity(5, grid)
        a = simulate_scenarios(market, gamma_claims, lam, grid, 3)
        b = simulate_scenarios(market, gamma_claims, lam[:1], grid, 3, path_indices=[3])
        np.testing.assert_array_equal(a.dW1[3], b.dW1[0])
        np.testing.assert_array_equal(a.claim_size[3], b.claim_size[0])

    def test_asset_is_log_euler(self, market, gamma_claims):
        grid = DiscreteGrid(0.0, 1.0, 64)
        s = simulate_scenarios(market, gamma_claims, flat_intensity(2, grid), grid, 3, s0=2.0)
        logret = np.diff(np.log(s.asset), axis=1)
        np.testing.assert_allclose(logret, (0.07 - 0.02) * grid.dt + 0.2 * s.dW1, atol=1e-14)
        assert np.all(s.asset[:, 0] == 2.0)

    def test_claim_counts_match_intensity(self, market, gamma_claims):
        grid = DiscreteGrid(0.0, 3.0, 384)
        n = 4000
        s = simulate_scenarios(market, gamma_claims, flat_intensity(n, grid, 0.2), grid, 8)
        expected = 10 * 0.2 * 3.0
        counts = s.claim_counts
        assert abs(counts.mean() - expected) < 3 * counts.std(ddof=1) / np.sqrt(n)
        inside = np.isnan(s.claim_time) | ((s.claim_time >= grid.times[:-1]) & (s.claim_time < grid.times[1:]))
        assert inside.all()

    def test_thinning_warning_and_error(self, market, gamma_claims, caplog):
        grid = DiscreteGrid(0.0, 1.0, 16)
        with caplog.at_level(logging.WARNING):
            simulate_scenarios(market, gamma_claims, flat_intensity(1, grid, 0.2), grid, 0)
        assert "thinning" in caplog.text
        with pytest.raises(ParameterError):
            simulate_scenarios(market, gamma_claims, flat_intensity(1, grid, 2.0), grid, 0)

    def test_shape_checks(self, market, gamma_claims):
        grid = DiscreteGrid(0.0, 1.0, 16)
        with pytest.raises(ShapeError):
            simulate_scenarios(market, gamma_claims, np.zeros((1, 5)), grid, 0)
        with pytest.raises(ShapeError):
            simulate_scenarios(market, gamma_claims, flat_intensity(2, grid), grid, 0, path_indices=[0])


class TestWealth:
    def test_riskless_growth(self, gamma_claims):
        m = MarketParams(k1=0.0)
        grid = DiscreteGrid(0.0, 2.0, 50)
        s = simulate_scenarios(m, gamma_claims, flat_intensity(1, grid), grid, 0).scenario(0)
        w = propagate_wealth(s, m, gamma_claims, (np.zeros(50), np.zeros(50)), 10.0)
        assert w.X[-1] == pytest.approx(10.0 * (1 + 0.05 * grid.dt) ** 50, rel=1e-13)

    def test_mean_wealth(self, market, gamma_claims):
        grid = DiscreteGrid(0.0, 3.0, 192)
        n = 20000
        s = simulate_scenarios(market, gamma_claims, flat_intensity(n, grid), grid, 4)
        pi, a = np.full(192, 0.5), np.full(192, 0.3)
        w = propagate_wealth(s, market, gamma_claims, (pi, a), 10.0)
        # E[dX] = (r X + nu1 pi + eta k1 lam mu_z a + (theta - eta) k1 lam mu_z) dt
        x = 10.0
        for _ in range(192):
            x += (0.05 * x + 0.02 * 0.5 + 0.2 * 10 * 0.2 * 0.3) * grid.dt
        xt = w.X[:, -1]
        assert abs(xt.mean() - x) < 3 * xt.std(ddof=1) / np.sqrt(n)

    def test_claims_reduce_wealth_by_retained_share(self, market, gamma_claims):
        grid = DiscreteGrid(0.0, 3.0, 384)
        s = simulate_scenarios(market, gamma_claims, flat_intensity(1, grid), grid, 6).scenario(0)
        base = propagate_wealth(s, market, gamma_claims, (np.zeros(384), np.zeros(384)), 10.0)
        held = propagate_wealth(s, market, gamma_claims, (np.zeros(384), np.full(384, 0.4)), 10.0)
        assert s.claim_events
        # with a = 0 no claim touches wealth; with a = 0.4 each claim removes 0.4 z
        jumps = np.diff(held.X) - np.diff(base.X)
        i = int(np.argmax(s.claim_size))
        expected = 0.4 * (1 + market.eta) * 10 * 0.2 * 1.0 * grid.dt - 0.4 * s.claim_size[i]
        assert jumps[i] == pytest.approx(expected + 0.05 * grid.dt * (held.X[i] - base.X[i]), abs=1e-12)

    def test_spike_equals_modified_schedule(self, market, gamma_claims):
        grid = DiscreteGrid(0.0, 1.0, 32)
        s = simulate_scenarios(market, gamma_claims, flat_intensity(3, grid), grid, 1)
        pi, a = np.full(32, 0.5), np.full(32, 0.3)
        spiked = propagate_wealth(s, market, gamma_claims, (pi, a), 10.0, spike=(4, 8, 0.2, 1.0))
        pi2, a2 = pi.copy(), a.copy()
        pi2[4:8] += 0.2
        a2[4:8] = 1.0
        direct = propagate_wealth(s, market, gamma_claims, (pi2, a2), 10.0)
        np.testing.assert_array_equal(spiked.X, direct.X)

    def test_start_index(self, market, gamma_claims):
        grid = DiscreteGrid(0.0, 1.0, 16)
        s = simulate_scenarios(market, gamma_claims, flat_intensity(1, grid), grid, 1).scenario(0)
        w = propagate_wealth(s, market, gamma_claims, (np.zeros(17), np.zeros(17)), 5.0, start_index=8)
        assert np.all(np.isnan(w.X[:8])) and w.X[8] == 5.0

    def test_control_length_mismatch(self, market, gamma_claims):
        grid = DiscreteGrid(0.0, 1.0, 16)
        s = simulate_scenarios(market, gamma_claims, flat_intensity(1, grid), grid, 1).scenario(0)
        with pytest.raises(ShapeError):
            propagate_wealth(s, market, gamma_claims, (np.zeros(5), np.zeros(5)), 5.0)
