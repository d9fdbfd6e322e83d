"""Objective estimates, first-order conditions and spike perturbations."""

import numpy as np
import pytest

from volterra_ri.errors import ParameterError, RegimeError
from volterra_ri.kernels import DiscreteGrid, KernelSpec
from volterra_ri.market import MarketParams, moment_fit, simulate_scenario
from volterra_ri.mortality import MortalityParams, simulate_path
from volterra_ri.objective import (
    ConstantPolicy,
    PerturbationSpec,
    StateDependentPolicy,
    acceptance_grid,
    adjoint_closed_form,
    build_ensemble,
    evaluate_objective,
    objective_from_samples,
    perturbation_test,
    theta_coefficient,
    verify_first_order_condition,
)
from volterra_ri.strategies import (
    RiskAversion,
    StrategySchedule,
    constant_ra_strategy,
    constrained_ra_strategy,
    run_state_dependent,
)

MARKET = MarketParams()
CLAIMS = moment_fit("gamma", 1.0, 1.2)
MORT = MortalityParams(0.18, 0.15, 0.5, 0.1, KernelSpec.fractional(1.33))


class TestObjectiveEstimate:
    def test_formula(self):
        x = np.array([9.0, 10.0, 12.0, 13.0])
        est = objective_from_samples(x, RiskAversion(0.0, 2.0), 10.0)
        assert est.J == pytest.approx(0.5 * x.var() - 2.0 * x.mean())
        assert est.weight == 2.0 and est.n_paths == 4

    def test_state_dependent_weight(self):
        est = objective_from_samples(np.array([1.0, 3.0]), RiskAversion(0.5, 0.0), 10.0)
        assert est.weight == 5.0

    def test_single_path_has_nan_error(self):
        est = objective_from_samples(np.array([1.0]), RiskAversion(0.0, 1.0), 1.0)
        assert np.isnan(est.std_error)

    def test_empty(self):
        with pytest.raises(ParameterError):
            objective_from_samples(np.array([]), RiskAversion(0.0, 1.0), 1.0)

    def test_delta_method_error_for_gaussian_samples(self):
        # Var(0.5 s^2 - w m) ~ (0.5 s^4 + w^2 s^2) / n for Gaussian samples
        rng = np.random.default_rng(0)
        s, w, n = 2.0, 1.5, 200000
        est = objective_from_samples(rng.normal(1.0, s, n), RiskAversion(0.0, w), 0.0)
        ref = np.sqrt((0.5 * s**4 + w**2 * s**2) / n)
        assert est.std_error == pytest.approx(ref, rel=0.02)


class TestFirstOrder:
    def test_constant_regime_residuals(self):
        grid = DiscreteGrid.per_year(0.0, 3.0, 64)
        risk = RiskAversion(0.0, 1.0)
        s = constant_ra_strategy(MARKET, CLAIMS, risk, grid)
        lam = np.linspace(0.18, 0.3, len(grid))
        rep = verify_first_order_condition("constant", MARKET, CLAIMS, risk, grid.times, 3.0, lam, s.pi, s.a)
        assert rep.ok(1e-12)
        bad = verify_first_order_condition("constant", MARKET, CLAIMS, risk, grid.times, 3.0, lam, 1.1 * s.pi, s.a)
        assert bad.max_investment > 1e-3

    def test_projected_retention_satisfies_inequality(self):
        grid = DiscreteGrid.per_year(0.0, 3.0, 64)
        risk = RiskAversion(0.0, 10.0)
        s = constrained_ra_strategy(MARKET, CLAIMS, risk, grid)
        lam = np.full(len(grid), 0.2)
        rep = verify_first_order_condition("constant", MARKET, CLAIMS, risk, grid.times, 3.0, lam, s.pi, s.a,
                                           constraint="unit_interval")
        assert np.any(s.a == 1.0)
        assert rep.max_reinsurance < 1e-12
        # at the cap the gradient points outward
        assert np.all(rep.g[s.a == 1.0] <= 0)

    def test_state_dependent_residuals(self):
        grid = DiscreteGrid.per_year(-1.0, 3.0, 64)
        path = simulate_path(MORT, grid, 2)
        scen = simulate_scenario(MARKET, CLAIMS, path, 2)
        risk = RiskAversion(1.0, 0.0)
        run = run_state_dependent(MARKET, CLAIMS, risk, path, scen, 10.0)
        x = run.wealth.X[:-1]
        t = scen.grid.times[:-1]
        pi, a, M = run.policy.pi_gain[:-1] * x, run.policy.a_gain[:-1] * x, run.policy.M[:-1]
        rep = verify_first_order_condition("state_dependent", MARKET, CLAIMS, risk, t, 3.0, scen.lam_hat[:-1],
                                           pi, a, M, x)
        assert rep.ok(1e-6)
        bad = verify_first_order_condition("state_dependent", MARKET, CLAIMS, risk, t, 3.0, scen.lam_hat[:-1],
                                           1.1 * pi, a, M, x)
        assert bad.max_investment > 1e-3

    def test_adjoint_requirements(self):
        risk = RiskAversion(1.0, 0.0)
        t = np.array([0.0, 1.0])
        with pytest.raises(ParameterError):
            adjoint_closed_form("state_dependent", MARKET, CLAIMS, risk, t, 3.0, np.ones(2), np.ones(2), np.ones(2))
        with pytest.raises(RegimeError):
            adjoint_closed_form("constant", MARKET, CLAIMS, risk, t, 3.0, np.ones(2), np.ones(2), np.ones(2))

    def test_theta_coefficient(self):
        th = theta_coefficient(MARKET, CLAIMS, np.array([0.0, 3.0]), 3.0, np.array([0.2, 0.2]))
        assert th[1] == pytest.approx(0.5 * (0.04 + 10 * 0.2 * 1.2))
        assert np.all(th > 0)


@pytest.fixture(scope="module")
def ensemble():
    return build_ensemble(MORT, MARKET, CLAIMS, DiscreteGrid.per_year(0.0, 3.0, 64), 2000, 11)


class TestPerturbation:
    def test_grid(self):
        specs = acceptance_grid()
        assert len(specs) == 12
        assert {s.t for s in specs} == {0.0, 1.0, 2.0}

    def test_spec_validation(self):
        with pytest.raises(ParameterError):
            PerturbationSpec(0.0, rho2=-1.0)
        with pytest.raises(ParameterError):
            PerturbationSpec(0.0, ladder=())

    def test_window_past_horizon(self, ensemble):
        pol = ConstantPolicy(constant_ra_strategy(MARKET, CLAIMS, RiskAversion(0.0, 1.0), ensemble.control_grid))
        with pytest.raises(ParameterError):
            perturbation_test(pol, PerturbationSpec(2.953125, rho1=0.1), MARKET, CLAIMS, RiskAversion(0.0, 1.0), 10.0,
                              ensemble)

    def test_modes_agree_for_schedules(self, ensemble):
        risk = RiskAversion(0.0, 1.0)
        pol = ConstantPolicy(constant_ra_strategy(MARKET, CLAIMS, risk, ensemble.control_grid))
        spec = PerturbationSpec(1.0, rho1=0.5)
        a = perturbation_test(pol, spec, MARKET, CLAIMS, risk, 10.0, ensemble, mode="open_loop")
        b = perturbation_test(pol, spec, MARKET, CLAIMS, risk, 10.0, ensemble, mode="closed_loop")
        np.testing.assert_array_equal(a.estimates, b.estimates)

    def test_equilibrium_not_improved(self, ensemble):
        risk = RiskAversion(0.0, 1.0)
        pol = ConstantPolicy(constant_ra_strategy(MARKET, CLAIMS, risk, ensemble.control_grid))
        for spec in acceptance_grid()[:4]:
            res = perturbation_test(pol, spec, MARKET, CLAIMS, risk, 10.0, ensemble)
            assert res.min_z() >= -3.0

    def test_bad_schedule_is_improved(self, ensemble):
        risk = RiskAversion(0.0, 1.0)
        eq = constant_ra_strategy(MARKET, CLAIMS, risk, ensemble.control_grid)
        anti = ConstantPolicy(StrategySchedule(eq.grid, -3 * eq.pi, eq.a))
        res = perturbation_test(anti, PerturbationSpec(0.0, rho1=0.5), MARKET, CLAIMS, risk, 10.0, ensemble)
        assert res.min_z() < -3.0

    def test_state_dependent_objective(self, ensemble):
        risk = RiskAversion(1.0, 0.0)
        pol = StateDependentPolicy(MARKET, CLAIMS, risk)
        est = evaluate_objective(pol, MARKET, CLAIMS, risk, 10.0, 0.0, ensemble)
        assert np.isfinite(est.J) and est.std_error > 0
        g1, _, M = pol.gains(ensemble)
        assert pol.gains(ensemble)[0] is g1
        assert np.all(M >= 1.0)

    def test_unknown_mode(self, ensemble):
        risk = RiskAversion(1.0, 0.0)
        pol = StateDependentPolicy(MARKET, CLAIMS, risk)
        with pytest.raises(ParameterError):
            perturbation_test(pol, PerturbationSpec(0.0, rho1=0.1), MARKET, CLAIMS, risk, 10.0, ensemble,
                              mode="sideways")
