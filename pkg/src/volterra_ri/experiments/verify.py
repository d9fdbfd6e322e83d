"""Equilibrium verification suite: first-order residuals and spike perturbations."""

import logging
from dataclasses import dataclass

import numpy as np

from ..market import simulate_scenarios
from ..mortality import simulate_paths
from ..objective import (
    ConstantPolicy,
    StateDependentPolicy,
    acceptance_grid,
    build_ensemble,
    perturbation_test,
    verify_first_order_condition,
)
from ..strategies import (
    CONSTANT,
    UNIT_INTERVAL,
    StrategySchedule,
    constant_ra_strategy,
    constrained_ra_strategy,
    run_state_dependent,
)

log = logging.getLogger(__name__)

FOC_TOL = 1e-6
FALSIFY_TOL = 1e-3
Z_LIMIT = -3.0


@dataclass(frozen=True)
class FirstOrderSummary:
    n_paths: int
    max_investment: float
    max_reinsurance: float
    falsified_investment: float

    @property
    def passed(self):
        return (self.max_investment < FOC_TOL and self.max_reinsurance < FOC_TOL
                and self.falsified_investment > FALSIFY_TOL)


@dataclass(frozen=True)
class VerifyReport:
    regime: str
    first_order: FirstOrderSummary
    equilibrium: list
    anti: list
    n_paths: int

    @property
    def equilibrium_min_z(self):
        return min(r.min_z() for r in self.equilibrium)

    @property
    def anti_min_z(self):
        return min(r.min_z() for r in self.anti)

    @property
    def passed(self):
        return (self.first_order.passed and self.equilibrium_min_z >= Z_LIMIT
                and self.anti_min_z < Z_LIMIT)

    def lines(self):
        f = self.first_order
        out = [
            f"regime: {self.regime}",
            f"first-order residuals over {f.n_paths} paths: investment {f.max_investment:.3e}, "
            f"reinsurance {f.max_reinsurance:.3e} (tolerance {FOC_TOL:g})",
            f"falsification (pi scaled by 1.1): investment residual {f.falsified_investment:.3e} "
            f"(must exceed {FALSIFY_TOL:g})",
            f"perturbation grid, {self.n_paths} common-random-number paths:",
        ]
        for eq, an in zip(self.equilibrium, self.anti):
            s = eq.spec
            rho2 = "keep" if s.rho2 is None else f"{s.rho2:g}"
            out.append(f"  t={s.t:g} rho1={s.rho1:+g} rho2={rho2}: equilibrium min z {eq.min_z():+.2f}, "
                       f"anti-equilibrium min z {an.min_z():+.2f}")
        out.append(f"equilibrium never below {Z_LIMIT:g} SE: {'yes' if self.equilibrium_min_z >= Z_LIMIT else 'no'}")
        out.append(f"anti-equilibrium rejected: {'yes' if self.anti_min_z < Z_LIMIT else 'no'}")
        out.append(f"verdict: {'PASS' if self.passed else 'FAIL'}")
        return out


def _schedule(config, grid):
    build = constrained_ra_strategy if config["risk.constraint"] == UNIT_INTERVAL else constant_ra_strategy
    return build(config.market, config.claims, config.risk, grid)


def first_order_summary(config, seed, n_paths):
    """Largest first-order residuals of the equilibrium along ``n_paths`` paths."""
    market, claims, risk = config.market, config.claims, config.risk
    grid = config.grid
    batch = simulate_paths(config.mortality, grid, seed, n_paths)
    cgrid = grid.subgrid(0.0) if grid.t0 < 0 else grid
    scen = simulate_scenarios(market, claims, batch.lam_hat, cgrid, seed, path_indices=batch.path_indices,
                              mortality_grid=grid)
    times = cgrid.times[:-1]
    constraint = config["risk.constraint"]
    inv = rei = fals = 0.0
    sched = _schedule(config, cgrid) if risk.regime == CONSTANT else None
    for row in range(n_paths):
        sc = scen.scenario(row)
        lam = sc.lam_hat[:-1]
        if sched is not None:
            pi, a, M, x = sched.pi[:-1], sched.a[:-1], None, None
        else:
            run = run_state_dependent(market, claims, risk, batch.path(row), sc, config["market.x0"])
            x = run.wealth.X[:-1]
            pi, a = run.policy.pi_gain[:-1] * x, run.policy.a_gain[:-1] * x
            M = run.policy.M[:-1]
        rep = verify_first_order_condition(risk.regime, market, claims, risk, times, cgrid.T, lam, pi, a, M, x,
                                           constraint=constraint)
        bad = verify_first_order_condition(risk.regime, market, claims, risk, times, cgrid.T, lam, 1.1 * pi, a,
                                           M, x, constraint=constraint)
        inv = max(inv, rep.max_investment)
        rei = max(rei, rep.max_reinsurance)
        fals = max(fals, bad.max_investment)
    return FirstOrderSummary(n_paths, inv, rei, fals)


def run_verify(config, seed=None, n_paths=None, foc_paths=100, specs=None):
    """Run both suites for the configured regime.

    The anti-equilibrium control invests ``-pi*``; perturbations replay the
    unperturbed control process outside the spike window.
    """
    seed = int(config["run.seed"] if seed is None else seed)
    n_paths = int(config["run.verify_paths"] if n_paths is None else n_paths)
    market, claims, risk = config.market, config.claims, config.risk
    fo = first_order_summary(config, seed, min(foc_paths, n_paths))
    grid = config.grid
    ens = build_ensemble(config.mortality, market, claims, grid, n_paths, seed)
    if risk.regime == CONSTANT:
        sched = _schedule(config, ens.control_grid)
        eq = ConstantPolicy(sched)
        anti = ConstantPolicy(StrategySchedule(sched.grid, -sched.pi, sched.a, sched.regime, sched.constraint))
    else:
        eq = StateDependentPolicy(market, claims, risk)
        anti = StateDependentPolicy(market, claims, risk, pi_scale=-1.0)
    specs = acceptance_grid() if specs is None else specs
    x_t = config["market.x0"]
    res_eq = [perturbation_test(eq, s, market, claims, risk, x_t, ens) for s in specs]
    res_anti = [perturbation_test(anti, s, market, claims, risk, x_t, ens) for s in specs]
    return VerifyReport(risk.regime, fo, res_eq, res_anti, n_paths)


__all__ = ["FirstOrderSummary", "VerifyReport", "first_order_summary", "run_verify"]
