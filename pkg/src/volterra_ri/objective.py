"""Mean-variance objective, adjoint diagonals and equilibrium checks.

The objective at ``(t, x_t)`` is ``J = Var_t(X_T)/2 - (phi1 x_t + phi2) E_t[X_T]``.
A control is an open-loop equilibrium when no spike perturbation on
``[t, t + eps)`` lowers ``J`` to first order in ``eps``; equivalently the
first-order conditions

    nu1 p*(t;t) + sigma Z1*(t;t) = 0,
    < nu2 p*(t;t) - int z Z2*(t,z;t) delta(dz), rho2 - a*_t > >= 0

hold, where on the diagonal ``p*(t;t) = Phi_t = -phi2 e^{int_t^T r}``
(constant risk aversion) or ``-Gamma1_t X_t`` (state dependent),
``Z1* = M_t pi*_t sigma`` and ``int z Z2* delta(dz) = -M_t a*_t k1 lam_hat_t E[z^2]``.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError, RegimeError
from .kernels import DiscreteGrid
from .market import propagate_wealth, simulate_scenarios
from .mortality import simulate_paths
from .strategies import (
    CONSTANT,
    STATE_DEPENDENT,
    UNIT_INTERVAL,
    FeedbackPolicy,
    make_forecaster,
    state_dependent_policy,
)

log = logging.getLogger(__name__)

DEFAULT_LADDER = (0.2, 0.1, 0.05)


@dataclass(frozen=True)
class ObjectiveEstimate:
    """Monte Carlo estimate of the objective.

    ``J`` is always ``0.5 * var_XT - weight * mean_XT`` computed from the
    stored fields; ``std_error`` comes from the delta method and is NaN for
    a single path.
    """

    J: float
    mean_XT: float
    var_XT: float
    n_paths: int
    std_error: float
    weight: float


def _influence(xt, weight):
    m = xt.mean()
    v = xt.var()
    return 0.5 * ((xt - m) ** 2 - v) - weight * (xt - m)


def objective_from_samples(xt, risk, x_t):
    """Objective estimate from terminal wealth samples (``ddof = 0`` variance)."""
    xt = np.asarray(xt, dtype=float).ravel()
    if xt.size == 0:
        raise ParameterError("no terminal wealth samples")
    weight = float(risk.weight(x_t))
    mean = float(xt.mean())
    var = float(xt.var())
    J = 0.5 * var - weight * mean
    if xt.size > 1:
        se = float(np.std(_influence(xt, weight), ddof=1) / np.sqrt(xt.size))
    else:
        se = float("nan")
    return ObjectiveEstimate(J=J, mean_XT=mean, var_XT=var, n_paths=int(xt.size), std_error=se, weight=weight)


@dataclass
class Ensemble:
    """Shared random inputs for common-random-number comparisons."""

    mortality: object
    scenarios: object
    control_grid: DiscreteGrid


def build_ensemble(mortality_params, market, claims, grid, n_paths, seed, control_start=0.0, table=None):
    """Simulate mortality and market shocks once for reuse across policies."""
    batch = simulate_paths(mortality_params, grid, seed, n_paths, table=table)
    cgrid = grid.subgrid(control_start) if grid.t0 < control_start else grid
    scen = simulate_scenarios(market, claims, batch.lam_hat, cgrid, seed,
                              path_indices=batch.path_indices, mortality_grid=grid)
    return Ensemble(batch, scen, cgrid)


class ConstantPolicy:
    """Deterministic schedule applied to every path."""

    def __init__(self, schedule):
        self.schedule = schedule
        self.regime = schedule.regime

    def arrays(self, ensemble):
        n_paths = len(ensemble.scenarios)
        shape = (n_paths, ensemble.control_grid.n_steps + 1)
        return "schedule", np.broadcast_to(self.schedule.pi, shape), np.broadcast_to(self.schedule.a, shape)


class StateDependentPolicy:
    """Wealth-proportional policy with per-path gains from a forecaster."""

    regime = STATE_DEPENDENT

    def __init__(self, market, claims, risk, model="volterra", history_start=None, pi_scale=1.0):
        self.market, self.claims, self.risk = market, claims, risk
        self.model, self.history_start, self.pi_scale = model, history_start, pi_scale
        self._cache = None

    def gains(self, ensemble):
        """Per-path ``(pi_gain, a_gain, M)``; cached for the last ensemble seen."""
        if self._cache is not None and self._cache[0] is ensemble:
            return self._cache[1]
        out = self._gains(ensemble)
        self._cache = (ensemble, out)
        return out

    def _gains(self, ensemble):
        batch, cg = ensemble.mortality, ensemble.control_grid
        g1, g2, M = [], [], []
        for row in range(len(batch)):
            fc = make_forecaster(batch.path(row), self.model, self.history_start)
            pol = state_dependent_policy(self.market, self.claims, fc, self.risk, cg)
            g1.append(pol.pi_gain * self.pi_scale)
            g2.append(pol.a_gain)
            M.append(pol.M)
        return np.array(g1), np.array(g2), np.array(M)

    def arrays(self, ensemble):
        g1, g2, _ = self.gains(ensemble)
        return "feedback", g1, g2


def _run(ensemble, market, claims, mode, c1, c2, x_t, start):
    ctrl = FeedbackPolicy(ensemble.control_grid, c1, c2, None, None) if mode == "feedback" else (c1, c2)
    return propagate_wealth(ensemble.scenarios, market, claims, ctrl, x_t, start_index=start)


def evaluate_objective(policy, market, claims, risk, x_t, t, ensemble):
    """Objective of ``policy`` from ``(t, x_t)`` over a shared ensemble.

    Parameters
    ----------
    policy : ConstantPolicy or StateDependentPolicy
    risk : RiskAversion
    x_t : float
        Wealth at time ``t`` (the same on every path).
    t : float
        Start time; a node of the control grid.
    ensemble : Ensemble
        From :func:`build_ensemble`; reuse it to compare policies with
        common random numbers.
    """
    start = ensemble.control_grid.index_of(t)
    mode, c1, c2 = policy.arrays(ensemble)
    wealth = _run(ensemble, market, claims, mode, c1, c2, x_t, start)
    return objective_from_samples(wealth.X[:, -1], risk, x_t)


@dataclass(frozen=True)
class AdjointDiagonal:
    """``p*(t;t)``, ``Z1*(t;t)`` and ``int z Z2*(t,z;t) delta(dz)``."""

    p: np.ndarray
    Z1: np.ndarray
    jump: np.ndarray


def adjoint_closed_form(regime, market, claims, risk, times, T, lam_hat, pi, a, M=None, x=None):
    """Closed-form adjoint on the diagonal ``s = t`` at the given times.

    ``M`` defaults to ``e^{2 int_t^T r}`` (constant risk aversion).  The
    state-dependent regime needs ``M`` and the wealth ``x``.
    """
    times = np.asarray(times, dtype=float)
    if regime != risk.regime:
        raise RegimeError(f"adjoint requested for {regime} but risk aversion is {risk.regime}")
    acc = np.exp(market.rate_integral(times, T))
    if M is None:
        if regime == STATE_DEPENDENT:
            raise ParameterError("state-dependent adjoint needs M")
        M = acc**2
    if regime == CONSTANT:
        p = -risk.phi2 * acc
    else:
        if x is None:
            raise ParameterError("state-dependent adjoint needs the wealth")
        p = -risk.phi1 * acc * np.asarray(x)
    Z1 = M * np.asarray(pi) * market.sigma_at(times)
    jump = -M * np.asarray(a) * market.k1 * np.asarray(lam_hat) * claims.m2
    return AdjointDiagonal(np.asarray(p, float), np.asarray(Z1, float), np.asarray(jump, float))


@dataclass(frozen=True)
class FirstOrderReport:
    """Residuals of the first-order conditions along a path.

    ``investment`` is ``|nu1 p* + sigma Z1*|``; ``g`` is
    ``nu2 p* - int z Z2* delta(dz)``.  The reinsurance condition needs
    ``g = 0`` where ``a*`` is interior, ``g >= 0`` at ``a* = 0`` and
    ``g <= 0`` at ``a* = 1`` under the unit-interval constraint.
    """

    times: np.ndarray
    investment: np.ndarray
    g: np.ndarray
    reinsurance: np.ndarray

    @property
    def max_investment(self):
        return float(np.nanmax(self.investment))

    @property
    def max_reinsurance(self):
        return float(np.nanmax(self.reinsurance))

    def ok(self, tol=1e-6):
        return self.max_investment < tol and self.max_reinsurance < tol


def verify_first_order_condition(regime, market, claims, risk, times, T, lam_hat, pi, a, M=None, x=None,
                                 constraint=None):
    """Evaluate the first-order conditions at the given times.

    Returns a :class:`FirstOrderReport` whose ``reinsurance`` entry is the
    size of the violation of the variational inequality (0 when it holds).
    """
    adj = adjoint_closed_form(regime, market, claims, risk, times, T, lam_hat, pi, a, M, x)
    nu1 = market.nu1(np.asarray(times, dtype=float))
    nu2 = market.nu2(times, lam_hat, claims.mu_z)
    inv = np.abs(nu1 * adj.p + market.sigma_at(np.asarray(times, dtype=float)) * adj.Z1)
    g = nu2 * adj.p - adj.jump
    a = np.asarray(a, dtype=float)
    tiny = 1e-12
    lower = a <= tiny
    upper = (constraint == UNIT_INTERVAL) & (a >= 1.0 - tiny)
    viol = np.where(lower, np.maximum(-g, 0.0), np.where(upper, np.maximum(g, 0.0), np.abs(g)))
    return FirstOrderReport(np.asarray(times, float), inv, g, viol)


def theta_coefficient(market, claims, times, T, lam_hat):
    """``Theta(s) = e^{2 int_s^T r} (sigma^2 + k1 lam_hat E[z^2]) / 2``, strictly positive."""
    times = np.asarray(times, dtype=float)
    out = 0.5 * np.exp(2.0 * market.rate_integral(times, T)) * (
        market.sigma_at(times) ** 2 + market.k1 * np.asarray(lam_hat) * claims.m2
    )
    if np.any(out <= 0):
        raise ParameterError("second-order coefficient is not positive")
    return out


@dataclass(frozen=True)
class PerturbationSpec:
    """Spike perturbation ``pi + rho1`` and ``a -> rho2`` on ``[t, t + eps)``.

    ``rho2 = None`` keeps the equilibrium ``a*`` (investment-only spike).
    """

    t: float
    rho1: float = 0.0
    rho2: Optional[float] = None
    ladder: tuple = DEFAULT_LADDER

    def __post_init__(self):
        if self.rho2 is not None and self.rho2 < 0:
            raise ParameterError("rho2 must be nonnegative")
        if not self.ladder or any(e <= 0 for e in self.ladder):
            raise ParameterError("epsilon ladder must contain positive values")


@dataclass(frozen=True)
class PerturbationResult:
    """``[J(perturbed) - J(equilibrium)] / eps`` along the epsilon ladder."""

    spec: PerturbationSpec
    epsilons: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray

    @property
    def z_scores(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.std_errors > 0, self.estimates / self.std_errors, 0.0)

    def min_z(self):
        return float(np.min(self.z_scores))

    @property
    def trend(self):
        """Slope of the estimates against eps (sign of the approach to the limit)."""
        if len(self.epsilons) < 2:
            return 0.0
        return float(np.polyfit(self.epsilons, self.estimates, 1)[0])


def perturbation_test(policy, spec, market, claims, risk, x_t, ensemble, mode="open_loop"):
    """Estimate the equilibrium liminf with common random numbers.

    Parameters
    ----------
    policy : ConstantPolicy or StateDependentPolicy
    spec : PerturbationSpec
    x_t : float
        Wealth at the perturbation time on every path.
    ensemble : Ensemble
    mode : {"open_loop", "closed_loop"}
        ``open_loop`` replays the unperturbed control process after the
        window (the definition's reading); ``closed_loop`` keeps applying the
        feedback rule to the perturbed wealth.  They coincide for
        deterministic schedules.

    Raises
    ------
    ParameterError
        If ``t + eps`` leaves the horizon for some ladder entry.
    """
    cg = ensemble.control_grid
    start = cg.index_of(spec.t)
    dt = cg.dt
    ctrl_mode, c1, c2 = policy.arrays(ensemble)
    base = _run(ensemble, market, claims, ctrl_mode, c1, c2, x_t, start)
    base_inf = _influence(base.X[:, -1], risk.weight(x_t))
    j_base = objective_from_samples(base.X[:, -1], risk, x_t).J
    eps_out, est, ses = [], [], []
    for eps in spec.ladder:
        steps = int(round(eps / dt))
        if steps < 1 or start + steps > cg.n_steps:
            raise ParameterError(f"perturbation window [{spec.t}, {spec.t + eps}] leaves the horizon or the grid")
        eps_eff = steps * dt
        window = slice(start, start + steps)
        if ctrl_mode == "schedule" or mode == "open_loop":
            pi = np.array(base.pi, copy=True)
            a = np.array(base.a, copy=True)
            pi[:, window] += spec.rho1
            if spec.rho2 is not None:
                a[:, window] = spec.rho2
            pert = propagate_wealth(ensemble.scenarios, market, claims, (pi, a), x_t, start_index=start)
        elif mode == "closed_loop":
            ctrl = FeedbackPolicy(cg, c1, c2, None, None)
            pert = propagate_wealth(ensemble.scenarios, market, claims, ctrl, x_t, start_index=start,
                                    spike=(window.start, window.stop, spec.rho1, spec.rho2))
        else:
            raise ParameterError(f"unknown perturbation mode {mode!r}")
        xt = pert.X[:, -1]
        j = objective_from_samples(xt, risk, x_t).J
        diff_inf = _influence(xt, risk.weight(x_t)) - base_inf
        se = float(np.std(diff_inf, ddof=1) / np.sqrt(len(xt))) if len(xt) > 1 else float("nan")
        eps_out.append(eps_eff)
        est.append((j - j_base) / eps_eff)
        ses.append(se / eps_eff)
    return PerturbationResult(spec, np.array(eps_out), np.array(est), np.array(ses))


def acceptance_grid():
    """The fixed twelve perturbation specs used by the equilibrium check.

    Times ``{0, 1, 2}`` crossed with an upward and a downward investment
    spike, a retention spike to zero and one to full retention.
    """
    specs = []
    for t in (0.0, 1.0, 2.0):
        specs.append(PerturbationSpec(t, rho1=0.5, rho2=None))
        specs.append(PerturbationSpec(t, rho1=-0.5, rho2=None))
        specs.append(PerturbationSpec(t, rho1=0.0, rho2=0.0))
        specs.append(PerturbationSpec(t, rho1=0.0, rho2=1.0))
    return specs


__all__ = [
    "AdjointDiagonal",
    "ConstantPolicy",
    "Ensemble",
    "FirstOrderReport",
    "ObjectiveEstimate",
    "PerturbationResult",
    "PerturbationSpec",
    "StateDependentPolicy",
    "acceptance_grid",
    "adjoint_closed_form",
    "build_ensemble",
    "evaluate_objective",
    "objective_from_samples",
    "perturbation_test",
    "theta_coefficient",
    "verify_first_order_condition",
]
