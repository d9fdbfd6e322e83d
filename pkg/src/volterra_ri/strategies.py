"""Equilibrium reinsurance-investment controls and their sufficient conditions.

Constant risk aversion (``phi1 = 0``)
    ``pi*_s = nu1 / sigma^2 * phi2 * e^{-int_s^T r}`` and
    ``a*_s = eta mu_z / E[z^2] * phi2 * e^{-int_s^T r}``; neither depends on
    mortality or wealth.  A unit-interval constraint projects ``a*``.

State-dependent risk aversion (``phi2 = 0``, ``theta = eta``)
    ``pi*_t = nu1 Gamma1_t X_t / (M_t sigma^2)`` and
    ``a*_t = eta mu_z Gamma1_t X_t / (M_t E[z^2])`` with
    ``Gamma1_t = phi1 e^{int_t^T r}`` and

    ``M_t = e^{2 int_t^T r} + int_t^T e^{2 int_t^s r} (nu1^2/sigma^2 + mu_z^2 eta^2 k1 E[lam_hat_s|F_t] / E[z^2]) Gamma1_s ds``.

    ``M`` depends on the mortality forecast, which is where the Volterra
    and Markov models part ways.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConsistencyError, ParameterError, RegimeError, ResolutionError
from .kernels import DiscreteGrid
from .market import propagate_wealth
from .mortality import MarkovForecaster, VolterraForecaster

log = logging.getLogger(__name__)

CONSTANT = "constant"
STATE_DEPENDENT = "state_dependent"
NONNEGATIVE = "nonnegative"
UNIT_INTERVAL = "unit_interval"


@dataclass(frozen=True)
class RiskAversion:
    """Weights of the objective ``Var/2 - (phi1 x_t + phi2) E[X_T]``.

    Exactly one regime is allowed: ``phi1 = 0`` (constant) or ``phi2 = 0``
    with ``phi1 > 0`` (state dependent).
    """

    phi1: float = 0.0
    phi2: float = 1.0

    def __post_init__(self):
        if self.phi1 < 0 or self.phi2 < 0:
            raise ParameterError("risk-aversion weights must be nonnegative")
        if self.phi1 > 0 and self.phi2 > 0:
            raise RegimeError("mixed risk aversion (phi1 > 0 and phi2 > 0) has no equilibrium formula")

    @property
    def regime(self):
        return STATE_DEPENDENT if self.phi1 > 0 else CONSTANT

    def weight(self, x_t):
        """Coefficient ``phi1 x_t + phi2`` of the mean."""
        return self.phi1 * x_t + self.phi2


@dataclass(frozen=True)
class StrategySchedule:
    """Controls given directly at the grid nodes.

    ``pi`` and ``a`` have ``n_steps + 1`` entries (or a leading path axis);
    the control on ``[t_i, t_{i+1})`` is entry ``i``.
    """

    grid: DiscreteGrid
    pi: np.ndarray
    a: np.ndarray
    regime: str = CONSTANT
    constraint: str = NONNEGATIVE
    mode: str = field(default="schedule", init=False)

    def __post_init__(self):
        if np.any(np.asarray(self.a) < 0):
            raise ParameterError("retained fraction a must be nonnegative")
        if self.constraint == UNIT_INTERVAL and np.any(np.asarray(self.a) > 1):
            raise ParameterError("retained fraction exceeds 1 under the unit-interval constraint")

    def controls(self, batch=None):
        return self


@dataclass(frozen=True)
class FeedbackPolicy:
    """Controls proportional to wealth: ``pi = pi_gain X``, ``a = a_gain X``."""

    grid: DiscreteGrid
    pi_gain: np.ndarray
    a_gain: np.ndarray
    M: np.ndarray
    gamma1: np.ndarray
    regime: str = STATE_DEPENDENT
    mode: str = field(default="feedback", init=False)

    def controls(self, batch=None):
        return self


@dataclass(frozen=True)
class MFactor:
    """``M_t`` with its integrand on ``[t, T]`` (kept for audit)."""

    t: float
    M: float
    times: np.ndarray
    integrand: np.ndarray
    gamma1: float


def _discount_to_T(market, times, T):
    return np.exp(-market.rate_integral(times, T))


def constant_ra_strategy(market, claims, risk, grid):
    """Equilibrium controls under constant risk aversion (``a`` unconstrained)."""
    if risk.regime != CONSTANT:
        raise RegimeError("constant-regime strategy needs phi1 = 0")
    times = grid.times
    disc = risk.phi2 * _discount_to_T(market, times, grid.T)
    pi = market.nu1(times) / market.sigma_at(times) ** 2 * disc
    a = market.eta * claims.mu_z / claims.m2 * disc
    return StrategySchedule(grid, np.asarray(pi, dtype=float), np.asarray(a, dtype=float), CONSTANT, NONNEGATIVE)


def project_unit_interval(x):
    """Projection onto ``[0, 1]``."""
    return np.clip(x, 0.0, 1.0)


def constrained_ra_strategy(market, claims, risk, grid):
    """Constant-regime controls with ``a`` projected onto ``[0, 1]``."""
    base = constant_ra_strategy(market, claims, risk, grid)
    return StrategySchedule(grid, base.pi, project_unit_interval(base.a), CONSTANT, UNIT_INTERVAL)


def _require_cheap_reinsurance(market):
    if market.eta != market.theta:
        raise ParameterError(
            f"state-dependent controls need eta = theta, got eta={market.eta}, theta={market.theta}"
        )


def _m_integrand(market, claims, risk, t, s, mean_lam_hat, T):
    """Integrand of ``M_t`` at times ``s`` given forecasts ``E[lam_hat_s|F_t]``."""
    grow = np.exp(2.0 * market.rate_integral(t, s))
    gamma1_s = risk.phi1 * np.exp(market.rate_integral(s, T))
    invest = market.nu1(s) ** 2 / market.sigma_at(s) ** 2
    insure = claims.mu_z**2 * market.eta**2 / claims.m2 * market.k1 * mean_lam_hat
    return grow * (invest + insure) * gamma1_s


def m_factor(market, claims, forecaster, risk, t, grid, refine=1):
    """``M_t`` by composite trapezoid over the nodes of ``grid`` in ``[t, T]``.

    Parameters
    ----------
    forecaster : VolterraForecaster or MarkovForecaster
        Supplies ``E[lam_hat_s | F_t]``; ``t`` must be a node of its grid.
    grid : DiscreteGrid
        Control grid (a tail of the forecaster's grid).
    refine : int
        Subdivide each cell this many times (used by refinement checks).
    """
    if risk.regime != STATE_DEPENDENT:
        raise RegimeError("M factor is defined for state-dependent risk aversion")
    _require_cheap_reinsurance(market)
    T = grid.T
    if t < grid.t0 - 1e-12 or t > T + 1e-12:
        raise ResolutionError(f"t={t} outside the control grid [{grid.t0}, {T}]")
    i = grid.index_of(t)
    fine = grid.times[i:]
    if refine > 1 and len(fine) > 1:
        fine = np.linspace(fine[0], T, (len(fine) - 1) * int(refine) + 1)
    means = forecaster.conditional_mean(grid.times[i], fine)
    integrand = _m_integrand(market, claims, risk, grid.times[i], fine, means, T)
    M = float(np.exp(2.0 * market.rate_integral(grid.times[i], T))) + (
        float(trapezoid(integrand, fine)) if len(fine) > 1 else 0.0
    )
    if M < 1.0 - 1e-12:
        raise ConsistencyError(f"M_t = {M} < 1 at t = {t}")
    gamma1 = risk.phi1 * float(np.exp(market.rate_integral(grid.times[i], T)))
    return MFactor(float(grid.times[i]), M, fine, integrand, gamma1)


def m_path(market, claims, forecaster, risk, grid):
    """``M_t`` at every node of the control grid along one mortality path.

    Uses the forecaster's mean table so the whole path costs O(n^2).
    """
    if risk.regime != STATE_DEPENDENT:
        raise RegimeError("M factor is defined for state-dependent risk aversion")
    _require_cheap_reinsurance(market)
    start = forecaster.grid.index_of(grid.t0)
    if forecaster.grid.n_steps - start != grid.n_steps:
        raise ResolutionError("control grid must be the tail of the mortality grid")
    table = forecaster.mean_table(start)
    times = grid.times
    T = grid.T
    n = grid.n_steps
    dt = grid.dt
    if market.constant_rates:
        r = float(market.r)
        gap = times[None, :] - times[:, None]
        grow = np.exp(2.0 * r * gap)
        gamma1_s = risk.phi1 * np.exp(r * (T - times))
    else:
        R = market.rate_integral(times[0], times)
        grow = np.exp(2.0 * (R[None, :] - R[:, None]))
        gamma1_s = risk.phi1 * np.exp(R[-1] - R)
    invest = market.nu1(times) ** 2 / market.sigma_at(times) ** 2
    q = claims.mu_z**2 * market.eta**2 / claims.m2 * market.k1
    integrand = grow * (invest[None, :] + q * np.nan_to_num(table)) * gamma1_s[None, :]
    upper = np.triu(np.ones((n + 1, n + 1), dtype=bool))
    integrand = np.where(upper, integrand, 0.0)
    # trapezoid over k >= m: full sum minus half of the two ends
    total = integrand.sum(axis=1) - 0.5 * (np.diag(integrand) + integrand[:, -1])
    M = grow[:, -1] + dt * total
    M[-1] = 1.0
    if np.any(M < 1.0 - 1e-12):
        bad = int(np.argmin(M))
        raise ConsistencyError(f"M_t = {M[bad]} < 1 at t = {times[bad]}")
    return M


def gamma1(market, risk, grid):
    """``Gamma1_t = phi1 e^{int_t^T r}`` at the grid nodes."""
    return risk.phi1 * np.exp(market.rate_integral(grid.times, grid.T))


def state_dependent_policy(market, claims, forecaster, risk, grid):
    """Wealth-proportional equilibrium policy along one mortality path."""
    M = m_path(market, claims, forecaster, risk, grid)
    g1 = gamma1(market, risk, grid)
    times = grid.times
    pi_gain = market.nu1(times) * g1 / (M * market.sigma_at(times) ** 2)
    a_gain = market.eta * claims.mu_z * g1 / (M * claims.m2)
    return FeedbackPolicy(grid, np.asarray(pi_gain, float), np.asarray(a_gain, float), M, g1)


def state_dependent_strategy(market, claims, forecaster, risk, x_t, t, grid):
    """Equilibrium pair ``(pi*_t, a*_t)`` at one time for wealth ``x_t``."""
    mf = m_factor(market, claims, forecaster, risk, t, grid)
    pi = market.nu1(t) * mf.gamma1 * x_t / (mf.M * market.sigma_at(t) ** 2)
    a = market.eta * claims.mu_z * mf.gamma1 * x_t / (mf.M * claims.m2)
    return float(pi), float(a)


def make_forecaster(path, model="volterra", history_start=None):
    """Forecaster for ``model`` in ``{"volterra", "markov"}``."""
    if model == "volterra":
        return VolterraForecaster(path, history_start=history_start)
    if model == "markov":
        return MarkovForecaster(path)
    raise ParameterError(f"unknown forecasting model {model!r}")


@dataclass(frozen=True)
class EquilibriumRun:
    """Policy and wealth along one path."""

    policy: object
    wealth: object
    min_jump_ratio: float


def run_state_dependent(market, claims, risk, mortality_path, scenario, x0, model="volterra",
                        history_start=None, check_positivity=False):
    """Apply the state-dependent equilibrium policy along one scenario.

    ``check_positivity`` asserts ``a_gain_t z < 1`` for every realized claim
    (which keeps wealth positive); it is guaranteed when the size cap
    satisfies ``phi1 eta mu_z z_max <= E[z^2]``.
    """
    fc = make_forecaster(mortality_path, model, history_start)
    policy = state_dependent_policy(market, claims, fc, risk, scenario.grid)
    wealth = propagate_wealth(scenario, market, claims, policy, x0)
    ratio = policy.a_gain[:-1] * scenario.claim_size
    worst = float(1.0 - ratio.max()) if ratio.size else 1.0
    if check_positivity and worst <= 0:
        raise ConsistencyError("a claim removed all wealth under the equilibrium policy")
    return EquilibriumRun(policy, wealth, worst)


def u0_diagnostic(market, claims, mortality_path, risk, t, grid):
    """``U_0(t) = int_t^T e^{2 int_t^s r} (mu_z^2 eta^2/E[z^2]) k1 E_B(s-t) sigma sqrt(lam_t) ds``.

    The square root is evaluated at the current ``lam_t`` so the value is
    known at time ``t``.  ``E_B`` enters through exact cell integrals.
    """
    table = mortality_path.table
    lam_t = float(mortality_path.lam[mortality_path.grid.index_of(t)])
    return _u0(market, claims, mortality_path.params, table, t, grid.T, lam_t)


def _u0(market, claims, params, table, t, T, lam_t):
    if params.sigma_lambda == 0 or market.eta == 0:
        return 0.0
    return (
        claims.mu_z**2 * market.eta**2 / claims.m2 * params.sigma_lambda * np.sqrt(max(lam_t, 0.0))
        * market.k1 * _weighted_eb_integral(market, table, t, T)
    )


def _weighted_eb_integral(market, table, t, T):
    """``int_t^T e^{2 int_t^s r} E_B(s - t) ds`` by exact cells of ``E_B``."""
    span = T - t
    if span <= 0:
        return 0.0
    n = max(1, int(np.ceil(span / table.dt - 1e-9)))
    edges = np.linspace(0.0, span, n + 1)
    cells = np.diff(table.integrated_eb(edges))
    mids = t + 0.5 * (edges[:-1] + edges[1:])
    grow = np.exp(2.0 * market.rate_integral(t, mids))
    return float(np.sum(grow * cells))


@dataclass(frozen=True)
class AssumptionReport:
    """Sufficient-condition check for the equilibrium results.

    Attributes
    ----------
    regime : str
    c2_terms : dict
        Lower bounds that the constant ``C_2`` must exceed.
    c2 : float
        Required ``C_2`` (the largest bound).
    margin : float
        ``a1^2 - 2 C_2 sigma_lambda^2``; the condition holds iff positive.
    passed : bool
    sup_integral : float
        ``sup_t int_t^T e^{2 int_t^s r} k1 E_B(s-t) ds``.
    claim_cap : str
        ``"pass"``, ``"fail"``, ``"not verifiable"`` (unbounded sizes) or
        ``"not applicable"`` (constant regime).
    u0_at_start : float
        ``U_0(0)`` with ``lam`` at its long-run level ``b1/a1``.
    """

    regime: str
    c2_terms: dict
    c2: float
    margin: float
    passed: bool
    sup_integral: float
    claim_cap: str
    u0_at_start: float

    def lines(self):
        out = [f"regime: {self.regime}"]
        for k, v in self.c2_terms.items():
            out.append(f"C2 bound {k}: {v:.6g}")
        out.append(f"required C2: {self.c2:.6g}")
        out.append(f"a1^2 - 2 C2 sigma_lambda^2 = {self.margin:.6g}")
        out.append(f"solution-existence condition: {'PASS' if self.passed else 'FAIL'}")
        out.append(f"claim-size cap condition: {self.claim_cap}")
        out.append(f"sup_t int e^(2r(s-t)) k1 E_B(s-t) ds: {self.sup_integral:.6g}")
        out.append(f"U0(0) at lambda = b1/a1: {self.u0_at_start:.6g}")
        if not self.passed:
            out.append("note: these conditions are sufficient, not necessary")
        return out


def check_assumptions(market, claims, mortality_params, risk, T=3.0, steps_per_year=128):
    """Evaluate the sufficient conditions with the given parameters.

    The verdict is ``a1^2 - 2 C_2 sigma_lambda^2 > 0`` with ``C_2`` the
    largest of the stated lower bounds: ``k1 (2 + eta) eta`` always, and for
    state-dependent risk aversion also
    ``125 eta^4 sigma_lambda^2 (sup ...)^2`` and ``18 eta phi1 k1``.
    """
    grid = DiscreteGrid.per_year(0.0, T, steps_per_year)
    table = mortality_params.resolvents(grid)
    eta, k1 = market.eta, market.k1
    sup = 0.0
    for t in grid.times[:-1]:
        sup = max(sup, market.k1 * _weighted_eb_integral(market, table, float(t), T))
    terms = {"k1(2+eta)eta": k1 * (2.0 + eta) * eta}
    if risk.regime == STATE_DEPENDENT:
        terms["125 eta^4 sigma_lambda^2 sup^2"] = 125.0 * eta**4 * mortality_params.sigma_lambda**2 * sup**2
        terms["18 eta phi1 k1"] = 18.0 * eta * risk.phi1 * k1
        cap_ok = None
        if claims.bounded:
            cap_ok = risk.phi1 * eta * claims.mu_z * claims.z_max <= claims.m2 * (1 + 1e-12)
        elif np.isfinite(claims.support_max):
            cap_ok = risk.phi1 * eta * claims.mu_z * claims.support_max <= claims.m2 * (1 + 1e-12)
        claim_cap = "not verifiable" if cap_ok is None else ("pass" if cap_ok else "fail")
    else:
        claim_cap = "not applicable"
    c2 = max(terms.values())
    margin = mortality_params.a1**2 - 2.0 * c2 * mortality_params.sigma_lambda**2
    level = mortality_params.b1 / mortality_params.a1
    u0 = _u0(market, claims, mortality_params, table, 0.0, T, level)
    return AssumptionReport(
        regime=risk.regime, c2_terms=terms, c2=float(c2), margin=float(margin), passed=bool(margin > 0),
        sup_integral=float(sup), claim_cap=claim_cap, u0_at_start=float(u0),
    )


__all__ = [
    "AssumptionReport",
    "CONSTANT",
    "EquilibriumRun",
    "FeedbackPolicy",
    "MFactor",
    "NONNEGATIVE",
    "RiskAversion",
    "STATE_DEPENDENT",
    "StrategySchedule",
    "UNIT_INTERVAL",
    "check_assumptions",
    "constant_ra_strategy",
    "constrained_ra_strategy",
    "gamma1",
    "m_factor",
    "m_path",
    "make_forecaster",
    "project_unit_interval",
    "run_state_dependent",
    "state_dependent_policy",
    "state_dependent_strategy",
    "u0_diagnostic",
]
