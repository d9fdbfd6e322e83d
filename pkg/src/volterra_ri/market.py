"""Risky asset, mortality-driven claims and the insurer's wealth.

Claims arrive with intensity ``k1 * lam_hat_t`` and have iid sizes ``z``.
The insurer keeps a fraction ``a`` of every claim and invests ``pi`` in the
risky asset.  Writing the claim sum with its compensator, wealth follows

    dX = [r X + nu1 pi + nu2 a + c] dt + pi sigma dW1 - a z dN + a k1 lam_hat mu_z dt

with ``nu1 = mu - r``, ``nu2 = eta k1 lam_hat mu_z`` and
``c = (theta - eta) k1 lam_hat mu_z``.  The drift therefore equals the net
premium rate ``k1 lam_hat mu_z [(theta - eta) + (1 + eta) a]`` plus interest
and the risk premium on ``pi``.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, stats

from .errors import FitError, ParameterError, ShapeError
from .rng import STREAM_ASSET, STREAM_CLAIM_ARRIVAL, STREAM_CLAIM_SIZE, normals, path_rng, uniforms

log = logging.getLogger(__name__)

Rate = Union[float, Callable]

# thinning probabilities above this are flagged; the scheme allows one claim per step
THINNING_WARN = 0.05


def _as_fn(v):
    if callable(v):
        return v
    val = float(v)
    return lambda t: np.full(np.shape(t), val) if np.ndim(t) else val


@dataclass(frozen=True)
class MarketParams:
    """Financial market and premium parameters.

    ``r``, ``mu`` and ``sigma`` are floats (constant) or callables of time.
    """

    r: Rate = 0.05
    mu: Rate = 0.07
    sigma: Rate = 0.2
    theta: float = 0.2
    eta: float = 0.2
    k1: float = 10.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ParameterError(f"theta must be positive, got {self.theta}")
        if not self.eta >= self.theta:
            raise ParameterError(f"eta must be at least theta, got eta={self.eta}, theta={self.theta}")
        if not self.k1 >= 0:
            raise ParameterError(f"k1 must be nonnegative, got {self.k1}")
        for name in ("r", "sigma"):
            v = getattr(self, name)
            if not callable(v) and not float(v) > 0:
                raise ParameterError(f"{name} must be positive, got {v}")

    @property
    def constant_rates(self):
        return not any(callable(v) for v in (self.r, self.mu, self.sigma))

    def r_at(self, t):
        return _as_fn(self.r)(t)

    def mu_at(self, t):
        return _as_fn(self.mu)(t)

    def sigma_at(self, t):
        return _as_fn(self.sigma)(t)

    def nu1(self, t):
        """Excess return ``mu - r``."""
        return self.mu_at(t) - self.r_at(t)

    def nu2(self, t, lam_hat, mu_z):
        """Reinsurance premium coefficient ``eta k1 lam_hat mu_z``."""
        return self.eta * self.k1 * np.asarray(lam_hat) * mu_z

    def c_rate(self, lam_hat, mu_z):
        """Premium drift ``(theta - eta) k1 lam_hat mu_z`` independent of ``a``."""
        return (self.theta - self.eta) * self.k1 * np.asarray(lam_hat) * mu_z

    def rate_integral(self, a, b):
        """``int_a^b r`` (vectorized over ``a`` and ``b``)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if not callable(self.r):
            return float(self.r) * (b - a)
        fn = np.vectorize(lambda lo, hi: integrate.quad(self.r, lo, hi, limit=200)[0])
        return fn(a, b)

    def accumulation(self, a, b):
        """``exp(int_a^b r)``."""
        return np.exp(self.rate_integral(a, b))


class ClaimFamily(Enum):
    EXPONENTIAL = "exponential"
    GAMMA = "gamma"
    LOGNORMAL = "lognormal"
    BOUNDED_UNIFORM = "bounded_uniform"


@dataclass(frozen=True)
class ClaimModel:
    """Claim-size distribution matched to ``(E[z], E[z^2])``.

    Build instances with :func:`moment_fit`.
    """

    family: ClaimFamily
    mu_z: float
    m2: float
    dist: object = field(repr=False, compare=False)
    z_max: Optional[float] = None

    @property
    def variance(self):
        return self.m2 - self.mu_z**2

    @property
    def bounded(self):
        return self.z_max is not None

    @property
    def support_max(self):
        """Essential supremum of the size, or ``inf`` for unbounded families."""
        return float(self.dist.support()[1])

    def sample(self, rng, size):
        if self.variance == 0.0:
            return np.full(size, self.mu_z)
        return self.dist.rvs(size=size, random_state=rng)

    def ppf(self, u):
        if self.variance == 0.0:
            return np.full(np.shape(u), self.mu_z)
        return self.dist.ppf(u)


def moment_fit(family, mu_z, m2, z_max=None):
    """Fit a claim-size family to the first two moments.

    Parameters
    ----------
    family : ClaimFamily or str
    mu_z, m2 : float
        Target ``E[z] > 0`` and ``E[z^2] >= mu_z^2``.
    z_max : float, optional
        Declared cap; only meaningful for the bounded uniform family and
        must not be below its upper end point.

    Raises
    ------
    FitError
        When the family cannot reproduce the moments.
    """
    try:
        fam = family if isinstance(family, ClaimFamily) else ClaimFamily(str(family).lower())
    except ValueError:
        raise FitError(f"unknown claim family {family!r}") from None
    if not mu_z > 0:
        raise FitError(f"claim mean must be positive, got {mu_z}")
    var = m2 - mu_z**2
    if var < -1e-15 * m2:
        raise FitError(f"need E[z^2] >= E[z]^2, got E[z^2]={m2} < {mu_z**2}")
    var = max(var, 0.0)
    if var == 0.0 and fam is not ClaimFamily.BOUNDED_UNIFORM:
        raise FitError(f"{fam.value} family cannot represent a point mass (E[z^2] = E[z]^2)")

    if fam is ClaimFamily.EXPONENTIAL:
        if abs(m2 - 2 * mu_z**2) > 1e-10 * m2:
            raise FitError(f"exponential sizes force E[z^2] = 2 E[z]^2 = {2 * mu_z**2}, got {m2}")
        dist = stats.expon(scale=mu_z)
    elif fam is ClaimFamily.GAMMA:
        shape = mu_z**2 / var
        dist = stats.gamma(shape, scale=var / mu_z)
    elif fam is ClaimFamily.LOGNORMAL:
        s2 = math.log(m2 / mu_z**2)
        dist = stats.lognorm(math.sqrt(s2), scale=mu_z * math.exp(-0.5 * s2))
    else:
        half = math.sqrt(3.0 * var)
        lo = mu_z - half
        if lo < 0:
            raise FitError(
                f"bounded uniform sizes need E[z] >= sqrt(3 Var z) to stay nonnegative "
                f"({mu_z} < {half:.6g})"
            )
        dist = stats.uniform(loc=lo, scale=2 * half)
    if z_max is not None:
        if fam is not ClaimFamily.BOUNDED_UNIFORM:
            raise FitError("a size cap is only supported for the bounded uniform family")
        if z_max < float(dist.support()[1]) - 1e-12:
            raise FitError(f"cap z_max={z_max} is below the fitted upper end {float(dist.support()[1]):.6g}")
        z_max = float(z_max)
    model = ClaimModel(fam, float(mu_z), float(m2), dist, z_max)
    if var > 0:
        got1, got2 = float(dist.mean()), float(dist.moment(2))
        if abs(got1 - mu_z) > 1e-10 * max(1.0, mu_z) or abs(got2 - m2) > 1e-10 * max(1.0, m2):
            raise FitError(f"moment check failed: fitted ({got1}, {got2}) vs ({mu_z}, {m2})")
    return model


@dataclass(frozen=True)
class ScenarioBatch:
    """Market shocks for several paths on the control grid.

    At most one claim falls in each step; ``claim_size[p, i]`` is its size
    (0 when no claim) and ``claim_time[p, i]`` its time inside the step
    (NaN when none).  Arrays are ``(n_paths, n_steps)`` except ``asset``
    and ``lam_hat`` which are node values.
    """

    grid: object
    asset: np.ndarray
    dW1: np.ndarray
    claim_size: np.ndarray
    claim_time: np.ndarray
    lam_hat: np.ndarray
    path_indices: np.ndarray

    def __len__(self):
        return self.asset.shape[0]

    def scenario(self, row):
        has = self.claim_size[row] > 0
        events = list(zip(self.claim_time[row][has].tolist(), self.claim_size[row][has].tolist()))
        return MarketScenario(
            grid=self.grid, asset=self.asset[row], dW1=self.dW1[row], claim_events=events,
            claim_size=self.claim_size[row], lam_hat=self.lam_hat[row],
            path_index=int(self.path_indices[row]),
        )

    @property
    def claim_counts(self):
        return np.count_nonzero(self.claim_size > 0, axis=1)


@dataclass(frozen=True)
class MarketScenario:
    """Asset path, Brownian increments and claims for one path."""

    grid: object
    asset: np.ndarray
    dW1: np.ndarray
    claim_events: list
    claim_size: np.ndarray
    lam_hat: np.ndarray
    path_index: int = 0


def _control_slice(lam_hat, mortality_grid, grid):
    """Node values of ``lam_hat`` on ``grid`` (a tail of the mortality grid)."""
    lam_hat = np.atleast_2d(lam_hat)
    if mortality_grid is None:
        if lam_hat.shape[1] != len(grid):
            raise ShapeError("intensity length does not match the control grid")
        return lam_hat
    if abs(mortality_grid.dt - grid.dt) > 1e-12 or abs(mortality_grid.T - grid.T) > 1e-12:
        raise ShapeError("control grid must be a tail of the mortality grid")
    start = mortality_grid.index_of(grid.t0)
    return lam_hat[:, start:]


def simulate_scenarios(market, claims, lam_hat, grid, root_seed, path_indices=None,
                       mortality_grid=None, s0=1.0):
    """Simulate market shocks driven by given intensity paths.

    Parameters
    ----------
    market : MarketParams
    claims : ClaimModel
    lam_hat : array_like
        Intensity paths ``(n_paths, n)`` on ``mortality_grid`` (or on
        ``grid`` when ``mortality_grid`` is None).
    grid : DiscreteGrid
        Control grid.
    root_seed : int
    path_indices : array_like, optional
        Global path numbers; default ``0..n_paths-1``.  They key the asset,
        arrival and size streams, so the same number always gets the same
        shocks (common random numbers).
    """
    lh = _control_slice(lam_hat, mortality_grid, grid)
    n_paths, n, dt = lh.shape[0], grid.n_steps, grid.dt
    idx = np.arange(n_paths) if path_indices is None else np.asarray(path_indices)
    if len(idx) != n_paths:
        raise ShapeError("path_indices length does not match the number of intensity paths")
    times = grid.times
    z = normals(root_seed, STREAM_ASSET, idx, n)
    dw1 = np.sqrt(dt) * z
    mu, sig = market.mu_at(times[:-1]), market.sigma_at(times[:-1])
    log_inc = (mu - 0.5 * sig**2) * dt + sig * dw1
    asset = s0 * np.exp(np.concatenate([np.zeros((n_paths, 1)), np.cumsum(log_inc, axis=1)], axis=1))

    prob = market.k1 * lh[:, :-1] * dt
    if prob.size and prob.max() > THINNING_WARN:
        log.warning("claim thinning probability reaches %.3g per step; refine the grid", prob.max())
    if np.any(prob > 1):
        raise ParameterError("claim probability per step exceeds 1; refine the grid")
    u = uniforms(root_seed, STREAM_CLAIM_ARRIVAL, idx, 2 * n)
    hit = u[:, :n] < prob
    sizes = np.zeros((n_paths, n))
    for row, p in enumerate(idx):
        # one size per step so the draws for step i never depend on earlier arrivals
        draw = claims.sample(path_rng(root_seed, STREAM_CLAIM_SIZE, p), n)
        sizes[row] = np.where(hit[row], draw, 0.0)
    ctime = np.where(hit, times[:-1][None, :] + u[:, n:] * dt, np.nan)
    return ScenarioBatch(grid, asset, dw1, sizes, ctime, lh, idx)


def simulate_scenario(market, claims, mortality, root_seed, grid=None, s0=1.0):
    """Single-path version of :func:`simulate_scenarios`.

    ``grid`` defaults to the part of the mortality grid from time 0 on (or
    the whole grid when it starts after 0).
    """
    mgrid = mortality.grid
    if grid is None:
        grid = mgrid.subgrid(0.0) if mgrid.t0 < 0 else mgrid
    batch = simulate_scenarios(
        market, claims, mortality.lam_hat[None, :], grid, root_seed,
        path_indices=[mortality.path_index], mortality_grid=mgrid, s0=s0,
    )
    return batch.scenario(0)


@dataclass(frozen=True)
class WealthPath:
    """Wealth at the grid nodes with the controls actually applied."""

    grid: object
    X: np.ndarray
    pi: np.ndarray
    a: np.ndarray


def propagate_wealth(scenario, market, claims, controls, x0, start_index=0, spike=None):
    """Propagate wealth through one or many scenarios.

    Parameters
    ----------
    scenario : MarketScenario or ScenarioBatch
    market : MarketParams
    claims : ClaimModel
    controls : StrategySchedule, FeedbackPolicy or (pi, a) arrays
        Schedules give ``(pi_i, a_i)`` directly; feedback policies give
        ``pi_i = g1_i X_i`` and ``a_i = g2_i X_i``.  Controls are applied on
        ``[t_i, t_{i+1})``.
    x0 : float or array_like
        Wealth at node ``start_index``.
    start_index : int
        First node; the result is NaN before it.
    spike : tuple, optional
        ``(first, stop, rho1, rho2)``: on steps ``first <= i < stop`` add
        ``rho1`` to ``pi`` and, unless ``rho2`` is None, set ``a = rho2``.

    Returns
    -------
    WealthPath
        Arrays keep the shape of the scenario (1-d for a single scenario).
    """
    single = isinstance(scenario, MarketScenario)
    grid = scenario.grid
    n, dt = grid.n_steps, grid.dt
    times = grid.times
    lh = np.atleast_2d(scenario.lam_hat)
    dw1 = np.atleast_2d(scenario.dW1)
    zs = np.atleast_2d(scenario.claim_size)
    n_paths = lh.shape[0]
    if lh.shape[1] != n + 1 or dw1.shape[1] != n:
        raise ShapeError("scenario arrays do not match its grid")

    mode, c1, c2 = _control_arrays(controls, n_paths, n)
    r = market.r_at(times[:-1])
    nu1 = market.nu1(times[:-1])
    sig = market.sigma_at(times[:-1])
    base = market.k1 * lh[:, :-1] * claims.mu_z
    # a-coefficient of the drift: (1 + eta) k1 lam_hat mu_z; a-free part: (theta - eta) k1 lam_hat mu_z
    a_coef = (1.0 + market.eta) * base
    free = (market.theta - market.eta) * base

    X = np.full((n_paths, n + 1), np.nan)
    X[:, start_index] = x0
    pi = np.full((n_paths, n), np.nan)
    a = np.full((n_paths, n), np.nan)
    for i in range(start_index, n):
        x = X[:, i]
        if mode == "feedback":
            p_i, a_i = c1[:, i] * x, c2[:, i] * x
        else:
            p_i, a_i = c1[:, i], c2[:, i]
        if spike is not None and spike[0] <= i < spike[1]:
            p_i = p_i + spike[2]
            if spike[3] is not None:
                a_i = np.full_like(x, spike[3])
        drift = r[i] * x + nu1[i] * p_i + a_coef[:, i] * a_i + free[:, i]
        X[:, i + 1] = x + drift * dt + p_i * sig[i] * dw1[:, i] - a_i * zs[:, i]
        pi[:, i], a[:, i] = p_i, a_i
    if single:
        return WealthPath(grid, X[0], pi[0], a[0])
    return WealthPath(grid, X, pi, a)


def _control_arrays(controls, n_paths, n):
    if isinstance(controls, tuple) and len(controls) == 2:
        mode, c1, c2 = "schedule", controls[0], controls[1]
    else:
        mode = getattr(controls, "mode", "schedule")
        if mode == "feedback":
            c1, c2 = controls.pi_gain, controls.a_gain
        else:
            c1, c2 = controls.pi, controls.a
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    out = []
    for arr in (c1, c2):
        if arr.shape[-1] == n + 1:
            arr = arr[..., :-1]
        if arr.shape[-1] != n:
            raise ShapeError(f"controls have {arr.shape[-1]} steps, grid has {n}")
        out.append(np.broadcast_to(np.atleast_2d(arr), (n_paths, n)))
    return mode, out[0], out[1]


__all__ = [
    "ClaimFamily",
    "ClaimModel",
    "MarketParams",
    "MarketScenario",
    "ScenarioBatch",
    "WealthPath",
    "moment_fit",
    "propagate_wealth",
    "simulate_scenario",
    "simulate_scenarios",
]
