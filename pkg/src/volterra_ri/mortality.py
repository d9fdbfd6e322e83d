"""Volterra mortality intensity: simulation, forecasts and exponential moments.

The intensity solves

    lam_t = lam_0 + int_0^t K(t-s) (b_1 - a_1 lam_s) ds + int_0^t K(t-s) sigma sqrt(lam_s) dW_s .

Solving the linear drift with the resolvent ``R_B`` of ``a_1 K`` gives the
equivalent mild form

    lam_t = lam_0 (1 - int_0^t R_B) + b_1 int_0^t E_B + int_0^t E_B(t-s) sigma sqrt(lam_s) dW_s ,

which is what the simulator discretizes.  Only the noise integral is
approximated (left point for ``sqrt(lam)``, exact cell mean of ``E_B``), so
the conditional mean of the discrete process is available in closed form and
coincides with the forecast formula used by the strategies.  For the
constant kernel the scheme is the exact-mean CIR scheme.

Times on the simulation grid are absolute; the equation's origin is
``grid.t0`` (for the mortality study this is age 30, ``t0 = -20``).
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid

from .errors import DomainError, ParameterError, RiccatiBlowUpError, ShapeError
from .kernels import KernelSpec, resolvent_table, trapezoid_apply, trapezoid_weights
from .rng import STREAM_MORTALITY, batched, map_batches, normals

log = logging.getLogger(__name__)

_BLOCK = 32
_BATCH = 4096


def _zero(t):
    return np.zeros_like(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class MortalityParams:
    """Parameters of the Volterra mortality intensity.

    Parameters
    ----------
    lambda0 : float
        Intensity at the equation's origin (1/year).
    b1, a1 : float
        Mean-reversion level numerator and speed; the long-run level of the
        Markov model is ``b1 / a1``.
    sigma_lambda : float
        Volatility of the intensity.  Zero gives the deterministic Volterra
        equation.
    kernel : KernelSpec
    l_fn : callable, optional
        Deterministic baseline ``l(t) >= 0`` added to the intensity.
        Defaults to zero.
    """

    lambda0: float
    b1: float
    a1: float
    sigma_lambda: float
    kernel: KernelSpec = field(default_factory=KernelSpec.constant)
    l_fn: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("lambda0", "b1", "a1"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.sigma_lambda >= 0:
            raise ParameterError(f"sigma_lambda must be nonnegative, got {self.sigma_lambda}")
        if not isinstance(self.kernel, KernelSpec):
            raise ParameterError("kernel must be a KernelSpec")

    @property
    def B(self):
        """Coefficient of the resolvent used in forecasts (``-a1``)."""
        return -self.a1

    def baseline(self, t):
        if self.l_fn is None:
            return _zero(t)
        out = np.asarray(self.l_fn(np.asarray(t, dtype=float)), dtype=float)
        out = np.broadcast_to(out, np.shape(t)).astype(float)
        if np.any(out < 0) or not np.all(np.isfinite(out)):
            raise ParameterError("baseline l(t) must be finite and nonnegative")
        return out

    def with_kernel(self, kernel):
        return MortalityParams(self.lambda0, self.b1, self.a1, self.sigma_lambda, kernel, self.l_fn)

    def with_sigma(self, sigma_lambda):
        return MortalityParams(self.lambda0, self.b1, self.a1, sigma_lambda, self.kernel, self.l_fn)

    def resolvents(self, grid):
        """Resolvent table of ``a1 K`` on the lags of ``grid``."""
        return resolvent_table(self.kernel, self.B, grid)


def deterministic_part(params, table, tau):
    """``lam_0 (1 - int_0^tau R_B) + b_1 int_0^tau E_B`` at elapsed times ``tau``."""
    return params.lambda0 * (1.0 - table.integrated_resolvent(tau)) + params.b1 * table.integrated_eb(tau)


@dataclass(frozen=True)
class MortalityBatch:
    """Simulated intensities for several paths on one grid.

    Attributes
    ----------
    grid : DiscreteGrid
    lam : numpy.ndarray
        ``(n_paths, n_steps + 1)`` intensities, clamped at zero.
    lam_hat : numpy.ndarray
        ``lam`` plus the baseline ``l(t)``.
    dW0 : numpy.ndarray
        ``(n_paths, n_steps)`` Brownian increments.
    noise : numpy.ndarray
        ``sigma * sqrt(lam_j^+) * dW0_j``, the integrand of the noise sum.
    path_indices : numpy.ndarray
        Global path numbers (they key the random streams).
    """

    grid: object
    lam: np.ndarray
    lam_hat: np.ndarray
    dW0: np.ndarray
    noise: np.ndarray
    path_indices: np.ndarray
    params: MortalityParams = field(repr=False)
    table: object = field(repr=False)
    root_seed: int = 0

    def __len__(self):
        return self.lam.shape[0]

    def path(self, row):
        return MortalityPath(
            grid=self.grid, lam=self.lam[row], lam_hat=self.lam_hat[row], dW0=self.dW0[row],
            noise=self.noise[row], params=self.params, table=self.table,
            path_index=int(self.path_indices[row]), root_seed=self.root_seed,
        )


@dataclass(frozen=True)
class MortalityPath:
    """One simulated intensity trajectory with its driving increments.

    ``lam_hat[i] = l(t_i) + lam[i]`` and ``lam[i] >= 0`` for all ``i``.
    """

    grid: object
    lam: np.ndarray
    lam_hat: np.ndarray
    dW0: np.ndarray
    noise: np.ndarray
    params: MortalityParams = field(repr=False)
    table: object = field(repr=False)
    path_index: int = 0
    root_seed: int = 0

    @property
    def times(self):
        return self.grid.times


def _simulate_block(params, grid, table, z):
    """Core mild-form recursion for a batch of standard normals ``z``."""
    n, dt = grid.n_steps, grid.dt
    n_paths = z.shape[0]
    ebar = table.eb_cell_means()
    drift = deterministic_part(params, table, table.lags)
    sig = params.sigma_lambda
    dw = np.sqrt(dt) * z
    hist = np.zeros((n_paths, n + 1))
    raw = np.empty((n_paths, n + 1))
    g = np.zeros((n_paths, n))
    for s in range(0, n + 1, _BLOCK):
        e = min(s + _BLOCK, n + 1)
        for i in range(s, e):
            acc = hist[:, i]
            if i > s:
                acc = acc + g[:, s:i] @ ebar[i - s : 0 : -1]
            raw[:, i] = drift[i] + acc
            if i < n:
                g[:, i] = sig * np.sqrt(np.maximum(raw[:, i], 0.0)) * dw[:, i]
        if e <= n:
            gs = g[:, s : min(e, n)]
            lag = np.arange(e, n + 1)[None, :] - np.arange(s, s + gs.shape[1])[:, None]
            hist[:, e:] += gs @ ebar[lag]
    return np.maximum(raw, 0.0), dw, g


def simulate_paths(params, grid, root_seed, n_paths, table=None, first_index=0):
    """Simulate ``n_paths`` independent intensity paths on ``grid``.

    Path ``p`` uses the random stream ``(root_seed, mortality, first_index + p)``
    so results do not depend on batching or thread count.

    Parameters
    ----------
    params : MortalityParams
    grid : DiscreteGrid
        Simulation grid; ``grid.t0`` is the equation's origin.
    root_seed : int
    n_paths : int
    table : ResolventTable, optional
        Precomputed resolvents on ``grid``; built when omitted.
    first_index : int
        Global number of the first path.

    Returns
    -------
    MortalityBatch
    """
    if n_paths < 1:
        raise ParameterError("n_paths must be at least 1")
    if table is None:
        table = params.resolvents(grid)
    _check_table(table, grid)
    idx_all = np.arange(first_index, first_index + n_paths)

    def run(rows):
        z = normals(root_seed, STREAM_MORTALITY, idx_all[rows], grid.n_steps)
        return _simulate_block(params, grid, table, z)

    parts = map_batches(run, batched(n_paths, _BATCH))
    lam = np.vstack([p[0] for p in parts])
    dw = np.vstack([p[1] for p in parts])
    g = np.vstack([p[2] for p in parts])
    lam_hat = lam + params.baseline(grid.times)[None, :]
    return MortalityBatch(grid, lam, lam_hat, dw, g, idx_all, params, table, int(root_seed))


def simulate_path(params, grid, rng_seed, path_index=0, table=None):
    """Simulate a single path; equal arguments give bit-identical output."""
    return simulate_paths(params, grid, rng_seed, 1, table=table, first_index=path_index).path(0)


def _check_table(table, grid):
    if table.n != grid.n_steps or abs(table.dt - grid.dt) > 1e-12 * max(1.0, grid.dt):
        raise ShapeError("resolvent table does not match the simulation grid")


class VolterraForecaster:
    """Conditional means ``E[lam_hat_s | F_t]`` under the Volterra model.

    ``E[lam_s | F_t] = lam_0 (1 - int_0^s R_B) + b_1 int_0^s E_B
    + sum_{t_j < t} w_j(s) sigma sqrt(lam_j^+) dW_j`` with
    ``w_j(s) = (1/dt) int_{s - t_{j+1}}^{s - t_j} E_B``, the same weights the
    simulator used, so the forecast at ``s = t`` is the simulated value.
    """

    def __init__(self, path, history_start=None):
        self.path = path
        self.params = path.params
        self.table = path.table
        self.grid = path.grid
        # noise before history_start is ignored (ablation of the observed history)
        self._first = 0 if history_start is None else self.grid.index_of(history_start)

    def _noise(self):
        g = self.path.noise.copy()
        g[: self._first] = 0.0
        return g

    def conditional_mean(self, t, s):
        """``E[lam_hat_s | F_t]`` for scalar ``t`` (a grid node) and ``s >= t``."""
        grid = self.grid
        m = grid.index_of(t)
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < grid.times[m] - 1e-12):
            raise DomainError("conditional mean needs s >= t")
        if np.any(s_arr > grid.T + 1e-12):
            raise DomainError("s beyond the grid horizon")
        flat = np.atleast_1d(s_arr).ravel()
        tau = flat - grid.t0
        out = deterministic_part(self.params, self.table, tau)
        if m > 0:
            g = self._noise()[:m]
            tj = grid.times[:m]
            upper = self.table.integrated_eb(np.clip(flat[:, None] - tj[None, :], 0.0, None))
            lower = self.table.integrated_eb(np.clip(flat[:, None] - tj[None, :] - grid.dt, 0.0, None))
            out = out + ((upper - lower) / grid.dt) @ g
        at_t = np.abs(flat - grid.times[m]) <= 1e-12
        if self._first == 0:
            out = np.where(at_t, self.path.lam[m], out)
        out = out + self.params.baseline(flat)
        return float(out[0]) if s_arr.ndim == 0 else out.reshape(s_arr.shape)

    def mean_table(self, start_index):
        """Matrix ``C[m, k] = E[lam_hat_{t_k} | F_{t_m}]`` for ``start <= m <= k <= n``.

        Row and column 0 correspond to ``start_index``; entries with ``k < m``
        are NaN.  Cost is O(n_c^2 + n_c * start).
        """
        grid, table = self.grid, self.table
        n = grid.n_steps
        nc = n - start_index
        ebar = table.eb_cell_means()
        g = self._noise()
        ks = np.arange(start_index, n + 1)
        base = deterministic_part(self.params, table, table.lags[ks])
        if start_index > 0:
            full = np.convolve(g[:start_index], ebar)
            base = base + full[ks]
        # update from step m' = start..n-1: adds g_m' * ebar[k - m'] for k > m'
        lag = ks[None, :] - ks[:-1, None]
        upd = np.where(lag > 0, ebar[np.clip(lag, 0, n)], 0.0) * g[start_index:n][:, None]
        cm = np.empty((nc + 1, nc + 1))
        cm[0] = base
        if nc:
            cm[1:] = base[None, :] + np.cumsum(upd, axis=0)
        if self._first == 0:
            cm[np.arange(nc + 1), np.arange(nc + 1)] = self.path.lam[ks]
        cm += self.params.baseline(grid.times[ks])[None, :]
        cm[np.tril_indices(nc + 1, -1)] = np.nan
        return cm


class MarkovForecaster:
    """Conditional means under the Markov (constant-kernel) model.

    ``E[lam_hat_s | F_t] = l(s) + lam_t e^{-a_1 (s-t)} + (b_1/a_1)(1 - e^{-a_1 (s-t)})``
    evaluated with the observed ``lam_t`` of whatever path is supplied.
    """

    def __init__(self, path):
        self.path = path
        self.params = path.params
        self.grid = path.grid

    def conditional_mean(self, t, s):
        m = self.grid.index_of(t)
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < self.grid.times[m] - 1e-12):
            raise DomainError("conditional mean needs s >= t")
        return markov_mean(self.params, self.path.lam[m], s_arr - self.grid.times[m]) + self.params.baseline(s_arr)

    def mean_table(self, start_index):
        grid = self.grid
        ks = np.arange(start_index, grid.n_steps + 1)
        tk = grid.times[ks]
        gap = tk[None, :] - tk[:, None]
        lam_t = self.path.lam[ks][:, None]
        cm = markov_mean(self.params, lam_t, np.where(gap >= 0, gap, 0.0))
        cm = cm + self.params.baseline(tk)[None, :]
        cm[gap < 0] = np.nan
        return cm


def markov_mean(params, lam_t, horizon):
    """Markov forecast of ``lam`` a time ``horizon`` ahead of an observed ``lam_t``."""
    decay = np.exp(-params.a1 * np.asarray(horizon, dtype=float))
    return lam_t * decay + params.b1 / params.a1 * (1.0 - decay)


@dataclass(frozen=True)
class RiccatiSolution:
    """Solution of ``psi = (c0 - a1 psi + sigma^2 psi^2 / 2) * K`` on lags ``k dt``."""

    grid: object
    psi: np.ndarray
    c0: float
    residual: float


def _riccati_rhs(params, c0, psi):
    return c0 - params.a1 * psi + 0.5 * params.sigma_lambda**2 * psi**2


def solve_riccati(params, grid, c0, blow_up=1e8):
    """Solve the Volterra-Riccati equation node by node.

    The convolution uses product-trapezoid weights; the unknown at each new
    node enters through the weight ``w`` of the current cell, so each step
    solves the scalar quadratic ``psi = A + w F(psi)`` exactly (the root
    continuous in ``w``).

    Raises
    ------
    RiccatiBlowUpError
        If the quadratic has no real root or ``|psi|`` exceeds ``blow_up``;
        the first failing time is attached.
    """
    n, dt = grid.n_steps, grid.dt
    tw = trapezoid_weights(params.kernel, dt, n)
    inner = tw.interior
    w = tw.right[1]
    a1, s2 = params.a1, params.sigma_lambda**2
    psi = np.zeros(n + 1)
    f = np.zeros(n + 1)
    f[0] = _riccati_rhs(params, c0, 0.0)
    rev = inner[::-1]
    for i in range(1, n + 1):
        acc = tw.left[i] * f[0]
        if i > 1:
            acc += np.dot(rev[n - i + 1 : n], f[1:i])
        # psi = acc + w (c0 - a1 psi + s2/2 psi^2)
        p = acc + w * c0
        q = 1.0 + w * a1
        qa = 0.5 * w * s2
        if qa == 0.0:
            val = p / q
        else:
            disc = q * q - 4.0 * qa * p
            if disc < 0:
                raise RiccatiBlowUpError(
                    f"Riccati solution ceases to exist near t = {i * dt:.6g}", blow_up_time=i * dt
                )
            val = 2.0 * p / (q + np.sqrt(disc))
        if not np.isfinite(val) or abs(val) > blow_up:
            raise RiccatiBlowUpError(f"Riccati solution blows up near t = {i * dt:.6g}", blow_up_time=i * dt)
        psi[i] = val
        f[i] = _riccati_rhs(params, c0, val)

    residual = float(np.max(np.abs(psi - trapezoid_apply(tw, f))))
    return RiccatiSolution(grid=grid, psi=psi, c0=float(c0), residual=residual)


def exp_functional(params, grid, c0, path=None, t=None, riccati=None, table=None):
    """``E[exp(c0 int lam ds) | F_t]`` over the whole grid ``[t0, T]``.

    Uses ``log E = c0 int E[lam_s|F_t] ds + (sigma^2/2) int_t^T psi(T-s)^2 E[lam_s|F_t] ds``
    where past values are the realized ones.  Without a path (or with
    ``t = t0``) this is the unconditional moment.
    """
    if c0 == 0:
        return 1.0
    if riccati is None:
        riccati = solve_riccati(params, grid, c0)
    if table is None:
        table = path.table if path is not None else params.resolvents(grid)
    times = grid.times
    n = grid.n_steps
    if path is None or t is None:
        m = 0
        means = deterministic_part(params, table, table.lags)
    else:
        m = grid.index_of(t)
        fc = VolterraForecaster(path)
        fut = fc.conditional_mean(times[m], times[m:]) - params.baseline(times[m:])
        means = np.concatenate([path.lam[:m], fut])
    first = c0 * trapezoid(means, times)
    psi_rev = riccati.psi[::-1]  # psi(T - t_k)
    second = 0.5 * params.sigma_lambda**2 * trapezoid(psi_rev[m:] ** 2 * means[m:], times[m:])
    return float(np.exp(first + second))


def moment_bound_probe(params, grid, q, n_paths, root_seed=0):
    """Monte Carlo ``sup_i E[lam_{t_i}^q]`` over the grid nodes."""
    if q < 2:
        raise ParameterError("moment order q must be at least 2")
    batch = simulate_paths(params, grid, root_seed, n_paths)
    return float(np.max(np.mean(batch.lam**q, axis=0)))


__all__ = [
    "MarkovForecaster",
    "MortalityBatch",
    "MortalityParams",
    "MortalityPath",
    "RiccatiSolution",
    "VolterraForecaster",
    "deterministic_part",
    "exp_functional",
    "markov_mean",
    "moment_bound_probe",
    "simulate_path",
    "simulate_paths",
    "solve_riccati",
]
