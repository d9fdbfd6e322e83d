"""Resolvents of the second kind for scaled kernels ``-B K``.

For a kernel ``k`` the resolvent ``R`` solves ``k*R = R*k = k - R``.  With
``k = -B K`` and ``B = -a_1`` this is the object that turns the mean-reverting
Volterra equation into an explicit formula; the companion function
``E_B = K - R_B * K`` weighs past noise in conditional expectations.

Tables store both point values and running integrals:

``R_int(t) = int_0^t R_B``,  ``E_int(t) = int_0^t E_B``.

The running integrals are what the simulation and the conditional mean use,
so they are the quantities solved for.  Numerically they are piecewise
linear between nodes; off-node queries interpolate linearly, which is exact
within the discrete model.
"""

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from ..errors import ConvergenceError, DomainError, NumericalError, ShapeError
from .families import KernelFamily, kernel_eval
from .quadrature import cell_weights, trapezoid_weights
from .special import mittag_leffler


@dataclass(frozen=True)
class ResolventTable:
    """Tabulated ``R_B`` and ``E_B`` on the lags ``k * dt``, ``k = 0..n``.

    Attributes
    ----------
    grid : DiscreteGrid
        Grid whose spacing defines the lags (only ``dt`` and ``n_steps`` matter).
    B : float
        Coefficient; the resolvent is that of ``-B K``.
    R, E : numpy.ndarray
        Point values at the lags.  Entry 0 is the limit ``t -> 0+``, which
        is infinite for singular kernels.
    R_int, E_int : numpy.ndarray
        Running integrals at the lags.
    method : str
        ``"closed_form"`` or ``"numeric"``.
    fallback : bool
        True when a closed form was requested but the numeric solver was used.
    residual : float
        Max-norm residual of the defining identity on the grid.
    """

    grid: object
    B: float
    R: np.ndarray
    E: np.ndarray
    R_int: np.ndarray
    E_int: np.ndarray
    method: str
    fallback: bool = False
    residual: float = 0.0
    kernel: object = None
    exact_R_int: Optional[Callable] = field(default=None, repr=False, compare=False)
    exact_E_int: Optional[Callable] = field(default=None, repr=False, compare=False)

    @property
    def dt(self):
        return self.grid.dt

    @property
    def n(self):
        return self.grid.n_steps

    @property
    def lags(self):
        return self.dt * np.arange(self.n + 1)

    def _check_range(self, lags):
        top = self.n * self.dt
        if np.any(lags < -1e-12) or np.any(lags > top * (1 + 1e-12) + 1e-12):
            raise DomainError(f"lag outside the tabulated range [0, {top}]")

    def integrated_resolvent(self, lags):
        lags = np.asarray(lags, dtype=float)
        self._check_range(lags)
        if self.exact_R_int is not None:
            return self.exact_R_int(np.clip(lags, 0.0, None))
        return np.interp(lags, self.lags, self.R_int)

    def integrated_eb(self, lags):
        lags = np.asarray(lags, dtype=float)
        self._check_range(lags)
        if self.exact_E_int is not None:
            return self.exact_E_int(np.clip(lags, 0.0, None))
        return np.interp(lags, self.lags, self.E_int)

    def eb_cell_means(self):
        """Mean of ``E_B`` over lag cells ``[(k-1)dt, k dt]``; entry 0 is 0."""
        out = np.zeros(self.n + 1)
        out[1:] = np.diff(self.E_int) / self.dt
        return out


class ResolventValue(NamedTuple):
    value: float
    closed_form: bool


def _scaled(spec, B):
    return -B * spec.c


def _closed_form_R(spec, B, t):
    """Point values of R_B from the closed forms; raises for unsupported cases."""
    t = np.asarray(t, dtype=float)
    s = _scaled(spec, B)
    a, lam = spec.power, spec.decay
    fam = spec.family
    if s == 0.0:
        return np.zeros_like(t)
    if fam is KernelFamily.CONSTANT:
        return s * np.exp(-s * t)
    if fam is KernelFamily.EXPONENTIAL:
        return s * np.exp(-(lam + s) * t)
    damp = np.exp(-lam * t) if fam is KernelFamily.GAMMA else 1.0
    if a == 1.0:
        return s * damp * np.exp(-s * t)
    return s * damp * t ** (a - 1) * mittag_leffler(a, a, -s * t**a)


def _closed_form_R_int(spec, B):
    """Callable giving int_0^t R_B in closed form, or None for the gamma family."""
    s = _scaled(spec, B)
    a, lam = spec.power, spec.decay
    fam = spec.family
    if s == 0.0:
        return lambda t: np.zeros_like(np.asarray(t, dtype=float))
    if fam is KernelFamily.CONSTANT or (fam is KernelFamily.FRACTIONAL and a == 1.0):
        return lambda t: -np.expm1(-s * np.asarray(t, dtype=float))
    if fam is KernelFamily.FRACTIONAL:
        return lambda t: 1.0 - mittag_leffler(a, 1.0, -s * np.asarray(t, dtype=float) ** a)
    if fam is KernelFamily.EXPONENTIAL:
        rate = lam + s
        if rate == 0.0:
            return lambda t: s * np.asarray(t, dtype=float)
        return lambda t: -s / rate * np.expm1(-rate * np.asarray(t, dtype=float))
    if fam is KernelFamily.GAMMA and lam == 0.0:
        return _closed_form_R_int(type(spec)(KernelFamily.FRACTIONAL, spec.c, a), B)
    return None


def resolvent_closed_form(spec, b_coeff, t):
    """``R_B(t)`` for the resolvent of ``-b_coeff * K``.

    Uses the closed forms for the four kernel families.  If the closed form
    cannot be evaluated (Mittag-Leffler argument beyond the series budget)
    the value is taken from :func:`resolvent_numeric` on a fine grid and the
    result is flagged with ``closed_form=False``.
    """
    if t <= 0:
        raise DomainError("resolvent evaluated at t <= 0")
    try:
        return ResolventValue(float(_closed_form_R(spec, b_coeff, t)), True)
    except ConvergenceError:
        from .families import DiscreteGrid

        grid = DiscreteGrid(0.0, float(t), 2048)
        table = resolvent_numeric(spec, b_coeff, grid)
        return ResolventValue(float(table.R[-1]), False)


def resolvent_numeric(spec, b_coeff, grid):
    """Solve the resolvent identity for ``-b_coeff * K`` on ``grid``.

    The integrated identity ``R_int + k * R_int = int_0^t k`` (``k = -B K``)
    is discretized with the product trapezoid rule and solved by forward
    substitution, O(n^2).  Point values then follow from
    ``R_B = k - k * R_B`` with ``R_B`` piecewise constant between nodes.
    """
    n, dt = grid.n_steps, grid.dt
    s = -b_coeff
    lags = dt * np.arange(n + 1)
    k1 = spec.integral(lags)
    tw = trapezoid_weights(spec, dt, n)
    inner = tw.interior

    r_int = np.zeros(n + 1)
    diag = 1.0 + s * tw.right[1]
    if diag == 0.0 or not np.isfinite(diag):
        raise NumericalError("singular forward substitution in resolvent solve")
    rev = inner[::-1]  # rev[n - m] = inner[m]
    for i in range(1, n + 1):
        # sum_{j=1}^{i-1} inner[i-j] * r_int[j]
        acc = np.dot(rev[n - i + 1 : n], r_int[1:i]) if i > 1 else 0.0
        r_int[i] = (s * k1[i] - s * acc) / diag

    conv = _trap_conv(tw, r_int)
    e_int = k1 - conv
    residual = float(np.max(np.abs(r_int + s * conv - s * k1))) if n else 0.0

    w = cell_weights(spec, dt, n)
    dens = np.diff(r_int) / dt  # R_B on each cell
    ek = np.empty(n + 1)
    ek[0] = _kernel_at_zero(spec)
    if n:
        # (R_B * K)(t_i) = sum_{j<i} dens_j * w_{i-j}
        rk = np.convolve(dens, w[1:])[:n]
        ek[1:] = kernel_eval(spec, lags[1:]) - rk
    r_pt = s * ek
    return ResolventTable(
        grid=grid, B=float(b_coeff), R=r_pt, E=ek, R_int=r_int, E_int=e_int,
        method="numeric", residual=residual, kernel=spec,
    )


def _trap_conv(tw, f):
    """Product-trapezoid convolution of ``f`` (with ``f[0] = 0``)."""
    n = len(f) - 1
    out = np.zeros(n + 1)
    if n == 0:
        return out
    cp = tw.interior.copy()
    cp[0] = 0.0
    g = f.copy()
    g[0] = 0.0
    inner = np.convolve(g, cp)[: n + 1]
    out[1:] = tw.right[1] * f[1:] + inner[1:] + tw.left[1:] * f[0]
    return out


def _kernel_at_zero(spec):
    a = spec.power
    if spec.family in (KernelFamily.CONSTANT, KernelFamily.EXPONENTIAL) or a == 1.0:
        return spec.c
    return np.inf if a < 1.0 else 0.0


def resolvent_table(spec, b_coeff, grid):
    """Tabulate ``R_B`` and ``E_B`` preferring the closed forms.

    Falls back to :func:`resolvent_numeric` (``fallback=True``) when no
    closed-form running integral exists (gamma kernel with decay) or the
    Mittag-Leffler series cannot be evaluated at the longest lag.
    """
    r_int_fn = _closed_form_R_int(spec, b_coeff)
    if r_int_fn is None:
        return _as_fallback(resolvent_numeric(spec, b_coeff, grid))
    n, dt = grid.n_steps, grid.dt
    lags = dt * np.arange(n + 1)
    s = -b_coeff
    try:
        r_int = r_int_fn(lags)
        r_pt = np.empty(n + 1)
        r_pt[0] = s * _kernel_at_zero(spec) if s != 0 else 0.0
        if n:
            r_pt[1:] = _closed_form_R(spec, b_coeff, lags[1:])
    except ConvergenceError:
        return _as_fallback(resolvent_numeric(spec, b_coeff, grid))

    if s != 0.0:
        e_pt = r_pt / s
        e_int = r_int / s

        def e_int_fn(t):
            return r_int_fn(t) / s
    else:
        e_pt = np.empty(n + 1)
        e_pt[0] = _kernel_at_zero(spec)
        if n:
            e_pt[1:] = kernel_eval(spec, lags[1:])
        e_int = spec.integral(lags)
        e_int_fn = spec.integral

    # identity check in integrated form with the product trapezoid rule
    tw = trapezoid_weights(spec, dt, n)
    residual = float(np.max(np.abs(r_int + s * _trap_conv(tw, r_int) - s * spec.integral(lags))))
    return ResolventTable(
        grid=grid, B=float(b_coeff), R=r_pt, E=e_pt, R_int=r_int, E_int=e_int,
        method="closed_form", residual=residual, kernel=spec,
        exact_R_int=r_int_fn, exact_E_int=e_int_fn,
    )


def _as_fallback(table):
    return ResolventTable(
        grid=table.grid, B=table.B, R=table.R, E=table.E, R_int=table.R_int,
        E_int=table.E_int, method="numeric", fallback=True, residual=table.residual,
        kernel=table.kernel,
    )


def identity_residuals(table, spec):
    """Left and right discrete identity residuals (max norm) of a table.

    Left: ``R_int + k * R_int - int k`` with ``R_int`` linear between nodes.
    Right: the same identity written with ``R_B`` piecewise constant and the
    integrated kernel, ``int R_B(u) Kint(t-u) du``.
    """
    n, dt = table.n, table.dt
    if len(table.R_int) != n + 1:
        raise ShapeError("table length does not match its grid")
    s = -table.B
    lags = dt * np.arange(n + 1)
    k1 = spec.integral(lags)
    tw = trapezoid_weights(spec, dt, n)
    left = table.R_int + s * _trap_conv(tw, table.R_int) - s * k1
    k2 = spec.double_integral(lags)
    dens = np.diff(table.R_int) / dt
    cell_k1 = np.diff(k2) / dt  # mean of Kint over lag cells, times dt / dt
    right = np.zeros(n + 1)
    if n:
        right[1:] = table.R_int[1:] + s * dt * np.convolve(dens, cell_k1)[:n] - s * k1[1:]
    return float(np.max(np.abs(left))), float(np.max(np.abs(right)))


__all__ = [
    "ResolventTable",
    "ResolventValue",
    "resolvent_closed_form",
    "resolvent_numeric",
    "resolvent_table",
    "identity_residuals",
]
