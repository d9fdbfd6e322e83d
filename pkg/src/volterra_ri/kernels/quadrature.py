"""Discrete convolution against a kernel on a uniform grid.

Two rules are provided.  Both integrate the kernel exactly over each cell,
so the singular fractional kernel never has to be evaluated at zero.

``left``
    ``(K*f)(t_i) ~ sum_{j<i} w_{i-j} f_j`` with ``w_k = int_{(k-1)dt}^{k dt} K``.
``trapezoid``
    product trapezoid: ``f`` is linear between nodes and the kernel is
    integrated exactly against each linear piece.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from ..errors import ShapeError


@dataclass(frozen=True)
class TrapezoidWeights:
    """Product-trapezoid weights for lags ``k = 1..n``.

    ``left[k]`` multiplies the earlier node of cell ``k`` (lag range
    ``[(k-1)dt, k dt]``), ``right[k]`` the later one.  Index 0 is unused.
    """

    left: np.ndarray
    right: np.ndarray

    @property
    def interior(self):
        """Weight ``left[k] + right[k+1]`` of an interior node at lag ``k``."""
        out = np.zeros_like(self.left)
        out[1:-1] = self.left[1:-1] + self.right[2:]
        out[-1] = self.left[-1]
        return out


def cell_weights(spec, dt, n):
    """``w_k = int_{(k-1)dt}^{k dt} K`` for ``k = 0..n`` (``w_0 = 0``)."""
    big = spec.integral(dt * np.arange(n + 1))
    w = np.zeros(n + 1)
    w[1:] = np.diff(big)
    return w


def trapezoid_weights(spec, dt, n):
    lags = dt * np.arange(n + 1)
    k1 = spec.integral(lags)
    k2 = spec.double_integral(lags)
    dk2 = np.diff(k2)
    left = np.zeros(n + 1)
    right = np.zeros(n + 1)
    left[1:] = (dt * k1[1:] - dk2) / dt
    right[1:] = (dk2 - dt * k1[:-1]) / dt
    return TrapezoidWeights(left=left, right=right)


def _causal_conv(weights, series):
    """``out[i] = sum_{j<=i} weights[i-j] * series[j]`` for ``i < len(series)``."""
    n = len(series)
    if n == 0:
        return np.zeros(0)
    if n < 256:
        return np.convolve(series, weights[:n])[:n]
    return fftconvolve(series, weights[:n])[:n]


def convolve(source, series, grid, rule="left"):
    """Discrete Volterra convolution ``(K * f)(t_i)`` at every node.

    Parameters
    ----------
    source : KernelSpec or ResolventTable
        Kernel to convolve with.  A resolvent table contributes its
        tabulated ``E_B`` through exact cell integrals.
    series : array_like
        Values ``f(t_i)`` on ``grid`` (length ``n_steps + 1``), or empty.
    grid : DiscreteGrid
    rule : {"left", "trapezoid"}

    Returns
    -------
    numpy.ndarray
        Same length as ``series``; entry 0 is always 0.
    """
    f = np.asarray(series, dtype=float)
    if f.size == 0:
        return np.zeros(0)
    if f.ndim != 1 or f.size != len(grid):
        raise ShapeError(f"series has length {f.size}, grid has {len(grid)} nodes")
    n = grid.n_steps
    dt = grid.dt
    big = _integrated_source(source, dt, n)
    if rule == "left":
        w = np.zeros(n + 1)
        w[1:] = np.diff(big)
        out = np.zeros(n + 1)
        # out[i] = sum_{j<i} w[i-j] f[j]
        out[1:] = _causal_conv(w[1:], f[:-1])
        return out
    if rule == "trapezoid":
        tw = _trapezoid_from_source(source, dt, n)
        return trapezoid_apply(tw, f)
    raise ValueError(f"unknown rule {rule!r}")


def trapezoid_apply(tw, f):
    """Apply product-trapezoid weights to node values ``f``."""
    n = len(f) - 1
    out = np.zeros(n + 1)
    if n == 0:
        return out
    c = tw.interior
    # interior nodes j = 1..i-1 at lag i-j, plus endpoints
    cp = np.zeros(n + 1)
    cp[1:] = c[1:]
    g = f.copy()
    g[0] = 0.0
    inner = _causal_conv(cp, g)
    out[1:] = tw.right[1] * f[1:] + inner[1:] + tw.left[1:] * f[0]
    return out


def _integrated_source(source, dt, n):
    lags = dt * np.arange(n + 1)
    if hasattr(source, "integral"):
        return source.integral(lags)
    return source.integrated_eb(lags)


def _trapezoid_from_source(source, dt, n):
    if hasattr(source, "double_integral"):
        return trapezoid_weights(source, dt, n)
    raise TypeError("trapezoid rule needs a KernelSpec")
