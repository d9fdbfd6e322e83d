"""Mittag-Leffler function by compensated power-series summation."""

import numpy as np
from scipy.special import gammaln, rgamma

from ..errors import ConvergenceError, ParameterError

ML_TOL = 1e-12
ML_MAX_TERMS = 500
# rounding budget: eps * sum|terms| must stay below this (relative to max(1, |E|))
ML_CANCELLATION_BUDGET = 1e-10


def mittag_leffler(alpha, beta, z, tol=ML_TOL, max_terms=ML_MAX_TERMS):
    """Two-parameter Mittag-Leffler function ``E_{alpha,beta}(z)``.

    Evaluates ``sum_{n>=0} z**n / Gamma(alpha*n + beta)`` with Kahan
    summation.  Works elementwise on arrays.

    Parameters
    ----------
    alpha, beta : float
        Positive parameters.
    z : float or array_like
        Real argument(s).
    tol : float
        Absolute size below which a term (past the peak) ends the sum.
    max_terms : int
        Term cap.

    Raises
    ------
    ParameterError
        If ``alpha <= 0`` or ``beta <= 0``.
    ConvergenceError
        If the term cap is hit before the tail drops below ``tol``, or if
        alternating-sign cancellation eats the double-precision budget
        (large negative ``z``; asymptotic expansions are not implemented).
    """
    if not (alpha > 0 and beta > 0):
        raise ParameterError(f"Mittag-Leffler needs alpha, beta > 0, got ({alpha}, {beta})")
    z_arr = np.asarray(z, dtype=float)
    scalar = z_arr.ndim == 0
    shape = z_arr.shape
    z_arr = z_arr.ravel()

    total = np.zeros_like(z_arr)
    comp = np.zeros_like(z_arr)
    abs_sum = np.zeros_like(z_arr)
    done = z_arr == 0.0
    total[done] = rgamma(beta)
    abs_sum[done] = abs(total[done])
    prev_mag = np.full_like(z_arr, np.inf)
    abs_z = np.abs(np.where(done, 1.0, z_arr))
    log_absz = np.log(abs_z)
    negative = z_arr < 0

    for n in range(max_terms):
        if done.all():
            break
        active = ~done
        arg = alpha * n + beta
        expo = n * log_absz[active]
        if expo.max(initial=-np.inf) < 600:
            mag = abs_z[active] ** n * rgamma(arg)
        else:
            mag = np.exp(expo - gammaln(arg))
        sign = np.where(negative[active] & (n % 2 == 1), -1.0, 1.0)
        term = sign * mag

        # Kahan step
        y = term - comp[active]
        t = total[active] + y
        comp[active] = (t - total[active]) - y
        total[active] = t
        abs_sum[active] += mag

        finished = (mag < tol) & (mag <= prev_mag[active])
        prev_mag[active] = mag
        idx = np.flatnonzero(active)
        done[idx[finished]] = True

    if not done.all():
        bad = z_arr[~done]
        raise ConvergenceError(
            f"Mittag-Leffler series E_{{{alpha},{beta}}} did not converge within "
            f"{max_terms} terms for z in [{bad.min():.4g}, {bad.max():.4g}]"
        )
    rounding = np.finfo(float).eps * abs_sum * 4.0
    budget = ML_CANCELLATION_BUDGET * np.maximum(1.0, np.abs(total))
    if np.any(rounding > budget):
        worst = z_arr.flat[np.argmax(rounding / budget)]
        raise ConvergenceError(
            f"Mittag-Leffler series loses precision to cancellation at z={worst:.4g}; "
            "argument outside the series budget"
        )
    return float(total[0]) if scalar else total.reshape(shape)
