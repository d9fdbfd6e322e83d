"""Volterra kernels, Mittag-Leffler evaluation, resolvents and convolution."""

from .families import (
    Assumption1Report,
    DiscreteGrid,
    KernelFamily,
    KernelSpec,
    check_assumption_1,
    kernel_eval,
)
from .quadrature import cell_weights, convolve, trapezoid_apply, trapezoid_weights
from .resolvent import (
    ResolventTable,
    ResolventValue,
    identity_residuals,
    resolvent_closed_form,
    resolvent_numeric,
    resolvent_table,
)
from .special import mittag_leffler

__all__ = [
    "Assumption1Report",
    "DiscreteGrid",
    "KernelFamily",
    "KernelSpec",
    "ResolventTable",
    "ResolventValue",
    "cell_weights",
    "check_assumption_1",
    "convolve",
    "identity_residuals",
    "kernel_eval",
    "mittag_leffler",
    "resolvent_closed_form",
    "resolvent_numeric",
    "resolvent_table",
    "trapezoid_apply",
    "trapezoid_weights",
]
