"""Exception hierarchy shared by every module of the package."""


class VolterraRIError(Exception):
    """Base class for all package errors."""


class ParameterError(VolterraRIError, ValueError):
    """A parameter lies outside its admissible domain."""


class DomainError(VolterraRIError, ValueError):
    """A function was evaluated outside its domain (e.g. a kernel at t <= 0)."""


class ShapeError(VolterraRIError, ValueError):
    """Array lengths or grids do not line up."""


class ConvergenceError(VolterraRIError, ArithmeticError):
    """An iterative or series evaluation did not reach its tolerance."""


class RiccatiBlowUpError(ConvergenceError):
    """The Volterra-Riccati equation has no solution on the whole horizon.

    Attributes
    ----------
    blow_up_time : float
        First grid time at which the iteration diverged.
    """

    def __init__(self, message, blow_up_time):
        super().__init__(message)
        self.blow_up_time = blow_up_time


class NumericalError(VolterraRIError, ArithmeticError):
    """A linear solve or quadrature produced an unusable result."""


class FitError(VolterraRIError, ValueError):
    """A claim-size family cannot reproduce the requested moments."""


class ResolutionError(VolterraRIError, ValueError):
    """The grid is too coarse, or does not cover the requested interval."""


class RegimeError(VolterraRIError, ValueError):
    """Risk-aversion regime does not match the requested operation."""


class ConsistencyError(VolterraRIError, AssertionError):
    """An internal invariant was violated (e.g. M_t < 1)."""


class ConfigError(VolterraRIError, ValueError):
    """Configuration file could not be parsed or validated.

    Attributes
    ----------
    line : int or None
        1-based line number of the offending entry, when known.
    field : str or None
        Dotted key (``section.key``) that failed validation.
    """

    def __init__(self, message, line=None, field=None):
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if field is not None:
            prefix.append(field)
        full = f"{': '.join(prefix)}: {message}" if prefix else message
        super().__init__(full)
        self.line = line
        self.field = field
