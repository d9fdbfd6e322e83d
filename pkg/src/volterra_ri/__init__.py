"""Volterra mortality, reinsurance-investment equilibrium strategies and experiments."""

from .errors import (
    ConfigError,
    ConsistencyError,
    ConvergenceError,
    DomainError,
    FitError,
    NumericalError,
    ParameterError,
    RegimeError,
    ResolutionError,
    RiccatiBlowUpError,
    ShapeError,
    VolterraRIError,
)
from .kernels import DiscreteGrid, KernelSpec, mittag_leffler, resolvent_table
from .market import MarketParams, moment_fit, propagate_wealth, simulate_scenario, simulate_scenarios
from .mortality import MortalityParams, simulate_path, simulate_paths, solve_riccati
from .strategies import RiskAversion, check_assumptions, constant_ra_strategy, state_dependent_policy

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConsistencyError",
    "ConvergenceError",
    "DiscreteGrid",
    "DomainError",
    "FitError",
    "KernelSpec",
    "MarketParams",
    "MortalityParams",
    "NumericalError",
    "ParameterError",
    "RegimeError",
    "ResolutionError",
    "RiccatiBlowUpError",
    "RiskAversion",
    "ShapeError",
    "VolterraRIError",
    "check_assumptions",
    "constant_ra_strategy",
    "mittag_leffler",
    "moment_fit",
    "propagate_wealth",
    "resolvent_table",
    "simulate_path",
    "simulate_paths",
    "simulate_scenario",
    "simulate_scenarios",
    "solve_riccati",
    "state_dependent_policy",
]
