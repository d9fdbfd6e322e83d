"""Configuration, the Volterra-versus-Markov comparison, CSV export and the CLI."""

from .config import DEFAULTS, ExperimentConfig, config_from_text, default_config, load_config, parse_entries
from .export import FIGURE_FILES, ExportError, export_csv
from .harness import ComparisonResult, ModelRun, SummaryRow, pct_diff, run_section5
from .verify import VerifyReport, run_verify

__all__ = [
    "DEFAULTS",
    "FIGURE_FILES",
    "ComparisonResult",
    "ExperimentConfig",
    "ExportError",
    "ModelRun",
    "SummaryRow",
    "VerifyReport",
    "config_from_text",
    "default_config",
    "export_csv",
    "load_config",
    "parse_entries",
    "pct_diff",
    "run_section5",
    "run_verify",
]
