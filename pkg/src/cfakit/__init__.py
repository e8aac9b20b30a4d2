"""Confirmatory factor analysis for ordinal questionnaire data.

Model syntax parsing, summary and raw data input, polychoric correlations,
ML and DWLS estimation, fit statistics, reliability and validity indices,
RMSEA power analysis and Monte Carlo calibration.
"""

from .data_io import Dataset, SummaryData, load_raw, load_summary, screen
from .estimator import DWLS, ML, FitResult, MomentData, fit
from .fit_stats import fit_indices, lrt_nested, rmsea
from .model_spec import ModelSpec, build_parameter_table, degrees_of_freedom, parse_model, read_model
from .polychoric import polychoric_matrix
from .power import PowerQuery, required_n, rmsea_power
from .psychometrics import scale_report
from .simulate import SimSpec, iuipc8_preset, monte_carlo

__version__ = "0.1.0"

__all__ = [
    "DWLS",
    "ML",
    "Dataset",
    "FitResult",
    "ModelSpec",
    "MomentData",
    "PowerQuery",
    "SimSpec",
    "SummaryData",
    "build_parameter_table",
    "degrees_of_freedom",
    "fit",
    "fit_indices",
    "iuipc8_preset",
    "load_raw",
    "load_summary",
    "lrt_nested",
    "monte_carlo",
    "parse_model",
    "polychoric_matrix",
    "read_model",
    "required_n",
    "rmsea",
    "rmsea_power",
    "scale_report",
    "screen",
]
