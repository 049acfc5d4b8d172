"""Parsimonious mixtures of contaminated Gaussian distributions.

Model-based clustering with simultaneous detection of bad points (outliers,
spurious points, noise), fitted by ECM over the 14 eigen-decomposed
covariance structures and selected by BIC.
"""

from .classification import (
    GOOD_THRESHOLD,
    adjusted_rand_index,
    confusion_tables,
    detect_bad,
    label_observations,
    map_assign,
    misallocation_count,
)
from .ecm import FitConfig, FitResult, fit, fit_gpcm
from .exceptions import (
    ComponentDeathError,
    ConfigError,
    ContamixError,
    DataError,
    FactorizationError,
    FitError,
    UnderflowError,
)
from .gaussian import CovMatrix, contaminated_log_pdf, log_gaussian_pdf, mixture_log_pdf
from .io import DataMatrix, ingest_csv
from .params import ModelParams
from .report import Report, build_report
from .selection import SweepGrid, bic, count_free_params, sweep
from .structures import ALL_STRUCTURES, EigenDecomposition, StructureId, decompose, update_sigmas

__version__ = "0.1.0"

__all__ = [
    "ALL_STRUCTURES", "GOOD_THRESHOLD", "ComponentDeathError", "ConfigError", "ContamixError",
    "CovMatrix", "DataError", "DataMatrix", "EigenDecomposition", "FactorizationError",
    "FitConfig", "FitError", "FitResult", "ModelParams", "Report", "StructureId", "SweepGrid",
    "UnderflowError", "adjusted_rand_index", "bic", "build_report", "confusion_tables",
    "contaminated_log_pdf", "count_free_params", "decompose", "detect_bad", "fit", "fit_gpcm",
    "ingest_csv", "label_observations", "log_gaussian_pdf", "map_assign", "misallocation_count",
    "mixture_log_pdf", "sweep", "update_sigmas",
]
