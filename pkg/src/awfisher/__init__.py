"""Adaptively weighted Fisher p-value combination with Monte Carlo null inference."""
from .kernels import BACKEND
from .pcombine import (
    AWResult,
    CombinedResult,
    Method,
    aw_statistic_exhaustive,
    aw_statistic_sorted,
    chi2_even_log_sf,
    comparator_combine,
    fisher_statistic,
)

__version__ = "0.1.0"
