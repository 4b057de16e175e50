"""Kernel-based nonlinear Granger causality discovery for multivariate time series."""

from .data import TimeSeriesSystem, EmbeddedDesign, load_csv, standardize, embed
from .graph import CausalGraph

__version__ = "0.1.0"

__all__ = [
    "CausalGraph",
    "EmbeddedDesign",
    "TimeSeriesSystem",
    "embed",
    "load_csv",
    "standardize",
]
