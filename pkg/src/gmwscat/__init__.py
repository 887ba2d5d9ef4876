"""Analytic wavelet scattering features and a genre-classification pipeline."""

from .errors import ConfigError, DataError, NumericError
from .filters import (
    FilterBank,
    FilterFamily,
    GmwParams,
    averaging_spectrum,
    awt,
    build_filter_bank,
    gmw_spectrum,
    morlet_center,
    morlet_spectrum,
    normalization_constant,
    peak_frequency,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "FilterBank",
    "FilterFamily",
    "GmwParams",
    "averaging_spectrum",
    "awt",
    "build_filter_bank",
    "gmw_spectrum",
    "morlet_center",
    "morlet_spectrum",
    "normalization_constant",
    "peak_frequency",
    "__version__",
]
