"""Extended Conway-Maxwell-Poisson (ECOMP) count distribution."""

from .distribution import (
    Dispersion,
    DispersionClass,
    EcompDist,
    EcompParams,
    ModeInfo,
    ModeKind,
    SpecialCase,
    dispersion_class,
    from_exponential_combination,
    from_special_case,
    special_case_params,
    validate,
)
from .errors import (
    BimodalRegionWarning,
    DataTooSparse,
    DegenerateCells,
    EcompError,
    InvalidParameterSpace,
    NoConvergence,
    NonConvergent,
    StateCapExceeded,
)
from .series import (
    ConvergenceConfig,
    LogNormalizer,
    Method,
    SeriesSpec,
    approx_mean,
    log_normalizer,
    log_pochhammer,
    log_series_asymptotic,
    log_series_truncated,
)

__version__ = "0.1.0"

__all__ = [
    "BimodalRegionWarning",
    "ConvergenceConfig",
    "DataTooSparse",
    "DegenerateCells",
    "Dispersion",
    "DispersionClass",
    "EcompDist",
    "EcompError",
    "EcompParams",
    "InvalidParameterSpace",
    "LogNormalizer",
    "Method",
    "ModeInfo",
    "ModeKind",
    "NoConvergence",
    "NonConvergent",
    "SeriesSpec",
    "SpecialCase",
    "StateCapExceeded",
    "approx_mean",
    "dispersion_class",
    "from_exponential_combination",
    "from_special_case",
    "log_normalizer",
    "log_pochhammer",
    "log_series_asymptotic",
    "log_series_truncated",
    "special_case_params",
    "validate",
]
