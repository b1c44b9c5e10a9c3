"""Hourly electricity demand profile forecasting with gradient-boosted trees."""

from demandcast.errors import DemandCastError, InputError, InvariantViolation
from demandcast.timeseries import (
    HourlyDemandSeries,
    RegionId,
    YearCoverage,
    compute_coverage,
    resample_to_hourly,
)
from demandcast.normalization import (
    AnnualDemandEstimate,
    NormalizedSeries,
    normalize,
    rescale,
)

__version__ = "0.1.0"

__all__ = [
    "AnnualDemandEstimate",
    "DemandCastError",
    "HourlyDemandSeries",
    "InputError",
    "InvariantViolation",
    "NormalizedSeries",
    "RegionId",
    "YearCoverage",
    "compute_coverage",
    "normalize",
    "rescale",
    "resample_to_hourly",
]
