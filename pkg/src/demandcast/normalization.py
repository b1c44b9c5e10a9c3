"""Coverage-adjusted normalized demand target and its inverse.

For an hour ``t`` in calendar year ``Y``::

    Dn(t) = D(t) / D_Y * (H_avail / H_total)

where ``D_Y`` is the observed MWh in ``Y`` and ``H_avail / H_total`` the share
of hours observed. Rescaling multiplies a profile by an annual total and
divides by the same coverage share, so with the historical total the original
series is recovered.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from demandcast.errors import InputError
from demandcast.timeseries import (
    HOUR,
    HourlyDemandSeries,
    RegionId,
    YearCoverage,
    coverage_by_year,
)

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NormalizedSeries:
    region: RegionId
    start: pd.Timestamp
    values: np.ndarray
    coverage: dict[int, YearCoverage]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        present = ~np.isnan(values)
        if (present & (~np.isfinite(values) | (values < 0))).any():
            raise InputError(f"{self.region}: normalized values must be finite and >= 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "region", RegionId(self.region))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=len(self.values), freq="h")

    @property
    def present(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def years(self) -> np.ndarray:
        return self.timestamps.year.to_numpy()

    def with_values(self, values) -> "NormalizedSeries":
        """Same hours and coverage, different profile (e.g. model output)."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise InputError("replacement values must match the series length")
        return NormalizedSeries(self.region, self.start, values, self.coverage)


@dataclass(frozen=True)
class AnnualDemandEstimate:
    region: RegionId
    year: int
    total_mwh: float

    def __post_init__(self):
        object.__setattr__(self, "region", RegionId(self.region))
        if not (np.isfinite(self.total_mwh) and self.total_mwh > 0):
            raise InputError(f"{self.region} {self.year}: annual estimate must be > 0")


def normalize(series: HourlyDemandSeries) -> NormalizedSeries:
    coverage = coverage_by_year(series)
    years = series.years
    out = np.full(len(series), np.nan)
    for year, cov in coverage.items():
        in_year = years == year
        if cov.annual_total_mwh <= 0:
            if cov.hours_available:
                msg = f"{series.region}: {year} has zero total demand; targets left absent"
                LOGGER.warning(msg)
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
            continue
        factor = cov.hours_available / cov.hours_total
        out[in_year] = series.values[in_year] / cov.annual_total_mwh * factor
    return NormalizedSeries(series.region, series.start, out, coverage)


def rescale(normalized: NormalizedSeries, estimate: AnnualDemandEstimate) -> HourlyDemandSeries:
    """Turn the profile for ``estimate.year`` back into MW.

    The result spans the hours of that year that fall inside the normalized
    series.
    """
    if estimate.region != normalized.region:
        raise InputError(f"estimate for {estimate.region} applied to {normalized.region}")
    cov = normalized.coverage.get(estimate.year)
    if cov is None:
        raise InputError(f"{normalized.region}: year {estimate.year} outside normalized span")
    if cov.hours_available == 0:
        raise InputError(f"{normalized.region}: no observed hours in {estimate.year}; cannot rescale")
    idx = np.flatnonzero(normalized.years == estimate.year)
    values = normalized.values[idx] * estimate.total_mwh * (cov.hours_total / cov.hours_available)
    start = normalized.start + int(idx[0]) * HOUR
    return HourlyDemandSeries(normalized.region, start, values)


def read_estimates_csv(path) -> list[AnnualDemandEstimate]:
    """Read ``region,year,total_mwh`` rows."""
    from pathlib import Path

    path = Path(path)
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    table = pd.read_csv(path, float_precision="round_trip")
    if list(table.columns) != ["region", "year", "total_mwh"]:
        raise InputError(f"{path}: expected header region,year,total_mwh")
    if table.duplicated(["region", "year"]).any():
        raise InputError(f"{path}: duplicate (region, year) estimate")
    return [
        AnnualDemandEstimate(str(r.region), int(r.year), float(r.total_mwh))
        for r in table.itertuples(index=False)
    ]
