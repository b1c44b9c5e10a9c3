"""Canonical hourly UTC demand series and per-year coverage accounting."""

from __future__ import annotations

import calendar
import logging
import re
import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import pandas as pd

from demandcast.errors import InputError

LOGGER = logging.getLogger(__name__)

_REGION_RE = re.compile(r"^[A-Z0-9_]+$")
HOUR = pd.Timedelta(hours=1)


class DuplicateTimestampWarning(UserWarning):
    """Raised (as a warning) when identical timestamps were averaged together."""


class RegionId(str):
    """Entity code such as ``DE`` or ``US_TEX``."""

    def __new__(cls, code: str) -> "RegionId":
        code = str(code)
        if not _REGION_RE.match(code):
            raise InputError(
                f"invalid region code {code!r}: expected uppercase letters, digits and underscores"
            )
        return super().__new__(cls, code)

    @property
    def code(self) -> str:
        return str(self)


def hours_in_year(year: int) -> int:
    return 8784 if calendar.isleap(year) else 8760


def _to_utc(ts) -> pd.Timestamp:
    ts = pd.Timestamp(ts)
    if ts.tzinfo is None:
        return ts.tz_localize("UTC")
    return ts.tz_convert("UTC")


@dataclass(frozen=True, eq=False)
class HourlyDemandSeries:
    """Hourly demand in MW starting at ``start`` (UTC). NaN marks a gap."""

    region: RegionId
    start: pd.Timestamp
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "region", RegionId(self.region))
        start = _to_utc(self.start)
        if start != start.floor("h"):
            raise InputError(f"series start {start} is not truncated to the hour")
        object.__setattr__(self, "start", start)
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 1:
            raise InputError("series values must be one-dimensional")
        present = ~np.isnan(values)
        bad = present & (~np.isfinite(values) | (values < 0))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise InputError(
                f"{self.region}: invalid demand {values[i]!r} MW at {start + i * HOUR}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

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
        """Calendar year (UTC) of every hour."""
        return self.timestamps.year.to_numpy()

    def span_years(self) -> range:
        if len(self.values) == 0:
            return range(self.start.year, self.start.year)
        last = self.start + (len(self.values) - 1) * HOUR
        return range(self.start.year, last.year + 1)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"timestamp": self.timestamps, "demand_mw": self.values})

    def equals(self, other: "HourlyDemandSeries") -> bool:
        return (
            self.region == other.region
            and self.start == other.start
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass(frozen=True)
class YearCoverage:
    year: int
    hours_available: int
    hours_total: int
    annual_total_mwh: float

    def __post_init__(self):
        if self.hours_total != hours_in_year(self.year):
            raise InputError(f"hours_total {self.hours_total} is wrong for {self.year}")
        if not 0 <= self.hours_available <= self.hours_total:
            raise InputError(f"hours_available {self.hours_available} out of range")
        if not (np.isfinite(self.annual_total_mwh) and self.annual_total_mwh >= 0):
            raise InputError(f"annual total {self.annual_total_mwh} must be finite and >= 0")

    @property
    def fraction(self) -> float:
        return self.hours_available / self.hours_total


def resample_arrays(
    timestamps, values, region: str
) -> tuple[HourlyDemandSeries, int]:
    """Vectorised core of :func:`resample_to_hourly`.

    Returns the series together with the number of records that shared an
    exact timestamp with an earlier record (those are averaged first).
    """
    times = pd.DatetimeIndex(pd.to_datetime(timestamps))
    if times.tz is None:
        times = times.tz_localize("UTC")
    else:
        times = times.tz_convert("UTC")
    vals = np.asarray(values, dtype=np.float64)
    if len(times) != len(vals):
        raise InputError("timestamps and values differ in length")
    if len(vals) == 0:
        raise InputError(f"{region}: no records to resample")
    bad = ~np.isfinite(vals) | (vals < 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise InputError(f"{region}: invalid demand {vals[i]!r} MW at {times[i]}")

    frame = pd.DataFrame({"t": times, "v": vals})
    by_instant = frame.groupby("t", sort=True)["v"].mean()
    n_dup = len(frame) - len(by_instant)
    if n_dup:
        LOGGER.warning("%s: averaged %d duplicate timestamps", region, n_dup)
        warnings.warn(
            f"{region}: averaged {n_dup} duplicate timestamps",
            DuplicateTimestampWarning,
            stacklevel=3,
        )
    hourly = by_instant.groupby(by_instant.index.floor("h")).mean()
    full = pd.date_range(hourly.index[0], hourly.index[-1], freq="h")
    hourly = hourly.reindex(full)
    series = HourlyDemandSeries(RegionId(region), full[0], hourly.to_numpy())
    return series, n_dup


def resample_to_hourly(
    records: Iterable[tuple[object, float]], region: str
) -> HourlyDemandSeries:
    """Average (timestamp, MW) records into clock hours.

    Hours without any observation become gaps. Timestamps without a zone are
    taken to be UTC.
    """
    records = list(records)
    if not records:
        raise InputError(f"{region}: no records to resample")
    ts, vals = zip(*records)
    series, _ = resample_arrays(list(ts), list(vals), region)
    return series


def compute_coverage(series: HourlyDemandSeries, year: int) -> YearCoverage:
    if year not in series.span_years():
        raise InputError(f"{series.region}: year {year} outside series span")
    in_year = series.years == year
    present = series.present & in_year
    total = float(np.sum(series.values[present]))
    return YearCoverage(
        year=int(year),
        hours_available=int(present.sum()),
        hours_total=hours_in_year(year),
        annual_total_mwh=total,
    )


def coverage_by_year(series: HourlyDemandSeries) -> dict[int, YearCoverage]:
    return {y: compute_coverage(series, y) for y in series.span_years()}
