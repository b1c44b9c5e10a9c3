"""Per-hour feature matrix: calendar, population-weighted temperature, covariates."""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from demandcast.errors import InputError
from demandcast.ingest import GriddedCovariateTable
from demandcast.normalization import NormalizedSeries
from demandcast.timeseries import HourlyDemandSeries, RegionId

MISSING = np.nan

DEFAULT_FEATURES = (
    "hour_of_day",
    "day_of_week",
    "day_of_year",
    "month",
    "is_weekend",
    "temp_top1_c",
    "temp_top3_c",
    "temp_top1_monthly_mean_c",
    "month_temp_rank",
    "population",
    "gdp_per_capita",
    "demand_per_capita_mwh",
)


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...] = DEFAULT_FEATURES

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names):
            raise InputError("feature names must be unique")
        unknown = set(names) - set(DEFAULT_FEATURES)
        if unknown:
            raise InputError(f"unknown features {sorted(unknown)}")
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.names)

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256("\n".join(self.names).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    region: RegionId
    schema: FeatureSchema
    timestamps: pd.DatetimeIndex
    values: np.ndarray  # NaN is the missing sentinel

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(self.schema):
            raise InputError(f"feature values shape {values.shape} does not match schema")
        if len(self.timestamps) != values.shape[0]:
            raise InputError("one timestamp per feature row required")
        if np.isinf(values).any():
            raise InputError("feature values must be finite or missing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "region", RegionId(self.region))

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.names.index(name)]

    def subset(self, mask: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(self.region, self.schema, self.timestamps[mask], self.values[mask])

    def to_frame(self, targets: np.ndarray | None = None) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(self.schema.names))
        frame.insert(0, "timestamp", self.timestamps.strftime("%Y-%m-%dT%H:%M:%SZ"))
        if targets is not None:
            frame["target_dn"] = targets
        return frame

    def to_csv(self, path: Path | None = None, targets: np.ndarray | None = None) -> str:
        """Export with a schema header; missing cells are written empty."""
        buf = io.StringIO()
        self.to_frame(targets).to_csv(buf, index=False, na_rep="", float_format="%.17g", lineterminator="\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def read_feature_csv(path: Path, region: str) -> tuple[FeatureMatrix, np.ndarray | None]:
    frame = pd.read_csv(path, float_precision="round_trip")
    if frame.columns[0] != "timestamp":
        raise InputError(f"{path}: first column must be timestamp")
    targets = None
    if "target_dn" in frame.columns:
        targets = frame.pop("target_dn").to_numpy(dtype=np.float64)
    times = pd.DatetimeIndex(pd.to_datetime(frame.pop("timestamp"), utc=True))
    schema = FeatureSchema(tuple(frame.columns))
    return FeatureMatrix(region, schema, times, frame.to_numpy(dtype=np.float64)), targets


def select_top_cells(grid: GriddedCovariateTable, k: int) -> list[str]:
    """The ``k`` most populous cells, ties broken by ascending cell_id."""
    cells = grid.cells.dropna(subset=["population"])
    if k < 1 or len(cells) < k:
        raise InputError(f"need {k} populated cells, grid has {len(cells)}")
    order = sorted(zip(cells["population"], cells["cell_id"]), key=lambda pc: (-pc[0], pc[1]))
    return [cell for _, cell in order[:k]]


def _temperature_grid(grid: GriddedCovariateTable, cells: Sequence[str], hours: pd.DatetimeIndex) -> np.ndarray:
    """(hours x cells) temperatures, NaN where a cell has no reading."""
    temps = grid.temperatures[grid.temperatures["cell_id"].isin(cells)]
    wide = temps.pivot(index="timestamp", columns="cell_id", values="temperature_c")
    wide = wide.reindex(index=hours, columns=list(cells))
    return wide.to_numpy(dtype=np.float64)


def _weighted_rows(temps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    have = ~np.isnan(temps)
    w = np.where(have, weights[None, :], 0.0)
    wsum = w.sum(axis=1)
    num = np.where(have, temps, 0.0) * w
    out = np.full(temps.shape[0], MISSING)
    ok = wsum > 0
    out[ok] = num[ok].sum(axis=1) / wsum[ok]
    # zero-population cells with data: fall back to a plain mean
    flat = ~ok & have.any(axis=1)
    if flat.any():
        out[flat] = np.nanmean(temps[flat], axis=1)
    return out


def weighted_temperature_series(
    cells: Sequence[str], grid: GriddedCovariateTable, hours: pd.DatetimeIndex
) -> np.ndarray:
    pops = grid.cells.set_index("cell_id").loc[list(cells), "population"].to_numpy(dtype=np.float64)
    return _weighted_rows(_temperature_grid(grid, cells, hours), pops)


def weighted_temperature(cells: Sequence[str], grid: GriddedCovariateTable, t) -> float:
    """Population-weighted mean temperature over the cells that report at ``t``."""
    hour = pd.DatetimeIndex([pd.Timestamp(t)])
    if hour.tz is None:
        hour = hour.tz_localize("UTC")
    return float(weighted_temperature_series(cells, grid, hour)[0])


def monthly_stats(temps: pd.Series) -> pd.DataFrame:
    """Monthly mean temperature and its rank (1 = coldest) for one region-year.

    ``temps`` is indexed by timestamp. Months without readings get a missing
    mean and rank; ties rank the earlier calendar month first.
    """
    temps = temps.dropna()
    months = pd.DatetimeIndex(temps.index).month
    means = temps.groupby(months).mean().reindex(range(1, 13))
    stats = pd.DataFrame({"mean_c": means.to_numpy()}, index=pd.Index(range(1, 13), name="month"))
    stats["rank"] = MISSING
    have = stats["mean_c"].notna()
    order = sorted(stats.index[have], key=lambda m: (stats.at[m, "mean_c"], m))
    for rank, month in enumerate(order, start=1):
        stats.at[month, "rank"] = float(rank)
    return stats


def calendar_features(t) -> tuple[int, int, int, int, int]:
    """(hour_of_day, day_of_week Mon=0, day_of_year, month, is_weekend)."""
    t = pd.Timestamp(t)
    dow = t.dayofweek
    return (t.hour, dow, t.dayofyear, t.month, int(dow >= 5))


def calendar_frame(hours: pd.DatetimeIndex) -> np.ndarray:
    dow = hours.dayofweek.to_numpy()
    return np.column_stack(
        [hours.hour.to_numpy(), dow, hours.dayofyear.to_numpy(), hours.month.to_numpy(), (dow >= 5).astype(int)]
    ).astype(np.float64)


def build_feature_matrix(
    series: HourlyDemandSeries,
    normalized: NormalizedSeries,
    grid: GriddedCovariateTable,
    annual: pd.DataFrame | None = None,
    schema: FeatureSchema = FeatureSchema(),
    include_gaps: bool = False,
) -> tuple[FeatureMatrix, np.ndarray]:
    """One feature row per present normalized target hour.

    ``annual`` defaults to ``grid.annual``; a missing (region, year) row leaves
    the socioeconomic cells for that year missing rather than dropping rows.
    With ``include_gaps`` every hour of the span gets a row and absent targets
    come back as NaN (used for prediction exports).
    """
    if series.region != normalized.region or series.start != normalized.start or len(series) != len(normalized):
        raise InputError(f"{series.region}: demand and normalized series span mismatch")
    hours = normalized.timestamps
    if annual is None:
        annual = grid.annual
    temp_hours = pd.DatetimeIndex(grid.temperatures["timestamp"].unique())
    if len(temp_hours) and not temp_hours.isin(hours).any():
        raise InputError(f"{series.region}: temperature data does not overlap the demand span")

    top1 = select_top_cells(grid, 1)
    top3 = select_top_cells(grid, min(3, len(grid.cells)))
    t1 = weighted_temperature_series(top1, grid, hours)
    t3 = weighted_temperature_series(top3, grid, hours)

    # monthly stats use every top-1 reading in each year, not only the span
    top1_all = grid.temperatures[grid.temperatures["cell_id"] == top1[0]].set_index("timestamp")["temperature_c"]
    years = hours.year.to_numpy()
    months = hours.month.to_numpy()
    month_mean = np.full(len(hours), MISSING)
    month_rank = np.full(len(hours), MISSING)
    for year in np.unique(years):
        in_year = pd.DatetimeIndex(top1_all.index).year == year
        stats = monthly_stats(top1_all[in_year])
        sel = years == year
        month_mean[sel] = stats["mean_c"].to_numpy()[months[sel] - 1]
        month_rank[sel] = stats["rank"].to_numpy()[months[sel] - 1]

    population = np.full(len(hours), grid.total_population)
    gdp = np.full(len(hours), MISSING)
    dpc = np.full(len(hours), MISSING)
    rows = annual[annual["region"] == series.region]
    for r in rows.itertuples(index=False):
        sel = years == int(r.year)
        gdp[sel] = r.gdp_per_capita
        dpc[sel] = r.demand_per_capita_mwh

    columns = dict(zip(DEFAULT_FEATURES[:5], calendar_frame(hours).T))
    columns.update(
        temp_top1_c=t1,
        temp_top3_c=t3,
        temp_top1_monthly_mean_c=month_mean,
        month_temp_rank=month_rank,
        population=population,
        gdp_per_capita=gdp,
        demand_per_capita_mwh=dpc,
    )
    keep = np.ones(len(hours), dtype=bool) if include_gaps else normalized.present
    values = np.column_stack([columns[name] for name in schema.names])[keep]
    matrix = FeatureMatrix(series.region, schema, hours[keep], values)
    return matrix, normalized.values[keep].copy()
