"""Local-file ingestion of raw demand and covariate CSVs.

Demand files are converted to UTC hours in MW. Covariate files arrive
pre-extracted as CSV (static grid, hourly temperatures, annual socioeconomic
rows) and are validated into a :class:`GriddedCovariateTable`.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from datetime import timedelta, timezone, tzinfo
from pathlib import Path
from typing import Iterable, Iterator
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

import numpy as np
import pandas as pd

from demandcast.errors import InputError
from demandcast.timeseries import HourlyDemandSeries, RegionId, resample_arrays

LOGGER = logging.getLogger(__name__)

# divisor/multiplier applied once per value
UNITS = {"MW": None, "MWh-per-hour": None, "kW": ("div", 1000.0), "GW": ("mul", 1000.0)}

GRID_COLUMNS = ["cell_id", "lat", "lon", "population"]
TEMPERATURE_COLUMNS = ["cell_id", "timestamp", "temperature_c"]
ANNUAL_COLUMNS = ["region", "year", "gdp_per_capita", "demand_per_capita_mwh"]

_OFFSET_RE = re.compile(r"^(?:UTC)?([+-])(\d{1,2}):?(\d{2})?$")
_EXPLICIT_OFFSET_RE = re.compile(r"(?:Z|[+-]\d{2}:?\d{2})$")


def resolve_timezone(name: str) -> tzinfo:
    """Resolve an IANA zone name, ``UTC``, or a fixed offset like ``+05:30``."""
    text = str(name).strip()
    if text in ("UTC", "Z", "Etc/UTC"):
        return timezone.utc
    m = _OFFSET_RE.match(text)
    if m:
        sign, hh, mm = m.group(1), int(m.group(2)), int(m.group(3) or 0)
        if hh > 23 or mm > 59:
            raise InputError(f"unresolvable timezone {name!r}")
        delta = timedelta(hours=hh, minutes=mm)
        return timezone(-delta if sign == "-" else delta)
    try:
        return ZoneInfo(text)
    except (ZoneInfoNotFoundError, ValueError) as exc:
        raise InputError(f"unresolvable timezone {name!r}") from exc


@dataclass(frozen=True)
class RawSourceSpec:
    region: RegionId
    path: Path
    timestamp_column: str
    value_column: str
    timezone: str = "UTC"
    unit: str = "MW"
    decimal_separator: str = "."
    delimiter: str = ","

    def __post_init__(self):
        object.__setattr__(self, "region", RegionId(self.region))
        object.__setattr__(self, "path", Path(self.path))
        if self.unit not in UNITS:
            raise InputError(
                f"{self.region}: unknown unit {self.unit!r}; expected one of {sorted(UNITS)}"
            )
        if len(self.decimal_separator) != 1:
            raise InputError(f"{self.region}: decimal separator must be one character")
        resolve_timezone(self.timezone)

    @classmethod
    def from_mapping(cls, region: str, fields: dict, base_dir: Path | None = None) -> "RawSourceSpec":
        known = {"path", "timestamp_column", "value_column", "timezone", "unit",
                 "decimal_separator", "delimiter"}
        kwargs = {k: v for k, v in fields.items() if k in known}
        missing = {"path", "timestamp_column", "value_column"} - kwargs.keys()
        if missing:
            raise InputError(f"{region}: source spec missing {sorted(missing)}")
        path = Path(kwargs.pop("path"))
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return cls(region=region, path=path, **kwargs)


@dataclass
class ParsedDemand:
    """Rows of one demand file after zone and unit conversion."""

    region: RegionId
    timestamps: pd.DatetimeIndex
    values: np.ndarray
    n_rows: int
    n_gaps: int
    malformed: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_accepted(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[tuple[pd.Timestamp, float]]:
        return iter(zip(self.timestamps, self.values.tolist()))

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class IngestReport:
    region: RegionId
    n_rows: int
    n_accepted: int
    n_gaps: int
    malformed: tuple[tuple[int, str], ...]
    n_duplicates: int
    n_hours: int
    n_missing_hours: int


def _read_text_table(path: Path, delimiter: str = ",") -> pd.DataFrame:
    if not path.is_file():
        raise InputError(f"file not found: {path}")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, sep=delimiter, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as exc:
        raise InputError(f"{path}: cannot read CSV ({exc})") from exc


def _localize(texts: pd.Series, tz: tzinfo) -> tuple[pd.Series, pd.Series]:
    """Parse timestamp strings to UTC. Returns (utc times, reason for NaT rows)."""
    reasons = pd.Series("", index=texts.index, dtype=object)
    out = pd.Series(pd.NaT, index=texts.index, dtype="datetime64[ns, UTC]")
    explicit = texts.str.contains(_EXPLICIT_OFFSET_RE)

    if explicit.any():
        parsed = pd.to_datetime(texts[explicit], utc=True, errors="coerce", format="ISO8601")
        out.loc[explicit] = parsed
        reasons.loc[explicit & out.isna()] = "unparsable timestamp"

    naive = ~explicit & (texts != "")
    if naive.any():
        local = pd.to_datetime(texts[naive], errors="coerce", format="ISO8601")
        ok = local.notna()
        reasons.loc[local.index[~ok.to_numpy()]] = "unparsable timestamp"
        if ok.any():
            idx = pd.DatetimeIndex(local[ok])
            # ambiguous fall-back hours take the first (DST) occurrence
            localized = idx.tz_localize(
                tz, ambiguous=np.ones(len(idx), dtype=bool), nonexistent="NaT"
            ).tz_convert("UTC")
            rows = local[ok].index
            out.loc[rows] = localized
            reasons.loc[rows[pd.isna(localized)]] = "nonexistent local time"
    reasons.loc[texts == ""] = "empty timestamp"
    return out, reasons


def parse_demand_csv(spec: RawSourceSpec, strict: bool = True) -> ParsedDemand:
    """Read a demand file into UTC timestamps and MW values.

    Rows with an empty value cell are skipped and counted as gaps. Rows whose
    timestamp or value cannot be used are collected with their 1-based file
    line numbers; with ``strict`` any such row raises :class:`InputError`.
    """
    tz = resolve_timezone(spec.timezone)
    table = _read_text_table(spec.path, spec.delimiter)
    for col in (spec.timestamp_column, spec.value_column):
        if col not in table.columns:
            raise InputError(f"{spec.region}: column {col!r} not in {spec.path}")
    ts_text = table[spec.timestamp_column].str.strip()
    val_text = table[spec.value_column].str.strip()
    lines = table.index.to_numpy() + 2  # header is line 1

    times, reasons = _localize(ts_text, tz)
    gap = (val_text == "").to_numpy()

    if spec.decimal_separator != ".":
        val_text = val_text.str.replace(spec.decimal_separator, ".", regex=False)
    nums = pd.to_numeric(val_text.where(~gap, "nan"), errors="coerce").to_numpy(dtype=np.float64)
    reasons = reasons.to_numpy(dtype=object)
    bad_value = ~gap & (np.isnan(nums) | ~np.isfinite(nums) | (nums < 0))
    for i in np.flatnonzero(bad_value & (reasons == "")):
        reasons[i] = f"invalid value {val_text.iloc[i]!r}"
    # gap rows only need a usable timestamp to be counted as gaps
    malformed_mask = reasons != ""
    gap &= ~malformed_mask
    malformed = [
        (int(lines[i]), f"{reasons[i]} (timestamp {ts_text.iloc[i]!r})")
        for i in np.flatnonzero(malformed_mask)
    ]
    if malformed and strict:
        shown = "; ".join(f"line {ln}: {msg}" for ln, msg in malformed[:5])
        raise InputError(f"{spec.region}: {len(malformed)} malformed rows in {spec.path}: {shown}")

    keep = ~malformed_mask & ~gap
    values = nums[keep]
    conv = UNITS[spec.unit]
    if conv is not None:
        op, factor = conv
        values = values / factor if op == "div" else values * factor

    return ParsedDemand(
        region=spec.region,
        timestamps=pd.DatetimeIndex(times[keep]),
        values=values,
        n_rows=len(table),
        n_gaps=int(gap.sum()),
        malformed=malformed,
    )


def harmonize_with_report(spec: RawSourceSpec, strict: bool = True) -> tuple[HourlyDemandSeries, IngestReport]:
    parsed = parse_demand_csv(spec, strict=strict)
    if parsed.n_accepted == 0:
        raise InputError(f"{spec.region}: no usable demand rows in {spec.path}")
    series, n_dup = resample_arrays(parsed.timestamps, parsed.values, spec.region)
    report = IngestReport(
        region=spec.region,
        n_rows=parsed.n_rows,
        n_accepted=parsed.n_accepted,
        n_gaps=parsed.n_gaps,
        malformed=tuple(parsed.malformed),
        n_duplicates=n_dup,
        n_hours=len(series),
        n_missing_hours=int((~series.present).sum()),
    )
    return series, report


def harmonize(spec: RawSourceSpec, strict: bool = True) -> HourlyDemandSeries:
    """Parse, deduplicate and resample one demand file to hourly UTC MW."""
    return harmonize_with_report(spec, strict=strict)[0]


@dataclass(frozen=True, eq=False)
class GriddedCovariateTable:
    """Region-scoped grid cells, their hourly temperatures, and annual covariates.

    ``cells``: cell_id, lat, lon, population.
    ``temperatures``: cell_id, timestamp (UTC), temperature_c.
    ``annual``: region, year, gdp_per_capita, demand_per_capita_mwh.
    """

    cells: pd.DataFrame
    temperatures: pd.DataFrame
    annual: pd.DataFrame

    def __post_init__(self):
        cells, temps, annual = self.cells, self.temperatures, self.annual
        if (cells["population"] < 0).any() or cells["population"].isna().any():
            bad = cells.loc[~(cells["population"] >= 0), "cell_id"].iloc[0]
            raise InputError(f"cell {bad!r} has negative or missing population")
        if cells["cell_id"].duplicated().any():
            raise InputError(f"duplicate cell_id {cells.loc[cells['cell_id'].duplicated(), 'cell_id'].iloc[0]!r}")
        dup = temps.duplicated(["cell_id", "timestamp"])
        if dup.any():
            row = temps[dup].iloc[0]
            raise InputError(
                f"duplicate temperature row for (cell_id={row['cell_id']!r}, timestamp={row['timestamp']})"
            )
        unknown = set(temps["cell_id"]) - set(cells["cell_id"])
        if unknown:
            raise InputError(f"temperatures reference unknown cells {sorted(unknown)[:5]}")
        dup = annual.duplicated(["region", "year"])
        if dup.any():
            row = annual[dup].iloc[0]
            raise InputError(f"duplicate annual row for ({row['region']}, {row['year']})")

    @property
    def total_population(self) -> float:
        return float(self.cells["population"].sum())

    def annual_row(self, region: str, year: int) -> pd.Series | None:
        hit = self.annual[(self.annual["region"] == region) & (self.annual["year"] == year)]
        return None if hit.empty else hit.iloc[0]


def _require_columns(table: pd.DataFrame, expected: list[str], path: Path) -> None:
    if list(table.columns) != expected:
        raise InputError(f"{path}: header {list(table.columns)} does not match {expected}")


def _numeric(table: pd.DataFrame, cols: Iterable[str], path: Path) -> pd.DataFrame:
    table = table.copy()
    for col in cols:
        conv = pd.to_numeric(table[col].str.strip(), errors="coerce")
        bad = conv.isna() & (table[col].str.strip() != "")
        if bad.any():
            line = int(table.index[bad.to_numpy()][0]) + 2
            raise InputError(f"{path} line {line}: non-numeric {col} {table[col][bad].iloc[0]!r}")
        table[col] = conv
    return table


def read_grid_csv(path: Path) -> pd.DataFrame:
    path = Path(path)
    table = _read_text_table(path)
    _require_columns(table, GRID_COLUMNS, path)
    table["cell_id"] = table["cell_id"].str.strip()
    return _numeric(table, ["lat", "lon", "population"], path)


def read_temperature_csv(path: Path) -> pd.DataFrame:
    path = Path(path)
    table = _read_text_table(path)
    _require_columns(table, TEMPERATURE_COLUMNS, path)
    table["cell_id"] = table["cell_id"].str.strip()
    ts = pd.to_datetime(table["timestamp"].str.strip(), utc=True, errors="coerce", format="ISO8601")
    if ts.isna().any():
        line = int(np.flatnonzero(ts.isna().to_numpy())[0]) + 2
        raise InputError(f"{path} line {line}: unparsable timestamp")
    if (ts != ts.dt.floor("h")).any():
        line = int(np.flatnonzero((ts != ts.dt.floor("h")).to_numpy())[0]) + 2
        raise InputError(f"{path} line {line}: temperature timestamp not on the hour")
    table["timestamp"] = ts
    return _numeric(table, ["temperature_c"], path)


def read_annual_csv(path: Path) -> pd.DataFrame:
    path = Path(path)
    table = _read_text_table(path)
    _require_columns(table, ANNUAL_COLUMNS, path)
    table["region"] = table["region"].str.strip()
    table = _numeric(table, ["year", "gdp_per_capita", "demand_per_capita_mwh"], path)
    table["year"] = table["year"].astype(int)
    return table


def parse_covariates(
    grid_path: Path,
    temperature_path: Path,
    annual_path: Path | None = None,
    region: str | None = None,
    years: Iterable[int] | None = None,
) -> GriddedCovariateTable:
    """Load the three covariate CSVs for one region.

    When ``region`` and ``years`` are given, every requested year must have
    an annual row.
    """
    cells = read_grid_csv(grid_path)
    temps = read_temperature_csv(temperature_path)
    if annual_path is not None:
        annual = read_annual_csv(annual_path)
    else:
        annual = pd.DataFrame({c: pd.Series(dtype=float) for c in ANNUAL_COLUMNS})
    if region is not None:
        annual = annual[annual["region"] == region].reset_index(drop=True)
        for year in years or ():
            if not ((annual["year"] == year).any()):
                raise InputError(f"missing annual covariate row for ({region}, {year})")
    return GriddedCovariateTable(cells=cells, temperatures=temps, annual=annual)
