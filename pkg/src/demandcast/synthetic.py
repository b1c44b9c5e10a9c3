"""Synthetic multi-region fixture for end-to-end runs.

Each region gets a small population grid with hourly temperatures, and an
hourly demand series shaped by a daily cycle, a weekly cycle and heating /
cooling response to temperature, times multiplicative Gaussian noise. Raw
demand files deliberately use different zones, units and CSV dialects so the
whole ingestion path is exercised.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import yaml


@dataclass(frozen=True)
class SyntheticRegion:
    code: str
    timezone: str
    unit: str
    utc_offset_h: float  # drives the local daily cycle
    mean_temp: float
    seasonal_amp: float
    level_mw: float
    heat: float
    cool: float
    decimal_separator: str = "."
    delimiter: str = ","
    minutes: int = 60


REGIONS = (
    SyntheticRegion("AA", "Europe/Berlin", "kW", 1.0, 9.0, 9.0, 5000.0, 0.025, 0.015),
    SyntheticRegion("BB", "UTC", "MW", -5.0, 18.0, 7.0, 12000.0, 0.01, 0.04),
    SyntheticRegion("CC", "+05:30", "GW", 5.5, 26.0, 5.0, 30000.0, 0.0, 0.05, ",", ";", 30),
)

_UNIT_SCALE = {"MW": 1.0, "kW": 1000.0, "GW": 1e-3}


def _temperatures(rng, hours: pd.DatetimeIndex, region: SyntheticRegion, n_cells: int) -> np.ndarray:
    doy = hours.dayofyear.to_numpy()
    local_h = (hours.hour.to_numpy() + region.utc_offset_h) % 24
    t_days = (hours - hours[0]).total_seconds().to_numpy() / 86400.0
    seasonal = -region.seasonal_amp * np.cos(2 * np.pi * (doy - 20) / 365.25)
    diurnal = 4.0 * np.sin(2 * np.pi * (local_h - 9) / 24)
    # slow weather anomalies: a handful of random low-frequency waves
    anomaly = np.zeros(len(hours))
    for _ in range(6):
        period = rng.uniform(3, 40)
        anomaly += rng.normal(0, 1.0) * np.sin(2 * np.pi * t_days / period + rng.uniform(0, 2 * np.pi))
    base = region.mean_temp + seasonal + diurnal + anomaly
    offsets = rng.normal(0, 1.5, size=n_cells)
    return base[:, None] + offsets[None, :] + rng.normal(0, 0.3, size=(len(hours), n_cells))


def _demand(rng, hours: pd.DatetimeIndex, region: SyntheticRegion, temp: np.ndarray, noise: float) -> np.ndarray:
    local = hours + pd.Timedelta(hours=region.utc_offset_h)
    lh = local.hour.to_numpy() + local.minute.to_numpy() / 60.0
    daily = 1 + 0.18 * np.sin(2 * np.pi * (lh - 10) / 24) + 0.07 * np.sin(4 * np.pi * (lh - 5) / 24)
    weekly = np.where(local.dayofweek.to_numpy() >= 5, 0.88, 1.0)
    weather = 1 + region.heat * np.maximum(0.0, 16 - temp) + region.cool * np.maximum(0.0, temp - 22)
    return region.level_mw * daily * weekly * weather * (1 + noise * rng.standard_normal(len(hours)))


def generate_fixture(
    out_dir: Path,
    years: tuple[int, ...] = (2019, 2020, 2021, 2022),
    noise: float = 0.05,
    seed: int = 7,
    regions: tuple[SyntheticRegion, ...] = REGIONS,
    n_cells: int = 4,
    params: dict | None = None,
) -> Path:
    """Write raw inputs plus ``config.yaml`` under ``out_dir``; return the config path."""
    out_dir = Path(out_dir)
    (out_dir / "raw").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    start = pd.Timestamp(f"{years[0]}-01-01", tz="UTC")
    end = pd.Timestamp(f"{years[-1] + 1}-01-01", tz="UTC")
    hours = pd.date_range(start, end, freq="h", inclusive="left")

    annual_rows, estimate_rows, region_cfg = [], [], {}
    for k, reg in enumerate(regions):
        cells = [f"{reg.code}_{i}" for i in range(n_cells)]
        pops = np.sort(rng.integers(50_000, 2_000_000, size=n_cells))[::-1].astype(float)
        pd.DataFrame(
            {"cell_id": cells, "lat": 40.0 + k + np.arange(n_cells) * 0.25,
             "lon": 10.0 * k + np.arange(n_cells) * 0.25, "population": pops}
        ).to_csv(out_dir / "raw" / f"{reg.code}_grid.csv", index=False)

        temps = _temperatures(rng, hours, reg, n_cells)
        long = pd.DataFrame(
            {
                "cell_id": np.repeat([cells], len(hours), axis=0).ravel(),
                "timestamp": np.repeat(hours.strftime("%Y-%m-%dT%H:%M:%SZ"), n_cells),
                "temperature_c": np.round(temps.ravel(), 3),
            }
        )
        long.to_csv(out_dir / "raw" / f"{reg.code}_temperature.csv", index=False)

        weighted = temps @ pops / pops.sum()
        step = pd.Timedelta(minutes=reg.minutes)
        stamps = pd.date_range(start, end, freq=step, inclusive="left")
        temp_at = np.repeat(weighted, 60 // reg.minutes)
        mw = _demand(rng, stamps, reg, temp_at, noise)

        if reg.code == "BB":
            hole = (stamps >= pd.Timestamp(f"{years[0]}-03-10", tz="UTC")) & (
                stamps < pd.Timestamp(f"{years[0]}-03-13", tz="UTC")
            )
            keep = ~hole
            stamps, mw = stamps[keep], mw[keep]

        local = stamps.tz_convert(_zone(reg.timezone)).strftime("%Y-%m-%d %H:%M")
        value = mw * _UNIT_SCALE[reg.unit]
        text = [f"{v:.3f}" for v in value]
        if reg.decimal_separator != ".":
            text = [t.replace(".", reg.decimal_separator) for t in text]
        pd.DataFrame({"time_local": local, "load": text}).to_csv(
            out_dir / "raw" / f"{reg.code}_demand.csv", index=False, sep=reg.delimiter
        )

        hourly_mw = pd.Series(mw, index=stamps).groupby(stamps.floor("h")).mean()
        for i, year in enumerate(years):
            pop_total = pops.sum()
            annual_total = float(hourly_mw[hourly_mw.index.year == year].sum())
            annual_rows.append((reg.code, year, 20000.0 + 5000 * k + 600 * i, annual_total / pop_total))
            estimate_rows.append((reg.code, year, annual_total))

        region_cfg[reg.code] = {
            "path": f"raw/{reg.code}_demand.csv",
            "timestamp_column": "time_local",
            "value_column": "load",
            "timezone": reg.timezone,
            "unit": reg.unit,
            "decimal_separator": reg.decimal_separator,
            "delimiter": reg.delimiter,
            "grid": f"raw/{reg.code}_grid.csv",
            "temperature": f"raw/{reg.code}_temperature.csv",
        }

    pd.DataFrame(annual_rows, columns=["region", "year", "gdp_per_capita", "demand_per_capita_mwh"]).to_csv(
        out_dir / "raw" / "annual.csv", index=False
    )
    pd.DataFrame(estimate_rows, columns=["region", "year", "total_mwh"]).to_csv(
        out_dir / "raw" / "estimates.csv", index=False
    )
    config = {
        "output_dir": "out",
        "seed": seed,
        "coverage_threshold": 0.1,
        "epsilon": 1e-12,
        "annual_covariates": "raw/annual.csv",
        "annual_estimates": "raw/estimates.csv",
        "profile_window_hours": 168,
        "params": dict(params or {}),
        "regions": region_cfg,
    }
    path = out_dir / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=True), encoding="utf-8")
    return path


def _zone(name: str):
    from demandcast.ingest import resolve_timezone

    return resolve_timezone(name)
