"""MAPE scoring, per-region scorecards, the aggregate report, profile CSVs."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from demandcast.errors import InputError
from demandcast.splits import PARTS, SplitAssignment
from demandcast.timeseries import RegionId

DEFAULT_EPSILON = 1e-12
REPORT_COLUMNS = ["entity_code", "MAPE_train", "MAPE_val", "MAPE_test"]


def mape_with_exclusions(actual, predicted, epsilon: float = DEFAULT_EPSILON) -> tuple[float, int]:
    """MAPE over rows with ``|actual| > epsilon`` and the number of rows left out."""
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.shape != p.shape:
        raise InputError(f"length mismatch: {a.size} actual vs {p.size} predicted")
    if a.size == 0:
        raise InputError("MAPE of an empty vector")
    if not epsilon > 0:
        raise InputError("epsilon must be > 0")
    keep = np.abs(a) > epsilon
    if not keep.any():
        raise InputError("every actual value is within epsilon of zero")
    ratio = np.abs(a[keep] - p[keep]) / np.abs(a[keep])
    return float(np.mean(ratio)), int(a.size - keep.sum())


def mape(actual, predicted, epsilon: float = DEFAULT_EPSILON) -> float:
    """Mean absolute percentage error as a fraction (0.092, not 9.2)."""
    return mape_with_exclusions(actual, predicted, epsilon)[0]


@dataclass(frozen=True)
class RegionMetrics:
    region: RegionId
    mape_train: float | None = None
    mape_val: float | None = None
    mape_test: float | None = None
    counts: dict[str, int] = field(default_factory=dict)
    excluded: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "region", RegionId(self.region))
        for part in PARTS:
            v = self.get(part)
            if v is not None and not (math.isfinite(v) and v >= 0):
                raise InputError(f"{self.region}: MAPE_{part} must be a finite fraction >= 0")

    def get(self, part: str) -> float | None:
        return getattr(self, f"mape_{part}")


def region_metrics(
    region: str,
    timestamps: pd.DatetimeIndex,
    actual: np.ndarray,
    predicted: np.ndarray,
    assignment: SplitAssignment,
    epsilon: float = DEFAULT_EPSILON,
) -> RegionMetrics:
    years = pd.DatetimeIndex(timestamps).year.to_numpy()
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    have = ~np.isnan(actual)
    scores, counts, excluded = {}, {}, {}
    for part in PARTS:
        part_years = {
            "train": assignment.train_years,
            "val": {assignment.val_year} - {None},
            "test": {assignment.test_year},
        }[part]
        sel = have & np.isin(years, list(part_years))
        counts[part] = int(sel.sum())
        if sel.any():
            scores[part], excluded[part] = mape_with_exclusions(actual[sel], predicted[sel], epsilon)
        else:
            scores[part] = None
    return RegionMetrics(
        region,
        scores["train"],
        scores["val"],
        scores["test"],
        counts=counts,
        excluded=excluded,
    )


def evaluate(
    model,
    data: Mapping[str, tuple[object, np.ndarray]],
    splits: Iterable[SplitAssignment],
    epsilon: float = DEFAULT_EPSILON,
) -> list[RegionMetrics]:
    """Score ``model`` per region and split part on the normalized target.

    ``data`` maps region -> (FeatureMatrix, targets).
    """
    from demandcast.gbdt import predict

    by_region = {a.region: a for a in splits}
    out = []
    for region in sorted(data):
        if region not in by_region:
            raise InputError(f"no split assignment for {region}")
        matrix, targets = data[region]
        predicted = predict(model, matrix)
        out.append(region_metrics(region, matrix.timestamps, targets, predicted, by_region[region], epsilon))
    return out


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.4f}"


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple[RegionMetrics, ...]
    aggregates: dict[str, dict[str, float | None]]
    weighted: dict[str, float | None]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(REPORT_COLUMNS) + "\n")
        for m in self.rows:
            buf.write(",".join([m.region, *(_fmt(m.get(p)) for p in PARTS)]) + "\n")
        for name in ("Average", "Min", "Max"):
            buf.write(",".join([name, *(_fmt(self.aggregates[name][p]) for p in PARTS)]) + "\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "regions": [
                {
                    "entity_code": m.region,
                    **{f"MAPE_{p}": m.get(p) for p in PARTS},
                    "counts": m.counts,
                    "excluded": m.excluded,
                }
                for m in self.rows
            ],
            "aggregates": self.aggregates,
            "observation_weighted": self.weighted,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def summary(self) -> str:
        avg = self.aggregates["Average"]["test"]
        head = "n/a" if avg is None else f"{100 * avg:.1f}%"
        return f"average test MAPE over {len(self.rows)} regions: {head}"


def render_report(metrics: Iterable[RegionMetrics], metadata: dict | None = None) -> EvaluationReport:
    """Sort by region code and append Average/Min/Max over present values."""
    rows = tuple(sorted(metrics, key=lambda m: m.region))
    if not rows:
        raise InputError("report needs at least one region")
    aggregates: dict[str, dict[str, float | None]] = {"Average": {}, "Min": {}, "Max": {}}
    weighted: dict[str, float | None] = {}
    for part in PARTS:
        vals = [m.get(part) for m in rows if m.get(part) is not None]
        aggregates["Average"][part] = float(np.mean(vals)) if vals else None
        aggregates["Min"][part] = min(vals) if vals else None
        aggregates["Max"][part] = max(vals) if vals else None
        pairs = [(m.get(part), m.counts.get(part, 0)) for m in rows if m.get(part) is not None]
        n = sum(c for _, c in pairs)
        weighted[part] = sum(v * c for v, c in pairs) / n if n else None
    return EvaluationReport(rows, aggregates, weighted, dict(metadata or {}))


def read_report_csv(text: str) -> pd.DataFrame:
    return pd.read_csv(io.StringIO(text), dtype={"entity_code": str}, keep_default_na=False, na_values=[""])


def select_profile_regions(metrics: Iterable[RegionMetrics]) -> tuple[str, str]:
    """(best, worst) region by test MAPE; ties resolve to the lower code."""
    scored = [(m.mape_test, m.region) for m in metrics if m.mape_test is not None]
    if not scored:
        raise InputError("no region has a test MAPE")
    best = min(scored)[1]
    worst = min(scored, key=lambda s: (-s[0], s[1]))[1]
    return best, worst


def emit_profile_csv(
    region: str,
    timestamps: pd.DatetimeIndex,
    actual: np.ndarray,
    predicted: np.ndarray,
    window_start,
    window_hours: int,
    test_year: int | None = None,
) -> str:
    """``timestamp,actual_dn,predicted_dn`` rows for an hourly window.

    Hours without an actual value keep an empty ``actual_dn`` cell.
    """
    timestamps = pd.DatetimeIndex(timestamps)
    start = pd.Timestamp(window_start)
    if start.tzinfo is None:
        start = start.tz_localize("UTC")
    if window_hours < 1:
        raise InputError(f"{region}: empty profile window")
    end = start + pd.Timedelta(hours=window_hours)
    if test_year is not None and (start.year != test_year or (end - pd.Timedelta(hours=1)).year != test_year):
        raise InputError(f"{region}: profile window must lie within test year {test_year}")
    sel = (timestamps >= start) & (timestamps < end)
    if not sel.any():
        raise InputError(f"{region}: no hours inside the profile window")
    frame = pd.DataFrame(
        {
            "timestamp": timestamps[sel].strftime("%Y-%m-%dT%H:%M:%SZ"),
            "actual_dn": np.asarray(actual, dtype=np.float64)[sel],
            "predicted_dn": np.asarray(predicted, dtype=np.float64)[sel],
        }
    )
    return frame.to_csv(index=False, na_rep="", float_format="%.10e", lineterminator="\n")
