import calendar
import math
from datetime import datetime, timezone

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from demandcast.errors import InputError
from demandcast.features import (
    DEFAULT_FEATURES,
    FeatureSchema,
    build_feature_matrix,
    calendar_features,
    monthly_stats,
    read_feature_csv,
    select_top_cells,
    weighted_temperature,
)
from demandcast.ingest import GriddedCovariateTable
from demandcast.normalization import normalize
from demandcast.timeseries import HourlyDemandSeries

ANNUAL_COLS = ["region", "year", "gdp_per_capita", "demand_per_capita_mwh"]


def grid(pops, temps=(), annual=()):
    cells = pd.DataFrame(
        {"cell_id": list(pops), "lat": 0.0, "lon": 0.0, "population": [float(p) for p in pops.values()]}
    )
    t = pd.DataFrame(list(temps), columns=["cell_id", "timestamp", "temperature_c"])
    t["timestamp"] = pd.to_datetime(t["timestamp"], utc=True)
    return GriddedCovariateTable(cells, t, pd.DataFrame(list(annual), columns=ANNUAL_COLS))


def test_top_cells():
    g = grid({"A": 10, "B": 50, "C": 20})
    assert select_top_cells(g, 1) == ["B"]
    assert select_top_cells(g, 3) == ["B", "C", "A"]
    assert select_top_cells(grid({"B": 10, "A": 10}), 1) == ["A"]
    with pytest.raises(InputError):
        select_top_cells(g, 4)


T0 = "2021-01-01T00:00Z"


def test_weighted_temperature_examples():
    assert weighted_temperature(["A"], grid({"A": 5}, [("A", T0, 21.5)]), T0) == 21.5
    g = grid({"A": 30, "B": 10}, [("A", T0, 10.0), ("B", T0, 22.0)])
    assert weighted_temperature(["A", "B"], g, T0) == pytest.approx(13.0, abs=1e-12)
    g = grid({"A": 30, "B": 10}, [("A", "2021-01-01T01:00Z", 10.0)])
    assert math.isnan(weighted_temperature(["A", "B"], g, T0))


def test_weighted_temperature_skips_missing_cell():
    g = grid({"A": 30, "B": 10}, [("B", T0, 22.0)])
    assert weighted_temperature(["A", "B"], g, T0) == 22.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**6), st.floats(-40, 50)), min_size=1, max_size=6))
def test_weighted_temperature_within_range(cells):
    pops = {f"C{i}": p for i, (p, _) in enumerate(cells)}
    g = grid(pops, [(f"C{i}", T0, t) for i, (_, t) in enumerate(cells)])
    w = weighted_temperature(list(pops), g, T0)
    temps = [t for _, t in cells]
    assert min(temps) - 1e-9 <= w <= max(temps) + 1e-9


def test_calendar_examples():
    assert calendar_features(pd.Timestamp("2021-06-07T00:00Z")) == (0, 0, 158, 6, 0)
    assert calendar_features(pd.Timestamp("2020-12-31T23:00Z"))[2] == 366
    assert calendar_features(pd.Timestamp("2021-06-12T12:00Z"))[4] == 1


@settings(max_examples=200, deadline=None)
@given(st.datetimes(min_value=datetime(1990, 1, 1), max_value=datetime(2060, 1, 1)))
def test_calendar_against_stdlib(dt):
    dt = dt.replace(minute=0, second=0, microsecond=0, tzinfo=timezone.utc)
    tt = dt.timetuple()
    expected = (dt.hour, dt.weekday(), tt.tm_yday, dt.month, int(dt.weekday() >= 5))
    assert calendar_features(pd.Timestamp(dt)) == expected


def month_series(means):
    idx, vals = [], []
    for m, v in enumerate(means, start=1):
        if v is None:
            continue
        idx += [pd.Timestamp(2021, m, 1, tz="UTC"), pd.Timestamp(2021, m, 2, tz="UTC")]
        vals += [v - 1.0, v + 1.0]
    return pd.Series(vals, index=pd.DatetimeIndex(idx), dtype=float)


def test_month_rank_monotone():
    stats = monthly_stats(month_series(list(range(12))))
    assert stats["rank"].tolist() == list(range(1, 13))
    assert stats["mean_c"].tolist() == [float(m) for m in range(12)]


def test_month_rank_tie_prefers_january():
    stats = monthly_stats(month_series([0.0, 0.0] + [5.0 + m for m in range(10)]))
    assert stats.loc[1, "rank"] == 1 and stats.loc[2, "rank"] == 2


def test_missing_month_excluded():
    stats = monthly_stats(month_series([3.0, None] + [float(m) for m in range(10)]))
    assert math.isnan(stats.loc[2, "rank"]) and math.isnan(stats.loc[2, "mean_c"])
    assert sorted(stats["rank"].dropna()) == list(range(1, 12))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.one_of(st.none(), st.integers(-20, 20).map(float)), min_size=12, max_size=12))
def test_month_rank_matches_sort_oracle(means):
    stats = monthly_stats(month_series(means))
    have = [m for m in range(1, 13) if means[m - 1] is not None]
    oracle = {m: r for r, m in enumerate(sorted(have, key=lambda m: (means[m - 1], m)), start=1)}
    for m in range(1, 13):
        if m in oracle:
            assert stats.loc[m, "rank"] == oracle[m]
        else:
            assert math.isnan(stats.loc[m, "rank"])
    assert sorted(oracle.values()) == list(range(1, len(have) + 1))


# build_feature_matrix -------------------------------------------------------

def week_fixture(hours=168, start="2021-12-28", annual=True, hole=()):
    start = pd.Timestamp(start, tz="UTC")
    times = pd.date_range(start, periods=hours, freq="h")
    pops = {"A": 100, "B": 300, "C": 200, "D": 50}
    temps = []
    for i, t in enumerate(times):
        for j, c in enumerate(pops):
            if (i + j) % 11 == 0:  # sprinkle missing readings
                continue
            temps.append((c, t.isoformat(), round(5 + 0.1 * i - 2 * j, 3)))
    ann = [("XX", 2021, 40000.0, 6.5)]
    if annual:
        ann.append(("XX", 2022, 41000.0, 6.7))
    g = grid(pops, temps, ann)
    vals = 100 + 10 * np.sin(np.arange(hours) / 5)
    vals[list(hole)] = np.nan
    s = HourlyDemandSeries("XX", start, vals)
    return s, g


def row_oracle(t, g):
    """Assemble one feature row by hand from the raw tables."""
    pops = dict(zip(g.cells["cell_id"], g.cells["population"]))
    temp = {(r.cell_id, r.timestamp): r.temperature_c for r in g.temperatures.itertuples()}

    def wmean(cells):
        have = [(pops[c], temp[(c, t)]) for c in cells if (c, t) in temp]
        if not have:
            return float("nan")
        return sum(p * x for p, x in have) / sum(p for p, _ in have)

    top1 = [r.temperature_c for r in g.temperatures.itertuples()
            if r.cell_id == "B" and r.timestamp.year == t.year]
    months = {}
    for r in g.temperatures.itertuples():
        if r.cell_id == "B" and r.timestamp.year == t.year:
            months.setdefault(r.timestamp.month, []).append(r.temperature_c)
    means = {m: sum(v) / len(v) for m, v in months.items()}
    rank = sorted(means, key=lambda m: (means[m], m)).index(t.month) + 1 if t.month in means else float("nan")
    ann = {(r.year): (r.gdp_per_capita, r.demand_per_capita_mwh) for r in g.annual.itertuples()}
    gdp, dpc = ann.get(t.year, (float("nan"), float("nan")))
    assert top1
    return [
        t.hour, t.weekday(), t.dayofyear, t.month, int(t.weekday() >= 5),
        wmean(["B"]), wmean(["B", "C", "A"]), means.get(t.month, float("nan")), rank,
        sum(pops.values()), gdp, dpc,
    ]


def test_row_count_matches_present_targets():
    s, g = week_fixture(hours=50, hole=(3, 40))
    m, y = build_feature_matrix(s, normalize(s), g)
    assert len(m) == len(y) == 48
    assert not np.isnan(y).any()


def test_missing_gdp_year_is_sentinel():
    s, g = week_fixture(annual=False)
    m, _ = build_feature_matrix(s, normalize(s), g)
    gdp = m.column("gdp_per_capita")
    in2022 = m.timestamps.year == 2022
    assert np.isnan(gdp[in2022]).all() and (gdp[~in2022] == 40000.0).all()
    assert len(m) == 168


def test_week_matches_hand_assembled_golden():
    s, g = week_fixture(hole=(7,))
    m, y = build_feature_matrix(s, normalize(s), g)
    assert m.schema.names == DEFAULT_FEATURES
    expected = np.array([row_oracle(t, g) for t in m.timestamps], dtype=float)
    np.testing.assert_allclose(m.values, expected, rtol=1e-12, atol=1e-12, equal_nan=True)
    # a few cells frozen by hand: first hour is 2021-12-28 00:00, a Tuesday
    assert m.values[0, :5].tolist() == [0, 1, 362, 12, 0]
    # hour 0: B (pop 300) reads 3.0, C (200) reads 1.0, A (100) is missing
    assert m.values[0, 5] == 3.0
    assert m.values[0, 6] == pytest.approx((300 * 3.0 + 200 * 1.0) / 500, abs=1e-12)
    assert m.values[0, 9] == 650.0


def test_permuted_temperature_rows_do_not_change_matrix():
    s, g = week_fixture()
    m1, y1 = build_feature_matrix(s, normalize(s), g)
    shuffled = g.temperatures.sample(frac=1.0, random_state=4).reset_index(drop=True)
    cells = g.cells.iloc[::-1].reset_index(drop=True)
    g2 = GriddedCovariateTable(cells, shuffled, g.annual.iloc[::-1].reset_index(drop=True))
    m2, y2 = build_feature_matrix(s, normalize(s), g2)
    assert m1.timestamps.equals(m2.timestamps)
    np.testing.assert_array_equal(m1.values, m2.values)
    np.testing.assert_array_equal(y1, y2)


def test_span_mismatch_rejected():
    s, g = week_fixture()
    other = HourlyDemandSeries("XX", s.start + pd.Timedelta(hours=1), s.values)
    with pytest.raises(InputError, match="mismatch"):
        build_feature_matrix(s, normalize(other), g)


def test_schema_rules():
    with pytest.raises(InputError):
        FeatureSchema(("month", "month"))
    with pytest.raises(InputError):
        FeatureSchema(("wind_speed",))
    assert FeatureSchema().fingerprint != FeatureSchema(DEFAULT_FEATURES[::-1]).fingerprint


def test_csv_round_trip(tmp_path):
    s, g = week_fixture(annual=False)
    m, y = build_feature_matrix(s, normalize(s), g)
    m.to_csv(tmp_path / "f.csv", y)
    back, yb = read_feature_csv(tmp_path / "f.csv", "XX")
    np.testing.assert_array_equal(back.values, m.values)
    np.testing.assert_array_equal(yb, y)
    assert back.timestamps.equals(m.timestamps)
