"""Per-region chronological year assignment to train / validation / test."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import pandas as pd

from demandcast.errors import InputError
from demandcast.timeseries import RegionId, YearCoverage

PARTS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitAssignment:
    region: RegionId
    train_years: frozenset[int]
    val_year: int | None
    test_year: int

    def __post_init__(self):
        object.__setattr__(self, "region", RegionId(self.region))
        object.__setattr__(self, "train_years", frozenset(self.train_years))
        if self.val_year is not None and not self.test_year > self.val_year:
            raise InputError(f"{self.region}: validation year must precede test year")
        later = self.val_year if self.val_year is not None else self.test_year
        if self.train_years and max(self.train_years) >= later:
            raise InputError(f"{self.region}: training years must precede validation/test")

    @property
    def years(self) -> list[int]:
        extra = [self.val_year] if self.val_year is not None else []
        return sorted([*self.train_years, *extra, self.test_year])

    def part_of(self, year: int) -> str | None:
        if year == self.test_year:
            return "test"
        if year == self.val_year:
            return "val"
        if year in self.train_years:
            return "train"
        return None


@dataclass(frozen=True)
class SplitSummary:
    counts: dict[str, int]
    fractions: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def available_years(coverage: Iterable[YearCoverage], threshold: float = 0.1) -> set[int]:
    """Years whose share of observed hours reaches ``threshold``."""
    return {c.year for c in coverage if c.hours_available > 0 and c.fraction >= threshold}


def assign_splits(available: Mapping[str, Iterable[int]]) -> list[SplitAssignment]:
    """Last year tests, the one before validates, the rest train."""
    out = []
    for region in sorted(available):
        years = sorted(set(int(y) for y in available[region]))
        if not years:
            raise InputError(f"{region}: no years with data")
        test = years[-1]
        val = years[-2] if len(years) >= 2 else None
        out.append(SplitAssignment(region, frozenset(years[:-2]), val, test))
    return out


def summarize(
    assignments: Iterable[SplitAssignment], counts: Mapping[tuple[str, int], int]
) -> SplitSummary:
    """Observation counts and fractions per part; ``counts`` is keyed by (region, year)."""
    totals = dict.fromkeys(PARTS, 0)
    for a in assignments:
        for year in a.years:
            key = (a.region, year)
            if key not in counts:
                raise InputError(f"no observation count for {a.region} {year}")
            totals[a.part_of(year)] += int(counts[key])
    n = sum(totals.values())
    fractions = {p: (totals[p] / n if n else 0.0) for p in PARTS}
    return SplitSummary(totals, fractions)


def manifest_frame(assignments: Iterable[SplitAssignment]) -> pd.DataFrame:
    rows = [
        (a.region, year, a.part_of(year)) for a in sorted(assignments, key=lambda a: a.region) for year in a.years
    ]
    return pd.DataFrame(rows, columns=["region", "year", "part"])


def read_manifest(frame: pd.DataFrame) -> list[SplitAssignment]:
    out = []
    for region, rows in frame.groupby("region", sort=True):
        parts = dict(zip(rows["year"].astype(int), rows["part"]))
        test = [y for y, p in parts.items() if p == "test"]
        val = [y for y, p in parts.items() if p == "val"]
        if len(test) != 1 or len(val) > 1:
            raise InputError(f"{region}: manifest must list one test year and at most one val year")
        out.append(
            SplitAssignment(
                str(region),
                frozenset(y for y, p in parts.items() if p == "train"),
                val[0] if val else None,
                test[0],
            )
        )
    return out
