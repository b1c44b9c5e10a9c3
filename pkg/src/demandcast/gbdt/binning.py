"""Quantile binning of feature columns for histogram split search.

A value ``x`` falls in bin ``#{boundaries <= x}``, so ``bin(x) <= b`` exactly
when ``x < boundaries[b]``. Trees store the raw boundary as their threshold
and route ``x < threshold`` left, which keeps binned training and raw-value
prediction consistent. Missing values (NaN) get their own bin, one past the
last regular bin of the feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _midpoint(a: float, b: float) -> float:
    mid = (a + b) / 2.0
    if not np.isfinite(mid):  # a + b overflowed
        mid = a / 2.0 + b / 2.0
    # adjacent floats: keep a < threshold <= b
    return mid if mid > a else b


def compute_boundaries(values: np.ndarray, max_bins: int) -> np.ndarray:
    """Cut points between distinct values at (roughly) equal-count quantiles.

    With at most ``max_bins`` distinct values every distinct value gets its own
    bin. Otherwise cut ``k`` sits after the first distinct value whose
    cumulative count reaches ``k * n / max_bins``.
    """
    vals = np.asarray(values, dtype=np.float64)
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        return np.empty(0)
    uniq, counts = np.unique(vals, return_counts=True)
    if uniq.size <= max_bins:
        cut_after = np.arange(uniq.size - 1)
    else:
        cum = np.cumsum(counts)
        targets = np.arange(1, max_bins) * (vals.size / max_bins)
        cut_after = np.unique(np.searchsorted(cum, targets, side="left"))
        cut_after = cut_after[cut_after < uniq.size - 1]
    return np.array([_midpoint(uniq[j], uniq[j + 1]) for j in cut_after], dtype=np.float64)


def apply_boundaries(values: np.ndarray, boundaries: np.ndarray, n_bins: int) -> np.ndarray:
    vals = np.asarray(values, dtype=np.float64)
    codes = np.searchsorted(boundaries, vals, side="right").astype(np.int32)
    codes[np.isnan(vals)] = n_bins
    return codes


@dataclass(frozen=True, eq=False)
class BinnedMatrix:
    """Per-feature boundaries plus a (features x rows) matrix of bin codes."""

    boundaries: tuple[np.ndarray, ...]
    n_bins: np.ndarray  # regular (non-missing) bins per feature
    codes: np.ndarray  # int32, shape (n_features, n_rows)

    @property
    def n_features(self) -> int:
        return len(self.boundaries)

    @property
    def n_rows(self) -> int:
        return self.codes.shape[1]

    @property
    def missing_bin(self) -> np.ndarray:
        return self.n_bins

    @property
    def stride(self) -> int:
        """Histogram width: enough for every feature's bins plus its missing bin."""
        return int(self.n_bins.max()) + 1 if self.n_features else 1

    def threshold(self, feature: int, bin_index: int) -> float:
        return float(self.boundaries[feature][bin_index])


def _n_bins(column: np.ndarray, boundaries: np.ndarray) -> int:
    return boundaries.size + 1 if (~np.isnan(column)).any() else 0


def quantile_bin(features, max_bins: int = 256) -> BinnedMatrix:
    """Bin a 2-D array (or anything with a ``.values`` 2-D array)."""
    X = np.asarray(getattr(features, "values", features), dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need a 2-D matrix with at least one row")
    if not 2 <= max_bins <= 65535:
        raise ValueError("max_bins must lie in [2, 65535]")
    boundaries = []
    n_bins = []
    codes = np.empty((X.shape[1], X.shape[0]), dtype=np.int32)
    for f in range(X.shape[1]):
        col = X[:, f]
        b = compute_boundaries(col, max_bins)
        nb = _n_bins(col, b)
        boundaries.append(b)
        n_bins.append(nb)
        codes[f] = apply_boundaries(col, b, nb)
    return BinnedMatrix(tuple(boundaries), np.array(n_bins, dtype=np.int64), codes)


def bin_with(features, boundaries: tuple[np.ndarray, ...]) -> BinnedMatrix:
    """Bin new data with boundaries learnt elsewhere (e.g. a saved model)."""
    X = np.asarray(getattr(features, "values", features), dtype=np.float64)
    n_bins = np.array([b.size + 1 for b in boundaries], dtype=np.int64)
    codes = np.empty((X.shape[1], X.shape[0]), dtype=np.int32)
    for f, b in enumerate(boundaries):
        codes[f] = apply_boundaries(X[:, f], b, int(n_bins[f]))
    return BinnedMatrix(tuple(boundaries), n_bins, codes)
