"""Brute-force reference implementations used only by the tests.

None of these import the package's split or tree code: they enumerate every
candidate directly on raw values and sum with math.fsum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TIE_RTOL = 1e-12


@dataclass
class OracleSplit:
    feature: int
    threshold: float
    default_left: bool
    gain: float
    left_rows: np.ndarray
    right_rows: np.ndarray


def _gain(GL, HL, GR, HR, lam, gamma):
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - (GL + GR) ** 2 / (HL + HR + lam)) - gamma


def exact_greedy_split(X, g, h, rows, lam=1.0, gamma=0.0, min_child_weight=0.0):
    """Enumerate every midpoint between consecutive distinct values of every
    feature, with missing values sent either way."""
    best = None
    rows = np.asarray(rows)
    for f in range(X.shape[1]):
        x = X[rows, f]
        miss = np.isnan(x)
        distinct = sorted(set(x[~miss].tolist()))
        for a, b in zip(distinct, distinct[1:]):
            thr = (a + b) / 2.0
            for default_left in (True, False):
                go_left = np.where(miss, default_left, x < thr)
                L, R = rows[go_left], rows[~go_left]
                if len(L) == 0 or len(R) == 0:
                    continue
                GL, HL = math.fsum(g[L]), math.fsum(h[L])
                GR, HR = math.fsum(g[R]), math.fsum(h[R])
                if HL < min_child_weight or HR < min_child_weight:
                    continue
                if HL + lam == 0 or HR + lam == 0:
                    continue
                gain = _gain(GL, HL, GR, HR, lam, gamma)
                if best is None or gain > best.gain + TIE_RTOL * abs(best.gain):
                    best = OracleSplit(f, thr, default_left, gain, L, R)
    if best is None or not best.gain > 0:
        return None
    return best


def oracle_tree_predictions(X, y_pred, y, rows, depth, max_depth, lam, gamma, mcw, out):
    """Grow one squared-error tree recursively; write leaf weights into ``out``."""
    g = y_pred - y
    h = np.ones_like(y)
    split = exact_greedy_split(X, g, h, rows, lam, gamma, mcw) if depth < max_depth and len(rows) >= 2 else None
    if split is None:
        out[rows] = -math.fsum(g[rows]) / (math.fsum(h[rows]) + lam)
        return
    for part in (split.left_rows, split.right_rows):
        oracle_tree_predictions(X, y_pred, y, part, depth + 1, max_depth, lam, gamma, mcw, out)


def oracle_booster(X, y, rounds, max_depth, eta, lam, gamma=0.0, mcw=0.0, base=None):
    """Training-set predictions of a plain exact-greedy booster."""
    y = np.asarray(y, dtype=float)
    pred = np.full(len(y), float(np.mean(y)) if base is None else base)
    for _ in range(rounds):
        leaf = np.zeros(len(y))
        oracle_tree_predictions(X, pred.copy(), y, np.arange(len(y)), 0, max_depth, lam, gamma, mcw, leaf)
        pred = pred + eta * leaf
    return pred


def quantile_cut_oracle(sorted_values, max_bins):
    """Cut k sits halfway between the value at rank k*n/B and its successor."""
    n = len(sorted_values)
    cuts = []
    for k in range(1, max_bins):
        i = int(round(k * n / max_bins))
        cuts.append((sorted_values[i - 1] + sorted_values[i]) / 2)
    return cuts


def random_split_dataset(rng, n_rows=None, n_features=None, with_missing=True):
    n = int(rng.integers(2, 201)) if n_rows is None else n_rows
    F = int(rng.integers(1, 6)) if n_features is None else n_features
    cols = []
    for _ in range(F):
        kind = rng.integers(3)
        if kind == 0:
            col = np.round(rng.normal(size=n), 2)
        elif kind == 1:
            col = rng.integers(0, 12, size=n).astype(float)
        else:
            col = np.round(rng.uniform(-50, 50, size=n), 1)
        if with_missing and rng.random() < 0.3:
            col[rng.random(n) < 0.15] = np.nan
        cols.append(col)
    X = np.column_stack(cols)
    g = rng.normal(size=n)
    h = np.ones(n) if rng.random() < 0.5 else rng.uniform(0.1, 2.0, size=n)
    return X, g, h
