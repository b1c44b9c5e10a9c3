"""Histogram construction, split search and level-wise tree growth."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from demandcast.gbdt.binning import BinnedMatrix

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    bin: int  # rows with code <= bin go left
    threshold: float
    default_left: bool  # direction for missing values
    gain: float


@dataclass(frozen=True)
class Histogram:
    """Gradient, hessian and row-count sums, shape (n_features, stride)."""

    grad: np.ndarray
    hess: np.ndarray
    count: np.ndarray


def build_histogram(
    binned: BinnedMatrix,
    rows: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    n_threads: int = 1,
) -> Histogram:
    """Per-feature bin sums over ``rows``.

    Each feature's histogram is accumulated independently in row order, so
    spreading features over threads cannot change a single bit of the result.
    """
    stride = binned.stride
    F = binned.n_features
    G = np.zeros((F, stride))
    H = np.zeros((F, stride))
    C = np.zeros((F, stride), dtype=np.int64)
    g = grad[rows]
    h = hess[rows]

    def fill(f: int) -> None:
        codes = binned.codes[f, rows]
        G[f] = np.bincount(codes, weights=g, minlength=stride)
        H[f] = np.bincount(codes, weights=h, minlength=stride)
        C[f] = np.bincount(codes, minlength=stride)

    if n_threads > 1 and F > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(fill, range(F)))
    else:
        for f in range(F):
            fill(f)
    return Histogram(G, H, C)


def split_gain(GL, HL, GR, HR, reg_lambda, reg_gamma):
    """Loss reduction of splitting a node into (L, R) under second-order loss."""
    return 0.5 * (GL**2 / (HL + reg_lambda) + GR**2 / (HR + reg_lambda)
                  - (GL + GR) ** 2 / (HL + HR + reg_lambda)) - reg_gamma


def best_split_from_histogram(
    hist: Histogram, binned: BinnedMatrix, reg_lambda: float, reg_gamma: float, min_child_weight: float
) -> SplitCandidate | None:
    F, S = hist.grad.shape
    nb = binned.n_bins
    bins = np.arange(S)[None, :]
    regular = bins < nb[:, None]
    miss = nb[:, None]
    mG = np.take_along_axis(hist.grad, miss, axis=1)
    mH = np.take_along_axis(hist.hess, miss, axis=1)
    mC = np.take_along_axis(hist.count, miss, axis=1)
    GLc = np.cumsum(np.where(regular, hist.grad, 0.0), axis=1)
    HLc = np.cumsum(np.where(regular, hist.hess, 0.0), axis=1)
    CLc = np.cumsum(np.where(regular, hist.count, 0), axis=1)
    Gt = GLc[:, -1:] + mG
    Ht = HLc[:, -1:] + mH
    Ct = CLc[:, -1:] + mC
    candidate = bins < (nb[:, None] - 1)

    gains = np.full((F, S, 2), -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for d, (GL, HL, CL) in enumerate(((GLc + mG, HLc + mH, CLc + mC), (GLc, HLc, CLc))):
            GR, HR, CR = Gt - GL, Ht - HL, Ct - CL
            ok = candidate & (CL > 0) & (CR > 0) & (HL >= min_child_weight) & (HR >= min_child_weight)
            gain = split_gain(GL, HL, GR, HR, reg_lambda, reg_gamma)
            gains[:, :, d] = np.where(ok & np.isfinite(gain), gain, -np.inf)
    # flat C order = (feature, bin, missing-left first); gains within rounding
    # noise of the maximum count as ties and the first one wins
    flat = gains.ravel()
    top = float(flat.max())
    if not top > 0:
        return None
    best = int(np.flatnonzero(flat >= top - TIE_RTOL * top)[0])
    f, b, d = np.unravel_index(best, gains.shape)
    gain = float(gains[f, b, d])
    return SplitCandidate(int(f), int(b), binned.threshold(int(f), int(b)), bool(d == 0), gain)


def find_best_split(
    rows: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    binned: BinnedMatrix,
    params,
    n_threads: int = 1,
) -> SplitCandidate | None:
    """Best (feature, bin, missing direction) for the node holding ``rows``.

    Returns None when no candidate has positive gain with both children
    meeting ``min_child_weight``.
    """
    rows = np.asarray(rows)
    if rows.size < 2:
        return None
    hist = build_histogram(binned, rows, grad, hess, n_threads)
    return best_split_from_histogram(
        hist, binned, params.reg_lambda, params.reg_gamma, params.min_child_weight
    )


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    bin: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of raw feature matrix ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, n = rows[inner], node[inner]
            x = X[r, f[inner]]
            go_left = np.where(np.isnan(x), self.default_left[n], x < self.threshold[n])
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "bin": self.bin.tolist(),
            "threshold": self.threshold.tolist(),
            "default_left": self.default_left.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
            "cover": self.cover.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            feature=np.array(d["feature"], dtype=np.int64),
            bin=np.array(d["bin"], dtype=np.int64),
            threshold=np.array(d["threshold"], dtype=np.float64),
            default_left=np.array(d["default_left"], dtype=bool),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            value=np.array(d["value"], dtype=np.float64),
            gain=np.array(d["gain"], dtype=np.float64),
            cover=np.array(d["cover"], dtype=np.float64),
        )


def leaf_weight(G: float, H: float, reg_lambda: float) -> float:
    return -G / (H + reg_lambda)


def grow_tree(
    binned: BinnedMatrix,
    grad: np.ndarray,
    hess: np.ndarray,
    params,
    n_threads: int = 1,
) -> RegressionTree:
    """Grow one tree level by level up to ``params.max_depth``."""
    feature, bins, thresh, dleft, left, right, value, gains, cover = ([] for _ in range(9))

    def new_node(rows: np.ndarray) -> int:
        G, H = float(np.sum(grad[rows])), float(np.sum(hess[rows]))
        feature.append(-1)
        bins.append(-1)
        thresh.append(0.0)
        dleft.append(False)
        left.append(-1)
        right.append(-1)
        value.append(leaf_weight(G, H, params.reg_lambda))
        gains.append(0.0)
        cover.append(H)
        return len(feature) - 1

    frontier = [(new_node(np.arange(binned.n_rows)), np.arange(binned.n_rows))]
    for _depth in range(params.max_depth):
        nxt = []
        for node, rows in frontier:
            split = find_best_split(rows, grad, hess, binned, params, n_threads)
            if split is None:
                continue
            codes = binned.codes[split.feature, rows]
            is_missing = codes == binned.n_bins[split.feature]
            go_left = np.where(is_missing, split.default_left, codes <= split.bin)
            lrows, rrows = rows[go_left], rows[~go_left]
            feature[node] = split.feature
            bins[node] = split.bin
            thresh[node] = split.threshold
            dleft[node] = split.default_left
            gains[node] = split.gain
            value[node] = 0.0
            left[node] = new_node(lrows)
            right[node] = new_node(rrows)
            nxt += [(left[node], lrows), (right[node], rrows)]
        if not nxt:
            break
        frontier = nxt

    return RegressionTree(
        feature=np.array(feature, dtype=np.int64),
        bin=np.array(bins, dtype=np.int64),
        threshold=np.array(thresh, dtype=np.float64),
        default_left=np.array(dleft, dtype=bool),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
        gain=np.array(gains, dtype=np.float64),
        cover=np.array(cover, dtype=np.float64),
    )
