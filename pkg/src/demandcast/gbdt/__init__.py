"""Histogram-based second-order gradient-boosted regression trees."""

from demandcast.gbdt.binning import BinnedMatrix, compute_boundaries, quantile_bin
from demandcast.gbdt.booster import GBDTModel, GBDTParams, predict, train
from demandcast.gbdt.tree import RegressionTree, SplitCandidate, find_best_split, split_gain

__all__ = [
    "BinnedMatrix",
    "GBDTModel",
    "GBDTParams",
    "RegressionTree",
    "SplitCandidate",
    "compute_boundaries",
    "find_best_split",
    "predict",
    "quantile_bin",
    "split_gain",
    "train",
]
