"""Second-order gradient boosting with squared-error loss, plus model I/O."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from demandcast.errors import InputError
from demandcast.gbdt.binning import quantile_bin
from demandcast.gbdt.tree import RegressionTree, grow_tree

LOGGER = logging.getLogger(__name__)

MODEL_FORMAT = "demandcast-gbdt"
MODEL_VERSION = 1


@dataclass(frozen=True)
class GBDTParams:
    learning_rate: float = 0.1
    max_depth: int = 6
    num_rounds: int = 200
    reg_lambda: float = 1.0
    reg_gamma: float = 0.0
    min_child_weight: float = 1.0
    max_bins: int = 256
    base_score: float | None = None  # None: mean of the training targets
    seed: int = 0
    # accepted for schema compatibility only; anything but 1.0 is rejected
    subsample: float = 1.0
    colsample_bytree: float = 1.0

    def __post_init__(self):
        checks = [
            (0 < self.learning_rate <= 1, "learning_rate must lie in (0, 1]"),
            (int(self.max_depth) == self.max_depth and self.max_depth >= 1, "max_depth must be an integer >= 1"),
            (int(self.num_rounds) == self.num_rounds and self.num_rounds >= 1, "num_rounds must be an integer >= 1"),
            (self.reg_lambda >= 0, "reg_lambda must be >= 0"),
            (self.reg_gamma >= 0, "reg_gamma must be >= 0"),
            (self.min_child_weight >= 0, "min_child_weight must be >= 0"),
            (int(self.max_bins) == self.max_bins and 2 <= self.max_bins <= 65535, "max_bins must lie in [2, 65535]"),
            (self.base_score is None or np.isfinite(self.base_score), "base_score must be finite"),
            (int(self.seed) == self.seed, "seed must be an integer"),
            (self.subsample == 1.0, "row subsampling is not supported"),
            (self.colsample_bytree == 1.0, "feature subsampling is not supported"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InputError(f"invalid GBDT parameter: {msg}")

    @classmethod
    def from_mapping(cls, overrides: dict | None) -> "GBDTParams":
        overrides = dict(overrides or {})
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise InputError(f"unknown GBDT parameters {sorted(unknown)}")
        try:
            return cls(**overrides)
        except TypeError as exc:
            raise InputError(f"invalid GBDT parameters: {exc}") from exc


@dataclass(frozen=True, eq=False)
class GBDTModel:
    params: GBDTParams
    feature_names: tuple[str, ...]
    schema_fingerprint: str
    bin_boundaries: tuple[np.ndarray, ...]
    trees: tuple[RegressionTree, ...]
    base_score: float

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "params": asdict(self.params),
            "feature_names": list(self.feature_names),
            "schema_fingerprint": self.schema_fingerprint,
            "base_score": self.base_score,
            "bin_boundaries": [b.tolist() for b in self.bin_boundaries],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GBDTModel":
        if doc.get("format") != MODEL_FORMAT:
            raise InputError("not a demandcast GBDT model document")
        if doc.get("version") != MODEL_VERSION:
            raise InputError(f"unsupported model version {doc.get('version')}")
        return cls(
            params=GBDTParams(**doc["params"]),
            feature_names=tuple(doc["feature_names"]),
            schema_fingerprint=doc["schema_fingerprint"],
            bin_boundaries=tuple(np.array(b, dtype=np.float64) for b in doc["bin_boundaries"]),
            trees=tuple(RegressionTree.from_dict(t) for t in doc["trees"]),
            base_score=float(doc["base_score"]),
        )

    def save(self, path: Path, extra: dict | None = None) -> None:
        doc = self.to_dict()
        if extra:
            doc["metadata"] = extra
        Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "GBDTModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _raw_matrix(features) -> tuple[np.ndarray, tuple[str, ...] | None, str | None]:
    schema = getattr(features, "schema", None)
    X = np.asarray(getattr(features, "values", features), dtype=np.float64)
    if schema is None:
        return X, None, None
    return X, tuple(schema.names), schema.fingerprint


def squared_error(pred: np.ndarray, y: np.ndarray) -> float:
    return float(0.5 * np.mean((pred - y) ** 2))


def train(
    features,
    targets: Sequence[float],
    params: GBDTParams = GBDTParams(),
    n_threads: int = 1,
    feature_names: Sequence[str] | None = None,
    callback=None,
) -> GBDTModel:
    """Fit ``params.num_rounds`` trees to squared-error gradients.

    ``features`` is a FeatureMatrix or a plain 2-D array (NaN = missing).
    ``callback(round, predictions)`` is invoked after every round with the
    current training predictions.
    """
    X, names, fingerprint = _raw_matrix(features)
    y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("empty training set")
    if X.shape[0] != y.shape[0]:
        raise InputError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
    if not np.isfinite(y).all():
        raise InputError("training targets must be finite")
    if names is None:
        names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(X.shape[1]))
        fingerprint = "unnamed:" + ",".join(names)

    binned = quantile_bin(X, params.max_bins)
    base = float(np.mean(y)) if params.base_score is None else float(params.base_score)
    pred = np.full(y.shape, base)
    hess = np.ones_like(y)
    trees = []
    for r in range(params.num_rounds):
        grad = pred - y
        tree = grow_tree(binned, grad, hess, params, n_threads)
        trees.append(tree)
        pred += params.learning_rate * tree.predict(X)
        if callback is not None:
            callback(r, pred)
        LOGGER.debug("round %d: leaves=%d loss=%.6g", r, tree.n_leaves, squared_error(pred, y))

    return GBDTModel(
        params=params,
        feature_names=names,
        schema_fingerprint=fingerprint,
        bin_boundaries=binned.boundaries,
        trees=tuple(trees),
        base_score=base,
    )


def predict(model: GBDTModel, features) -> np.ndarray:
    """``base_score`` plus the shrunken sum of tree outputs, trees in order."""
    X, _, fingerprint = _raw_matrix(features)
    if fingerprint is not None and fingerprint != model.schema_fingerprint:
        raise InputError("feature schema does not match the model")
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise InputError(f"expected {len(model.feature_names)} feature columns")
    pred = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        pred += model.params.learning_rate * tree.predict(X)
    return pred
