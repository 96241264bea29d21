"""From-scratch random forest: bagged CART trees with class weighting,
probability output, and out-of-bag bookkeeping.

Leaf probabilities are weighted class frequencies, so downstream
threshold/calibration transforms get smooth inputs. All randomness is
derived from the fit seed, making training a pure function of
(data, config, seed).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._cart import (build_sorted_columns, grow_tree, predict_forest,
                    predict_trees)
from .errors import ConfigError, DataError

_UNLIMITED_DEPTH = 2 ** 62


@dataclass(frozen=True)
class FitConfig:
    """Forest hyperparameters. ``max_depth=None`` means unlimited;
    ``feature_subsample=None`` means ceil(sqrt(d))."""

    n_trees: int = 100
    max_depth: int | None = None
    min_leaf: int = 1
    feature_subsample: int | None = None
    class_weights: tuple = (1.0, 1.0)
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1 or None")
        if self.min_leaf < 1:
            raise ConfigError("min_leaf must be >= 1")
        if self.feature_subsample is not None and self.feature_subsample < 1:
            raise ConfigError("feature_subsample must be >= 1 or None")
        w0, w1 = self.class_weights
        if w0 <= 0 or w1 <= 0:
            raise ConfigError("class weights must be positive")


@dataclass(frozen=True)
class TreeNode:
    """View of one node: ``feature < 0`` marks a leaf."""

    feature: int
    threshold: float
    left: int
    right: int
    class_counts: tuple
    weighted_counts: tuple
    proba: float

    @property
    def is_leaf(self):
        return self.feature < 0


@dataclass
class ForestModel:
    """Trained ensemble stored as flat node arrays (one block per tree)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    raw0: np.ndarray
    raw1: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    proba: np.ndarray
    offsets: np.ndarray           # len n_trees + 1, node-block boundaries
    n_features: int
    n_trees: int
    max_depth: int | None
    min_leaf: int
    feature_subsample: int
    class_weights: tuple
    bootstrap: bool
    seed: int
    oob_indices: list = field(default_factory=list)
    bag_indices: list = field(default_factory=list)

    @property
    def total_nodes(self):
        return int(self.offsets[-1])

    def n_nodes(self, t):
        return int(self.offsets[t + 1] - self.offsets[t])

    def node(self, t, i):
        g = int(self.offsets[t]) + i
        return TreeNode(
            feature=int(self.feature[g]),
            threshold=float(self.threshold[g]),
            left=int(self.left[g]),
            right=int(self.right[g]),
            class_counts=(int(self.raw0[g]), int(self.raw1[g])),
            weighted_counts=(float(self.w0[g]), float(self.w1[g])),
            proba=float(self.proba[g]),
        )

    def predict_proba(self, rows, tree_weights=None):
        return predict_proba(self, rows, tree_weights)

    def predict(self, rows):
        return predict(self, rows)


def weighted_gini(counts, weights):
    """Impurity 1 - p0^2 - p1^2 with p_k = w_k n_k / (w0 n0 + w1 n1)."""
    n0, n1 = counts
    w0, w1 = weights
    if n0 < 0 or n1 < 0:
        raise ConfigError("counts must be non-negative")
    if n0 == 0 and n1 == 0:
        raise ConfigError("counts must not both be zero")
    if w0 <= 0 or w1 <= 0:
        raise ConfigError("weights must be positive")
    m0 = w0 * n0
    m1 = w1 * n1
    total = m0 + m1
    p0 = m0 / total
    p1 = m1 / total
    return 1.0 - p0 * p0 - p1 * p1


def _feature_subsample(cfg, d):
    if cfg.feature_subsample is None:
        return max(1, min(d, math.ceil(math.sqrt(d))))
    return min(cfg.feature_subsample, d)


def fit(train, cfg, sample_weight=None, bootstrap_indices=None):
    """Grow a forest on the training dataset.

    ``sample_weight`` multiplies the per-class weights row-wise (used by
    boosting). ``bootstrap_indices`` overrides per-tree bagging with
    caller-supplied row index arrays (used by balanced forests).
    """
    X = train.rows
    y = train.labels
    n, d = X.shape
    if d == 0:
        raise DataError("dataset has no features")
    n0 = int((y == 0).sum())
    n1 = int((y == 1).sum())
    if n0 == 0 or n1 == 0:
        raise DataError("single-class training set")

    if sample_weight is None:
        sw = np.ones(n, dtype=np.float64)
    else:
        sw = np.asarray(sample_weight, dtype=np.float64)
        if sw.shape != (n,):
            raise ConfigError("sample_weight length must match rows")
        if (sw < 0).any():
            raise ConfigError("sample_weight must be non-negative")
    w = sw * np.where(y == 1, cfg.class_weights[1], cfg.class_weights[0])

    if bootstrap_indices is not None and len(bootstrap_indices) != cfg.n_trees:
        raise ConfigError("bootstrap_indices must supply one array per tree")

    n_sub = _feature_subsample(cfg, d)
    max_depth = _UNLIMITED_DEPTH if cfg.max_depth is None else cfg.max_depth
    rng = np.random.default_rng(cfg.seed)

    X = np.ascontiguousarray(X)
    full_order = np.empty((d, n), dtype=np.int32)
    for f in range(d):
        full_order[f] = np.argsort(X[:, f], kind="stable")

    parts = {k: [] for k in ("feature", "threshold", "left", "right",
                             "raw0", "raw1", "w0", "w1", "proba")}
    offsets = np.zeros(cfg.n_trees + 1, dtype=np.int64)
    oob_indices = []
    bag_indices = []
    all_rows = np.arange(n, dtype=np.int64)

    remap = np.empty(n, dtype=np.int32)
    for t in range(cfg.n_trees):
        if bootstrap_indices is not None:
            bag = np.ascontiguousarray(bootstrap_indices[t], dtype=np.int64)
        elif cfg.bootstrap:
            bag = rng.integers(0, n, size=n, dtype=np.int64)
        else:
            bag = all_rows
        mult = np.bincount(bag, minlength=n)
        uniq = np.flatnonzero(mult)
        counts = mult[uniq]
        # Pool sized for the worst-case node count; drawn unconditionally so
        # RNG consumption does not depend on grown tree shape.
        pool = rng.integers(0, 2 ** 31, size=2 * uniq.size * n_sub + 16,
                            dtype=np.int64)
        remap.fill(-1)
        remap[uniq] = np.arange(uniq.size, dtype=np.int32)
        vals, idx_all = build_sorted_columns(X, full_order, remap)
        is1 = y[uniq] == 1
        wbag = w[uniq] * counts
        out = grow_tree(vals, idx_all,
                        np.where(is1, 0, counts), np.where(is1, counts, 0),
                        np.where(is1, 0.0, wbag), np.where(is1, wbag, 0.0),
                        max_depth, cfg.min_leaf, n_sub, pool)
        for key, arr in zip(parts, out):
            parts[key].append(arr)
        offsets[t + 1] = offsets[t] + out[0].shape[0]
        oob_indices.append(np.flatnonzero(mult == 0))
        bag_indices.append(bag)

    return ForestModel(
        feature=np.concatenate(parts["feature"]),
        threshold=np.concatenate(parts["threshold"]),
        left=np.concatenate(parts["left"]),
        right=np.concatenate(parts["right"]),
        raw0=np.concatenate(parts["raw0"]),
        raw1=np.concatenate(parts["raw1"]),
        w0=np.concatenate(parts["w0"]),
        w1=np.concatenate(parts["w1"]),
        proba=np.concatenate(parts["proba"]),
        offsets=offsets,
        n_features=d,
        n_trees=cfg.n_trees,
        max_depth=cfg.max_depth,
        min_leaf=cfg.min_leaf,
        feature_subsample=n_sub,
        class_weights=tuple(cfg.class_weights),
        bootstrap=cfg.bootstrap,
        seed=cfg.seed,
        oob_indices=oob_indices,
        bag_indices=bag_indices,
    )


def _as_matrix(rows, d):
    X = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != d:
        raise DataError(f"row width {X.shape[1]} != training width {d}")
    return X


def predict_proba(model, rows, tree_weights=None):
    """Per-row P(failure): weighted mean of per-tree leaf probabilities."""
    X = _as_matrix(rows, model.n_features)
    if tree_weights is None:
        tw = np.full(model.n_trees, 1.0 / model.n_trees)
    else:
        tw = np.asarray(tree_weights, dtype=np.float64)
        if tw.shape != (model.n_trees,):
            raise ConfigError("tree_weights length must equal n_trees")
        total = tw.sum()
        if total <= 0:
            raise ConfigError("tree_weights must have positive sum")
        tw = tw / total
    return predict_forest(X, model.feature, model.threshold, model.left,
                          model.right, model.proba, model.offsets, tw)


def predict(model, rows):
    """Hard labels at the default rule: failure iff P(failure) >= 0.5."""
    return (predict_proba(model, rows) >= 0.5).astype(np.int64)


def per_tree_proba(model, rows):
    """Matrix of per-tree leaf probabilities, shape (n_rows, n_trees)."""
    X = _as_matrix(rows, model.n_features)
    return predict_trees(X, model.feature, model.threshold, model.left,
                         model.right, model.proba, model.offsets)


def to_json_doc(model):
    trees = []
    for t in range(model.n_trees):
        lo, hi = int(model.offsets[t]), int(model.offsets[t + 1])
        trees.append({
            "feature": model.feature[lo:hi].tolist(),
            "threshold": model.threshold[lo:hi].tolist(),
            "left": model.left[lo:hi].tolist(),
            "right": model.right[lo:hi].tolist(),
            "raw0": model.raw0[lo:hi].tolist(),
            "raw1": model.raw1[lo:hi].tolist(),
            "w0": model.w0[lo:hi].tolist(),
            "w1": model.w1[lo:hi].tolist(),
            "proba": model.proba[lo:hi].tolist(),
        })
    return {
        "kind": "forest",
        "n_features": model.n_features,
        "n_trees": model.n_trees,
        "max_depth": model.max_depth,
        "min_leaf": model.min_leaf,
        "feature_subsample": model.feature_subsample,
        "class_weights": list(model.class_weights),
        "bootstrap": model.bootstrap,
        "seed": model.seed,
        "trees": trees,
    }


def from_json_doc(doc):
    if doc.get("kind") != "forest":
        raise ConfigError("not a forest document")
    parts = {k: [] for k in ("feature", "threshold", "left", "right",
                             "raw0", "raw1", "w0", "w1", "proba")}
    offsets = np.zeros(len(doc["trees"]) + 1, dtype=np.int64)
    for t, tree in enumerate(doc["trees"]):
        for key in parts:
            parts[key].append(np.asarray(tree[key]))
        offsets[t + 1] = offsets[t] + len(tree["feature"])
    return ForestModel(
        feature=np.concatenate(parts["feature"]).astype(np.int32),
        threshold=np.concatenate(parts["threshold"]).astype(np.float64),
        left=np.concatenate(parts["left"]).astype(np.int32),
        right=np.concatenate(parts["right"]).astype(np.int32),
        raw0=np.concatenate(parts["raw0"]).astype(np.int64),
        raw1=np.concatenate(parts["raw1"]).astype(np.int64),
        w0=np.concatenate(parts["w0"]).astype(np.float64),
        w1=np.concatenate(parts["w1"]).astype(np.float64),
        proba=np.concatenate(parts["proba"]).astype(np.float64),
        offsets=offsets,
        n_features=int(doc["n_features"]),
        n_trees=int(doc["n_trees"]),
        max_depth=doc["max_depth"],
        min_leaf=int(doc["min_leaf"]),
        feature_subsample=int(doc["feature_subsample"]),
        class_weights=tuple(doc["class_weights"]),
        bootstrap=bool(doc["bootstrap"]),
        seed=int(doc["seed"]),
    )
