"""In-processing techniques: cost-sensitive forests, balanced
bagging/boosting ensembles, balanced random forest, and a meta-feature
learner. Every model here satisfies the same prediction contract as the
plain forest: probabilities in [0, 1], deterministic per seed,
width-checked.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import forest as rf
from .dataset import ColumnSchema, Dataset
from .errors import ConfigError, DataError
from .forest import FitConfig
from .resample import SamplerSpec, rus

log = logging.getLogger(__name__)

_EPS_CLAMP = 1e-6
_BOOST_DEPTH_CAP = 3


@dataclass
class EnsembleModel:
    """Weighted collection of models.

    mean-proba averages member probabilities; weighted-vote combines
    member hard votes in {-1, +1} and maps the normalized margin through a
    logistic to keep a probability output.
    """

    members: list
    weights: np.ndarray
    aggregation: str

    def __post_init__(self):
        if len(self.members) < 1:
            raise ConfigError("ensemble needs at least one member")
        if self.aggregation not in ("mean-proba", "weighted-vote"):
            raise ConfigError(f"unknown aggregation {self.aggregation!r}")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.members),) or (w < 0).any():
            raise ConfigError("weights must be non-negative, one per member")
        total = w.sum()
        if total <= 0:
            raise ConfigError("weights must have positive sum")
        self.weights = w / total

    def predict_proba(self, rows):
        if self.aggregation == "mean-proba":
            acc = np.zeros(np.atleast_2d(rows).shape[0])
            for w, m in zip(self.weights, self.members):
                acc += w * m.predict_proba(rows)
            return acc
        margin = np.zeros(np.atleast_2d(rows).shape[0])
        for w, m in zip(self.weights, self.members):
            votes = 2.0 * m.predict(rows) - 1.0
            margin += w * votes
        return 1.0 / (1.0 + np.exp(-margin))

    def predict(self, rows):
        return (self.predict_proba(rows) >= 0.5).astype(np.int64)


@dataclass
class MetaModel:
    """Forest over original features plus an out-of-fold base-model
    probability column; at prediction time the base model (refit on the
    full fold) supplies the extra feature."""

    base: object
    main: object
    n_folds: int

    def predict_proba(self, rows):
        X = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        meta = self.base.predict_proba(X)
        return self.main.predict_proba(np.column_stack([X, meta]))

    def predict(self, rows):
        return (self.predict_proba(rows) >= 0.5).astype(np.int64)


@dataclass
class BoostTrace:
    """Round-by-round AdaBoost bookkeeping. distributions[0] is the
    initial uniform D_1; distributions[t] is D_{t+1} after round t."""

    epsilons: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    distributions: list = field(default_factory=list)


def inverse_frequency_weights(train):
    """(w0, w1) with the minority class weighted n_majority/n_minority."""
    n0, n1 = train.class_counts
    w = [1.0, 1.0]
    minority = train.minority_label
    n_maj, n_min = train.row_count_per_class
    w[minority] = n_maj / n_min
    return tuple(w)


def cost_sensitive_fit(train, cfg):
    """Forest with inverse-frequency class weights entering both the split
    criterion and leaf probabilities."""
    return rf.fit(train, replace(cfg, class_weights=inverse_frequency_weights(train)))


def bagging_fit(train, n_members=10, cfg=None):
    """Balanced bagging: each member is a forest fit on a balanced random
    under-sample of the fold, aggregated by mean probability."""
    if n_members < 1:
        raise ConfigError("n_members must be >= 1")
    cfg = cfg or FitConfig()
    rng = np.random.default_rng(cfg.seed)
    seeds = rng.integers(0, 2 ** 62, size=2 * n_members)
    members = []
    for i in range(n_members):
        balanced = rus(train, SamplerSpec(kind="rus", target_ratio=1.0,
                                          seed=int(seeds[2 * i])))
        members.append(rf.fit(balanced, replace(cfg, seed=int(seeds[2 * i + 1]))))
    weights = np.full(n_members, 1.0 / n_members)
    return EnsembleModel(members=members, weights=weights,
                         aggregation="mean-proba")


def boosting_fit(train, n_rounds=10, cfg=None, record_distributions=False):
    """AdaBoost.M1 over depth-capped forests.

    Round t fits a forest on sample weights D_t, computes the weighted
    error, derives the member weight alpha_t = 0.5*ln((1-eps)/eps) with
    eps clamped to [1e-6, 1-1e-6], and exponentially reweights. Stops
    early on eps >= 0.5 (member discarded; if it is the first round the
    single member is returned unweighted with a warning) or on a perfect
    round.
    """
    if n_rounds < 1:
        raise ConfigError("n_rounds must be >= 1")
    cfg = cfg or FitConfig()
    depth = _BOOST_DEPTH_CAP if cfg.max_depth is None else min(cfg.max_depth,
                                                               _BOOST_DEPTH_CAP)
    rng = np.random.default_rng(cfg.seed)
    seeds = rng.integers(0, 2 ** 62, size=n_rounds)

    n = train.n
    y_pm = 2.0 * train.labels - 1.0
    D = np.full(n, 1.0 / n)
    trace = BoostTrace()
    if record_distributions:
        trace.distributions.append(D.copy())

    members = []
    alphas = []
    for t in range(n_rounds):
        member_cfg = replace(cfg, max_depth=depth, seed=int(seeds[t]))
        model = rf.fit(train, member_cfg, sample_weight=D)
        h = 2.0 * rf.predict(model, train.rows) - 1.0
        eps = float(D[h != y_pm].sum())
        trace.epsilons.append(eps)
        if eps >= 0.5:
            if t == 0:
                log.warning("boosting_fit: first-round error %.3f >= 0.5, "
                            "returning single unweighted member", eps)
                model_out = EnsembleModel(members=[model], weights=np.ones(1),
                                          aggregation="weighted-vote")
                model_out.trace = trace
                return model_out
            break
        eps_c = min(max(eps, _EPS_CLAMP), 1.0 - _EPS_CLAMP)
        alpha = 0.5 * np.log((1.0 - eps_c) / eps_c)
        members.append(model)
        alphas.append(alpha)
        trace.alphas.append(alpha)
        D = D * np.exp(-alpha * y_pm * h)
        D = D / D.sum()
        if record_distributions:
            trace.distributions.append(D.copy())
        if eps == 0.0:
            break

    model_out = EnsembleModel(members=members, weights=np.asarray(alphas),
                              aggregation="weighted-vote")
    model_out.trace = trace
    return model_out


def balanced_rf_fit(train, cfg):
    """Forest where every tree trains on an exactly balanced per-tree
    sample: n_minority rows drawn from each class (minority with
    replacement, majority without)."""
    minority = train.minority_label
    idx_min = np.flatnonzero(train.labels == minority)
    idx_maj = np.flatnonzero(train.labels != minority)
    if idx_min.size == 0 or idx_maj.size == 0:
        raise DataError("balanced RF needs both classes")
    rng = np.random.default_rng(cfg.seed)
    bags = []
    for _ in range(cfg.n_trees):
        take_min = rng.choice(idx_min, size=idx_min.size, replace=True)
        replace_maj = idx_maj.size < idx_min.size
        take_maj = rng.choice(idx_maj, size=idx_min.size, replace=replace_maj)
        bags.append(np.concatenate([take_min, take_maj]))
    return rf.fit(train, cfg, bootstrap_indices=bags)


def meta_fit(train, cfg, n_folds=5):
    """Depth-2 tree meta-features: out-of-fold base probabilities are
    appended as a feature column before fitting the main forest."""
    if n_folds < 2:
        raise ConfigError("n_folds must be >= 2")
    if train.n < n_folds:
        raise DataError("fewer rows than folds")
    rng = np.random.default_rng(cfg.seed)
    seeds = rng.integers(0, 2 ** 62, size=n_folds + 2)
    perm = rng.permutation(train.n)
    folds = np.array_split(perm, n_folds)

    d = train.d
    oof = np.empty(train.n, dtype=np.float64)
    for f, fold_idx in enumerate(folds):
        rest = np.setdiff1d(perm, fold_idx)
        rest_labels = train.labels[rest]
        if len(np.unique(rest_labels)) < 2:
            prior = float(rest_labels.mean()) if rest.size else 0.0
            oof[fold_idx] = prior
            continue
        base = rf.fit(train.subset(rest), _base_cfg(d, int(seeds[f])))
        oof[fold_idx] = rf.predict_proba(base, train.rows[fold_idx])

    aug_schema = ColumnSchema(
        names=tuple(train.schema.names) + ("meta_proba",),
        label_name=train.schema.label_name,
        feature_kinds=tuple(train.schema.feature_kinds) + ("continuous",),
    )
    augmented = Dataset(aug_schema, np.column_stack([train.rows, oof]),
                        train.labels)
    main = rf.fit(augmented, replace(cfg, seed=int(seeds[n_folds])))
    base_full = rf.fit(train, _base_cfg(d, int(seeds[n_folds + 1])))
    return MetaModel(base=base_full, main=main, n_folds=n_folds)


def _base_cfg(d, seed):
    return FitConfig(n_trees=1, max_depth=2, min_leaf=1, feature_subsample=d,
                     class_weights=(1.0, 1.0), bootstrap=False, seed=seed)


def model_to_doc(model):
    """Versioned JSON document for any trained model kind."""
    if isinstance(model, rf.ForestModel):
        doc = rf.to_json_doc(model)
    elif isinstance(model, EnsembleModel):
        doc = {
            "kind": "ensemble",
            "aggregation": model.aggregation,
            "weights": model.weights.tolist(),
            "members": [rf.to_json_doc(m) for m in model.members],
        }
    elif isinstance(model, MetaModel):
        doc = {
            "kind": "meta",
            "n_folds": model.n_folds,
            "base": rf.to_json_doc(model.base),
            "main": rf.to_json_doc(model.main),
        }
    else:
        raise ConfigError(f"cannot serialize model type {type(model).__name__}")
    doc["format"] = "imbench-model"
    doc["version"] = 1
    return doc


def model_from_doc(doc):
    if doc.get("format") != "imbench-model" or doc.get("version") != 1:
        raise ConfigError("not a recognized model document")
    kind = doc.get("kind")
    if kind == "forest":
        return rf.from_json_doc(doc)
    if kind == "ensemble":
        return EnsembleModel(
            members=[rf.from_json_doc(m) for m in doc["members"]],
            weights=np.asarray(doc["weights"]),
            aggregation=doc["aggregation"],
        )
    if kind == "meta":
        return MetaModel(base=rf.from_json_doc(doc["base"]),
                         main=rf.from_json_doc(doc["main"]),
                         n_folds=int(doc["n_folds"]))
    raise ConfigError(f"unknown model kind {kind!r}")
