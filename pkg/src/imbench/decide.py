"""Post-processing: transforms on predicted probabilities that produce
final labels without retraining. Covers threshold tuning, cost-based
thresholds, prior reweighting, Platt/isotonic calibration, and per-tree
vote weighting.

A DecisionRule composes in a fixed order: per-tree vote weights are
consumed when the model produces probabilities, then calibrator, then
reweighting, then the threshold.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .forest import per_tree_proba
from .metrics import confusion, f1_from_counts

log = logging.getLogger(__name__)

_PROB_CLIP = 1e-6
_VOTE_WEIGHT_FLOOR = 1e-3


@dataclass(frozen=True)
class PlattCalibrator:
    """Sigmoid map sigma(a * logit(p) + b); monotone for a > 0."""

    a: float
    b: float

    def __call__(self, probs):
        p = np.clip(np.asarray(probs, dtype=np.float64),
                    _PROB_CLIP, 1.0 - _PROB_CLIP)
        x = np.log(p / (1.0 - p))
        return 1.0 / (1.0 + np.exp(-(self.a * x + self.b)))


@dataclass(frozen=True)
class IsotonicCalibrator:
    """Left-continuous step map from pool-adjacent-violators blocks.

    ``uppers[i]`` is the largest training prob in block i; inputs in
    (uppers[i-1], uppers[i]] map to values[i], clamped at the ends.
    """

    uppers: tuple
    values: tuple

    def __call__(self, probs):
        p = np.asarray(probs, dtype=np.float64)
        ups = np.asarray(self.uppers)
        vals = np.asarray(self.values)
        idx = np.searchsorted(ups, p, side="left")
        idx = np.minimum(idx, len(vals) - 1)
        return vals[idx]


@dataclass(frozen=True)
class DecisionRule:
    """Probability-to-label transform; composition order is fixed:
    vote_weights (model stage) -> calibrator -> reweight -> threshold."""

    calibrator: object = None
    reweight: tuple | None = None
    threshold: float = 0.5
    vote_weights: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if self.reweight is not None:
            w0, w1 = self.reweight
            if w0 <= 0 or w1 <= 0:
                raise ConfigError("reweight weights must be positive")


@dataclass(frozen=True)
class CostSpec:
    """Misclassification costs: c_fp for false alarms, c_fn for missed
    failures."""

    c_fp: float
    c_fn: float

    def __post_init__(self):
        if self.c_fp <= 0 or self.c_fn <= 0:
            raise ConfigError("costs must be positive")


def _f1_at_candidates(probs, labels, candidates):
    order = np.argsort(probs, kind="stable")
    ps = probs[order]
    ys = labels[order]
    suffix_pos = np.concatenate([np.cumsum(ys[::-1])[::-1], [0]])
    n = ps.size
    total_pos = int(suffix_pos[0])
    idx = np.searchsorted(ps, candidates, side="left")
    tp = suffix_pos[idx].astype(np.float64)
    pred_pos = (n - idx).astype(np.float64)
    fp = pred_pos - tp
    fn = total_pos - tp
    denom = 2.0 * tp + fp + fn
    f1 = np.where(denom > 0, 2.0 * tp / np.where(denom > 0, denom, 1.0), 0.0)
    return f1


def tune_threshold(probs, labels):
    """F1-maximizing threshold over candidates at midpoints between
    consecutive distinct sorted validation probs plus {0, 1}; ties break
    toward 0.5, then toward the smaller candidate."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.shape != labels.shape:
        raise DataError("probs and labels must have equal length")
    if len(np.unique(labels)) < 2:
        raise DataError("validation labels contain a single class")
    uniq = np.unique(probs)
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    candidates = np.concatenate([[0.0], mids, [1.0]])
    f1 = _f1_at_candidates(probs, labels, candidates)
    order = np.lexsort((candidates, np.abs(candidates - 0.5), -f1))
    return float(candidates[order[0]])


def cost_threshold(c):
    """Bayes decision threshold for calibrated probabilities: predict
    failure when P(failure) >= c_fp / (c_fp + c_fn)."""
    return c.c_fp / (c.c_fp + c.c_fn)


def reweight_probs(p, w):
    """Prior-shift adjustment w1*p / (w1*p + w0*(1-p)); identity for equal
    weights, monotone for positive weights."""
    w0, w1 = w
    if w0 <= 0 or w1 <= 0:
        raise ConfigError("reweight weights must be positive")
    p = np.asarray(p, dtype=np.float64)
    num = w1 * p
    den = num + w0 * (1.0 - p)
    out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def equivalent_threshold(t, w):
    """Raw-probability threshold that is label-identical to reweighting by
    w and thresholding at t: t*w0 / (t*w0 + (1-t)*w1)."""
    w0, w1 = w
    return t * w0 / (t * w0 + (1.0 - t) * w1)


def platt_fit(probs, labels, max_iter=100, tol=1e-8):
    """Newton-fit logistic map on validation probs. Returns None (identity)
    with a warning when the fit degenerates or fails to converge."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if len(np.unique(labels)) < 2:
        raise DataError("calibration needs both classes in the validation set")
    p = np.clip(probs, _PROB_CLIP, 1.0 - _PROB_CLIP)
    x = np.log(p / (1.0 - p))
    if np.ptp(x) == 0:
        log.warning("platt_fit: constant probs, returning identity")
        return None
    X = np.column_stack([x, np.ones_like(x)])
    theta = np.array([1.0, 0.0])
    for _ in range(max_iter):
        s = 1.0 / (1.0 + np.exp(-np.clip(X @ theta, -500.0, 500.0)))
        grad = X.T @ (labels - s)
        wdiag = s * (1.0 - s)
        H = (X * wdiag[:, None]).T @ X
        try:
            delta = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            log.warning("platt_fit: singular Hessian, returning identity")
            return None
        theta = theta + delta
        if not np.isfinite(theta).all():
            log.warning("platt_fit: diverged, returning identity")
            return None
        if np.abs(delta).max() < tol:
            cal = PlattCalibrator(a=float(theta[0]), b=float(theta[1]))
            if cal.a <= 0:
                log.warning("platt_fit: non-monotone fit (a=%.3g)", cal.a)
            return cal
    log.warning("platt_fit: no convergence in %d iterations, returning "
                "identity", max_iter)
    return None


def isotonic_fit(probs, labels):
    """Pool-adjacent-violators over (prob, label) pairs sorted by prob,
    ties averaged; returns a monotone step calibrator."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if len(np.unique(labels.astype(np.int64))) < 2:
        raise DataError("calibration needs both classes in the validation set")
    order = np.argsort(probs, kind="stable")
    ps = probs[order]
    ys = labels[order]
    uniq, start = np.unique(ps, return_index=True)
    # one block per distinct prob: (upper prob, mean label, weight)
    uppers = []
    values = []
    weights = []
    bounds = list(start) + [ps.size]
    for i in range(len(uniq)):
        seg = ys[bounds[i]:bounds[i + 1]]
        uppers.append(float(uniq[i]))
        values.append(float(seg.mean()))
        weights.append(float(seg.size))
    # merge adjacent violators
    i = 0
    while i < len(values) - 1:
        if values[i] > values[i + 1]:
            w = weights[i] + weights[i + 1]
            v = (values[i] * weights[i] + values[i + 1] * weights[i + 1]) / w
            values[i] = v
            weights[i] = w
            uppers[i] = uppers[i + 1]
            del values[i + 1], weights[i + 1], uppers[i + 1]
            if i > 0:
                i -= 1
        else:
            i += 1
    return IsotonicCalibrator(uppers=tuple(uppers), values=tuple(values))


def vote_weight_fit(model, val):
    """Per-tree weights proportional to each tree's failure-class F1 on the
    validation fold, floored at 1e-3 and normalized to sum 1."""
    tree_probs = per_tree_proba(model, val.rows)
    scores = np.empty(model.n_trees, dtype=np.float64)
    for t in range(model.n_trees):
        preds = (tree_probs[:, t] >= 0.5).astype(np.int64)
        tp, fp, fn, _ = confusion(val.labels, preds)
        scores[t] = f1_from_counts(tp, fp, fn)
    weights = np.maximum(scores, _VOTE_WEIGHT_FLOOR)
    return weights / weights.sum()


def apply_rule(rule, probs):
    """Labels from probabilities: calibrate, reweight, then threshold
    (label 1 iff the final value >= threshold)."""
    p = np.asarray(probs, dtype=np.float64)
    if rule.calibrator is not None:
        p = rule.calibrator(p)
    if rule.reweight is not None:
        p = reweight_probs(p, rule.reweight)
    return (p >= rule.threshold).astype(np.int64)


def rule_to_doc(rule):
    if rule.calibrator is None:
        cal = None
    elif isinstance(rule.calibrator, PlattCalibrator):
        cal = {"type": "platt", "a": rule.calibrator.a, "b": rule.calibrator.b}
    elif isinstance(rule.calibrator, IsotonicCalibrator):
        cal = {"type": "isotonic",
               "uppers": list(rule.calibrator.uppers),
               "values": list(rule.calibrator.values)}
    else:
        raise ConfigError("unserializable calibrator")
    return {
        "calibrator": cal,
        "reweight": list(rule.reweight) if rule.reweight else None,
        "threshold": rule.threshold,
        "vote_weights": (rule.vote_weights.tolist()
                         if rule.vote_weights is not None else None),
    }


def rule_from_doc(doc):
    cal_doc = doc.get("calibrator")
    if cal_doc is None:
        cal = None
    elif cal_doc["type"] == "platt":
        cal = PlattCalibrator(a=cal_doc["a"], b=cal_doc["b"])
    elif cal_doc["type"] == "isotonic":
        cal = IsotonicCalibrator(uppers=tuple(cal_doc["uppers"]),
                                 values=tuple(cal_doc["values"]))
    else:
        raise ConfigError(f"unknown calibrator type {cal_doc['type']!r}")
    vw = doc.get("vote_weights")
    return DecisionRule(
        calibrator=cal,
        reweight=tuple(doc["reweight"]) if doc.get("reweight") else None,
        threshold=float(doc.get("threshold", 0.5)),
        vote_weights=np.asarray(vw) if vw is not None else None,
    )
