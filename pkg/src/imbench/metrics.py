"""Binary classification metrics with failure (label 1) as the positive
class. F1 is defined as 0 when its denominator vanishes."""

import numpy as np

from .errors import DataError


def confusion(labels_true, labels_pred):
    """Counts (tp, fp, fn, tn)."""
    yt = np.asarray(labels_true, dtype=np.int64)
    yp = np.asarray(labels_pred, dtype=np.int64)
    if yt.shape != yp.shape:
        raise DataError("label vectors must have equal length")
    tp = int(((yt == 1) & (yp == 1)).sum())
    fp = int(((yt == 0) & (yp == 1)).sum())
    fn = int(((yt == 1) & (yp == 0)).sum())
    tn = int(((yt == 0) & (yp == 0)).sum())
    return tp, fp, fn, tn


def f1_from_counts(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom > 0 else 0.0


def precision_from_counts(tp, fp):
    return tp / (tp + fp) if tp + fp > 0 else 0.0


def recall_from_counts(tp, fn):
    return tp / (tp + fn) if tp + fn > 0 else 0.0


def accuracy_from_counts(tp, fp, fn, tn):
    total = tp + fp + fn + tn
    return (tp + tn) / total if total > 0 else 0.0
