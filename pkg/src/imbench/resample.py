"""Non-generative pre-processing samplers: over-sampling, under-sampling,
hybrid cleaning, and label-editing transforms over a training fold.

All neighbor and cluster geometry runs on z-scored features (scaler fit on
the sampler's input fold) so BER-scale features do not vanish next to
dB-scale ones. Synthetic rows are generated in original feature units.
Every sampler is a pure function of (dataset, spec[, ranker]).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .cluster import kmeans
from .dataset import Dataset
from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

SAMPLER_KINDS = (
    "ros", "rus", "smote", "adasyn", "cluster_centroids", "smote_tomek",
    "massaging", "perturbation", "cluster_massaging",
)


@dataclass(frozen=True)
class SamplerSpec:
    """One sampling technique plus its hyperparameters.

    ``target_ratio`` is the desired minority/majority count ratio after
    sampling. ``n_clusters`` defaults to the post-sampling majority count
    for cluster_centroids and to 10 for cluster_massaging.
    """

    kind: str
    target_ratio: float = 1.0
    k_neighbors: int = 5
    n_clusters: int | None = None
    noise_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler kind {self.kind!r}")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ConfigError("target_ratio must lie in (0, 1]")
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")


def _split_classes(d):
    minority = d.minority_label
    idx_min = np.flatnonzero(d.labels == minority)
    idx_maj = np.flatnonzero(d.labels != minority)
    if idx_min.size == 0 or idx_maj.size == 0:
        raise DataError("sampler needs both classes present")
    return minority, idx_min, idx_maj


def _zscore_params(rows):
    mu = rows.mean(axis=0)
    sd = rows.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return mu, sd


def _knn_among(queries_z, pool_z, k, exclude_self=False):
    """Indices (into pool) of the k nearest pool points per query row,
    Euclidean in z-space, ties broken by lower pool index."""
    d2 = ((queries_z[:, None, :] - pool_z[None, :, :]) ** 2).sum(axis=2)
    if exclude_self:
        np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def _n_synthetic(n_min, n_maj, ratio):
    return max(0, int(round(ratio * n_maj)) - n_min)


def _append(d, new_rows, new_labels):
    rows = np.vstack([d.rows, new_rows]) if len(new_rows) else d.rows.copy()
    labels = np.concatenate([d.labels, new_labels]) if len(new_labels) else d.labels.copy()
    return d.with_rows(rows, labels)


def ros(d, spec):
    """Random over-sampling: duplicate minority rows with replacement until
    the minority/majority ratio reaches the target."""
    minority, idx_min, idx_maj = _split_classes(d)
    n_new = _n_synthetic(idx_min.size, idx_maj.size, spec.target_ratio)
    if n_new == 0:
        return d.with_rows(d.rows, d.labels)
    rng = np.random.default_rng(spec.seed)
    parents = rng.integers(0, idx_min.size, size=n_new)
    new_rows = d.rows[idx_min[parents]]
    return _append(d, new_rows, np.full(n_new, minority, dtype=np.int64))


def rus(d, spec):
    """Random under-sampling: subsample the majority class without
    replacement down to minority/target_ratio rows."""
    minority, idx_min, idx_maj = _split_classes(d)
    n_keep = int(round(idx_min.size / spec.target_ratio))
    if n_keep >= idx_maj.size:
        return d.with_rows(d.rows, d.labels)
    rng = np.random.default_rng(spec.seed)
    kept = rng.choice(idx_maj, size=n_keep, replace=False)
    keep_mask = np.zeros(d.n, dtype=bool)
    keep_mask[idx_min] = True
    keep_mask[kept] = True
    return d.subset(np.flatnonzero(keep_mask))


def _smote_synthetics(rows_min, z_min, quotas, k, rng):
    """Interpolate along segments toward minority nearest neighbors.

    Returns (rows, parent_a, parent_b, lambdas); each synthetic is
    rows_min[a] + lam * (rows_min[b] - rows_min[a]).
    """
    n_min = rows_min.shape[0]
    if n_min < 2:
        raise DataError("SMOTE-style sampling needs >= 2 minority rows")
    k_eff = min(k, n_min - 1)
    nn = _knn_among(z_min, z_min, k_eff, exclude_self=True)
    parent_a = np.repeat(np.arange(n_min), quotas)
    total = parent_a.size
    pick = rng.integers(0, k_eff, size=total)
    lam = rng.random(total)
    parent_b = nn[parent_a, pick]
    base = rows_min[parent_a]
    new_rows = base + lam[:, None] * (rows_min[parent_b] - base)
    return new_rows, parent_a, parent_b, lam


def _even_quotas(n_points, total):
    quotas = np.full(n_points, total // n_points, dtype=np.int64)
    quotas[: total % n_points] += 1
    return quotas


def smote(d, spec):
    """SMOTE: synthetics are convex combinations of a minority row and one
    of its k nearest minority neighbors."""
    minority, idx_min, idx_maj = _split_classes(d)
    n_new = _n_synthetic(idx_min.size, idx_maj.size, spec.target_ratio)
    if n_new == 0:
        return d.with_rows(d.rows, d.labels)
    if idx_min.size < 2:
        raise DataError("SMOTE needs at least 2 minority rows")
    mu, sd = _zscore_params(d.rows)
    rows_min = d.rows[idx_min]
    z_min = (rows_min - mu) / sd
    rng = np.random.default_rng(spec.seed)
    quotas = _even_quotas(idx_min.size, n_new)
    new_rows, _, _, _ = _smote_synthetics(rows_min, z_min, quotas,
                                          spec.k_neighbors, rng)
    return _append(d, new_rows, np.full(n_new, minority, dtype=np.int64))


def largest_remainder_quotas(weights, total):
    """Integer quotas proportional to weights summing exactly to total;
    remainders assigned largest-first, ties toward the lower index."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.sum() <= 0:
        raise ConfigError("weights must have positive sum")
    exact = total * weights / weights.sum()
    base = np.floor(exact).astype(np.int64)
    rem = int(total - base.sum())
    if rem > 0:
        frac = exact - base
        order = np.lexsort((np.arange(weights.size), -frac))
        base[order[:rem]] += 1
    return base


def adasyn(d, spec):
    """ADASYN: per-point synthetic quotas proportional to the fraction of
    majority rows among each minority point's k nearest neighbors (over the
    whole fold); uniform fallback when every difficulty weight is zero."""
    minority, idx_min, idx_maj = _split_classes(d)
    n_new = _n_synthetic(idx_min.size, idx_maj.size, spec.target_ratio)
    if n_new == 0:
        return d.with_rows(d.rows, d.labels)
    if idx_min.size < 2:
        raise DataError("ADASYN needs at least 2 minority rows")
    mu, sd = _zscore_params(d.rows)
    z = (d.rows - mu) / sd
    rows_min = d.rows[idx_min]
    z_min = z[idx_min]

    k_eff = min(spec.k_neighbors, d.n - 1)
    nn_all = _knn_among(z_min, z, k_eff + 1, exclude_self=False)
    # the query point itself shows up at distance zero; drop it
    difficulty = np.empty(idx_min.size, dtype=np.float64)
    is_maj = d.labels != minority
    for i in range(idx_min.size):
        neigh = [j for j in nn_all[i] if j != idx_min[i]][:k_eff]
        difficulty[i] = is_maj[neigh].mean() if neigh else 0.0
    if difficulty.sum() <= 0:
        log.warning("adasyn: all difficulty weights zero, falling back to "
                    "uniform allocation")
        quotas = _even_quotas(idx_min.size, n_new)
    else:
        quotas = largest_remainder_quotas(difficulty, n_new)
    rng = np.random.default_rng(spec.seed)
    new_rows, _, _, _ = _smote_synthetics(rows_min, z_min, quotas,
                                          spec.k_neighbors, rng)
    return _append(d, new_rows, np.full(n_new, minority, dtype=np.int64))


def cluster_centroids(d, spec):
    """Replace the majority class by k-means centroids (k = post-sampling
    majority count)."""
    minority, idx_min, idx_maj = _split_classes(d)
    k = spec.n_clusters
    if k is None:
        k = int(round(idx_min.size / spec.target_ratio))
    if k > idx_maj.size:
        raise DataError(f"cluster count {k} exceeds majority count {idx_maj.size}")
    mu, sd = _zscore_params(d.rows)
    z_maj = (d.rows[idx_maj] - mu) / sd
    centers_z, _ = kmeans(z_maj, k, seed=spec.seed)
    centers = centers_z * sd + mu
    rows = np.vstack([d.rows[idx_min], centers])
    labels = np.concatenate([
        np.full(idx_min.size, minority, dtype=np.int64),
        np.full(k, 1 - minority, dtype=np.int64),
    ])
    return d.with_rows(rows, labels)


def tomek_links(rows, labels, mu, sd):
    """Mutual-1-NN opposite-class pairs (i, j), Euclidean in z-space, ties
    broken by lower row index."""
    z = (rows - mu) / sd
    n = z.shape[0]
    nn = np.empty(n, dtype=np.int64)
    chunk = max(1, int(2e6 // max(n, 1)))
    sq = (z * z).sum(axis=1)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (z[start:stop] @ z.T)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        nn[start:stop] = d2.argmin(axis=1)
    links = []
    for i in range(n):
        j = nn[i]
        if j > i and nn[j] == i and labels[i] != labels[j]:
            links.append((i, int(j)))
    return links


def smote_tomek(d, spec):
    """SMOTE followed by removal of the majority member of every Tomek
    link in the over-sampled fold."""
    minority, _, _ = _split_classes(d)
    majority = 1 - minority
    mu, sd = _zscore_params(d.rows)
    oversampled = smote(d, spec)
    links = tomek_links(oversampled.rows, oversampled.labels, mu, sd)
    drop = {i if oversampled.labels[i] == majority else j for i, j in links}
    if not drop:
        return oversampled
    keep = np.setdiff1d(np.arange(oversampled.n), np.fromiter(drop, dtype=np.int64))
    return oversampled.subset(keep)


def flip_budget(n_min, n_maj, ratio):
    """Number of majority labels to flip: enough to reach the target ratio,
    capped at 10% of the majority class."""
    requested = math.ceil((ratio * n_maj - n_min) / (1.0 + ratio))
    return max(0, min(requested, int(0.1 * n_maj)))


def massaging(d, spec, ranker):
    """Flip to minority the labels of the majority rows the ranker scores
    most failure-like; features are untouched."""
    minority, idx_min, idx_maj = _split_classes(d)
    m = flip_budget(idx_min.size, idx_maj.size, spec.target_ratio)
    if m == 0:
        return d.with_rows(d.rows, d.labels)
    scores = ranker.predict_proba(d.rows[idx_maj])
    order = np.lexsort((idx_maj, -scores))
    to_flip = idx_maj[order[:m]]
    labels = d.labels.copy()
    labels[to_flip] = minority
    return d.with_rows(d.rows.copy(), labels)


def perturbation(d, spec):
    """Like ros, but each duplicate receives additive Gaussian noise with
    per-feature std = noise_scale * feature std of the input fold."""
    minority, idx_min, idx_maj = _split_classes(d)
    n_new = _n_synthetic(idx_min.size, idx_maj.size, spec.target_ratio)
    if n_new == 0:
        return d.with_rows(d.rows, d.labels)
    rng = np.random.default_rng(spec.seed)
    parents = rng.integers(0, idx_min.size, size=n_new)
    stds = d.rows.std(axis=0)
    noise = rng.standard_normal((n_new, d.d)) * (spec.noise_scale * stds)
    new_rows = d.rows[idx_min[parents]] + noise
    return _append(d, new_rows, np.full(n_new, minority, dtype=np.int64))


def cluster_massaging(d, spec):
    """k-means over the whole fold; inside every cluster whose minority
    fraction exceeds the global one, flip majority labels to minority,
    nearest-to-centroid first. Flipping in a cluster stops at exact class
    balance, when no majority members remain, or when the global flip
    budget runs out (same budget formula as massaging)."""
    minority, idx_min, idx_maj = _split_classes(d)
    k = spec.n_clusters if spec.n_clusters is not None else 10
    k = min(k, d.n)
    budget = flip_budget(idx_min.size, idx_maj.size, spec.target_ratio)
    if budget == 0:
        return d.with_rows(d.rows, d.labels)
    mu, sd = _zscore_params(d.rows)
    z = (d.rows - mu) / sd
    centers, assign = kmeans(z, k, seed=spec.seed)
    global_frac = idx_min.size / d.n
    labels = d.labels.copy()
    for c in range(k):
        if budget == 0:
            break
        members = np.flatnonzero(assign == c)
        if members.size == 0:
            continue
        n_min_c = int((labels[members] == minority).sum())
        frac = n_min_c / members.size
        if frac <= global_frac:
            continue
        maj_members = members[labels[members] != minority]
        dist = ((z[maj_members] - centers[c]) ** 2).sum(axis=1)
        order = np.lexsort((maj_members, dist))
        n_maj_c = maj_members.size
        for i in order:
            if budget == 0 or n_maj_c == 0 or n_maj_c == n_min_c:
                break
            labels[maj_members[i]] = minority
            n_maj_c -= 1
            n_min_c += 1
            budget -= 1
    return d.with_rows(d.rows.copy(), labels)


_DISPATCH = {
    "ros": ros,
    "rus": rus,
    "smote": smote,
    "adasyn": adasyn,
    "cluster_centroids": cluster_centroids,
    "smote_tomek": smote_tomek,
    "perturbation": perturbation,
    "cluster_massaging": cluster_massaging,
}


def apply_sampler(d, spec, ranker=None):
    """Dispatch a sampler spec; massaging requires a fitted ranker."""
    if spec.kind == "massaging":
        if ranker is None:
            raise ConfigError("massaging requires a ranker model")
        return massaging(d, spec, ranker)
    return _DISPATCH[spec.kind](d, spec)
