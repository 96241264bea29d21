"""Small deterministic k-means (k-means++ init, Lloyd iterations).

Used by the cluster-centroids under-sampler and cluster-based label
editing. Assignment ties break toward the lower centroid index; an
emptied cluster is re-seeded with the point farthest from its assigned
centroid.
"""

import numpy as np

from .errors import DataError


def _pairwise_sq(A, B):
    d2 = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :]
    d2 -= 2.0 * (A @ B.T)
    np.clip(d2, 0.0, None, out=d2)
    return d2


def kmeans_pp_init(X, k, rng):
    """k-means++ seeding; with all-zero residual distances the remaining
    centers fall back to the lowest unused row indices."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    chosen = np.zeros(n, dtype=bool)
    first = int(rng.integers(n))
    centers[0] = X[first]
    chosen[first] = True
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            pick = int(np.flatnonzero(~chosen)[0])
        else:
            pick = int(rng.choice(n, p=d2 / total))
        centers[j] = X[pick]
        chosen[pick] = True
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans(X, k, seed, max_iter=300, tol=1e-6):
    """Lloyd's algorithm; returns (centroids, assignment).

    Deterministic per seed. Stops when the largest centroid movement is
    at most ``tol`` or after ``max_iter`` iterations.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k < 1 or k > n:
        raise DataError(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    centers = kmeans_pp_init(X, k, rng)
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = _pairwise_sq(X, centers)
        assign = d2.argmin(axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = assign == j
            if members.any():
                new_centers[j] = X[members].mean(axis=0)
            else:
                # farthest point from its current centroid takes over
                far = int(d2[np.arange(n), assign].argmax())
                new_centers[j] = X[far]
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift <= tol:
            break
    assign = _pairwise_sq(X, centers).argmin(axis=1)
    return centers, assign
