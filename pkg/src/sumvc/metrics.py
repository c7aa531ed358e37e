"""Clustering quality metrics and a deterministic k-means.

Accuracy uses the optimal one-to-one cluster-to-class matching via the
Hungarian algorithm. NMI normalizes mutual information by the mean of
the two label entropies (natural logs). ARI is the pair-counting
adjusted Rand index. All three are invariant to label permutations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, ContractError, NumericError


@dataclass(frozen=True)
class Partition:
    """Integer labels in [0, n_clusters) over a fixed sample set."""

    labels: np.ndarray
    n_clusters: int

    @classmethod
    def from_labels(cls, labels, n_clusters=None):
        arr = np.asarray(labels)
        if arr.ndim != 1 or arr.size == 0:
            raise ContractError("labels must be a non-empty 1-d sequence")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ContractError("labels must be integers")
        arr = arr.astype(np.int64)
        if arr.min() < 0:
            raise ContractError("labels must be non-negative")
        k = int(arr.max()) + 1 if n_clusters is None else int(n_clusters)
        if arr.max() >= k:
            raise ContractError("label value exceeds n_clusters")
        return cls(labels=arr, n_clusters=k)

    @property
    def n(self):
        return int(self.labels.size)


def _as_labels(x):
    if isinstance(x, Partition):
        return x.labels
    return Partition.from_labels(x).labels


def _contingency(pred, truth):
    kp = int(pred.max()) + 1
    kt = int(truth.max()) + 1
    table = np.zeros((kp, kt), dtype=np.int64)
    np.add.at(table, (pred, truth), 1)
    return table


def _canonical(labels):
    """Relabel by first occurrence so identical partitions compare equal."""
    out = np.empty_like(labels)
    mapping = {}
    for i, v in enumerate(labels):
        out[i] = mapping.setdefault(int(v), len(mapping))
    return out


def clustering_accuracy(pred, truth):
    """Fraction correct under the best one-to-one label matching."""
    pred, truth = _as_labels(pred), _as_labels(truth)
    if pred.shape != truth.shape:
        raise ContractError("pred and truth must have equal length")
    w = _contingency(pred, truth)
    rows, cols = linear_sum_assignment(-w)
    return float(w[rows, cols].sum()) / pred.size


def nmi(pred, truth):
    """Mutual information over the mean of the two entropies, natural logs."""
    pred, truth = _as_labels(pred), _as_labels(truth)
    if pred.shape != truth.shape:
        raise ContractError("pred and truth must have equal length")
    n = pred.size
    pxy = _contingency(pred, truth) / n
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)
    nz = pxy > 0
    mi = float((pxy[nz] * np.log(pxy[nz] / np.outer(px, py)[nz])).sum())
    hx = float(-(px[px > 0] * np.log(px[px > 0])).sum())
    hy = float(-(py[py > 0] * np.log(py[py > 0])).sum())
    denom = 0.5 * (hx + hy)
    if denom == 0.0:
        # both sides are a single cluster, hence identical partitions
        return 1.0
    return mi / denom


def ari(pred, truth):
    """Adjusted Rand index by pair counting.

    Computed in exact integer arithmetic (Python ints) so rational
    results like -1/2 come out bit-exact.
    """
    pred, truth = _as_labels(pred), _as_labels(truth)
    if pred.shape != truth.shape:
        raise ContractError("pred and truth must have equal length")
    n = pred.size
    if n < 2:
        raise ContractError("ari needs at least 2 samples")
    w = _contingency(pred, truth)

    def comb2x2(x):  # 2 * C(x, 2), stays integral
        return int((x * (x - 1)).sum())

    index2 = comb2x2(w)
    a2 = comb2x2(w.sum(axis=1))
    b2 = comb2x2(w.sum(axis=0))
    n2 = n * (n - 1)
    numer = 2 * index2 * n2 - 2 * a2 * b2
    denom = (a2 + b2) * n2 - 2 * a2 * b2
    if denom == 0:
        return 1.0 if np.array_equal(_canonical(pred), _canonical(truth)) else 0.0
    return numer / denom


# ---------------------------------------------------------------------------
# k-means


@dataclass
class KMeansResult:
    partition: Partition
    centroids: np.ndarray
    inertia: float
    history: list


def _plusplus_init(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))  # everything coincides; any point works
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def _assign(points, centers):
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(points.shape[0]), labels].sum())
    return labels, inertia, d2


def _lloyd(points, centers, max_iter, tol):
    history = []
    labels, inertia, d2 = _assign(points, centers)
    history.append(inertia)
    for _ in range(max_iter):
        new_centers = centers.copy()
        assigned = d2[np.arange(points.shape[0]), labels].copy()
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                new_centers[j] = points[members].mean(axis=0)
            else:
                far = int(assigned.argmax())  # reseed on the loneliest point
                new_centers[j] = points[far]
                assigned[far] = -np.inf
        shift = float(np.abs(new_centers - centers).max())
        centers = new_centers
        labels, inertia, d2 = _assign(points, centers)
        history.append(inertia)
        if shift <= tol:
            break
    return labels, centers, inertia, history


def kmeans(points, n_clusters, restarts=10, max_iter=300, tol=1e-9, seed=0):
    """Lloyd's algorithm with k-means++ seeding, best of ``restarts``.

    Restart r draws from an independent stream spawned off ``seed``, so
    results do not depend on how many restarts ran before. Ties on the
    final inertia keep the lowest restart index.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ConfigError("points must be a non-empty (n, d) array")
    if not np.all(np.isfinite(points)):
        raise NumericError("points must be finite")
    if not 1 <= n_clusters <= points.shape[0]:
        raise ConfigError("need 1 <= n_clusters <= n_points")
    if restarts < 1 or max_iter < 1 or tol <= 0.0:
        raise ConfigError("restarts, max_iter must be >= 1 and tol > 0")

    best = None
    for r in range(restarts):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(r,))
        )
        init = _plusplus_init(points, n_clusters, rng)
        labels, centers, inertia, history = _lloyd(points, init, max_iter, tol)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, history)
    labels, centers, inertia, history = best
    part = Partition.from_labels(labels.astype(np.int64), n_clusters)
    return KMeansResult(part, centers, inertia, history)
