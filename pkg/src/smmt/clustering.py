"""Deterministic Lloyd K-Means over token query vectors.

Seeding is farthest-point style but fully deterministic: the first center
is the point farthest from the data mean, later centers maximize distance
to the chosen set. That keeps runs bitwise reproducible and makes the
final partition equivariant under row permutation (up to label renaming),
which the attention layer relies on. Nearest-centroid ties break toward
the lowest cluster index; empty clusters are repaired by reseeding from
the farthest point of a multi-member cluster.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._base import BaseEstimator
from .errors import InputError
from .validation import as_matrix, check_finite, check_positive_int


def choose_cluster_count(n: int) -> int:
    """ceil(log2 n), clamped to [1, n]."""
    n = check_positive_int(n, "token count")
    return min(n, max(1, math.ceil(math.log2(n))))


@dataclass
class KMeansConfig:
    k: int
    max_iters: int = 10
    seed: int = 0  # reserved; the deterministic seeding below ignores it

    def __post_init__(self):
        check_positive_int(self.k, "k")
        check_positive_int(self.max_iters, "max_iters")


@dataclass
class ClusterAssignment:
    """Per-token cluster ids plus the centroids and sizes behind them."""

    assignment: np.ndarray          # (n,) int64 in [0, k)
    centroids: np.ndarray           # (k, d)
    sizes: np.ndarray               # (k,) int64, all >= 1
    cost_history: list[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def groups(self) -> list[np.ndarray]:
        """Token index set of every cluster, ascending cluster id."""
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.searchsorted(self.assignment[order], np.arange(self.k + 1))
        return [order[bounds[c]:bounds[c + 1]] for c in range(self.k)]


def _farthest_point_init(x: np.ndarray, k: int) -> np.ndarray:
    centers = np.empty((k, x.shape[1]))
    d2 = ((x - x.mean(axis=0)) ** 2).sum(axis=1)
    pick = int(np.argmax(d2))
    centers[0] = x[pick]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        pick = int(np.argmax(d2))
        centers[j] = x[pick]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def kmeans_fit(points, cfg: KMeansConfig) -> ClusterAssignment:
    """Lloyd iterations until the assignment is stable or max_iters."""
    x = check_finite(as_matrix(points, "points"), "points")
    n, k = x.shape[0], cfg.k
    if n < k:
        raise InputError(f"need at least k={k} points, got {n}")

    centroids = _farthest_point_init(x, k)
    assign = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(cfg.max_iters):
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)  # argmin takes the lowest index on ties
        point_cost = d2[np.arange(n), new_assign]
        history.append(float(point_cost.sum()))

        sizes = np.bincount(new_assign, minlength=k)
        stable = bool(np.array_equal(new_assign, assign))
        assign = new_assign

        for c in range(k):
            if sizes[c] > 0:
                centroids[c] = x[assign == c].mean(axis=0)
        repaired = False
        for c in range(k):
            if sizes[c] == 0:
                eligible = np.where(sizes[assign] > 1, point_cost, -1.0)
                far = int(np.argmax(eligible))
                sizes[assign[far]] -= 1
                assign[far] = c
                sizes[c] = 1
                centroids[c] = x[far]
                point_cost[far] = 0.0
                repaired = True
        if stable and not repaired:
            break

    sizes = np.bincount(assign, minlength=k)
    return ClusterAssignment(assignment=assign, centroids=centroids,
                             sizes=sizes, cost_history=history)


class TokenKMeans(BaseEstimator):
    """Estimator facade over kmeans_fit: fit(X) then labels_/cluster_centers_."""

    def __init__(self, n_clusters: int = 2, max_iters: int = 10, seed: int = 0):
        self.n_clusters = n_clusters
        self.max_iters = max_iters
        self.seed = seed

    def fit(self, X, y=None) -> "TokenKMeans":
        cfg = KMeansConfig(k=self.n_clusters, max_iters=self.max_iters, seed=self.seed)
        ca = kmeans_fit(X, cfg)
        self.assignment_ = ca
        self.labels_ = ca.assignment
        self.cluster_centers_ = ca.centroids
        self.sizes_ = ca.sizes
        self.inertia_ = ca.cost_history[-1] if ca.cost_history else 0.0
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "cluster_centers_"):
            raise InputError("TokenKMeans.predict called before fit")
        x = check_finite(as_matrix(X, "X"), "X")
        d2 = ((x[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return d2.argmin(axis=1).astype(np.int64)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_
