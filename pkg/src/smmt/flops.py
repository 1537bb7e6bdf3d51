"""Analytic FLOP accounting for attention kernels.

Convention: a multiply-accumulate counts 2 FLOPs and a softmax costs 5
FLOPs per score element (exp, max-subtract, sum and divide amortized).
Clustering costs 2*n*k*d per Lloyd iteration. The constants live in
FlopModel so reports can declare the convention they used.
"""

from dataclasses import dataclass

from .errors import InputError


@dataclass(frozen=True)
class FlopModel:
    flops_per_mac: int = 2
    softmax_flops_per_element: int = 5

    def describe(self) -> str:
        return (f"flops_per_mac={self.flops_per_mac},"
                f"softmax_flops_per_element={self.softmax_flops_per_element}")


DEFAULT_FLOP_MODEL = FlopModel()


def flop_grouped(n_q: int, n_kv: int, d_k: int, d_v: int | None = None,
                 model: FlopModel = DEFAULT_FLOP_MODEL) -> int:
    """Score matmul + softmax + value weighting for one attention group."""
    if d_v is None:
        d_v = d_k
    scores = model.flops_per_mac * n_q * n_kv * d_k
    soft = model.softmax_flops_per_element * n_q * n_kv
    values = model.flops_per_mac * n_q * n_kv * d_v
    return scores + soft + values


def flop_clustering(n: int, k: int, d: int, iters: int,
                    model: FlopModel = DEFAULT_FLOP_MODEL) -> int:
    return model.flops_per_mac * n * k * d * iters


def flop_dense(n: int, d_k: int, heads: int,
               model: FlopModel = DEFAULT_FLOP_MODEL) -> int:
    """heads * (2*n^2*d_k + 5*n^2 + 2*n^2*d_k)."""
    if n < 1 or d_k < 1 or heads < 1:
        raise InputError("flop_dense needs positive n, d_k, heads")
    return heads * flop_grouped(n, n, d_k, d_k, model)


def flop_sparse(cluster_sizes, d_k: int, heads: int,
                kmeans: tuple[int, int, int] = (0, 0, 0),
                model: FlopModel = DEFAULT_FLOP_MODEL) -> int:
    """Per-cluster attention cost plus the K-Means overhead 2*n*k*d*i."""
    sizes = [int(s) for s in cluster_sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise InputError("cluster sizes must be positive")
    if d_k < 1 or heads < 1:
        raise InputError("flop_sparse needs positive d_k and heads")
    attn = heads * sum(flop_grouped(s, s, d_k, d_k, model) for s in sizes)
    k, d, iters = kmeans
    return attn + flop_clustering(sum(sizes), k, d, iters, model)


class FlopCounter:
    """Running totals split into attention and clustering work."""

    def __init__(self, model: FlopModel = DEFAULT_FLOP_MODEL):
        self.model = model
        self.attention = 0
        self.clustering = 0

    def add(self, flops: int) -> None:
        self.attention += int(flops)

    def add_clustering(self, n: int, k: int, d: int, iters: int) -> None:
        self.clustering += flop_clustering(n, k, d, iters, self.model)

    @property
    def total(self) -> int:
        return self.attention + self.clustering
