"""Kernel-level wall-time and memory benchmarking, plus the CO2 model.

Timings cover the attention kernel alone: for the sparse mode that
includes the K-Means pass on the query matrix, since that overhead is
part of the deal. Memory is a high-water accounting of the transient
attention buffers (scores + probabilities + output, plus the distance
matrix for clustering), not a system measurement.
"""

import time
from dataclasses import dataclass

import numpy as np

from .attention import cluster_sparse_attention, dense_attention
from .clustering import KMeansConfig, choose_cluster_count, kmeans_fit
from .errors import InputError
from .flops import DEFAULT_FLOP_MODEL, flop_dense, flop_sparse
from .tensor import Tensor

BENCH_CSV_HEADER = ("n", "flops", "wall_ns", "peak_bytes")


@dataclass
class BenchRow:
    n: int
    flops: int
    wall_ns: int
    peak_bytes: int

    def as_csv(self) -> list:
        return [self.n, self.flops, self.wall_ns, self.peak_bytes]


def co2_estimate(e_consumed_kwh: float, carbon_intensity: float) -> float:
    """Emissions in kg: energy (kWh) times grid carbon intensity (kg/kWh)."""
    e = float(e_consumed_kwh)
    ci = float(carbon_intensity)
    if e < 0 or ci < 0:
        raise InputError("energy and carbon intensity must be >= 0")
    return e * ci


def energy_proxy_kwh(flops: int, joules_per_flop: float = 1e-9) -> float:
    """Model energy from FLOPs when no measurement exists."""
    if flops < 0 or joules_per_flop < 0:
        raise InputError("flops and joules_per_flop must be >= 0")
    return flops * joules_per_flop / 3.6e6


def _dense_peak_bytes(n: int, d_k: int) -> int:
    return 8 * (2 * n * n + n * d_k)


def _sparse_peak_bytes(sizes: np.ndarray, n: int, d_k: int, k: int) -> int:
    biggest = int(sizes.max())
    return 8 * (2 * biggest * biggest + n * d_k + n * k)


def bench_sweep(n_list, d_k: int = 64, heads: int = 1, mode: str = "dense",
                repeats: int = 5, kmeans_iters: int = 10, seed: int = 0
                ) -> list[BenchRow]:
    """One row per n: median wall time of `repeats` runs after one warmup."""
    ns = [int(n) for n in n_list]
    if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
        raise InputError("n_list must be strictly increasing")
    if mode not in ("dense", "sparse"):
        raise InputError(f"mode must be 'dense' or 'sparse', got {mode!r}")
    if repeats < 1:
        raise InputError("repeats must be >= 1")
    rng = np.random.default_rng(seed)
    rows: list[BenchRow] = []
    for n in ns:
        q = rng.standard_normal((n, d_k))
        k_arr = rng.standard_normal((n, d_k))
        v = rng.standard_normal((n, d_k))
        qt, kt, vt = Tensor(q), Tensor(k_arr), Tensor(v)
        if mode == "dense":
            def kernel():
                for _ in range(heads):
                    dense_attention(qt, kt, vt)
            flops = flop_dense(n, d_k, heads)
            peak = _dense_peak_bytes(n, d_k)
        else:
            k_clusters = choose_cluster_count(n)
            cfg = KMeansConfig(k=k_clusters, max_iters=kmeans_iters)

            def kernel():
                ca = kmeans_fit(q, cfg)
                for _ in range(heads):
                    cluster_sparse_attention(qt, kt, vt, ca)
            # flop/peak accounting uses one representative clustering
            ca0 = kmeans_fit(q, cfg)
            iters = max(1, len(ca0.cost_history))
            flops = flop_sparse(ca0.sizes, d_k, heads,
                                kmeans=(k_clusters, d_k, iters))
            peak = _sparse_peak_bytes(ca0.sizes, n, d_k, k_clusters)

        kernel()  # warmup
        samples = []
        for _ in range(repeats):
            t0 = time.perf_counter_ns()
            kernel()
            samples.append(time.perf_counter_ns() - t0)
        rows.append(BenchRow(n=n, flops=int(flops),
                             wall_ns=int(np.median(samples)), peak_bytes=int(peak)))
    return rows


def loglog_slope(ns, walls) -> float:
    """Least-squares slope of log(wall) against log(n)."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.asarray(walls, dtype=np.float64))
    if x.size < 2:
        raise InputError("need at least two points for a slope")
    return float(np.polyfit(x, y, 1)[0])


def flop_model_metadata() -> str:
    return DEFAULT_FLOP_MODEL.describe()
