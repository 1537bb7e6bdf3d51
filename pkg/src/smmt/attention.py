"""Softmax attention restricted to row groups.

One fused op covers every variant in the model: dense attention is a
single group over all tokens, cluster-sparse attention groups tokens by
K-Means cluster, and the batched layers group rows by sample. Each group
attends only within itself and its softmax normalizes only over the
group, so changing keys or values outside a token's group cannot move
its output.
"""

from dataclasses import dataclass

import numpy as np

from ._init import glorot_uniform
from .clustering import ClusterAssignment
from .errors import DimensionError, InputError
from .flops import flop_grouped
from .tensor import ParameterStore, Tensor, add, apply_op, concat_cols, matmul

Group = tuple[np.ndarray, np.ndarray]


@dataclass
class SparseAttentionFlags:
    """scaled_logits applies the usual 1/sqrt(d_k); literal_eq3 keeps the
    published unscaled form (and therefore forbids scaling)."""

    scaled_logits: bool = True
    literal_eq3: bool = False

    def __post_init__(self):
        if self.literal_eq3 and self.scaled_logits:
            raise InputError("literal_eq3 requires scaled_logits=False")

    @classmethod
    def literal(cls) -> "SparseAttentionFlags":
        return cls(scaled_logits=False, literal_eq3=True)


@dataclass
class AttentionParams:
    """Per-head projections plus the shared output projection."""

    wq: list[Tensor]
    wk: list[Tensor]
    wv: list[Tensor]
    wo: Tensor

    @property
    def heads(self) -> int:
        return len(self.wq)

    @property
    def d_k(self) -> int:
        return self.wq[0].shape[1]

    @property
    def d_model(self) -> int:
        return self.wq[0].shape[0]

    def __post_init__(self):
        if not (len(self.wq) == len(self.wk) == len(self.wv) >= 1):
            raise DimensionError("need one wq/wk/wv per head")
        if self.wo.shape != (self.heads * self.d_k, self.d_model):
            raise DimensionError(
                f"wo shape {self.wo.shape} != ({self.heads * self.d_k}, {self.d_model})"
            )

    @classmethod
    def create(cls, d_model: int, heads: int, rng: np.random.Generator) -> "AttentionParams":
        if d_model % heads != 0:
            raise DimensionError(f"heads={heads} must divide d_model={d_model}")
        d_k = d_model // heads
        mk = lambda shape: Tensor(glorot_uniform(rng, shape), requires_grad=True)
        return cls(
            wq=[mk((d_model, d_k)) for _ in range(heads)],
            wk=[mk((d_model, d_k)) for _ in range(heads)],
            wv=[mk((d_model, d_k)) for _ in range(heads)],
            wo=mk((heads * d_k, d_model)),
        )


def _check_qkv(Q: Tensor, K: Tensor, V: Tensor) -> None:
    if Q.ndim != 2 or K.ndim != 2 or V.ndim != 2:
        raise DimensionError("Q, K, V must be 2-D")
    if Q.shape[1] != K.shape[1]:
        raise DimensionError(f"Q width {Q.shape[1]} != K width {K.shape[1]}")
    if K.shape[0] != V.shape[0]:
        raise DimensionError(f"K rows {K.shape[0]} != V rows {V.shape[0]}")


def grouped_attention(Q, K, V, groups, scale: float, flops=None) -> Tensor:
    """softmax(scale * Q_g K_gᵀ) V_g independently per (q_idx, kv_idx) group.

    Query index sets must partition the query rows and key/value sets must
    be pairwise disjoint (true for every caller here: per-sample batching
    and cluster partitions). Groups sharing a (|q|, |kv|) shape are stacked
    and computed in one einsum batch.
    """
    Qt = Q if isinstance(Q, Tensor) else Tensor(Q)
    Kt = K if isinstance(K, Tensor) else Tensor(K)
    Vt = V if isinstance(V, Tensor) else Tensor(V)
    _check_qkv(Qt, Kt, Vt)

    buckets: dict[tuple[int, int], list[Group]] = {}
    for qi, ki in groups:
        qi = np.asarray(qi, dtype=np.int64)
        ki = np.asarray(ki, dtype=np.int64)
        if ki.size == 0:
            raise InputError("attention group has an empty key/value set")
        if qi.size == 0:
            raise InputError("attention group has an empty query set")
        buckets.setdefault((qi.size, ki.size), []).append((qi, ki))

    q, k, v = Qt.data, Kt.data, Vt.data
    out = np.zeros((q.shape[0], v.shape[1]))
    saved: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    for (m, s), pairs in buckets.items():
        qidx = np.stack([p[0] for p in pairs])  # (G, m)
        kidx = np.stack([p[1] for p in pairs])  # (G, s)
        sc = np.einsum("gmd,gsd->gms", q[qidx], k[kidx]) * scale
        sc -= sc.max(axis=2, keepdims=True)
        p = np.exp(sc)
        p /= p.sum(axis=2, keepdims=True)
        out[qidx] = np.einsum("gms,gse->gme", p, v[kidx])
        saved.append((qidx, kidx, p))
        if flops is not None:
            flops.add(len(pairs) * flop_grouped(m, s, q.shape[1], v.shape[1]))

    def bwd(g):
        dq = np.zeros(q.shape)
        dk = np.zeros(k.shape)
        dv = np.zeros(v.shape)
        for qidx, kidx, p in saved:
            go = g[qidx]                                    # (G, m, e)
            dp = np.einsum("gme,gse->gms", go, v[kidx])
            dv[kidx] += np.einsum("gms,gme->gse", p, go)
            ds = p * (dp - (dp * p).sum(axis=2, keepdims=True))
            dq[qidx] += scale * np.einsum("gms,gsd->gmd", ds, k[kidx])
            dk[kidx] += scale * np.einsum("gms,gmd->gsd", ds, q[qidx])
        return dq, dk, dv

    return apply_op((Qt, Kt, Vt), out, bwd)


def _scale_for(d_k: int, flags: SparseAttentionFlags | None) -> float:
    if flags is None or flags.scaled_logits:
        return 1.0 / np.sqrt(d_k)
    return 1.0


def dense_attention(Q, K, V, flops=None) -> Tensor:
    """softmax(QKᵀ/√d_k)V over the full token set."""
    Qt = Q if isinstance(Q, Tensor) else Tensor(Q)
    Kt = K if isinstance(K, Tensor) else Tensor(K)
    Vt = V if isinstance(V, Tensor) else Tensor(V)
    _check_qkv(Qt, Kt, Vt)
    groups = [(np.arange(Qt.shape[0]), np.arange(Kt.shape[0]))]
    return grouped_attention(Qt, Kt, Vt, groups,
                             scale=_scale_for(Qt.shape[1], None), flops=flops)


def cluster_sparse_attention(Q, K, V, ca: ClusterAssignment,
                             flags: SparseAttentionFlags | None = None,
                             flops=None) -> Tensor:
    """Attention restricted to tokens sharing a cluster; softmax per cluster."""
    Qt = Q if isinstance(Q, Tensor) else Tensor(Q)
    if Qt.ndim != 2 or ca.n != Qt.shape[0]:
        raise DimensionError(
            f"cluster assignment covers {ca.n} tokens, Q has {Qt.shape[0]} rows"
        )
    groups = [(g, g) for g in ca.groups()]
    return grouped_attention(Qt, K, V, groups,
                             scale=_scale_for(Qt.shape[1], flags), flops=flops)


def dense_attention_weights(Q, K, scaled: bool = True) -> np.ndarray:
    """Row-stochastic (n_q, n_kv) weight matrix, for inspection only."""
    q = np.asarray(getattr(Q, "data", Q), dtype=np.float64)
    k = np.asarray(getattr(K, "data", K), dtype=np.float64)
    s = (q @ k.T) * (1.0 / np.sqrt(q.shape[1]) if scaled else 1.0)
    s -= s.max(axis=1, keepdims=True)
    p = np.exp(s)
    return p / p.sum(axis=1, keepdims=True)


def sparse_attention_weights(Q, K, ca: ClusterAssignment,
                             flags: SparseAttentionFlags | None = None) -> np.ndarray:
    """(n, n) weight matrix with exact zeros outside each token's cluster."""
    q = np.asarray(getattr(Q, "data", Q), dtype=np.float64)
    k = np.asarray(getattr(K, "data", K), dtype=np.float64)
    w = np.zeros((q.shape[0], k.shape[0]))
    scaled = flags is None or flags.scaled_logits
    for g in ca.groups():
        w[np.ix_(g, g)] = dense_attention_weights(q[g], k[g], scaled=scaled)
    return w


def _split_heads(x: Tensor, heads: int) -> Tensor:
    """(n, H*dk) -> (H*n, dk), head-major row blocks."""
    n, width = x.shape
    dk = width // heads
    y = x.data.reshape(n, heads, dk).transpose(1, 0, 2).reshape(heads * n, dk)

    def bwd(g):
        return (g.reshape(heads, n, dk).transpose(1, 0, 2).reshape(n, width),)

    return apply_op((x,), np.ascontiguousarray(y), bwd)


def _merge_heads(x: Tensor, heads: int) -> Tensor:
    """(H*n, dk) -> (n, H*dk), inverse of _split_heads."""
    rows, dk = x.shape
    n = rows // heads
    y = x.data.reshape(heads, n, dk).transpose(1, 0, 2).reshape(n, heads * dk)

    def bwd(g):
        return (g.reshape(n, heads, dk).transpose(1, 0, 2).reshape(rows, dk),)

    return apply_op((x,), np.ascontiguousarray(y), bwd)


def _multihead(q_tokens: Tensor, kv_tokens: Tensor, p: AttentionParams,
               groups, scale: float, flops=None,
               residual_base: Tensor | None = None) -> Tensor:
    """All heads in one grouped call: project once against the column-
    concatenated per-head weights, stack heads as extra row groups."""
    heads, n_q, n_kv = p.heads, q_tokens.shape[0], kv_tokens.shape[0]
    qall = _split_heads(matmul(q_tokens, concat_cols(p.wq)), heads)
    kall = _split_heads(matmul(kv_tokens, concat_cols(p.wk)), heads)
    vall = _split_heads(matmul(kv_tokens, concat_cols(p.wv)), heads)
    hgroups = [(qi + h * n_q, ki + h * n_kv)
               for h in range(heads)
               for qi, ki in ((np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
                              for a, b in groups)]
    att = grouped_attention(qall, kall, vall, hgroups, scale, flops=flops)
    out = matmul(_merge_heads(att, heads), p.wo)
    if residual_base is not None:
        out = add(out, residual_base)
    return out


def cross_attention(x_query_tokens, x_kv_tokens, p: AttentionParams,
                    flops=None) -> Tensor:
    """Multi-head attention with queries from one token set, keys/values
    from another; no residual."""
    xq = x_query_tokens if isinstance(x_query_tokens, Tensor) else Tensor(x_query_tokens)
    xkv = x_kv_tokens if isinstance(x_kv_tokens, Tensor) else Tensor(x_kv_tokens)
    if xkv.ndim != 2 or xkv.shape[0] == 0:
        raise InputError("cross_attention needs a non-empty key/value token set")
    if xq.shape[1] != p.d_model or xkv.shape[1] != p.d_model:
        raise DimensionError(
            f"token width must equal d_model={p.d_model}, "
            f"got {xq.shape[1]} and {xkv.shape[1]}"
        )
    groups = [(np.arange(xq.shape[0]), np.arange(xkv.shape[0]))]
    return _multihead(xq, xkv, p, groups, 1.0 / np.sqrt(p.d_k), flops=flops)


def attention_layer_forward(tokens, p: AttentionParams,
                            ca: ClusterAssignment | None = None,
                            flags: SparseAttentionFlags | None = None,
                            flops=None, residual: bool = True) -> Tensor:
    """Multi-head self-attention over one token sequence, plus residual.

    With a cluster assignment the per-head attention runs on the sparse
    path; clustering itself is the caller's job so assignments stay
    constant with respect to the tape.
    """
    x = tokens if isinstance(tokens, Tensor) else Tensor(tokens)
    if x.ndim != 2 or x.shape[1] != p.d_model:
        raise DimensionError(f"tokens must be (n, {p.d_model}), got {x.shape}")
    n = x.shape[0]
    if ca is None:
        groups = [(np.arange(n), np.arange(n))]
        scale = 1.0 / np.sqrt(p.d_k)
    else:
        if ca.n != n:
            raise DimensionError(f"assignment length {ca.n} != token count {n}")
        groups = [(g, g) for g in ca.groups()]
        scale = _scale_for(p.d_k, flags)
    return _multihead(x, x, p, groups, scale, flops=flops,
                      residual_base=x if residual else None)


# ---------------------------------------------------------------------------
# store-backed layers used by the cascade model
# ---------------------------------------------------------------------------


def register_attention_params(store: ParameterStore, prefix: str, d_model: int,
                              heads: int, rng: np.random.Generator) -> None:
    if d_model % heads != 0:
        raise DimensionError(f"heads={heads} must divide d_model={d_model}")
    d_k = d_model // heads
    for h in range(heads):
        store.add(f"{prefix}.wq{h}", glorot_uniform(rng, (d_model, d_k)))
        store.add(f"{prefix}.wk{h}", glorot_uniform(rng, (d_model, d_k)))
        store.add(f"{prefix}.wv{h}", glorot_uniform(rng, (d_model, d_k)))
    store.add(f"{prefix}.wo", glorot_uniform(rng, (heads * d_k, d_model)))


def attention_params_view(store: ParameterStore, prefix: str, heads: int) -> AttentionParams:
    return AttentionParams(
        wq=[store[f"{prefix}.wq{h}"] for h in range(heads)],
        wk=[store[f"{prefix}.wk{h}"] for h in range(heads)],
        wv=[store[f"{prefix}.wv{h}"] for h in range(heads)],
        wo=store[f"{prefix}.wo"],
    )


class BatchedSelfAttention:
    """Self-attention over a row-stacked batch of equal-length sequences.

    `sample_groups` lists each sample's rows inside the stacked matrix.
    When `cluster_fn` is given, it maps a sample's head-0 query block to a
    ClusterAssignment and attention runs within clusters; the resulting
    groups are returned so callers can freeze and replay them.
    """

    def __init__(self, store: ParameterStore, prefix: str, d_model: int,
                 heads: int, rng: np.random.Generator, residual: bool = True):
        register_attention_params(store, prefix, d_model, heads, rng)
        self.store = store
        self.prefix = prefix
        self.heads = heads
        self.d_model = d_model
        self.residual = residual

    def params(self) -> AttentionParams:
        return attention_params_view(self.store, self.prefix, self.heads)

    def compute_groups(self, tokens: Tensor, sample_groups: list[np.ndarray],
                       cluster_fn=None, flops=None) -> list[Group]:
        """Dense: one group per sample. Sparse: K-Means over each sample's
        head-0 queries; assignments are plain data, nothing lands on the tape."""
        if cluster_fn is None:
            return [(g, g) for g in sample_groups]
        q0 = tokens.data @ self.store[f"{self.prefix}.wq0"].data
        groups: list[Group] = []
        for g in sample_groups:
            ca = cluster_fn(q0[g])
            groups.extend((g[m], g[m]) for m in ca.groups())
            if flops is not None:
                iters = max(1, len(ca.cost_history))
                flops.add_clustering(g.size, ca.k, q0.shape[1], iters)
        return groups

    def forward(self, tokens: Tensor, groups: list[Group], *, sparse: bool = False,
                flags: SparseAttentionFlags | None = None, flops=None) -> Tensor:
        p = self.params()
        scale = _scale_for(p.d_k, flags if sparse else None)
        return _multihead(tokens, tokens, p, groups, scale, flops=flops,
                          residual_base=tokens if self.residual else None)


class BatchedCrossAttention:
    """Cross-attention between stacked query and key/value batches,
    paired sample by sample."""

    def __init__(self, store: ParameterStore, prefix: str, d_model: int,
                 heads: int, rng: np.random.Generator, residual: bool = True):
        register_attention_params(store, prefix, d_model, heads, rng)
        self.store = store
        self.prefix = prefix
        self.heads = heads
        self.d_model = d_model
        self.residual = residual

    def params(self) -> AttentionParams:
        return attention_params_view(self.store, self.prefix, self.heads)

    def forward(self, q_tokens: Tensor, kv_tokens: Tensor,
                q_groups: list[np.ndarray], kv_groups: list[np.ndarray],
                flops=None) -> Tensor:
        if len(q_groups) != len(kv_groups):
            raise DimensionError("query and key/value batches differ in sample count")
        p = self.params()
        groups = list(zip(q_groups, kv_groups))
        return _multihead(q_tokens, kv_tokens, p, groups, 1.0 / np.sqrt(p.d_k),
                          flops=flops,
                          residual_base=q_tokens if self.residual else None)
