import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smmt.attention import (AttentionParams, SparseAttentionFlags,
                            attention_layer_forward, cluster_sparse_attention,
                            cross_attention, dense_attention,
                            dense_attention_weights, sparse_attention_weights)
from smmt.clustering import ClusterAssignment, KMeansConfig, kmeans_fit
from smmt.errors import DimensionError, InputError
from smmt.tensor import Tensor


def dense_oracle(q, k, v, scale=None):
    """Direct-formula attention."""
    scale = 1.0 / math.sqrt(q.shape[1]) if scale is None else scale
    s = (q @ k.T) * scale
    s = s - s.max(axis=1, keepdims=True)
    p = np.exp(s)
    p = p / p.sum(axis=1, keepdims=True)
    return p @ v


def assignment_for(labels, d):
    labels = np.asarray(labels, dtype=np.int64)
    k = labels.max() + 1
    return ClusterAssignment(assignment=labels, centroids=np.zeros((k, d)),
                             sizes=np.bincount(labels, minlength=k))


class TestDenseAttention:
    def test_single_token_returns_value(self):
        rng = np.random.default_rng(0)
        q, k, v = (rng.normal(size=(1, 4)) for _ in range(3))
        npt.assert_array_equal(dense_attention(q, k, v).data, v)

    def test_identical_keys_average_values(self):
        rng = np.random.default_rng(1)
        q = rng.normal(size=(5, 3))
        k = np.tile(rng.normal(size=(1, 3)), (4, 1))
        v = rng.normal(size=(4, 3))
        out = dense_attention(q, k, v)
        npt.assert_allclose(out.data, np.tile(v.mean(axis=0), (5, 1)), atol=1e-12)

    def test_two_by_two_hand_case(self):
        q = np.array([[1.0, 0.0], [0.0, 2.0]])
        k = np.array([[1.0, 1.0], [-1.0, 0.5]])
        v = np.array([[3.0, -1.0], [0.5, 2.0]])
        npt.assert_allclose(dense_attention(q, k, v).data,
                            dense_oracle(q, k, v), atol=1e-12)

    def test_shape_errors(self):
        with pytest.raises(DimensionError):
            dense_attention(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 4)))
        with pytest.raises(DimensionError):
            dense_attention(np.ones((2, 3)), np.ones((4, 3)), np.ones((2, 3)))


class TestSparseAttention:
    def test_single_cluster_equals_dense(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(2, 17))
            d = int(rng.integers(1, 9))
            q, k, v = (rng.normal(size=(n, d)) for _ in range(3))
            ca = assignment_for(np.zeros(n, dtype=int), d)
            npt.assert_allclose(cluster_sparse_attention(q, k, v, ca).data,
                                dense_attention(q, k, v).data, atol=1e-10)

    def test_singleton_clusters_return_values(self):
        rng = np.random.default_rng(3)
        q, k, v = (rng.normal(size=(6, 4)) for _ in range(3))
        ca = assignment_for(np.arange(6), 4)
        npt.assert_array_equal(cluster_sparse_attention(q, k, v, ca).data, v)

    def test_two_clusters_match_per_slice_dense(self):
        rng = np.random.default_rng(4)
        q, k, v = (rng.normal(size=(4, 3)) for _ in range(3))
        ca = assignment_for([0, 0, 1, 1], 3)
        out = cluster_sparse_attention(q, k, v, ca).data
        for rows in (np.array([0, 1]), np.array([2, 3])):
            npt.assert_allclose(out[rows],
                                dense_attention(q[rows], k[rows], v[rows]).data,
                                atol=1e-12)

    def test_locality(self):
        rng = np.random.default_rng(5)
        q, k, v = (rng.normal(size=(6, 4)) for _ in range(3))
        ca = assignment_for([0, 0, 0, 1, 1, 1], 4)
        base = cluster_sparse_attention(q, k, v, ca).data
        k2, v2 = k.copy(), v.copy()
        k2[3:] = rng.normal(size=(3, 4))
        v2[3:] = rng.normal(size=(3, 4))
        moved = cluster_sparse_attention(q, k2, v2, ca).data
        npt.assert_array_equal(base[:3], moved[:3])

    def test_unscaled_flag_changes_result(self):
        rng = np.random.default_rng(6)
        q, k, v = (rng.normal(size=(5, 16)) for _ in range(3))
        ca = assignment_for([0, 0, 0, 1, 1], 16)
        scaled = cluster_sparse_attention(q, k, v, ca).data
        literal = cluster_sparse_attention(q, k, v, ca,
                                           SparseAttentionFlags.literal()).data
        assert np.abs(scaled - literal).max() > 1e-6
        npt.assert_allclose(literal[3:],
                            dense_oracle(q[3:], k[3:], v[3:], scale=1.0),
                            atol=1e-12)

    def test_flag_invariant(self):
        with pytest.raises(InputError):
            SparseAttentionFlags(scaled_logits=True, literal_eq3=True)

    def test_assignment_length_mismatch(self):
        rng = np.random.default_rng(7)
        q, k, v = (rng.normal(size=(4, 2)) for _ in range(3))
        with pytest.raises(DimensionError):
            cluster_sparse_attention(q, k, v, assignment_for([0, 0, 1], 2))


class TestWeights:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 24), st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_dense_rows_sum_to_one(self, n, d, seed):
        rng = np.random.default_rng(seed)
        w = dense_attention_weights(rng.normal(size=(n, d)), rng.normal(size=(n, d)))
        npt.assert_allclose(w.sum(axis=1), np.ones(n), atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(4, 24), st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_sparse_rows_sum_within_cluster(self, n, d, seed):
        rng = np.random.default_rng(seed)
        q = rng.normal(size=(n, d))
        ca = kmeans_fit(q, KMeansConfig(k=min(3, n)))
        w = sparse_attention_weights(q, rng.normal(size=(n, d)), ca)
        npt.assert_allclose(w.sum(axis=1), np.ones(n), atol=1e-12)
        for i in range(n):
            outside = ca.assignment != ca.assignment[i]
            assert (w[i, outside] == 0.0).all()


class TestCrossAttention:
    def test_single_kv_token(self):
        rng = np.random.default_rng(8)
        p = AttentionParams.create(6, 2, rng)
        xq = rng.normal(size=(4, 6))
        xkv = rng.normal(size=(1, 6))
        out = cross_attention(xq, xkv, p).data
        vparts = np.concatenate([xkv @ p.wv[h].data for h in range(2)], axis=1)
        expected = np.tile(vparts @ p.wo.data, (4, 1))
        npt.assert_allclose(out, expected, atol=1e-12)

    def test_self_equals_layer_without_residual(self):
        rng = np.random.default_rng(9)
        p = AttentionParams.create(8, 2, rng)
        x = rng.normal(size=(5, 8))
        npt.assert_allclose(cross_attention(x, x, p).data,
                            attention_layer_forward(x, p, residual=False).data,
                            atol=1e-14)

    def test_fixed_weights_vs_oracle(self):
        rng = np.random.default_rng(10)
        p = AttentionParams.create(4, 2, rng)
        xq = rng.normal(size=(2, 4))
        xkv = rng.normal(size=(3, 4))
        heads = []
        for h in range(2):
            heads.append(dense_oracle(xq @ p.wq[h].data, xkv @ p.wk[h].data,
                                      xkv @ p.wv[h].data))
        expected = np.concatenate(heads, axis=1) @ p.wo.data
        npt.assert_allclose(cross_attention(xq, xkv, p).data, expected, atol=1e-12)

    def test_empty_kv_rejected(self):
        rng = np.random.default_rng(11)
        p = AttentionParams.create(4, 2, rng)
        with pytest.raises(InputError):
            cross_attention(rng.normal(size=(2, 4)), np.zeros((0, 4)), p)


class TestAttentionLayer:
    def test_zero_projections_leave_residual(self):
        rng = np.random.default_rng(12)
        p = AttentionParams.create(6, 2, rng)
        zero = AttentionParams(
            wq=[Tensor(np.zeros((6, 3))) for _ in range(2)],
            wk=[Tensor(np.zeros((6, 3))) for _ in range(2)],
            wv=[Tensor(np.zeros((6, 3))) for _ in range(2)],
            wo=Tensor(np.zeros((6, 6))),
        )
        x = rng.normal(size=(4, 6))
        npt.assert_array_equal(attention_layer_forward(x, zero).data, x)

    def test_sparse_single_cluster_equals_dense_path(self):
        rng = np.random.default_rng(13)
        p = AttentionParams.create(8, 4, rng)
        x = rng.normal(size=(7, 8))
        ca = assignment_for(np.zeros(7, dtype=int), 2)
        dense = attention_layer_forward(x, p).data
        sparse = attention_layer_forward(x, p, ca=ca).data
        npt.assert_allclose(sparse, dense, atol=1e-10)

    def test_token_width_must_match(self):
        rng = np.random.default_rng(14)
        p = AttentionParams.create(8, 2, rng)
        with pytest.raises(DimensionError):
            attention_layer_forward(rng.normal(size=(3, 5)), p)
