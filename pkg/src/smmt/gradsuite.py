"""Layer-by-layer finite-difference gradient checks on tiny configs.

Each entry builds a d=8-scale instance of one layer, wraps it in a
scalar objective with fixed random mixing weights, and compares tape
gradients against central differences. Used by the CLI `gradcheck`
subcommand and the acceptance suite.
"""

import numpy as np

from .attention import (attention_layer_forward, attention_params_view,
                        cross_attention, register_attention_params)
from .clustering import ClusterAssignment
from .data import SyntheticSpec, generate_synthetic
from .encoders import CategoricalEncoder, ImagingEncoder, NumericEncoder
from .gradcheck import finite_diff_gradcheck
from .model import SmmtConfig, SmmtModel
from .tensor import (ParameterStore, Tensor, add_rowvec, cross_entropy, matmul,
                     mul_const, relu, sum_all)


def _weighted_sum(out: Tensor, rng: np.random.Generator) -> Tensor:
    return sum_all(mul_const(out, rng.normal(size=out.shape)))


def _check_numeric(d: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    enc = NumericEncoder(store, "enc", d, rng, hidden=(6, 6))
    x = rng.normal(size=(2, 4))
    mix = rng.normal(size=(2 * enc.tokens_per_sample, d))
    return finite_diff_gradcheck(
        lambda: sum_all(mul_const(enc.forward(x), mix)), store)


def _check_categorical(d: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    enc = CategoricalEncoder(store, "enc", d, rng)
    ids = np.array([[0, 1], [2, 0]])
    mix = rng.normal(size=(2 * enc.tokens_per_sample, d))
    return finite_diff_gradcheck(
        lambda: sum_all(mul_const(enc.forward(ids), mix)), store)


def _check_imaging(d: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    enc = ImagingEncoder(store, "enc", d, rng, hw=(16, 16), channels=(2, 2, 2, 2))
    img = rng.uniform(0.0, 1.0, size=(1, 16, 16, 3))
    mix = rng.normal(size=(enc.tokens_per_sample, d))
    return finite_diff_gradcheck(
        lambda: sum_all(mul_const(enc.forward(img), mix)), store)


def _attention_fixture(d: int, heads: int, n: int, seed: int):
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    register_attention_params(store, "attn", d, heads, rng)
    store.add("tokens", rng.normal(size=(n, d)) * 0.5)
    mix = rng.normal(size=(n, d))
    return store, mix


def _check_dense_attention(d: int, seed: int) -> float:
    store, mix = _attention_fixture(d, 2, 5, seed)
    p = lambda: attention_params_view(store, "attn", 2)
    return finite_diff_gradcheck(
        lambda: sum_all(mul_const(attention_layer_forward(store["tokens"], p()), mix)),
        store)


def _check_sparse_attention(d: int, seed: int) -> float:
    store, mix = _attention_fixture(d, 2, 5, seed)
    ca = ClusterAssignment(assignment=np.array([0, 1, 0, 1, 0]),
                           centroids=np.zeros((2, d // 2)),
                           sizes=np.array([3, 2]))
    p = lambda: attention_params_view(store, "attn", 2)
    return finite_diff_gradcheck(
        lambda: sum_all(mul_const(
            attention_layer_forward(store["tokens"], p(), ca=ca), mix)),
        store)


def _check_cross_attention(d: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    register_attention_params(store, "attn", d, 2, rng)
    store.add("q_tokens", rng.normal(size=(3, d)) * 0.5)
    store.add("kv_tokens", rng.normal(size=(4, d)) * 0.5)
    mix = rng.normal(size=(3, d))
    p = lambda: attention_params_view(store, "attn", 2)
    return finite_diff_gradcheck(
        lambda: sum_all(mul_const(
            cross_attention(store["q_tokens"], store["kv_tokens"], p()), mix)),
        store)


def _check_classifier(d: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    store.add("w1", rng.normal(size=(d, d)) * 0.5)
    store.add("b1", rng.normal(size=d) * 0.1)
    store.add("w2", rng.normal(size=(d, 2)) * 0.5)
    store.add("b2", rng.normal(size=2) * 0.1)
    x = rng.normal(size=(3, d))
    labels = np.array([0, 1, 1])

    def f():
        h = relu(add_rowvec(matmul(Tensor(x), store["w1"]), store["b1"]))
        return cross_entropy(add_rowvec(matmul(h, store["w2"]), store["b2"]), labels)

    return finite_diff_gradcheck(f, store)


def _check_cascade(d: int, seed: int) -> float:
    spec = SyntheticSpec(n_samples=4, seed=seed, image_hw=(16, 16))
    ds = generate_synthetic(spec)
    cfg = SmmtConfig(d_model=d, heads=2, conv_channels=(2, 2, 3, 3),
                     numeric_hidden=(6, 6), image_hw=(16, 16), seed=seed,
                     use_sparse=True, use_mask=True)
    model = SmmtModel(cfg)
    model.fit_normalization(ds)
    batch = ds.batch(np.arange(2))
    freeze = model.capture(batch, mode="train", step=0)

    def f():
        loss, _ = model.loss(batch, mode="train", step=0, freeze=freeze)
        return loss

    return finite_diff_gradcheck(f, model.store)


LAYER_CHECKS = {
    "numeric_encoder": _check_numeric,
    "categorical_encoder": _check_categorical,
    "imaging_encoder": _check_imaging,
    "dense_attention": _check_dense_attention,
    "sparse_attention": _check_sparse_attention,
    "cross_attention": _check_cross_attention,
    "classifier": _check_classifier,
    "cascade": _check_cascade,
}


def layer_gradchecks(d_model: int = 8, seed: int = 0,
                     names=None) -> dict[str, float]:
    """Worst relative error per layer; all should sit well under 1e-4."""
    picked = LAYER_CHECKS if names is None else {n: LAYER_CHECKS[n] for n in names}
    return {name: fn(d_model, seed) for name, fn in picked.items()}
