import numpy as np
import numpy.testing as npt
import pytest

from smmt.data import SyntheticSpec, generate_synthetic
from smmt.errors import FormatError, InputError
from smmt.masking import MaskConfig
from smmt.model import MODALITIES, SmmtConfig, SmmtModel
from smmt.tensor import GradTape


def tiny_config(**kw):
    base = dict(d_model=16, heads=2, conv_channels=(2, 3, 4, 4),
                numeric_hidden=(8, 8), image_hw=(16, 16), seed=0)
    base.update(kw)
    return SmmtConfig(**base)


@pytest.fixture(scope="module")
def tiny_data():
    return generate_synthetic(SyntheticSpec(n_samples=12, seed=5, image_hw=(16, 16)))


def make_model(ds, **kw):
    model = SmmtModel(tiny_config(**kw))
    model.fit_normalization(ds)
    return model


class TestForward:
    def test_logits_shape(self, tiny_data):
        model = make_model(tiny_data)
        for b in (1, 3, 7):
            logits = model.forward(tiny_data.batch(np.arange(b)), "eval")
            assert logits.shape == (b, 2)

    def test_empty_batch_rejected(self, tiny_data):
        model = make_model(tiny_data)
        with pytest.raises(InputError):
            model.forward(tiny_data.batch(np.arange(0)), "eval")

    def test_bad_mode_rejected(self, tiny_data):
        model = make_model(tiny_data)
        with pytest.raises(InputError):
            model.forward(tiny_data.batch(np.arange(2)), "training")

    def test_eval_is_deterministic(self, tiny_data):
        model = make_model(tiny_data)
        batch = tiny_data.batch(np.arange(4))
        a = model.forward(batch, "eval").data
        b = model.forward(batch, "eval").data
        npt.assert_array_equal(a, b)

    def test_forced_single_cluster_matches_dense(self, tiny_data):
        batch = tiny_data.batch(np.arange(4))
        sparse = make_model(tiny_data, use_sparse=True, cluster_count_override=1)
        dense = make_model(tiny_data, use_sparse=False)
        npt.assert_allclose(sparse.forward(batch, "eval").data,
                            dense.forward(batch, "eval").data, atol=1e-8)

    def test_without_mask_train_equals_eval(self, tiny_data):
        model = make_model(tiny_data, use_mask=False)
        batch = tiny_data.batch(np.arange(4))
        npt.assert_array_equal(model.forward(batch, "train", step=3).data,
                               model.forward(batch, "eval").data)

    def test_mask_ratio_one_gives_constant_train_logits(self, tiny_data):
        model = make_model(tiny_data, use_mask=True,
                           mask=MaskConfig(ratio=1.0, seed=2))
        batch = tiny_data.batch(np.arange(6))
        logits = model.forward(batch, "train", step=0).data
        npt.assert_allclose(logits, np.tile(logits[0], (6, 1)), atol=1e-12)

    def test_eval_ignores_mask_config_entirely(self, tiny_data):
        # same seed -> identical weights; eval output must not see the mask
        masked = make_model(tiny_data, use_mask=True,
                            mask=MaskConfig(ratio=0.9, seed=5))
        plain = make_model(tiny_data, use_mask=False)
        batch = tiny_data.batch(np.arange(5))
        npt.assert_array_equal(masked.forward(batch, "eval").data,
                               plain.forward(batch, "eval").data)

    def test_mask_changes_train_logits(self, tiny_data):
        model = make_model(tiny_data, use_mask=True,
                           mask=MaskConfig(ratio=0.4, seed=2))
        batch = tiny_data.batch(np.arange(4))
        masked = model.forward(batch, "train", step=0).data
        plain = model.forward(batch, "eval").data
        assert np.abs(masked - plain).max() > 1e-9

    def test_cascade_repeats_change_output(self, tiny_data):
        batch = tiny_data.batch(np.arange(3))
        one = make_model(tiny_data, cascade_repeats=1).forward(batch, "eval").data
        two = make_model(tiny_data, cascade_repeats=2).forward(batch, "eval").data
        assert np.abs(one - two).max() > 1e-12

    def test_swapped_cross_direction_runs(self, tiny_data):
        batch = tiny_data.batch(np.arange(3))
        out = make_model(tiny_data, fused_queries=False).forward(batch, "eval")
        assert out.shape == (3, 2)

    def test_freeze_replay_reproduces_forward(self, tiny_data):
        model = make_model(tiny_data, use_mask=True)
        batch = tiny_data.batch(np.arange(4))
        freeze = model.capture(batch, mode="train", step=1)
        a = model.forward(batch, "train", step=1).data
        b = model.forward(batch, "train", step=1, freeze=freeze).data
        npt.assert_array_equal(a, b)


class TestPredict:
    def test_matches_argmax_oracle(self, tiny_data):
        model = make_model(tiny_data)
        batch = tiny_data.batch(np.arange(8))
        logits = model.forward(batch, "eval").data
        ids, p1 = model.predict(batch)
        npt.assert_array_equal(ids, logits.argmax(axis=1))
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        npt.assert_allclose(p1, (e / e.sum(axis=1, keepdims=True))[:, 1], atol=1e-12)

    def test_tie_goes_to_class_zero(self):
        # argmax with equal logits picks the first index
        logits = np.zeros((3, 2))
        assert (logits.argmax(axis=1) == 0).all()

    def test_confident_logits_probability(self):
        from smmt.tensor import softmax_rows
        p = softmax_rows(np.array([[5.0, -5.0]])).data[0]
        assert p.argmax() == 0
        assert p[1] < 1e-4
        tie = softmax_rows(np.zeros((1, 2))).data[0]
        assert tie[1] == pytest.approx(0.5, abs=0)

    def test_shift_invariance_of_argmax(self, tiny_data):
        model = make_model(tiny_data)
        batch = tiny_data.batch(np.arange(5))
        logits = model.forward(batch, "eval").data
        npt.assert_array_equal(logits.argmax(axis=1),
                               (logits + 123.45).argmax(axis=1))


class TestConfig:
    def test_cascade_order_must_be_permutation(self):
        with pytest.raises(InputError):
            tiny_config(cascade_order=("imaging", "imaging", "numeric"))

    def test_heads_must_divide(self):
        with pytest.raises(Exception):
            tiny_config(d_model=10, heads=4)

    def test_default_order(self):
        assert tiny_config().cascade_order == MODALITIES

    def test_parameter_count_is_config_function(self, tiny_data):
        a = SmmtModel(tiny_config(seed=1)).parameter_count()
        b = SmmtModel(tiny_config(seed=99)).parameter_count()
        assert a == b


class TestCheckpoint:
    def test_bit_exact_roundtrip(self, tiny_data, tmp_path):
        model = make_model(tiny_data, use_mask=True)
        # leave non-trivial normalization buffers in place
        assert model.buffers["numeric_std"].min() > 0
        path = tmp_path / "m.smmt"
        model.save(path)
        loaded = SmmtModel.load(path)
        assert loaded.config == model.config
        for name in model.store.names():
            npt.assert_array_equal(loaded.store[name].data, model.store[name].data)
        for name, arr in model.buffers.items():
            npt.assert_array_equal(loaded.buffers[name], arr)
        batch = tiny_data.batch(np.arange(4))
        npt.assert_array_equal(loaded.forward(batch, "eval").data,
                               model.forward(batch, "eval").data)

    def test_double_roundtrip_identical_bytes(self, tiny_data, tmp_path):
        model = make_model(tiny_data)
        p1, p2 = tmp_path / "a.smmt", tmp_path / "b.smmt"
        model.save(p1)
        SmmtModel.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tiny_data, tmp_path):
        path = tmp_path / "bad.smmt"
        model = make_model(tiny_data)
        model.save(path)
        blob = bytearray(path.read_bytes())
        blob[0] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            SmmtModel.load(path)

    def test_truncated_file(self, tiny_data, tmp_path):
        path = tmp_path / "trunc.smmt"
        model = make_model(tiny_data)
        model.save(path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(IOError):
            SmmtModel.load(path)


class TestTraining:
    def test_gradients_flow_to_every_used_parameter(self):
        # 32x32 images give 4 tokens per sample; single-token sequences
        # would legitimately zero the q/k gradients (softmax of one logit)
        ds = generate_synthetic(SyntheticSpec(n_samples=8, seed=5))
        model = SmmtModel(tiny_config(image_hw=(32, 32), use_mask=False))
        model.fit_normalization(ds)
        with GradTape() as tape:
            loss, _ = model.loss(ds.batch(np.arange(4)), mode="train")
        grads = tape.gradients(loss, model.store)
        unused_prefix = "cross.step0"  # only fires with cascade repeats
        for name, g in grads.items():
            if name.startswith(unused_prefix):
                assert np.all(g == 0.0), name
            else:
                assert np.abs(g).max() > 0.0, name
