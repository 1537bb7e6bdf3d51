from smmt.gradsuite import LAYER_CHECKS, layer_gradchecks


def test_subset_selection():
    res = layer_gradchecks(names=["classifier"])
    assert set(res) == {"classifier"}
    assert res["classifier"] < 1e-4


def test_covers_every_layer_kind():
    assert set(LAYER_CHECKS) == {
        "numeric_encoder", "categorical_encoder", "imaging_encoder",
        "dense_attention", "sparse_attention", "cross_attention",
        "classifier", "cascade",
    }
