import numpy as np
import numpy.testing as npt
import pytest

from smmt.data import SyntheticSpec, generate_synthetic, holdout_split
from smmt.errors import InputError
from smmt.estimator import SmmtClassifier


@pytest.fixture(scope="module")
def fitted():
    ds = generate_synthetic(SyntheticSpec(n_samples=60, seed=31, snr_numeric=4.0,
                                          image_hw=(16, 16)))
    train_ds, eval_ds = holdout_split(ds, 0.25, seed=0)
    clf = SmmtClassifier(d_model=16, heads=2, conv_channels=(2, 3, 4, 4),
                         epochs=3, seed=0)
    clf.fit(train_ds)
    return clf, train_ds, eval_ds


def test_get_set_params_roundtrip():
    clf = SmmtClassifier(d_model=32, epochs=7, mask_ratio=0.2)
    params = clf.get_params()
    assert params["d_model"] == 32 and params["epochs"] == 7
    clf.set_params(**params)
    assert clf.get_params() == params
    clf.set_params(lr=5e-4)
    assert clf.lr == 5e-4
    with pytest.raises(ValueError):
        clf.set_params(unknown_param=1)


def test_sklearn_clone_compatible():
    pytest.importorskip("sklearn")
    from sklearn.base import clone
    clf = SmmtClassifier(d_model=24, heads=3, epochs=2, seed=11)
    twin = clone(clf)
    assert twin.get_params() == clf.get_params()
    assert not hasattr(twin, "model_")


def test_fit_predict_score(fitted):
    clf, train_ds, eval_ds = fitted
    preds = clf.predict(eval_ds)
    assert preds.shape == (len(eval_ds),)
    assert set(np.unique(preds)) <= {0, 1}
    acc = clf.score(eval_ds)
    assert 0.0 <= acc <= 1.0
    npt.assert_array_equal(clf.classes_, [0, 1])
    assert len(clf.history_) == 3


def test_predict_proba_rows_sum_to_one(fitted):
    clf, _, eval_ds = fitted
    proba = clf.predict_proba(eval_ds)
    assert proba.shape == (len(eval_ds), 2)
    npt.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    npt.assert_array_equal(proba.argmax(axis=1), clf.predict(eval_ds))


def test_predict_accepts_batches(fitted):
    clf, _, eval_ds = fitted
    batch = eval_ds.batch(np.arange(4))
    assert clf.predict(batch).shape == (4,)


def test_unfitted_predict_rejected():
    with pytest.raises(InputError):
        SmmtClassifier().predict(generate_synthetic(
            SyntheticSpec(n_samples=4, seed=0, image_hw=(16, 16))))


def test_fit_requires_dataset():
    with pytest.raises(InputError):
        SmmtClassifier().fit(np.zeros((3, 4)))


def test_repr_mentions_params():
    text = repr(SmmtClassifier(d_model=48))
    assert "SmmtClassifier(" in text and "d_model=48" in text
