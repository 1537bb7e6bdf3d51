"""scikit-learn style classifier facade over the cascade model."""

import numpy as np

from ._base import BaseEstimator
from .data import Dataset, ModalityBatch
from .errors import InputError
from .masking import MaskConfig
from .model import MODALITIES, SmmtConfig, SmmtModel
from .training import TrainConfig, evaluate, train


def _as_batch(x) -> ModalityBatch:
    if isinstance(x, ModalityBatch):
        return x
    if isinstance(x, Dataset):
        return x.batch()
    raise InputError(f"expected Dataset or ModalityBatch, got {type(x).__name__}")


class SmmtClassifier(BaseEstimator):
    """fit/predict wrapper: constructor args mirror model + training knobs.

    X is a Dataset (labels included) for fit/score, and a Dataset or
    ModalityBatch for predict/predict_proba.
    """

    def __init__(self, d_model: int = 64, heads: int = 4,
                 cascade_order: tuple = MODALITIES, use_sparse: bool = True,
                 use_mask: bool = True, mask_ratio: float = 0.3,
                 epochs: int = 50, batch_size: int = 8, lr: float = 1e-3,
                 seed: int = 0, cascade_repeats: int = 1,
                 tabular_tokens: str = "per_feature",
                 conv_channels: tuple = (8, 16, 32, 64),
                 kmeans_iters: int = 10):
        self.d_model = d_model
        self.heads = heads
        self.cascade_order = cascade_order
        self.use_sparse = use_sparse
        self.use_mask = use_mask
        self.mask_ratio = mask_ratio
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.cascade_repeats = cascade_repeats
        self.tabular_tokens = tabular_tokens
        self.conv_channels = conv_channels
        self.kmeans_iters = kmeans_iters

    def _configs(self, image_hw: tuple[int, int]) -> tuple[SmmtConfig, TrainConfig]:
        cfg = SmmtConfig(
            d_model=self.d_model, heads=self.heads,
            cascade_order=tuple(self.cascade_order), use_sparse=self.use_sparse,
            use_mask=self.use_mask,
            mask=MaskConfig(ratio=self.mask_ratio, seed=self.seed),
            seed=self.seed, image_hw=image_hw,
            conv_channels=tuple(self.conv_channels),
            tabular_tokens=self.tabular_tokens,
            cascade_repeats=self.cascade_repeats, kmeans_iters=self.kmeans_iters,
        )
        tc = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                         lr=self.lr, seed=self.seed)
        return cfg, tc

    def fit(self, X: Dataset, y=None, validation: Dataset | None = None):
        if not isinstance(X, Dataset):
            raise InputError("fit expects a Dataset (labels travel with it)")
        cfg, tc = self._configs(X.image_hw)
        result = train(cfg, tc, X, val_ds=validation)
        self.model_ = result.model
        self.history_ = result.history
        self.train_seconds_ = result.train_seconds
        self.classes_ = np.array([0, 1])
        return self

    def _require_fitted(self) -> SmmtModel:
        if not hasattr(self, "model_"):
            raise InputError("estimator is not fitted yet; call fit first")
        return self.model_

    def _predict_batched(self, X, chunk: int = 64) -> tuple[np.ndarray, np.ndarray]:
        model = self._require_fitted()
        batch = _as_batch(X)
        ids = np.empty(batch.size, dtype=np.int64)
        p1 = np.empty(batch.size, dtype=np.float64)
        for lo in range(0, batch.size, chunk):
            hi = min(lo + chunk, batch.size)
            part = ModalityBatch(images=batch.images[lo:hi],
                                 numerics=batch.numerics[lo:hi],
                                 categoricals=batch.categoricals[lo:hi],
                                 labels=batch.labels[lo:hi])
            ids[lo:hi], p1[lo:hi] = model.predict(part)
        return ids, p1

    def predict(self, X) -> np.ndarray:
        return self._predict_batched(X)[0]

    def predict_proba(self, X) -> np.ndarray:
        p1 = self._predict_batched(X)[1]
        return np.stack([1.0 - p1, p1], axis=1)

    def score(self, X: Dataset, y=None) -> float:
        return evaluate(self._require_fitted(), X).accuracy
