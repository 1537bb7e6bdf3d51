"""Modality encoders projecting raw inputs into the shared token space.

Images go through four conv3x3 -> ReLU -> 2x average-pool blocks and a
per-cell linear projection, one token per final spatial cell. Numeric
and categorical records go through a 3-layer MLP and an embedding +
projection respectively; with per-feature granularity the last linear
layer emits one token per input field, otherwise a single token.

All encoders operate on row-stacked batches: a batch of b samples with
t tokens each comes back as a (b*t, d) matrix whose rows are grouped by
sample.
"""

import numpy as np

from ._init import glorot_uniform, normal_init
from .errors import DimensionError, InputError
from .tensor import (ParameterStore, Tensor, add_rowvec, apply_op, concat_cols,
                     matmul, relu, reshape, take_rows)

EMBED_WIDTH = 32
DOWNSAMPLE = 16  # four 2x pooling stages


def _im2col3x3(x: Tensor) -> Tensor:
    """(b,h,w,c) -> (b*h*w, 9c) patches, zero-padded at the border."""
    b, h, w, c = x.shape
    xp = np.zeros((b, h + 2, w + 2, c))
    xp[:, 1:-1, 1:-1, :] = x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(1, 2))
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, 9 * c)

    def bwd(g):
        gp = np.zeros((b, h + 2, w + 2, c))
        dc = g.reshape(b, h, w, 3, 3, c)
        for dy in range(3):
            for dx in range(3):
                gp[:, dy:dy + h, dx:dx + w, :] += dc[:, :, :, dy, dx, :]
        return (gp[:, 1:-1, 1:-1, :],)

    return apply_op((x,), np.ascontiguousarray(cols), bwd)


def _avgpool2x2(x: Tensor) -> Tensor:
    """(b,h,w,c) -> (b,h/2,w/2,c) mean over 2x2 cells."""
    b, h, w, c = x.shape
    y = x.data.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def bwd(g):
        return (np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) / 4.0,)

    return apply_op((x,), y, bwd)


class ImagingEncoder:
    """Four conv blocks then a linear map to d per spatial cell."""

    def __init__(self, store: ParameterStore, prefix: str, d_model: int,
                 rng: np.random.Generator, hw: tuple[int, int] = (32, 32),
                 channels: tuple[int, int, int, int] = (8, 16, 32, 64)):
        h, w = hw
        if h % DOWNSAMPLE or w % DOWNSAMPLE:
            raise DimensionError(f"image extents must be divisible by {DOWNSAMPLE}, got {hw}")
        if len(channels) != 4:
            raise InputError(f"need 4 conv channel counts, got {channels}")
        self.store = store
        self.prefix = prefix
        self.hw = (h, w)
        self.channels = tuple(channels)
        self.d_model = d_model
        c_in = 3
        for i, c_out in enumerate(channels):
            store.add(f"{prefix}.conv{i}.w", glorot_uniform(rng, (9 * c_in, c_out)))
            store.add(f"{prefix}.conv{i}.b", np.zeros(c_out))
            c_in = c_out
        store.add(f"{prefix}.proj.w", glorot_uniform(rng, (c_in, d_model)))
        store.add(f"{prefix}.proj.b", np.zeros(d_model))

    @property
    def tokens_per_sample(self) -> int:
        return (self.hw[0] // DOWNSAMPLE) * (self.hw[1] // DOWNSAMPLE)

    def forward(self, images: np.ndarray) -> Tensor:
        """(b,H,W,3) intensities in [0,1] -> (b*t, d) tokens."""
        arr = np.asarray(images, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[3] != 3:
            raise DimensionError(f"expected (b,H,W,3) images, got {arr.shape}")
        if arr.shape[1:3] != self.hw:
            raise DimensionError(f"expected {self.hw} images, got {arr.shape[1:3]}")
        if not np.all(np.isfinite(arr)):
            raise InputError("image intensities must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InputError("image intensities must lie in [0, 1]")
        b = arr.shape[0]
        h, w = self.hw
        x = Tensor(arr)
        for i, c_out in enumerate(self.channels):
            cols = _im2col3x3(x)
            z = add_rowvec(matmul(cols, self.store[f"{self.prefix}.conv{i}.w"]),
                           self.store[f"{self.prefix}.conv{i}.b"])
            x = _avgpool2x2(reshape(relu(z), (b, h, w, c_out)))
            h, w = h // 2, w // 2
        cells = reshape(x, (b * h * w, self.channels[-1]))
        tokens = add_rowvec(matmul(cells, self.store[f"{self.prefix}.proj.w"]),
                            self.store[f"{self.prefix}.proj.b"])
        return tokens

    def encode_one(self, image: np.ndarray) -> Tensor:
        """Single (H,W,3) image -> (t, d) tokens."""
        return self.forward(np.asarray(image)[None])


class NumericEncoder:
    """3-layer MLP over standardized scores; ReLU between layers."""

    def __init__(self, store: ParameterStore, prefix: str, d_model: int,
                 rng: np.random.Generator, n_features: int = 4,
                 hidden: tuple[int, int] = (64, 64),
                 granularity: str = "per_feature"):
        if granularity not in ("per_feature", "single"):
            raise InputError(f"unknown token granularity {granularity!r}")
        self.store = store
        self.prefix = prefix
        self.n_features = n_features
        self.d_model = d_model
        self.tokens_per_sample = n_features if granularity == "per_feature" else 1
        widths = [n_features, *hidden, self.tokens_per_sample * d_model]
        for i in range(3):
            store.add(f"{prefix}.fc{i}.w", glorot_uniform(rng, (widths[i], widths[i + 1])))
            store.add(f"{prefix}.fc{i}.b", np.zeros(widths[i + 1]))

    def forward(self, values: np.ndarray) -> Tensor:
        """(b, n_features) standardized values -> (b*t, d) tokens."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None]
        if arr.ndim != 2 or arr.shape[1] != self.n_features:
            raise DimensionError(f"expected (b, {self.n_features}) values, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InputError("numeric scores must be finite")
        x = Tensor(arr)
        for i in range(3):
            x = add_rowvec(matmul(x, self.store[f"{self.prefix}.fc{i}.w"]),
                           self.store[f"{self.prefix}.fc{i}.b"])
            if i < 2:
                x = relu(x)
        return reshape(x, (arr.shape[0] * self.tokens_per_sample, self.d_model))

    def encode_one(self, values: np.ndarray) -> Tensor:
        return self.forward(np.asarray(values)[None])


class CategoricalEncoder:
    """Per-field 32-wide embeddings, concatenated and linearly projected."""

    def __init__(self, store: ParameterStore, prefix: str, d_model: int,
                 rng: np.random.Generator, vocab_sizes: tuple[int, ...] = (3, 2),
                 granularity: str = "per_feature"):
        if granularity not in ("per_feature", "single"):
            raise InputError(f"unknown token granularity {granularity!r}")
        if not vocab_sizes or any(v < 1 for v in vocab_sizes):
            raise InputError(f"vocabulary sizes must be positive, got {vocab_sizes}")
        self.store = store
        self.prefix = prefix
        self.vocab_sizes = tuple(int(v) for v in vocab_sizes)
        self.d_model = d_model
        self.tokens_per_sample = len(vocab_sizes) if granularity == "per_feature" else 1
        for f, vocab in enumerate(self.vocab_sizes):
            store.add(f"{prefix}.emb{f}", normal_init(rng, (vocab, EMBED_WIDTH)))
        concat_width = EMBED_WIDTH * len(self.vocab_sizes)
        store.add(f"{prefix}.proj.w",
                  glorot_uniform(rng, (concat_width, self.tokens_per_sample * d_model)))
        store.add(f"{prefix}.proj.b", np.zeros(self.tokens_per_sample * d_model))

    def forward(self, ids: np.ndarray) -> Tensor:
        """(b, n_fields) integer ids -> (b*t, d) tokens."""
        arr = np.asarray(ids)
        if arr.ndim == 1:
            arr = arr[None]
        if arr.ndim != 2 or arr.shape[1] != len(self.vocab_sizes):
            raise DimensionError(
                f"expected (b, {len(self.vocab_sizes)}) ids, got {arr.shape}")
        arr = arr.astype(np.int64, copy=False)
        for f, vocab in enumerate(self.vocab_sizes):
            col = arr[:, f]
            if col.size and (col.min() < 0 or col.max() >= vocab):
                raise InputError(f"field {f} id out of vocabulary [0, {vocab})")
        parts = [take_rows(self.store[f"{self.prefix}.emb{f}"], arr[:, f])
                 for f in range(len(self.vocab_sizes))]
        x = add_rowvec(matmul(concat_cols(parts), self.store[f"{self.prefix}.proj.w"]),
                       self.store[f"{self.prefix}.proj.b"])
        return reshape(x, (arr.shape[0] * self.tokens_per_sample, self.d_model))

    def encode_one(self, ids: np.ndarray) -> Tensor:
        return self.forward(np.asarray(ids)[None])
