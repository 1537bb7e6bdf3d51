"""Synthetic multi-modal dataset: generation, persistence, splits.

Records mimic the shape of a clinical AD/CN cohort: an RGB image grid in
[0,1], four numeric scores, two categorical fields (genotype-like with 3
levels, sex with 2) and a binary label. Every class-dependent signal is
scaled by a per-modality SNR, so snr=0 makes that modality pure noise;
a shared latent cause mixed in with weight `redundancy` correlates the
modalities without carrying label information.

Persistence uses a fixed little-endian layout (magic "SMMTDS1"):

    magic[7] version:u8 n:u32 H:u32 W:u32 n_numeric:u32 n_categorical:u32
    images   float32[n,H,W,3]
    numerics float32[n,4]
    cats     uint8[n,2]
    labels   uint8[n]

so the file size is exactly 28 + n*(H*W*12 + 19) bytes.
"""

import io
from dataclasses import dataclass

import numpy as np

from ._rng import counter_rng
from .errors import FormatError, InputError
from .validation import check_positive_int, check_unit_interval

MAGIC = b"SMMTDS1"
VERSION = 1
NUMERIC_FIELDS = 4
CATEGORICAL_VOCAB = (3, 2)

_GEN_TAG = 0x5D
_SPLIT_TAG = 0x5E

# class-separation directions; the label flips their sign
_NUM_PATTERN = np.array([-1.0, 0.9, 1.1, 0.5])
_NUM_MIX = np.array([
    [0.6, -0.2, 0.1, 0.3],
    [-0.1, 0.5, 0.2, -0.3],
    [0.2, 0.1, -0.6, 0.2],
    [0.3, -0.4, 0.2, 0.5],
])
_APOE_PREF = np.array([-0.9, 0.1, 0.8])
_APOE_MIX = np.array([0.4, -0.1, -0.3])


@dataclass
class SyntheticSpec:
    n_samples: int
    class_balance: float = 0.5
    snr_image: float = 1.0
    snr_numeric: float = 1.0
    snr_categorical: float = 1.0
    redundancy: float = 0.0
    image_hw: tuple[int, int] = (32, 32)
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 2:
            raise InputError(f"n_samples must be >= 2, got {self.n_samples}")
        check_unit_interval(self.class_balance, "class_balance")
        check_unit_interval(self.redundancy, "redundancy")
        for name in ("snr_image", "snr_numeric", "snr_categorical"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")


@dataclass
class Record:
    image: np.ndarray
    numerics: np.ndarray
    categoricals: np.ndarray
    label: int


@dataclass
class ModalityBatch:
    """Float64 views of a batch, ready for the encoders."""

    images: np.ndarray        # (b, H, W, 3) in [0, 1]
    numerics: np.ndarray      # (b, 4)
    categoricals: np.ndarray  # (b, 2) int64
    labels: np.ndarray        # (b,) int64

    @property
    def size(self) -> int:
        return self.labels.shape[0]


@dataclass
class Dataset:
    images: np.ndarray        # (n, H, W, 3) float32
    numerics: np.ndarray      # (n, 4) float32
    categoricals: np.ndarray  # (n, 2) uint8
    labels: np.ndarray        # (n,) uint8

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def image_hw(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]

    def record(self, i: int) -> Record:
        return Record(self.images[i], self.numerics[i],
                      self.categoricals[i], int(self.labels[i]))

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.numerics[idx],
                       self.categoricals[idx], self.labels[idx])

    def batch(self, idx=None) -> ModalityBatch:
        if idx is None:
            idx = np.arange(len(self))
        idx = np.asarray(idx, dtype=np.int64)
        return ModalityBatch(
            images=self.images[idx].astype(np.float64),
            numerics=self.numerics[idx].astype(np.float64),
            categoricals=self.categoricals[idx].astype(np.int64),
            labels=self.labels[idx].astype(np.int64),
        )

    def equals(self, other: "Dataset") -> bool:
        return (np.array_equal(self.images, other.images)
                and np.array_equal(self.numerics, other.numerics)
                and np.array_equal(self.categoricals, other.categoricals)
                and np.array_equal(self.labels, other.labels))


def _spatial_modes(h: int, w: int) -> np.ndarray:
    """Four fixed low-frequency fields mixing the shared latent into images."""
    yy = np.linspace(-1.0, 1.0, h)[:, None]
    xx = np.linspace(-1.0, 1.0, w)[None, :]
    return np.stack([
        np.cos(np.pi * yy) * np.ones_like(xx),
        np.ones_like(yy) * np.cos(np.pi * xx),
        np.sin(np.pi * yy) * np.sin(np.pi * xx),
        yy * xx,
    ])


def _class_bump(h: int, w: int) -> np.ndarray:
    """Antisymmetric double bump whose sign carries the class."""
    yy = np.linspace(-1.0, 1.0, h)[:, None]
    xx = np.linspace(-1.0, 1.0, w)[None, :]
    left = np.exp(-(((yy + 0.3) ** 2) + (xx + 0.4) ** 2) / 0.18)
    right = np.exp(-(((yy - 0.3) ** 2) + (xx - 0.4) ** 2) / 0.18)
    return left - right


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw n_samples records; record i depends only on (seed, i)."""
    h, w = spec.image_hw
    modes = _spatial_modes(h, w)
    bump = _class_bump(h, w)

    images = np.empty((spec.n_samples, h, w, 3), dtype=np.float32)
    numerics = np.empty((spec.n_samples, NUMERIC_FIELDS), dtype=np.float32)
    cats = np.empty((spec.n_samples, len(CATEGORICAL_VOCAB)), dtype=np.uint8)
    labels = np.empty(spec.n_samples, dtype=np.uint8)

    for i in range(spec.n_samples):
        rng = counter_rng(spec.seed, i, tag=_GEN_TAG)
        y = 1 if rng.random() < spec.class_balance else 0
        sign = y - 0.5
        z = rng.normal(size=4)

        num = (spec.snr_numeric * sign * _NUM_PATTERN
               + spec.redundancy * (_NUM_MIX @ z)
               + rng.normal(size=NUMERIC_FIELDS))

        field = (spec.snr_image * sign * bump
                 + spec.redundancy * np.tensordot(z, modes, axes=1)
                 + rng.normal(size=(h, w)))
        gray = np.clip(0.5 + 0.18 * field, 0.0, 1.0)

        logits = (spec.snr_categorical * sign * _APOE_PREF
                  + spec.redundancy * z[0] * _APOE_MIX)
        p = np.exp(logits - logits.max())
        p /= p.sum()
        apoe = int(rng.choice(len(p), p=p))
        sex = int(rng.integers(0, 2))

        labels[i] = y
        numerics[i] = num.astype(np.float32)
        images[i] = np.repeat(gray[:, :, None], 3, axis=2).astype(np.float32)
        cats[i] = (apoe, sex)

    return Dataset(images=images, numerics=numerics, categoricals=cats, labels=labels)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------


def _class_shuffles(labels: np.ndarray, seed: int) -> list[np.ndarray]:
    """One seeded shuffle per class, shared by every fraction."""
    out = []
    for c in (0, 1):
        members = np.where(labels == c)[0]
        rng = counter_rng(seed, c, tag=_SPLIT_TAG)
        out.append(members[rng.permutation(members.size)])
    return out


def _stratified_prefix(shuffles: list[np.ndarray], fraction: float, n: int) -> np.ndarray:
    """Largest-remainder per-class prefix take summing to round(fraction*n)."""
    total = int(np.floor(fraction * n + 0.5))
    exact = [fraction * s.size for s in shuffles]
    take = [int(np.floor(e)) for e in exact]
    remainders = [e - t for e, t in zip(exact, take)]
    short = total - sum(take)
    for c in sorted(range(len(take)), key=lambda c: (-remainders[c], c))[:max(0, short)]:
        take[c] += 1
    return np.sort(np.concatenate([s[:t] for s, t in zip(shuffles, take)]))


def subset_fraction(ds: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """Stratified sample without replacement of round(fraction*n) records.

    Per-class takes come from a prefix of one shared shuffle, so subsets
    of the same dataset and seed nest as the fraction grows.
    """
    fraction = float(fraction)
    if not (0.0 < fraction <= 1.0):
        raise InputError(f"fraction must lie in (0, 1], got {fraction}")
    shuffles = _class_shuffles(ds.labels, seed)
    chosen = _stratified_prefix(shuffles, fraction, len(ds))
    kept = ds.labels[chosen]
    for c, members in enumerate(shuffles):
        if members.size > 0 and not np.any(kept == c):
            raise InputError(f"fraction {fraction} leaves class {c} empty")
    return ds.take(chosen)


def holdout_split(ds: Dataset, eval_fraction: float = 0.2,
                  seed: int = 0) -> tuple[Dataset, Dataset]:
    """Stratified (train, eval) split; eval takes `eval_fraction`."""
    check_unit_interval(eval_fraction, "eval_fraction")
    shuffles = _class_shuffles(ds.labels, seed)
    eval_idx = _stratified_prefix(shuffles, eval_fraction, len(ds))
    mask = np.ones(len(ds), dtype=bool)
    mask[eval_idx] = False
    return ds.take(np.where(mask)[0]), ds.take(eval_idx)


def kfold_split(ds: Dataset, folds: int = 5, seed: int = 0
                ) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold (train_idx, val_idx) pairs; fold sizes differ <= 1."""
    folds = check_positive_int(folds, "folds")
    n = len(ds)
    if folds < 2:
        raise InputError(f"folds must be >= 2, got {folds}")
    if folds > n:
        raise InputError(f"folds={folds} exceeds dataset size {n}")
    fold_of = np.empty(n, dtype=np.int64)
    offset = 0
    for shuffled in _class_shuffles(ds.labels, seed):
        fold_of[shuffled] = (np.arange(shuffled.size) + offset) % folds
        offset += shuffled.size % folds
    splits = []
    for f in range(folds):
        val = np.where(fold_of == f)[0]
        train = np.where(fold_of != f)[0]
        splits.append((train, val))
    return splits


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _read_exact(f: io.BufferedReader, nbytes: int) -> bytes:
    buf = f.read(nbytes)
    if len(buf) != nbytes:
        raise IOError(f"truncated file: wanted {nbytes} bytes, got {len(buf)}")
    return buf


def file_size_for(n: int, h: int, w: int) -> int:
    """Exact on-disk size for n records of (h, w) images."""
    header = len(MAGIC) + 1 + 5 * 4
    per_record = h * w * 3 * 4 + NUMERIC_FIELDS * 4 + len(CATEGORICAL_VOCAB) + 1
    return header + n * per_record


def save_dataset(ds: Dataset, path) -> None:
    n = len(ds)
    h, w = ds.image_hw
    head = np.array([n, h, w, NUMERIC_FIELDS, len(CATEGORICAL_VOCAB)], dtype="<u4")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([VERSION]))
        f.write(head.tobytes())
        f.write(np.ascontiguousarray(ds.images, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(ds.numerics, dtype="<f4").tobytes())
        f.write(np.ascontiguousarray(ds.categoricals, dtype=np.uint8).tobytes())
        f.write(np.ascontiguousarray(ds.labels, dtype=np.uint8).tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC)) != MAGIC:
            raise FormatError(f"{path}: bad magic, not a dataset file")
        version = _read_exact(f, 1)[0]
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        n, h, w, n_num, n_cat = np.frombuffer(_read_exact(f, 20), dtype="<u4")
        if n_num != NUMERIC_FIELDS or n_cat != len(CATEGORICAL_VOCAB):
            raise FormatError(f"{path}: unexpected field counts ({n_num}, {n_cat})")
        images = np.frombuffer(_read_exact(f, int(n) * h * w * 3 * 4), dtype="<f4")
        images = images.reshape(int(n), int(h), int(w), 3).copy()
        numerics = np.frombuffer(_read_exact(f, int(n) * int(n_num) * 4), dtype="<f4")
        numerics = numerics.reshape(int(n), int(n_num)).copy()
        cats = np.frombuffer(_read_exact(f, int(n) * int(n_cat)), dtype=np.uint8)
        cats = cats.reshape(int(n), int(n_cat)).copy()
        labels = np.frombuffer(_read_exact(f, int(n)), dtype=np.uint8).copy()
        if f.read(1) != b"":
            raise FormatError(f"{path}: trailing bytes after payload")
    for c, vocab in enumerate(CATEGORICAL_VOCAB):
        if cats.shape[0] and cats[:, c].max() >= vocab:
            raise FormatError(f"{path}: categorical field {c} out of vocabulary")
    if labels.size and labels.max() > 1:
        raise FormatError(f"{path}: labels must be binary")
    return Dataset(images=images, numerics=numerics, categoricals=cats, labels=labels)
