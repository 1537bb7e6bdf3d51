"""The cascaded multi-modal classifier.

Each modality is encoded into d-wide tokens and self-attended (sparse
over K-Means clusters of its head-0 queries when enabled). The cascade
then folds modalities into a running fused token stream: the first
modality initializes it, every later one is injected through
cross-attention with the fused stream as queries (a config flag swaps
the direction). In training mode with masking enabled, a fresh Bernoulli
mask zeroes feature dimensions of the fused stream after every cascade
step, per sample and per step. Fused tokens are mean-pooled per sample
and classified by a small ReLU MLP into two logits.

Checkpoints are self-describing: magic "SMMT1", a JSON config record,
then named parameter and buffer blobs (shape-prefixed little-endian
float64), which round-trip bit-exactly.
"""

import dataclasses
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ._init import glorot_uniform
from .attention import (BatchedCrossAttention, BatchedSelfAttention,
                        SparseAttentionFlags)
from .clustering import KMeansConfig, choose_cluster_count, kmeans_fit
from .data import CATEGORICAL_VOCAB, NUMERIC_FIELDS, ModalityBatch
from .encoders import CategoricalEncoder, ImagingEncoder, NumericEncoder
from .errors import DimensionError, FormatError, InputError
from .masking import MaskConfig, sample_mask
from .tensor import (ParameterStore, Tensor, add_rowvec, cross_entropy,
                     group_mean_rows, matmul, mul_const, relu, softmax_rows)

MODALITIES = ("categorical", "numeric", "imaging")
CHECKPOINT_MAGIC = b"SMMT1"


@dataclass
class SmmtConfig:
    d_model: int = 64
    heads: int = 4
    cascade_order: tuple[str, str, str] = MODALITIES
    use_sparse: bool = True
    use_mask: bool = True
    mask: MaskConfig = field(default_factory=MaskConfig)
    flags: SparseAttentionFlags = field(default_factory=SparseAttentionFlags)
    classifier_hidden: tuple[int, ...] | None = None  # None -> (d_model,)
    seed: int = 0
    image_hw: tuple[int, int] = (32, 32)
    conv_channels: tuple[int, int, int, int] = (8, 16, 32, 64)
    numeric_hidden: tuple[int, int] = (64, 64)
    tabular_tokens: str = "per_feature"  # or "single"
    cascade_repeats: int = 1
    residual: bool = True
    fused_queries: bool = True  # False: new modality queries the fused stream
    kmeans_iters: int = 10
    cluster_count_override: int | None = None

    def __post_init__(self):
        if sorted(self.cascade_order) != sorted(MODALITIES):
            raise InputError(
                f"cascade_order must be a permutation of {MODALITIES}, "
                f"got {self.cascade_order}")
        if self.d_model % self.heads != 0:
            raise DimensionError(
                f"heads={self.heads} must divide d_model={self.d_model}")
        if self.cascade_repeats < 1:
            raise InputError("cascade_repeats must be >= 1")
        if self.tabular_tokens not in ("per_feature", "single"):
            raise InputError(f"unknown tabular_tokens {self.tabular_tokens!r}")

    def resolved_classifier_hidden(self) -> tuple[int, ...]:
        return self.classifier_hidden if self.classifier_hidden else (self.d_model,)


class ForwardFreeze:
    """Captured cluster groups and masks from one forward pass.

    Capture once, then replay to hold the discrete choices fixed while
    parameters change (finite-difference checks need this).
    """

    def __init__(self):
        self.groups: list = []
        self.masks: list[np.ndarray] = []
        self.capturing = True
        self._gi = 0
        self._mi = 0

    def begin_replay(self) -> None:
        self.capturing = False
        self._gi = 0
        self._mi = 0

    def next_groups(self, compute):
        if self.capturing:
            self.groups.append(compute())
            return self.groups[-1]
        g = self.groups[self._gi]
        self._gi += 1
        return g

    def next_mask(self, compute) -> np.ndarray:
        if self.capturing:
            self.masks.append(compute())
            return self.masks[-1]
        m = self.masks[self._mi]
        self._mi += 1
        return m


class SmmtModel:
    """Holds the parameter store plus the layer graph built from config."""

    def __init__(self, config: SmmtConfig):
        self.config = config
        self.store = ParameterStore()
        rng = np.random.default_rng(config.seed)
        d, heads = config.d_model, config.heads

        self.encoders = {
            "imaging": ImagingEncoder(self.store, "enc.imaging", d, rng,
                                      hw=config.image_hw,
                                      channels=config.conv_channels),
            "numeric": NumericEncoder(self.store, "enc.numeric", d, rng,
                                      n_features=NUMERIC_FIELDS,
                                      hidden=config.numeric_hidden,
                                      granularity=config.tabular_tokens),
            "categorical": CategoricalEncoder(self.store, "enc.categorical", d, rng,
                                              vocab_sizes=CATEGORICAL_VOCAB,
                                              granularity=config.tabular_tokens),
        }
        self.self_attn = {
            mod: BatchedSelfAttention(self.store, f"self.{mod}", d, heads, rng,
                                      residual=config.residual)
            for mod in MODALITIES
        }
        # one cross layer per cascade position; position 0 only fires on repeats
        self.cross_attn = [
            BatchedCrossAttention(self.store, f"cross.step{i}", d, heads, rng,
                                  residual=config.residual)
            for i in range(len(MODALITIES))
        ]
        widths = [d, *config.resolved_classifier_hidden(), 2]
        self.classifier_depth = len(widths) - 1
        for i in range(self.classifier_depth):
            self.store.add(f"head.fc{i}.w", glorot_uniform(rng, (widths[i], widths[i + 1])))
            self.store.add(f"head.fc{i}.b", np.zeros(widths[i + 1]))

        self.buffers: dict[str, np.ndarray] = {
            "numeric_mean": np.zeros(NUMERIC_FIELDS),
            "numeric_std": np.ones(NUMERIC_FIELDS),
        }

    # -- plumbing ---------------------------------------------------------

    def parameter_count(self) -> int:
        return self.store.size()

    def fit_normalization(self, ds) -> None:
        """Standardize numeric scores with training-split statistics."""
        num = np.asarray(ds.numerics, dtype=np.float64)
        mean = num.mean(axis=0)
        std = num.std(axis=0)
        std[std == 0.0] = 1.0
        self.buffers["numeric_mean"] = mean
        self.buffers["numeric_std"] = std

    def _cluster_fn(self):
        cfg = self.config

        def fn(points: np.ndarray):
            k = (cfg.cluster_count_override
                 if cfg.cluster_count_override is not None
                 else choose_cluster_count(points.shape[0]))
            k = min(k, points.shape[0])
            return kmeans_fit(points, KMeansConfig(k=k, max_iters=cfg.kmeans_iters))

        return fn

    @staticmethod
    def _sample_groups(b: int, per_sample: int) -> list[np.ndarray]:
        base = np.arange(per_sample)
        return [base + s * per_sample for s in range(b)]

    # -- forward ----------------------------------------------------------

    def forward(self, batch: ModalityBatch, mode: str = "eval", *, step: int = 0,
                freeze: ForwardFreeze | None = None, flops=None) -> Tensor:
        if mode not in ("train", "eval"):
            raise InputError(f"mode must be 'train' or 'eval', got {mode!r}")
        b = batch.size
        if b == 0:
            raise InputError("empty batch")
        cfg = self.config
        if freeze is not None and not freeze.capturing:
            freeze.begin_replay()

        numerics = ((batch.numerics - self.buffers["numeric_mean"])
                    / self.buffers["numeric_std"])
        inputs = {
            "imaging": batch.images,
            "numeric": numerics,
            "categorical": batch.categoricals,
        }

        masking = mode == "train" and cfg.use_mask
        cluster_fn = self._cluster_fn() if cfg.use_sparse else None
        attended: dict[str, tuple[Tensor, list[np.ndarray]]] = {}

        def self_attend(mod: str) -> tuple[Tensor, list[np.ndarray]]:
            if mod not in attended:
                tokens = self.encoders[mod].forward(inputs[mod])
                groups = self._sample_groups(b, self.encoders[mod].tokens_per_sample)
                layer = self.self_attn[mod]
                compute = lambda: layer.compute_groups(tokens, groups, cluster_fn, flops)
                attn_groups = freeze.next_groups(compute) if freeze is not None else compute()
                out = layer.forward(tokens, attn_groups, sparse=cfg.use_sparse,
                                    flags=cfg.flags, flops=flops)
                attended[mod] = (out, groups)
            return attended[mod]

        def sample_masks(rep: int, mi: int, groups: list[np.ndarray]) -> np.ndarray:
            rows = sum(g.size for g in groups)
            m = np.empty((rows, cfg.d_model))
            for s, g in enumerate(groups):
                m[g] = sample_mask(cfg.d_model, cfg.mask,
                                   draw_id=(step, s, rep * 8 + mi))
            return m

        fused: Tensor | None = None
        fused_groups: list[np.ndarray] | None = None
        for rep in range(cfg.cascade_repeats):
            for mi, mod in enumerate(cfg.cascade_order):
                tokens, groups = self_attend(mod)
                if fused is None:
                    fused, fused_groups = tokens, groups
                else:
                    layer = self.cross_attn[mi]
                    if cfg.fused_queries:
                        fused = layer.forward(fused, tokens, fused_groups, groups,
                                              flops=flops)
                    else:
                        fused = layer.forward(tokens, fused, groups, fused_groups,
                                              flops=flops)
                        fused_groups = groups
                if masking:
                    draw = lambda r=rep, m=mi, g=fused_groups: sample_masks(r, m, g)
                    mask_rows = freeze.next_mask(draw) if freeze is not None else draw()
                    fused = mul_const(fused, mask_rows)

        pooled = group_mean_rows(fused, fused_groups)
        x = pooled
        for i in range(self.classifier_depth):
            x = add_rowvec(matmul(x, self.store[f"head.fc{i}.w"]),
                           self.store[f"head.fc{i}.b"])
            if i < self.classifier_depth - 1:
                x = relu(x)
        return x

    def loss(self, batch: ModalityBatch, mode: str = "train", *, step: int = 0,
             freeze: ForwardFreeze | None = None, flops=None):
        logits = self.forward(batch, mode, step=step, freeze=freeze, flops=flops)
        return cross_entropy(logits, batch.labels), logits

    def predict(self, batch: ModalityBatch) -> tuple[np.ndarray, np.ndarray]:
        """Eval-mode class ids (argmax; ties go to class 0) and P(class 1)."""
        logits = self.forward(batch, "eval")
        probs = softmax_rows(logits).data
        return logits.data.argmax(axis=1), probs[:, 1]

    def capture(self, batch: ModalityBatch, mode: str = "train",
                step: int = 0) -> ForwardFreeze:
        """Run one forward and record its clusters and masks for replay."""
        freeze = ForwardFreeze()
        self.forward(batch, mode, step=step, freeze=freeze)
        freeze.begin_replay()
        return freeze

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        blob = json.dumps(_config_to_jsonable(self.config), sort_keys=True).encode()
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(len(blob).to_bytes(4, "little"))
            f.write(blob)
            f.write(len(self.store).to_bytes(4, "little"))
            for name in self.store.names():
                _write_blob(f, name, self.store[name].data)
            f.write(len(self.buffers).to_bytes(4, "little"))
            for name in sorted(self.buffers):
                _write_blob(f, name, self.buffers[name])

    @classmethod
    def load(cls, path) -> "SmmtModel":
        with open(path, "rb") as f:
            if _read_exact(f, len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
                raise FormatError(f"{path}: bad magic, not a model checkpoint")
            cfg_len = int.from_bytes(_read_exact(f, 4), "little")
            config = _config_from_jsonable(json.loads(_read_exact(f, cfg_len)))
            model = cls(config)
            n_params = int.from_bytes(_read_exact(f, 4), "little")
            for _ in range(n_params):
                name, arr = _read_blob(f)
                if name not in model.store:
                    raise FormatError(f"{path}: unknown parameter {name!r}")
                if arr.shape != model.store[name].shape:
                    raise FormatError(f"{path}: parameter {name!r} has shape "
                                      f"{arr.shape}, expected {model.store[name].shape}")
                model.store.replace(name, Tensor(arr))
            n_buffers = int.from_bytes(_read_exact(f, 4), "little")
            for _ in range(n_buffers):
                name, arr = _read_blob(f)
                if name not in model.buffers:
                    raise FormatError(f"{path}: unknown buffer {name!r}")
                model.buffers[name] = arr
        return model


def _read_exact(f: io.BufferedReader, nbytes: int) -> bytes:
    buf = f.read(nbytes)
    if len(buf) != nbytes:
        raise IOError(f"truncated checkpoint: wanted {nbytes} bytes, got {len(buf)}")
    return buf


def _write_blob(f, name: str, arr: np.ndarray) -> None:
    encoded = name.encode()
    f.write(len(encoded).to_bytes(2, "little"))
    f.write(encoded)
    f.write(bytes([arr.ndim]))
    for extent in arr.shape:
        f.write(int(extent).to_bytes(4, "little"))
    f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_blob(f) -> tuple[str, np.ndarray]:
    name_len = int.from_bytes(_read_exact(f, 2), "little")
    name = _read_exact(f, name_len).decode()
    ndim = _read_exact(f, 1)[0]
    shape = tuple(int.from_bytes(_read_exact(f, 4), "little") for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(_read_exact(f, 8 * count), dtype="<f8")
    return name, data.reshape(shape).astype(np.float64)


def _config_to_jsonable(cfg: SmmtConfig) -> dict:
    return dataclasses.asdict(cfg)


def _config_from_jsonable(d: dict) -> SmmtConfig:
    d = dict(d)
    d["mask"] = MaskConfig(**d["mask"])
    d["flags"] = SparseAttentionFlags(**d["flags"])
    for key in ("cascade_order", "image_hw", "conv_channels", "numeric_hidden"):
        d[key] = tuple(d[key])
    if d.get("classifier_hidden") is not None:
        d["classifier_hidden"] = tuple(d["classifier_hidden"])
    return SmmtConfig(**d)
