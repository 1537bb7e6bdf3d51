"""Training loop, evaluation, and the experiment grids.

The ablation grid trains {full, wo_sparse, wo_masking, neither} at each
dataset fraction, several seeds per cell; the masking sweep varies the
mask ratio with everything else held fixed. Both emit rows in one fixed
CSV schema so downstream tooling never guesses at headers.
"""

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, subset_fraction
from .errors import InputError, NumericError, TrainingError
from .flops import FlopCounter
from .metrics import MetricsReport, compute_metrics
from .model import SmmtConfig, SmmtModel
from .optim import Adam
from .tensor import GradTape
from .validation import check_positive_int

RUN_CSV_HEADER = ("variant", "fraction", "seed", "accuracy", "precision", "recall",
                  "specificity", "f1", "auc", "train_seconds", "attn_flops")

ABLATION_VARIANTS = (
    ("full", True, True),
    ("wo_sparse", False, True),
    ("wo_masking", True, False),
    ("neither", False, False),
)

DEFAULT_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_RATIOS = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    folds: int = 5

    def __post_init__(self):
        check_positive_int(self.batch_size, "batch_size")
        check_positive_int(self.folds, "folds")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_accuracy: float
    val_accuracy: float | None = None


@dataclass
class TrainResult:
    model: SmmtModel
    history: list[EpochStats]
    train_seconds: float
    attn_flops: int
    clustering_flops: int

    @property
    def best_val_accuracy(self) -> float | None:
        vals = [h.val_accuracy for h in self.history if h.val_accuracy is not None]
        return max(vals) if vals else None


def train(cfg: SmmtConfig, tc: TrainConfig, ds: Dataset,
          val_ds: Dataset | None = None) -> TrainResult:
    """Seeded mini-batch Adam training; bitwise reproducible per seed."""
    n = len(ds)
    if n == 0:
        raise InputError("training dataset is empty")
    model = SmmtModel(cfg)
    model.fit_normalization(ds)
    adam = Adam(model.store, lr=tc.lr)
    shuffle_rng = np.random.default_rng(tc.seed)
    flops = FlopCounter()
    history: list[EpochStats] = []
    step = 0
    started = time.perf_counter()
    for epoch in range(tc.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        correct = 0
        for lo in range(0, n, tc.batch_size):
            batch = ds.batch(order[lo:lo + tc.batch_size])
            try:
                with GradTape() as tape:
                    loss, logits = model.loss(batch, mode="train", step=step,
                                              flops=flops)
            except NumericError as exc:
                raise TrainingError(f"non-finite values at epoch {epoch}",
                                    epoch=epoch) from exc
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            grads = tape.gradients(loss, model.store)
            adam.step(grads)
            epoch_loss += value * batch.size
            correct += int((logits.data.argmax(axis=1) == batch.labels).sum())
            step += 1
        val_acc = evaluate(model, val_ds).accuracy if val_ds is not None else None
        history.append(EpochStats(epoch=epoch, loss=epoch_loss / n,
                                  train_accuracy=correct / n, val_accuracy=val_acc))
    return TrainResult(model=model, history=history,
                       train_seconds=time.perf_counter() - started,
                       attn_flops=flops.total, clustering_flops=flops.clustering)


def evaluate(model: SmmtModel, ds: Dataset, batch_size: int = 64) -> MetricsReport:
    """Eval-mode predictions over the dataset, scored against its labels."""
    n = len(ds)
    if n == 0:
        raise InputError("evaluation dataset is empty")
    preds = np.empty(n, dtype=np.int64)
    scores = np.empty(n, dtype=np.float64)
    for lo in range(0, n, batch_size):
        idx = np.arange(lo, min(lo + batch_size, n))
        ids, p1 = model.predict(ds.batch(idx))
        preds[idx] = ids
        scores[idx] = p1
    return compute_metrics(ds.labels.astype(np.int64), preds, scores)


@dataclass
class RunRow:
    variant: str
    fraction: float
    seed: int
    metrics: MetricsReport
    train_seconds: float
    attn_flops: int

    def as_csv(self) -> list:
        m = self.metrics
        return [self.variant, self.fraction, self.seed,
                f"{m.accuracy:.6f}", f"{m.precision:.6f}", f"{m.recall:.6f}",
                f"{m.specificity:.6f}", f"{m.f1:.6f}", f"{m.auc:.6f}",
                f"{self.train_seconds:.3f}", self.attn_flops]


@dataclass
class GridCell:
    variant: str
    fraction: float
    accuracy: float
    train_seconds: float
    attn_flops: float
    runs: int


@dataclass
class ExperimentResult:
    rows: list[RunRow] = field(default_factory=list)
    grid: list[GridCell] = field(default_factory=list)

    def cell(self, variant: str, fraction: float) -> GridCell:
        for c in self.grid:
            if c.variant == variant and abs(c.fraction - fraction) < 1e-12:
                return c
        raise KeyError((variant, fraction))


def _run_one(cfg: SmmtConfig, tc: TrainConfig, train_ds: Dataset, eval_ds: Dataset,
             variant: str, fraction: float, seed: int) -> RunRow:
    result = train(cfg, tc, train_ds)
    report = evaluate(result.model, eval_ds)
    return RunRow(variant=variant, fraction=fraction, seed=seed, metrics=report,
                  train_seconds=result.train_seconds, attn_flops=result.attn_flops)


def _variant_config(base: SmmtConfig, use_sparse: bool, use_mask: bool,
                    seed: int, ratio: float | None = None) -> SmmtConfig:
    mask = replace(base.mask, seed=seed)
    if ratio is not None:
        mask = replace(mask, ratio=ratio)
    return replace(base, use_sparse=use_sparse, use_mask=use_mask,
                   mask=mask, seed=seed)


def _aggregate(rows: list[RunRow]) -> list[GridCell]:
    cells: dict[tuple[str, float], list[RunRow]] = {}
    for r in rows:
        cells.setdefault((r.variant, r.fraction), []).append(r)
    return [GridCell(variant=v, fraction=f,
                     accuracy=float(np.mean([r.metrics.accuracy for r in rs])),
                     train_seconds=float(np.mean([r.train_seconds for r in rs])),
                     attn_flops=float(np.mean([r.attn_flops for r in rs])),
                     runs=len(rs))
            for (v, f), rs in cells.items()]


def ablation_run(cfg: SmmtConfig, tc: TrainConfig, train_ds: Dataset,
                 eval_ds: Dataset, fractions=DEFAULT_FRACTIONS,
                 runs: int = 5) -> ExperimentResult:
    """variant x fraction grid; each cell averages `runs` seeded trainings.

    The subset at each fraction is fixed (seeded by tc.seed), so variants
    compete on identical records; per-run seeds offset from tc.seed.
    """
    check_positive_int(runs, "runs")
    rows: list[RunRow] = []
    for fraction in fractions:
        sub = subset_fraction(train_ds, fraction, seed=tc.seed)
        for variant, use_sparse, use_mask in ABLATION_VARIANTS:
            for i in range(runs):
                seed = tc.seed + i
                vcfg = _variant_config(cfg, use_sparse, use_mask, seed)
                vtc = replace(tc, seed=seed)
                rows.append(_run_one(vcfg, vtc, sub, eval_ds, variant,
                                     float(fraction), seed))
    return ExperimentResult(rows=rows, grid=_aggregate(rows))


def masking_sweep(cfg: SmmtConfig, tc: TrainConfig, train_ds: Dataset,
                  eval_ds: Dataset, ratios=DEFAULT_RATIOS, runs: int = 5,
                  fraction: float = 1.0) -> ExperimentResult:
    """Accuracy as a function of the mask ratio, seeds averaged.

    Ratio 0.0 reproduces the wo_masking ablation cell exactly under the
    same seeds: an all-ones mask is a bitwise no-op on the forward pass.
    """
    check_positive_int(runs, "runs")
    sub = subset_fraction(train_ds, fraction, seed=tc.seed)
    rows: list[RunRow] = []
    for ratio in ratios:
        for i in range(runs):
            seed = tc.seed + i
            vcfg = _variant_config(cfg, cfg.use_sparse, True, seed, ratio=float(ratio))
            vtc = replace(tc, seed=seed)
            rows.append(_run_one(vcfg, vtc, sub, eval_ds, f"r{ratio:.1f}",
                                 float(fraction), seed))
    return ExperimentResult(rows=rows, grid=_aggregate(rows))


def write_rows_csv(path, rows: list[RunRow]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RUN_CSV_HEADER)
        for row in rows:
            writer.writerow(row.as_csv())


def write_grid_csv(path, grid: list[GridCell]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("variant", "fraction", "mean_accuracy",
                         "mean_train_seconds", "mean_attn_flops", "runs"))
        for c in grid:
            writer.writerow((c.variant, c.fraction, f"{c.accuracy:.6f}",
                             f"{c.train_seconds:.3f}", f"{c.attn_flops:.1f}", c.runs))
