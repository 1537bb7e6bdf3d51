"""Binary classification metrics; positive class is 1 (AD)."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .validation import check_labels

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy<2 fallback


@dataclass
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionMatrix":
        t = check_labels(y_true)
        p = check_labels(y_pred)
        if t.shape != p.shape:
            raise InputError(f"label/prediction lengths differ: {t.shape} vs {p.shape}")
        return cls(
            tp=int(np.sum((t == 1) & (p == 1))),
            tn=int(np.sum((t == 0) & (p == 0))),
            fp=int(np.sum((t == 0) & (p == 1))),
            fn=int(np.sum((t == 1) & (p == 0))),
        )


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float          # sensitivity
    specificity: float
    f1: float
    auc: float
    confusion: ConfusionMatrix
    degenerate: tuple[str, ...] = field(default_factory=tuple)


def _rate(num: int, den: int, flag: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def roc_auc(y_true, scores) -> tuple[float, bool]:
    """Trapezoidal area under the ROC built from a threshold sweep.

    Returns (auc, degenerate); degenerate means one class is absent and
    the area is reported as 0.
    """
    t = check_labels(y_true)
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != t.shape:
        raise InputError(f"scores shape {s.shape} != labels shape {t.shape}")
    pos = int((t == 1).sum())
    neg = int((t == 0).sum())
    if pos == 0 or neg == 0:
        return 0.0, True
    order = np.argsort(-s, kind="stable")
    sorted_scores = s[order]
    sorted_true = t[order]
    cum_tp = np.cumsum(sorted_true == 1)
    cum_fp = np.cumsum(sorted_true == 0)
    # one operating point per distinct threshold (ties collapse together)
    boundary = np.nonzero(np.diff(sorted_scores))[0]
    cut = np.concatenate([boundary, [t.size - 1]])
    tpr = np.concatenate([[0.0], cum_tp[cut] / pos])
    fpr = np.concatenate([[0.0], cum_fp[cut] / neg])
    return float(_trapezoid(tpr, fpr)), False


def compute_metrics(y_true, y_pred, scores=None) -> MetricsReport:
    """Confusion counts plus the derived rates; AUC needs class-1 scores."""
    cm = ConfusionMatrix.from_predictions(y_true, y_pred)
    if cm.total == 0:
        raise InputError("cannot score an empty prediction set")
    flags: list[str] = []
    precision = _rate(cm.tp, cm.tp + cm.fp, "precision", flags)
    recall = _rate(cm.tp, cm.tp + cm.fn, "recall", flags)
    specificity = _rate(cm.tn, cm.tn + cm.fp, "specificity", flags)
    accuracy = (cm.tp + cm.tn) / cm.total
    if precision + recall == 0:
        flags.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    if scores is None:
        auc, degenerate_auc = 0.0, True
    else:
        auc, degenerate_auc = roc_auc(y_true, scores)
    if degenerate_auc:
        flags.append("auc")
    return MetricsReport(accuracy=accuracy, precision=precision, recall=recall,
                         specificity=specificity, f1=f1, auc=auc, confusion=cm,
                         degenerate=tuple(flags))
