"""Bernoulli feature masking, applied during training only.

Each mask entry is independently 1 with probability 1-r and the masked
input is a plain elementwise product: no inverted-dropout rescaling at
train time and no compensation at eval, so a model trained with masking
sees a train/eval scale mismatch by design. Draws are counter-based
(Philox keyed by seed and draw id), so any (seed, draw_id) pair gives
the same mask regardless of call order.
"""

from dataclasses import dataclass

import numpy as np

from ._rng import counter_rng
from .errors import DimensionError, InputError
from .tensor import Tensor, mul_const
from .validation import check_positive_int, check_unit_interval


@dataclass
class MaskConfig:
    ratio: float = 0.3
    seed: int = 0
    granularity: str = "per-dimension"

    def __post_init__(self):
        check_unit_interval(self.ratio, "mask ratio")
        if self.granularity != "per-dimension":
            raise InputError(f"unsupported mask granularity {self.granularity!r}")


def sample_mask(length: int, cfg: MaskConfig, draw_id=0) -> np.ndarray:
    """0/1 vector; entry i is 1 with probability 1 - ratio.

    draw_id may be an int or a tuple of up to four ints; together with
    cfg.seed it fully determines the draw.
    """
    check_positive_int(length, "mask length")
    rng = counter_rng(cfg.seed, draw_id)
    return (rng.random(length) < 1.0 - cfg.ratio).astype(np.float64)


def apply_mask(x, m) -> Tensor:
    """x ⊙ m. 1-D x needs len(m)==len(x); 2-D x broadcasts m across rows."""
    xt = x if isinstance(x, Tensor) else Tensor(x)
    mv = np.asarray(m, dtype=np.float64)
    if mv.ndim != 1:
        raise DimensionError(f"mask must be a vector, got shape {mv.shape}")
    if xt.ndim == 1:
        if mv.shape[0] != xt.shape[0]:
            raise DimensionError(f"mask length {mv.shape[0]} != input length {xt.shape[0]}")
        return mul_const(xt, mv)
    if xt.ndim == 2:
        if mv.shape[0] != xt.shape[1]:
            raise DimensionError(f"mask length {mv.shape[0]} != feature width {xt.shape[1]}")
        return mul_const(xt, np.broadcast_to(mv, xt.shape))
    raise DimensionError(f"apply_mask supports 1-D or 2-D inputs, got {xt.shape}")
