"""Input validation helpers used at public API boundaries."""

import numpy as np

from .errors import DimensionError, InputError, NumericError


def as_matrix(x, name: str = "x") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting anything else."""
    arr = np.asarray(getattr(x, "data", x), dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains NaN or Inf")
    return arr


def check_positive_int(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)) or value < 1:
        raise InputError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_unit_interval(value: float, name: str) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0) or not np.isfinite(value):
        raise InputError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_labels(labels, num_classes: int = 2) -> np.ndarray:
    """Class-id vector: integer dtype, values in [0, num_classes)."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise DimensionError(f"labels must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise InputError("labels must be integers")
    arr = arr.astype(np.int64, copy=False)
    if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
        raise InputError(f"labels must lie in [0, {num_classes}), got range "
                         f"[{arr.min()}, {arr.max()}]")
    return arr
