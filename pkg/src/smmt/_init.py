"""Weight initialization helpers."""

import numpy as np


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def normal_init(rng: np.random.Generator, shape: tuple[int, ...],
                std: float = 0.02) -> np.ndarray:
    return rng.normal(0.0, std, size=shape)
