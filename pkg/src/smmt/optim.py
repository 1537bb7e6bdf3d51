"""Adam with bias correction over a ParameterStore."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .tensor import ParameterStore, Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
) -> dict[str, Tensor]:
    """One update; mutates the moment state, returns fresh parameter tensors."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    out: dict[str, Tensor] = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise DimensionError(
                f"gradient shape {g.shape} != parameter {name!r} shape {p.shape}"
            )
        if name not in state.m:
            state.m[name] = np.zeros(p.shape)
            state.v[name] = np.zeros(p.shape)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        denom = np.sqrt(v / bc2)
        denom += state.eps
        update = m * (state.lr / bc1)
        update /= denom
        out[name] = Tensor._wrap(p.data - update)
    return out


class Adam:
    """Convenience wrapper that rebinds a ParameterStore in place.

    Parameters are packed into one contiguous vector per step so the
    moment updates run as a handful of large array ops; the element math
    is identical to adam_step on the individual tensors.
    """

    def __init__(self, store: ParameterStore, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        self._layout: list[tuple[str, slice, tuple[int, ...]]] = []
        offset = 0
        for name, t in store.items():
            self._layout.append((name, slice(offset, offset + t.size), t.shape))
            offset += t.size

    def step(self, grads: dict[str, np.ndarray]) -> None:
        packed_g = np.concatenate(
            [np.asarray(grads[name], dtype=np.float64).ravel()
             for name, _, _ in self._layout])
        packed_p = np.concatenate(
            [self.store[name].data.ravel() for name, _, _ in self._layout])
        updated = adam_step(self.state, {"packed": Tensor._wrap(packed_p)},
                            {"packed": packed_g})["packed"]
        for name, sl, shape in self._layout:
            self.store.replace(name, Tensor._wrap(updated.data[sl].reshape(shape)))
