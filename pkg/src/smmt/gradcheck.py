"""Central finite-difference check of tape gradients."""

from collections.abc import Callable, Iterable

import numpy as np

from .errors import NumericError
from .tensor import GradTape, ParameterStore, Tensor


def _loss_value(f: Callable[[], Tensor]) -> float:
    value = float(f().data)
    if not np.isfinite(value):
        raise NumericError("objective returned a non-finite value")
    return value


def finite_diff_gradcheck(
    f: Callable[[], Tensor],
    store: ParameterStore,
    h: float = 1e-5,
    param_names: Iterable[str] | None = None,
) -> float:
    """Max over parameter elements of |g_tape - g_fd| / max(1, |g_fd|).

    `f` must recompute a scalar loss from the store's current values each
    call; it runs once under a tape for analytic gradients and twice per
    element for the central difference. Parameters are restored afterwards.
    """
    names = list(param_names) if param_names is not None else store.names()
    with GradTape() as tape:
        loss = f()
    analytic = tape.gradients(loss, {n: store[n] for n in names})

    worst = 0.0
    for name in names:
        original = store[name]
        flat = original.data.reshape(-1)
        g_fd = np.empty(flat.size)
        for i in range(flat.size):
            for sign, slot in ((+1.0, 0), (-1.0, 1)):
                bumped = flat.copy()
                bumped[i] += sign * h
                store.replace(name, Tensor(bumped.reshape(original.shape)))
                if slot == 0:
                    f_plus = _loss_value(f)
                else:
                    f_minus = _loss_value(f)
            g_fd[i] = (f_plus - f_minus) / (2.0 * h)
        store.replace(name, original)
        g_an = analytic[name].reshape(-1)
        rel = np.abs(g_an - g_fd) / np.maximum(1.0, np.abs(g_fd))
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst
