"""Counter-based RNG streams (Philox) for order-independent determinism."""

import threading

import numpy as np

from .errors import InputError

_local = threading.local()


def _generator() -> np.random.Generator:
    # constructing Philox pulls OS entropy even with an explicit key, so
    # keep one per thread and rewrite its state per draw
    if not hasattr(_local, "gen"):
        bitgen = np.random.Philox(key=0)
        _local.bitgen = bitgen
        _local.gen = np.random.Generator(bitgen)
        _local.template = bitgen.state
    return _local.gen


def counter_rng(seed: int, words=(), tag: int = 0) -> np.random.Generator:
    """Generator keyed by (seed, tag) with the counter set from `words`.

    Same (seed, tag, words) always gives the same stream, independent of
    how many other streams were drawn before it. The returned generator
    is only valid until the next counter_rng call on this thread.
    """
    if isinstance(words, (int, np.integer)):
        words = (words,)
    parts = [int(w) % 2**64 for w in words]
    if len(parts) > 4:
        raise InputError("at most 4 counter words")
    counter = np.zeros(4, dtype=np.uint64)
    counter[: len(parts)] = parts
    gen = _generator()
    state = dict(_local.template)
    state["state"] = {
        "counter": counter,
        "key": np.array([int(seed) % 2**64, int(tag) % 2**64], dtype=np.uint64),
    }
    state["buffer"] = np.zeros(4, dtype=np.uint64)
    state["buffer_pos"] = 4
    state["has_uint32"] = 0
    state["uinteger"] = 0
    _local.bitgen.state = state
    return gen
