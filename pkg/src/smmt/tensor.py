"""Dense float64 tensors with a recorded gradient tape.

Just enough machinery for the layers in this package: 2-D matmul, row
softmax, elementwise ops, gathers for embeddings and image patches, and
grouped pooling. Arrays are immutable after construction, so tensors are
safe to share read-only; gradients live in a separate transient slot that
only the tape writes.

The tape is an explicit list of backward closures appended during the
forward pass. `GradTape.gradients` replays them in exact reverse order,
so every trainable parameter ends the pass with exactly one accumulated
gradient and there is no graph search. A tape is single-use.
"""

from collections.abc import Callable, Sequence

import numpy as np

from .errors import DimensionError, InputError, NumericError

__all__ = [
    "Tensor",
    "GradTape",
    "ParameterStore",
    "apply_op",
    "matmul",
    "add",
    "add_rowvec",
    "mul_const",
    "mul_elem",
    "scale",
    "relu",
    "softmax_rows",
    "cross_entropy",
    "take_rows",
    "concat_cols",
    "reshape",
    "group_mean_rows",
    "sum_all",
]


class Tensor:
    """Shape + row-major float64 data. Read-only once built."""

    __slots__ = ("data", "requires_grad", "grad", "_on_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64, order="C")
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._on_tape = False

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        """Take ownership of a freshly computed array without copying."""
        t = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t._on_tape = False
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _wants_grad(t: Tensor) -> bool:
    return t.requires_grad or t._on_tape


def _accumulate(t: Tensor, g: np.ndarray, tape: "GradTape") -> None:
    if t.grad is None:
        t.grad = np.zeros(t.shape, dtype=np.float64)
        tape._touched.append(t)
    t.grad += g


_ACTIVE_TAPE: "GradTape | None" = None


class GradTape:
    """Records backward closures in forward order; replays them reversed."""

    def __init__(self):
        self._ops: list[Callable[[], None]] = []
        self._touched: list[Tensor] = []
        self._used = False

    def __enter__(self) -> "GradTape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a GradTape is already active; tapes do not nest")
        if self._used:
            raise RuntimeError("GradTape is single-use; create a fresh tape")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def record(self, backward: Callable[[], None]) -> None:
        self._ops.append(backward)

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss)=1 and run the closures in reverse order."""
        if self._used:
            raise RuntimeError("GradTape already replayed")
        if loss.size != 1:
            raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
        self._used = True
        loss.grad = np.ones(loss.shape, dtype=np.float64)
        self._touched.append(loss)
        for fn in reversed(self._ops):
            fn()

    def gradients(self, loss: Tensor, params) -> dict[str, np.ndarray]:
        """Backward pass, then one gradient array per named parameter.

        `params` is a ParameterStore or a name->Tensor mapping. Parameters
        the loss never touched get zero gradients. Clears all transient
        grad slots before returning, so the tape leaves no residue.
        """
        items = params.items() if hasattr(params, "items") else params
        self.backward(loss)
        out = {}
        for name, t in dict(items).items():
            out[name] = t.grad.copy() if t.grad is not None else np.zeros(t.shape)
        for t in self._touched:
            t.grad = None
        self._touched.clear()
        self._ops.clear()
        return out


class ParameterStore:
    """Registry of named trainable tensors.

    The store is the single owner of parameters: layers keep names, not
    tensors, and the optimizer rebinds entries with fresh tensors since
    tensor data is immutable.
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, array) -> Tensor:
        if name in self._params:
            raise InputError(f"parameter {name!r} already registered")
        t = Tensor(array, requires_grad=True)
        self._params[name] = t
        return t

    def replace(self, name: str, tensor: Tensor) -> None:
        if name not in self._params:
            raise InputError(f"unknown parameter {name!r}")
        if tensor.shape != self._params[name].shape:
            raise DimensionError(
                f"parameter {name!r}: shape {tensor.shape} != {self._params[name].shape}"
            )
        tensor.requires_grad = True
        self._params[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self._params.items()}

    def size(self) -> int:
        return sum(t.size for t in self._params.values())


def apply_op(
    inputs: Sequence[Tensor],
    out_data: np.ndarray,
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    """Build an op result and register its backward closure.

    `backward` maps the upstream gradient to one gradient per input (None
    for inputs that need none). Recording only happens when a tape is
    active and some input participates in differentiation.
    """
    out = Tensor._wrap(out_data)
    tape = _ACTIVE_TAPE
    if tape is None or not any(_wants_grad(t) for t in inputs):
        return out
    out._on_tape = True

    def run() -> None:
        g = out.grad
        if g is None:
            return
        grads = backward(g)
        for t, gin in zip(inputs, grads):
            if gin is not None and _wants_grad(t):
                _accumulate(t, gin, tape)

    tape.record(run)
    return out


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Standard (m,k)@(k,p) product."""
    A, B = _as_tensor(a), _as_tensor(b)
    if A.ndim != 2 or B.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {A.shape} and {B.shape}")
    if A.shape[1] != B.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {A.shape} vs {B.shape}")

    def bwd(g):
        # skip the side nobody differentiates; it can be the big one
        ga = g @ B.data.T if _wants_grad(A) else None
        gb = A.data.T @ g if _wants_grad(B) else None
        return ga, gb

    return apply_op((A, B), A.data @ B.data, bwd)


def add(a, b) -> Tensor:
    A, B = _as_tensor(a), _as_tensor(b)
    if A.shape != B.shape:
        raise DimensionError(f"add shapes differ: {A.shape} vs {B.shape}")
    return apply_op((A, B), A.data + B.data, lambda g: (g, g))


def add_rowvec(x, v) -> Tensor:
    """(n,d) + (d,) bias broadcast over rows."""
    X, V = _as_tensor(x), _as_tensor(v)
    if X.ndim != 2 or V.ndim != 1 or X.shape[1] != V.shape[0]:
        raise DimensionError(f"add_rowvec: {X.shape} incompatible with {V.shape}")
    return apply_op((X, V), X.data + V.data, lambda g: (g, g.sum(axis=0)))


def mul_const(x, c) -> Tensor:
    """Elementwise product with a non-differentiable constant array/scalar."""
    X = _as_tensor(x)
    carr = np.asarray(c, dtype=np.float64)
    if carr.ndim and carr.shape != X.shape:
        raise DimensionError(f"mul_const: {X.shape} incompatible with {carr.shape}")
    return apply_op((X,), X.data * carr, lambda g: (g * carr,))


def mul_elem(a, b) -> Tensor:
    A, B = _as_tensor(a), _as_tensor(b)
    if A.shape != B.shape:
        raise DimensionError(f"mul_elem shapes differ: {A.shape} vs {B.shape}")
    return apply_op((A, B), A.data * B.data, lambda g: (g * B.data, g * A.data))


def scale(x, c: float) -> Tensor:
    return mul_const(x, float(c))


def relu(x) -> Tensor:
    X = _as_tensor(x)
    mask = X.data > 0.0
    return apply_op((X,), np.where(mask, X.data, 0.0), lambda g: (g * mask,))


def softmax_rows(m) -> Tensor:
    """Row-wise softmax with max subtraction; each row sums to 1."""
    M = _as_tensor(m)
    if M.ndim != 2:
        raise DimensionError(f"softmax_rows needs a 2-D input, got {M.shape}")
    if not np.all(np.isfinite(M.data)):
        raise NumericError("softmax_rows input contains NaN or Inf")
    z = M.data - M.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return apply_op((M,), p, bwd)


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-softmax of the true class over a (b,c) batch."""
    L = _as_tensor(logits)
    if L.ndim != 2:
        raise DimensionError(f"cross_entropy needs (b, classes) logits, got {L.shape}")
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != L.shape[0]:
        raise DimensionError(f"labels shape {y.shape} does not match logits {L.shape}")
    if y.size == 0:
        raise InputError("cross_entropy needs at least one row")
    if not np.issubdtype(y.dtype, np.integer):
        raise InputError("labels must be integer class ids")
    if y.min() < 0 or y.max() >= L.shape[1]:
        raise InputError(f"label out of range [0, {L.shape[1]})")
    b = L.shape[0]
    z = L.data - L.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1)) + L.data.max(axis=1)
    loss = float(np.mean(logsumexp - L.data[np.arange(b), y]))

    def bwd(g):
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(b), y] -= 1.0
        return (float(g) * p / b,)

    return apply_op((L,), np.float64(loss), bwd)


def take_rows(x, idx) -> Tensor:
    """Row gather; backward scatter-adds, so repeated indices accumulate."""
    X = _as_tensor(x)
    ii = np.asarray(idx, dtype=np.int64)
    if ii.ndim != 1:
        raise DimensionError(f"take_rows index must be 1-D, got {ii.shape}")
    if ii.size and (ii.min() < 0 or ii.max() >= X.shape[0]):
        raise InputError(f"row index out of range [0, {X.shape[0]})")

    def bwd(g):
        gx = np.zeros(X.shape, dtype=np.float64)
        np.add.at(gx, ii, g)
        return (gx,)

    return apply_op((X,), X.data[ii], bwd)


def concat_cols(parts: Sequence) -> Tensor:
    """Horizontal concat of (n, d_i) blocks."""
    ts = [_as_tensor(p) for p in parts]
    if not ts:
        raise InputError("concat_cols needs at least one block")
    rows = ts[0].shape[0]
    if any(t.ndim != 2 or t.shape[0] != rows for t in ts):
        raise DimensionError("concat_cols blocks must be 2-D with equal row counts")
    widths = [t.shape[1] for t in ts]
    edges = np.cumsum([0] + widths)

    def bwd(g):
        return [g[:, edges[i]:edges[i + 1]] for i in range(len(ts))]

    return apply_op(ts, np.concatenate([t.data for t in ts], axis=1), bwd)


def reshape(x, new_shape: tuple[int, ...]) -> Tensor:
    X = _as_tensor(x)
    if int(np.prod(new_shape)) != X.size:
        raise DimensionError(f"cannot reshape {X.shape} to {new_shape}")
    return apply_op((X,), X.data.reshape(new_shape), lambda g: (g.reshape(X.shape),))


def group_mean_rows(x, groups: Sequence[np.ndarray]) -> Tensor:
    """Mean of each row group: (n,d) -> (len(groups), d)."""
    X = _as_tensor(x)
    if X.ndim != 2:
        raise DimensionError(f"group_mean_rows needs a 2-D input, got {X.shape}")
    idx = [np.asarray(g, dtype=np.int64) for g in groups]
    if any(g.size == 0 for g in idx):
        raise InputError("empty row group")
    out = np.empty((len(idx), X.shape[1]), dtype=np.float64)
    for i, g in enumerate(idx):
        out[i] = X.data[g].mean(axis=0)

    def bwd(g):
        gx = np.zeros(X.shape, dtype=np.float64)
        for i, gi in enumerate(idx):
            gx[gi] += g[i] / gi.size
        return (gx,)

    return apply_op((X,), out, bwd)


def sum_all(x) -> Tensor:
    X = _as_tensor(x)
    return apply_op((X,), np.float64(X.data.sum()),
                    lambda g: (np.full(X.shape, float(g)),))
