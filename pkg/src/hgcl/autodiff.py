"""Dense reverse-mode differentiation over numpy float64 arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure propagating the upstream gradient back to them. ``backward`` walks
the recorded graph in reverse topological order.

Gradients on leaf tensors accumulate across ``backward`` calls until
:func:`zero_grad` (or ``Tensor.zero_grad``) resets them; intermediate
gradients are reset at the start of each call.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

_DEBUG = False


def set_debug(enabled: bool) -> None:
    """Check every op output for NaN/Inf as soon as it is produced."""
    global _DEBUG
    _DEBUG = bool(enabled)


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.op = "leaf"
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = self.name or self.op
        return f"Tensor({tag}, shape={self.data.shape})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str, backward) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    out.name = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._parents = tuple(parents) if out.requires_grad else ()
    out._backward = backward if out.requires_grad else None
    if _DEBUG and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"op '{op}' produced a non-finite value")
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    # never in place: ``g`` may be shared between several parents
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), "mul", backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        _accumulate(a, g * c)

    return _make(a.data * c, (a,), "scale", backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), "matmul", backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"transpose: expected a matrix, got shape {a.shape}")

    def backward(g):
        _accumulate(a, g.T)

    return _make(a.data.T.copy(), (a,), "transpose", backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), "reshape", backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Join along ``axis``; ``axis=1`` on matrices is the row-wise ``[x_i || y_i]``."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat: no inputs")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        shapes = [t.shape for t in tensors]
        raise ValueError(f"concat: incompatible shapes {shapes} along axis {axis}") from exc
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            _accumulate(t, piece)

    return _make(data, tensors, "concat", backward)


def row_concat(a: Tensor, b: Tensor) -> Tensor:
    return concat([a, b], axis=1)


def gather_rows(a: Tensor, index) -> Tensor:
    """``a[index]`` along the first axis; repeated indices accumulate gradient."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise IndexError(f"gather_rows: index out of range for {a.shape[0]} rows")

    def backward(g):
        scatter = sp.csr_matrix(
            (np.ones(index.size), (index, np.arange(index.size))), shape=(a.shape[0], index.size)
        )
        flat = g.reshape(index.size, -1)
        _accumulate(a, np.asarray(scatter @ flat).reshape(a.shape))

    return _make(a.data[index], (a,), "gather_rows", backward)


# ---------------------------------------------------------------- reductions


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy
    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy())

    return _make(np.asarray(a.data.sum(axis=axis)), (a,), "sum", backward)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / n)


def masked_mean_rows(a: Tensor, mask) -> Tensor:
    """Mean of the rows of ``a`` selected by the boolean ``mask``."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (a.shape[0],):
        raise ValueError(f"masked_mean_rows: mask shape {mask.shape} does not match {a.shape[0]} rows")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("masked_mean_rows: mask selects no rows")
    w = mask.astype(np.float64) / count

    def backward(g):
        _accumulate(a, np.multiply.outer(w, g))

    return _make(np.tensordot(w, a.data, axes=1), (a,), "masked_mean_rows", backward)


def _segment_lengths(indptr: np.ndarray, n: int, op: str) -> np.ndarray:
    indptr = np.asarray(indptr, dtype=np.int64)
    if indptr.ndim != 1 or indptr.size < 1 or indptr[0] != 0 or indptr[-1] != n:
        raise ValueError(f"{op}: segment boundaries must start at 0 and end at {n}")
    lengths = np.diff(indptr)
    if np.any(lengths < 0):
        raise ValueError(f"{op}: segment boundaries must be nondecreasing")
    return lengths


def segment_sum(values: Tensor, indptr) -> Tensor:
    """Sum consecutive row blocks ``values[indptr[s]:indptr[s+1]]``; empty blocks give zero rows."""
    n = values.shape[0]
    lengths = _segment_lengths(indptr, n, "segment_sum")
    agg = sp.csr_matrix(
        (np.ones(n), np.arange(n), np.asarray(indptr, dtype=np.int64)), shape=(lengths.size, n)
    )
    flat = values.data.reshape(n, -1)
    out = np.asarray(agg @ flat).reshape((lengths.size,) + values.shape[1:])
    seg_of_row = np.repeat(np.arange(lengths.size), lengths)

    def backward(g):
        _accumulate(values, g[seg_of_row])

    return _make(out, (values,), "segment_sum", backward)


def segment_softmax(logits: Tensor, indptr) -> Tensor:
    """Softmax of a 1-D logit vector computed independently within each segment."""
    if logits.data.ndim != 1:
        raise ValueError(f"segment_softmax: expected 1-D logits, got shape {logits.shape}")
    n = logits.shape[0]
    lengths = _segment_lengths(indptr, n, "segment_softmax")
    if lengths.size == 0 or np.any(lengths == 0):
        raise ValueError("segment_softmax: empty segment")
    starts = np.asarray(indptr[:-1], dtype=np.int64)
    shift = np.repeat(np.maximum.reduceat(logits.data, starts), lengths)
    e = np.exp(logits.data - shift)
    y = e / np.repeat(np.add.reduceat(e, starts), lengths)

    def backward(g):
        dot = np.repeat(np.add.reduceat(g * y, starts), lengths)
        _accumulate(logits, y * (g - dot))

    return _make(y, (logits,), "segment_softmax", backward)


def softmax(logits: Tensor) -> Tensor:
    return segment_softmax(logits, np.array([0, logits.shape[0]]))


# ---------------------------------------------------------------- pointwise


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * y)

    return _make(y, (a,), "exp", backward)


def log(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, g / a.data)

    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(a.data)
    return _make(y, (a,), "log", backward)


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    pos = a.data > 0
    y = np.where(pos, a.data, alpha * np.expm1(np.minimum(a.data, 0.0)))

    def backward(g):
        _accumulate(a, g * np.where(pos, 1.0, y + alpha))

    return _make(y, (a,), "elu", backward)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    pos = a.data > 0
    y = np.where(pos, a.data, slope * a.data)

    def backward(g):
        _accumulate(a, g * np.where(pos, 1.0, slope))

    return _make(y, (a,), "leaky_relu", backward)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - y * y))

    return _make(y, (a,), "tanh", backward)


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def backward(g):
        _accumulate(a, g * y * (1.0 - y))

    return _make(y, (a,), "sigmoid", backward)


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "elu": elu,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def activation(a: Tensor, kind: str) -> Tensor:
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; choose from {sorted(ACTIVATIONS)}") from None
    return fn(a)


def l2_normalize_rows(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"l2_normalize_rows: expected a matrix, got shape {a.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", a.data, a.data))[:, None]
    if np.any(norms == 0):
        bad = int(np.flatnonzero(norms[:, 0] == 0)[0])
        raise ValueError(f"l2_normalize_rows: row {bad} has zero norm")
    y = a.data / norms

    def backward(g):
        proj = np.einsum("ij,ij->i", g, y)[:, None]
        _accumulate(a, (g - y * proj) / norms)

    return _make(y, (a,), "l2_normalize_rows", backward)


# ---------------------------------------------------------------- backward


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor) -> None:
    """Populate ``.grad`` of every tensor that ``output`` depends on."""
    if output.data.size != 1:
        raise ValueError(f"backward: output must be a scalar, got shape {output.shape}")
    if not output.requires_grad:
        return
    order = _topo_order(output)
    for node in order:
        if not node.is_leaf:
            node.grad = None
    output.grad = np.ones_like(output.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def first_nonfinite_op(output: Tensor) -> str | None:
    """Name the earliest op in the recorded graph whose value is non-finite."""
    for node in _topo_order(output):
        if not np.all(np.isfinite(node.data)):
            if all(np.all(np.isfinite(p.data)) for p in node._parents):
                return node.name or node.op
    return None


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
