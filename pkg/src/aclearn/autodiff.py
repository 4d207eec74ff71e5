"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every operation on a tensor that requires gradients records its inputs and a
backward rule. ``backward`` walks the recorded nodes in reverse creation
order (node ids increase monotonically, so creation order is a topological
order), accumulates gradients into the leaves and then consumes the record.

Broadcasting is deliberately limited to scalar-times-tensor; bias addition
has its own operation (``add_bias``).
"""

from __future__ import annotations

import itertools
import os
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError, RankError, StateError

_ids = itertools.count()
_debug = os.environ.get("ACLEARN_DEBUG", "") not in ("", "0")


def set_debug(enabled: bool) -> bool:
    """Toggle non-finite value checks on every operation; returns the old setting."""
    global _debug
    previous = _debug
    _debug = bool(enabled)
    return previous


def debug_enabled() -> bool:
    return _debug


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite value produced by {op}")


class Tensor:
    """An immutable float64 array that may take part in a recorded computation."""

    __slots__ = ("data", "requires_grad", "grad", "id", "op", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if any(extent < 1 for extent in arr.shape):
            raise DimensionError(f"tensor extents must be positive, got shape {arr.shape}")
        if _debug:
            _check_finite(arr, "tensor construction")
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.id = next(_ids)
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise RankError(f"item() needs a single value, shape is {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # operator sugar; every path goes through the module-level functions
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor division is only supported by a python scalar")
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def backward(self) -> dict[Tensor, np.ndarray]:
        return backward(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], rule, op: str) -> Tensor:
    if _debug:
        _check_finite(data, op)
    out = Tensor.__new__(Tensor)
    data = np.asarray(data, dtype=np.float64)
    data.flags.writeable = False
    out.data = data
    out.grad = None
    out.id = next(_ids)
    out.op = op
    out._consumed = False
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = rule
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _is_scalar(value) -> bool:
    if isinstance(value, Tensor):
        return value.ndim == 0
    return np.ndim(value) == 0


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def rule(g):
        return g @ bd.T, ad.T @ g

    return _result(ad @ bd, (a, b), rule, "matmul")


def add(a, b) -> Tensor:
    if not isinstance(a, Tensor) and _is_scalar(a):
        return add_scalar(b, float(a))
    if not isinstance(b, Tensor) and _is_scalar(b):
        return add_scalar(a, float(b))
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        if a.ndim == 0:
            return _scalar_tensor_add(b, a)
        if b.ndim == 0:
            return _scalar_tensor_add(a, b)
        _same_shape(a, b, "add")

    def rule(g):
        return g, g

    return _result(a.data + b.data, (a, b), rule, "add")


def _scalar_tensor_add(t: Tensor, s: Tensor) -> Tensor:
    def rule(g):
        return g, np.asarray(g.sum())

    return _result(t.data + s.data, (t, s), rule, "add")


def add_scalar(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)

    def rule(g):
        return (g,)

    return _result(a.data + c, (a,), rule, "add_scalar")


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor) and _is_scalar(b):
        return add_scalar(a, -float(b))
    if not isinstance(a, Tensor) and _is_scalar(a):
        return add_scalar(scale(b, -1.0), float(a))
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and (a.ndim == 0 or b.ndim == 0):
        return add(a, scale(b, -1.0))
    _same_shape(a, b, "sub")

    def rule(g):
        return g, -g

    return _result(a.data - b.data, (a, b), rule, "sub")


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor) and _is_scalar(a):
        return scale(b, float(a))
    if not isinstance(b, Tensor) and _is_scalar(b):
        return scale(a, float(b))
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if a.shape != b.shape:
        if a.ndim == 0 or b.ndim == 0:

            def srule(g):
                ga = g * bd
                gb = g * ad
                if a.ndim == 0:
                    ga = np.asarray(ga.sum())
                if b.ndim == 0:
                    gb = np.asarray(gb.sum())
                return ga, gb

            return _result(ad * bd, (a, b), srule, "mul")
        _same_shape(a, b, "mul")

    def rule(g):
        return g * bd, g * ad

    return _result(ad * bd, (a, b), rule, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def rule(g):
        return (g * c,)

    return _result(a.data * c, (a,), rule, "scale")


def relu(a: Tensor) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0  # subgradient 0 at exactly 0

    def rule(g):
        return (g * mask,)

    return _result(np.where(mask, a.data, 0.0), (a,), rule, "relu")


def tanh(a: Tensor) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def rule(g):
        return (g * (1.0 - out * out),)

    return _result(out, (a,), rule, "tanh")


def square(a: Tensor) -> Tensor:
    a = as_tensor(a)
    ad = a.data

    def rule(g):
        return (2.0 * g * ad,)

    return _result(ad * ad, (a,), rule, "square")


def abs_(a: Tensor) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)

    def rule(g):
        return (g * sign,)

    return _result(np.abs(a.data), (a,), rule, "abs")


def mean(a: Tensor) -> Tensor:
    """Mean over every entry, returned as a 0-d tensor."""
    a = as_tensor(a)
    shape, n = a.shape, a.size

    def rule(g):
        return (np.full(shape, float(g) / n),)

    return _result(np.asarray(a.data.mean()), (a,), rule, "mean")


def sum_(a: Tensor) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def rule(g):
        return (np.full(shape, float(g)),)

    return _result(np.asarray(a.data.sum()), (a,), rule, "sum")


def sum_rows(a: Tensor) -> Tensor:
    """Row sums of a matrix, shape (rows,)."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"sum_rows needs a matrix, got shape {a.shape}")
    cols = a.shape[1]

    def rule(g):
        return (np.repeat(g[:, None], cols, axis=1),)

    return _result(a.data.sum(axis=1), (a,), rule, "sum_rows")


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a length-n vector to every row of a (batch, n) matrix."""
    x, bias = as_tensor(x), as_tensor(bias)
    if x.ndim != 2 or bias.ndim != 1 or x.shape[1] != bias.shape[0]:
        raise DimensionError(f"add_bias: cannot add bias {bias.shape} to {x.shape}")

    def rule(g):
        return g, g.sum(axis=0)

    return _result(x.data + bias.data, (x, bias), rule, "add_bias")


def transpose(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.shape}")

    def rule(g):
        return (g.T,)

    return _result(a.data.T.copy(), (a,), rule, "transpose")


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"reshape: cannot view {old} as {tuple(shape)}") from exc

    def rule(g):
        return (g.reshape(old),)

    return _result(out.copy(), (a,), rule, "reshape")


def concat(tensors: Iterable[Tensor], axis: int = 1) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    if not parts:
        raise DimensionError("concat needs at least one tensor")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: incompatible shapes {[p.shape for p in parts]}") from exc
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def rule(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, parts, rule, "concat")


def take_cols(a: Tensor, cols: Sequence[int]) -> Tensor:
    """Select columns of a matrix (in the given order)."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"take_cols needs a matrix, got shape {a.shape}")
    idx = np.asarray(cols, dtype=np.intp)
    if idx.size == 0 or idx.min() < -a.shape[1] or idx.max() >= a.shape[1]:
        raise DimensionError(f"take_cols: columns {list(idx)} out of range for {a.shape}")
    shape = a.shape

    def rule(g):
        full = np.zeros(shape)
        np.add.at(full, (slice(None), idx), g)
        return (full,)

    return _result(a.data[:, idx], (a,), rule, "take_cols")


def row_norm(a: Tensor) -> Tensor:
    """Euclidean norm of each row; the gradient at a zero row is taken as 0."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"row_norm needs a matrix, got shape {a.shape}")
    ad = a.data
    norms = np.sqrt((ad * ad).sum(axis=1))
    safe = np.where(norms > 0, norms, 1.0)

    def rule(g):
        return ((g / safe)[:, None] * ad,)

    return _result(norms, (a,), rule, "row_norm")


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Differentiate a scalar ``loss`` and accumulate into every reachable leaf.

    Returns a mapping from each leaf that requires gradients to the gradient
    contributed by this call. The record below ``loss`` is consumed.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.size != 1:
        raise RankError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._consumed:
        raise StateError("computation record already consumed by an earlier backward pass")
    if not loss.requires_grad:
        raise StateError("loss does not depend on any tensor that requires gradients")

    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node.id in nodes:
            continue
        nodes[node.id] = node
        for parent in node._parents:
            if parent.requires_grad and parent.id not in nodes:
                stack.append(parent)

    grads: dict[int, np.ndarray] = {loss.id: np.ones(loss.shape)}
    leaves: dict[Tensor, np.ndarray] = {}
    for node_id in sorted(nodes, reverse=True):
        node = nodes[node_id]
        g = grads.pop(node_id, None)
        if node._backward is None:
            if g is None:
                g = np.zeros(node.shape)
            node.grad = g.copy() if node.grad is None else node.grad + g
            leaves[node] = g
            continue
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + pg
            else:
                grads[parent.id] = np.asarray(pg, dtype=np.float64)

    for node in nodes.values():
        if node._backward is not None:
            node._consumed = True
            node._parents = ()
            node._backward = None
            node.requires_grad = False
    return leaves
