"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op produces a new immutable :class:`Tensor`. When gradient recording is
enabled and any operand requires a gradient, the result remembers its parents
and a vector-Jacobian product closure; :func:`backward` walks that record once
in reverse topological order.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

MASK_VALUE = -1e9

_ids = itertools.count()
_state = threading.local()


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or Inf."""


class ShapeError(ValueError):
    pass


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Evaluate ops without recording them (inference paths)."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "op", "_parents", "_vjp", "_id")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64, copy=True)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite values in tensor {name or ''}".strip())
        self.data = _frozen(arr)
        self.requires_grad = requires_grad
        self.name = name
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._id = next(_ids)

    @classmethod
    def _result(cls, op: str, arr: np.ndarray, parents: Sequence["Tensor"], vjp) -> "Tensor":
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite output from {op}")
        out = cls.__new__(cls)
        out.data = _frozen(np.asarray(arr, dtype=np.float64))
        out.name = None
        out.op = op
        out._id = next(_ids)
        track = _grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._vjp = vjp if track else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op})"

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
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor._result(
        "add", a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor._result(
        "sub", a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.data, b.data
    return Tensor._result(
        "mul", av * bv, (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.data, b.data
    out = av / bv
    return Tensor._result(
        "div", out, (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)),
    )


def _unary(op: str, x, fn: Callable, dfn: Callable) -> Tensor:
    x = as_tensor(x)
    xv = x.data
    with np.errstate(all="ignore"):
        out = fn(xv)
    return Tensor._result(op, out, (x,), lambda g: (g * dfn(xv, out),))


def exp(x) -> Tensor:
    return _unary("exp", x, np.exp, lambda v, o: o)


def log(x) -> Tensor:
    return _unary("log", x, np.log, lambda v, o: 1.0 / v)


def square(x) -> Tensor:
    return _unary("square", x, np.square, lambda v, o: 2.0 * v)


def tanh(x) -> Tensor:
    return _unary("tanh", x, np.tanh, lambda v, o: 1.0 - o * o)


def _sigmoid(v: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x) -> Tensor:
    return _unary("sigmoid", x, _sigmoid, lambda v, o: o * (1.0 - o))


def relu(x) -> Tensor:
    return _unary("relu", x, lambda v: np.maximum(v, 0.0), lambda v, o: (v > 0).astype(np.float64))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x) -> Tensor:
    """tanh approximation of GELU."""
    x = as_tensor(x)
    v = x.data
    v2 = v * v
    th = v2 * 0.044715
    th += 1.0
    th *= v
    th *= _GELU_C
    np.tanh(th, out=th)
    out = th + 1.0
    out *= v
    out *= 0.5

    def vjp(g):
        d = th * th
        np.subtract(1.0, d, out=d)
        d *= v
        d *= (0.5 * _GELU_C)
        d *= v2 * (3 * 0.044715) + 1.0
        d += 0.5 * (1.0 + th)
        d *= g
        return (d,)

    return Tensor._result("gelu", out, (x,), vjp)


def log_sigmoid(x, floor: float = 1e-12) -> Tensor:
    """log(sigmoid(x)) computed stably, clamped below at log(floor)."""
    lo = np.log(floor)

    def fn(v):
        return np.maximum(np.minimum(v, 0.0) - np.log1p(np.exp(-np.abs(v))), lo)

    def dfn(v, o):
        return np.where(o > lo, _sigmoid(-v), 0.0)

    return _unary("log_sigmoid", x, fn, dfn)


# ------------------------------------------------------------ linear algebra


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands with ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.data, b.data
    if bv.ndim == 2 and av.ndim > 2:
        # shared weight matrix: fold the batch axes into one GEMM
        k = av.shape[-1]
        a2 = av.reshape(-1, k)
        out = (a2 @ bv).reshape(av.shape[:-1] + (bv.shape[1],))

        def vjp(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ bv.T).reshape(av.shape), a2.T @ g2

        return Tensor._result("matmul", out, (a, b), vjp)
    return Tensor._result(
        "matmul", av @ bv, (a, b),
        lambda g: (_unbroadcast(g @ _swap(bv), av.shape), _unbroadcast(_swap(av) @ g, bv.shape)),
    )


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    return Tensor._result("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return Tensor._result("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def swap_last(x) -> Tensor:
    axes = list(range(as_tensor(x).ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, tuple(axes))


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return Tensor._result(
        "concat", np.concatenate([x.data for x in xs], axis=axis), xs,
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def take_rows(table, idx) -> Tensor:
    """Embedding lookup: rows of a 2-D table selected by an integer array."""
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)
    shape = table.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx.reshape(-1), g.reshape(-1, shape[1]))
        return (out,)

    return Tensor._result("take_rows", table.data[idx], (table,), vjp)


# ---------------------------------------------------------------- reductions


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._result("sum", np.sum(x.data, axis=axis, keepdims=keepdims), (x,), vjp)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis, keepdims), 1.0 / n)


# ------------------------------------------------------------ normalisation


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return Tensor._result("softmax", p, (x,), vjp)


def masked_softmax(scores, mask: np.ndarray) -> Tensor:
    """Row softmax after adding MASK_VALUE where ``mask`` is False."""
    scores = as_tensor(scores)
    bias = np.where(np.asarray(mask, dtype=bool), 0.0, MASK_VALUE)
    z = scores.data + bias
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return Tensor._result("masked_softmax", p, (scores,), vjp)


def layer_norm(x, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis (no affine part)."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    y = xc * inv

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gy = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return Tensor._result("layer_norm", y, (x,), vjp)


# ------------------------------------------------------------------ backward


def _topo(output: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node._id in seen:
            continue
        seen.add(node._id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p._id not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor, wrt: Iterable[Tensor] | None = None) -> dict[int, np.ndarray]:
    """Gradients of a scalar ``output`` keyed by tensor id.

    Every leaf reachable from ``output`` that requires a gradient gets an
    entry; leaves in ``wrt`` that do not influence ``output`` get zeros.
    """
    if output.data.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
    grads: dict[int, np.ndarray] = {}
    leaves: dict[int, Tensor] = {}
    if output.requires_grad:
        grads[output._id] = np.ones_like(output.data)
        for node in reversed(_topo(output)):
            g = grads.pop(node._id, None) if node._parents else grads.get(node._id)
            if node._vjp is None:
                leaves[node._id] = node
                continue
            if g is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._id in grads:
                    grads[parent._id] = grads[parent._id] + pg
                else:
                    grads[parent._id] = pg
    result = {i: grads.get(i, np.zeros_like(t.data)) for i, t in leaves.items()}
    for t in wrt or ():
        if t._id not in result:
            result[t._id] = np.zeros_like(t.data)
    return result


def grad(output: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Convenience wrapper returning gradients in the order of ``wrt``."""
    g = backward(output, wrt)
    return [g[t._id] for t in wrt]


class CompGraph:
    """A traced function of fixed-shape inputs.

    ``fn`` receives one Tensor per declared input (plus any keyword context)
    and returns a Tensor. Parameters are closed over by ``fn``.
    """

    def __init__(self, fn: Callable[..., Tensor], input_shapes: Sequence[tuple[int, ...]]):
        self.fn = fn
        self.input_shapes = [tuple(s) for s in input_shapes]
        self.tape: list[Tensor] = []

    def check_inputs(self, inputs: Sequence) -> list[np.ndarray]:
        if len(inputs) != len(self.input_shapes):
            raise ShapeError(f"expected {len(self.input_shapes)} inputs, got {len(inputs)}")
        arrays = []
        for k, (x, shape) in enumerate(zip(inputs, self.input_shapes)):
            arr = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"input {k}: expected shape {shape}, got {arr.shape}")
            arrays.append(arr)
        return arrays


def forward_eval(graph: CompGraph, inputs: Sequence, requires_grad: bool = True) -> tuple[Tensor, list[Tensor]]:
    """Run ``graph`` on ``inputs``; returns the output and the input leaves."""
    arrays = graph.check_inputs(inputs)
    leaves = [Tensor(a, requires_grad=requires_grad, name=f"input{k}") for k, a in enumerate(arrays)]
    out = graph.fn(*leaves)
    graph.tape = _topo(out) if out.requires_grad else [out]
    return out, leaves
