"""Reverse-mode automatic differentiation over dense arrays.

A Tensor is a numpy array plus an optional handle into the Tape that
produced it. Primitives record onto the innermost active Tape whenever one
of their inputs is differentiable; backward() then visits the recorded
nodes in exact reverse order.

Broadcasting is limited to two cases: a 1-D operand against the rows of a
2-D operand (bias-add), and a 0-d operand against anything.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from wmr.errors import NumericalError, ShapeError

_local = threading.local()


def default_dtype() -> type:
    return getattr(_local, "dtype", np.float32)


@contextmanager
def precision(dtype):
    """Run everything created inside the block at `dtype` (used by gradient checks)."""
    previous = default_dtype()
    _local.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _local.dtype = previous


def _tape_stack() -> list["Tape"]:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = []
        _local.tapes = stack
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense real array; differentiable when it is a parameter or a recorded output."""

    __slots__ = ("data", "requires_grad", "tape", "node", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.tape: Tape | None = None
        self.node: int | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class _Node:
    op: str
    inputs: tuple[Optional[int], ...]
    backward: Optional[Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]]


class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; nested tapes record onto the innermost one.
    Parameters (leaf tensors with requires_grad) get a node the first time a
    primitive on this tape reads them, so one parameter can feed several
    tapes without being mutated.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._leaf_nodes: dict[int, int] = {}
        self._leaves: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def node_of(self, t: Tensor) -> Optional[int]:
        if t.tape is self and t.node is not None:
            return t.node
        if not t.requires_grad:
            return None
        key = id(t)
        idx = self._leaf_nodes.get(key)
        if idx is None:
            idx = len(self.nodes)
            self.nodes.append(_Node("leaf", (), None))
            self._leaf_nodes[key] = idx
            self._leaves.append(t)
        return idx

    def record(self, op: str, inputs: Sequence[Optional[int]], out: np.ndarray, backward) -> Tensor:
        result = Tensor(out)
        result.tape = self
        result.node = len(self.nodes)
        self.nodes.append(_Node(op, tuple(inputs), backward))
        return result

    def op_kinds(self) -> list[str]:
        return [n.op for n in self.nodes if n.op != "leaf"]

    def gradients(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Reverse pass from a scalar loss; returns leaf node id -> gradient."""
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        root = self.node_of(loss)
        if root is None:
            return {}
        grads: dict[int, np.ndarray] = {root: np.ones_like(loss.data)}
        for idx in range(root, -1, -1):
            g = grads.get(idx)
            if g is None:
                continue
            node = self.nodes[idx]
            if node.backward is None:
                continue
            del grads[idx]
            for inp, ig in zip(node.inputs, node.backward(g)):
                if inp is None or ig is None:
                    continue
                if inp in grads:
                    grads[inp] = grads[inp] + ig
                else:
                    grads[inp] = ig
        return grads

    def gradient(self, loss: Tensor, params: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradients for `params` in order; parameters off every loss path get exact zeros."""
        grads = self.gradients(loss)
        out = []
        for p in params:
            idx = self._leaf_nodes.get(id(p))
            g = grads.get(idx) if idx is not None else None
            out.append(np.zeros_like(p.data) if g is None else g.astype(p.data.dtype, copy=False))
        return out


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    if loss.tape is None:
        raise ShapeError("loss is not on a tape")
    return loss.tape.gradients(loss)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finish(op: str, inputs: Sequence[Tensor], out: np.ndarray, backward) -> Tensor:
    out = np.asarray(out, dtype=default_dtype())
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite output from {op}")
    tape = active_tape()
    if tape is not None:
        nodes = [tape.node_of(t) for t in inputs]
        if any(n is not None for n in nodes):
            return tape.record(op, nodes, out, backward)
    return Tensor(out)


# broadcast kinds: "same", "row_b"/"row_a" (1-D against rows), "scalar_b"/"scalar_a"
def _broadcast_kind(op: str, a: np.ndarray, b: np.ndarray) -> str:
    if a.shape == b.shape:
        return "same"
    if b.ndim == 0:
        return "scalar_b"
    if a.ndim == 0:
        return "scalar_a"
    if a.ndim == 2 and b.ndim == 1 and b.shape[0] == a.shape[1]:
        return "row_b"
    if b.ndim == 2 and a.ndim == 1 and a.shape[0] == b.shape[1]:
        return "row_a"
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(kind: str, side: str, g: np.ndarray) -> np.ndarray:
    if kind == f"row_{side}":
        return g.sum(axis=0, dtype=np.float64).astype(g.dtype)
    if kind == f"scalar_{side}":
        return np.asarray(g.sum(dtype=np.float64), dtype=g.dtype)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    kind = _broadcast_kind("add", a.data, b.data)

    def grad(g):
        return _reduce_to(kind, "a", g), _reduce_to(kind, "b", g)

    return _finish("add", (a, b), a.data + b.data, grad)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    kind = _broadcast_kind("sub", a.data, b.data)

    def grad(g):
        return _reduce_to(kind, "a", g), _reduce_to(kind, "b", -g)

    return _finish("sub", (a, b), a.data - b.data, grad)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    kind = _broadcast_kind("mul", a.data, b.data)
    av, bv = a.data, b.data

    def grad(g):
        return _reduce_to(kind, "a", g * bv), _reduce_to(kind, "b", g * av)

    return _finish("mul", (a, b), av * bv, grad)


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _finish("neg", (x,), -x.data, lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.data, b.data

    def grad(g):
        return g @ bv.T, av.T @ g

    return _finish("matmul", (a, b), av @ bv, grad)


def elu(x, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    v = x.data
    pos = v > 0
    out = np.where(pos, v, alpha * np.expm1(np.minimum(v, 0.0)))

    def grad(g):
        return (g * np.where(pos, 1.0, out + alpha).astype(v.dtype),)

    return _finish("elu", (x,), out, grad)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = 0.5 * (np.tanh(0.5 * x.data) + 1.0)

    def grad(g):
        return (g * out * (1.0 - out),)

    return _finish("sigmoid", (x,), out, grad)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def grad(g):
        return (g * (1.0 - out * out),)

    return _finish("tanh", (x,), out, grad)


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.data)

    def grad(g):
        return (g * out,)

    return _finish("exp", (x,), out, grad)


def log(x) -> Tensor:
    x = as_tensor(x)
    v = x.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(v)

    def grad(g):
        return (g / v,)

    return _finish("log", (x,), out, grad)


def clamp(x, lo: float, hi: float) -> Tensor:
    x = as_tensor(x)
    v = x.data
    inside = (v >= lo) & (v <= hi)

    def grad(g):
        return (g * inside,)

    return _finish("clamp", (x,), np.clip(v, lo, hi), grad)


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"minimum: incompatible shapes {a.shape} and {b.shape}")
    take_a = a.data <= b.data

    def grad(g):
        return g * take_a, g * ~take_a

    return _finish("minimum", (a, b), np.where(take_a, a.data, b.data), grad)


def square(x) -> Tensor:
    x = as_tensor(x)
    v = x.data
    return _finish("square", (x,), v * v, lambda g: (2.0 * v * g,))


def absolute(x) -> Tensor:
    x = as_tensor(x)
    v = x.data
    return _finish("abs", (x,), np.abs(v), lambda g: (g * np.sign(v),))


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    ref = ts[0].data
    ax = axis % ref.ndim
    for t in ts[1:]:
        if t.data.ndim != ref.ndim or any(
            t.shape[d] != ref.shape[d] for d in range(ref.ndim) if d != ax
        ):
            raise ShapeError(f"concat: incompatible shapes {ref.shape} and {t.shape}")
    bounds = np.cumsum([t.shape[ax] for t in ts])[:-1]

    def grad(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _finish("concat", ts, np.concatenate([t.data for t in ts], axis=ax), grad)


def slice_cols(x, start: int, stop: int) -> Tensor:
    """Columns [start, stop) of the last axis."""
    x = as_tensor(x)
    width = x.shape[-1]
    if not 0 <= start < stop <= width:
        raise ShapeError(f"slice: range [{start}, {stop}) outside last axis of {x.shape}")

    def grad(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        full[..., start:stop] = g
        return (full,)

    return _finish("slice", (x,), x.data[..., start:stop], grad)


def reduce_sum(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    out = np.sum(x.data, axis=axis, dtype=np.float64)

    def grad(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _finish("sum", (x,), out, grad)


def reduce_mean(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    count = x.size if axis is None else shape[axis]
    out = np.sum(x.data, axis=axis, dtype=np.float64) / count

    def grad(g):
        scaled = g / count
        if axis is None:
            return (np.broadcast_to(scaled, shape).astype(x.data.dtype),)
        return (np.broadcast_to(np.expand_dims(scaled, axis), shape).astype(x.data.dtype),)

    return _finish("mean", (x,), out, grad)


def stop_gradient(x) -> Tensor:
    """Identity forward; the backward pass sends nothing to the input."""
    x = as_tensor(x)
    return _finish("stop_gradient", (x,), x.data.copy(), lambda g: (None,))


PRIMITIVES: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "neg": neg,
    "elu": elu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "exp": exp,
    "log": log,
    "clamp": clamp,
    "minimum": minimum,
    "concat": concat,
    "slice": slice_cols,
    "sum": reduce_sum,
    "mean": reduce_mean,
    "square": square,
    "abs": absolute,
    "stop_gradient": stop_gradient,
}


def forward_primitive(op_kind: str, *inputs, **kwargs) -> Tensor:
    fn = PRIMITIVES.get(op_kind)
    if fn is None:
        raise ShapeError(f"unknown primitive '{op_kind}'")
    if op_kind == "concat":
        return fn(inputs, **kwargs)
    return fn(*inputs, **kwargs)
