"""Dense reverse-mode autodiff on float64 numpy arrays.

A :class:`Tape` records every operation applied to its :class:`Node` objects.
Parameters live outside the tape (:class:`Parameter`) and are attached per
minibatch with :meth:`Tape.param`, so a tape is cheap, single-use and
rebuilt for every batch.

    >>> tape = Tape()
    >>> w = Parameter(np.array([[3.0]]))
    >>> loss = (tape.param(w) ** 2).sum()
    >>> tape.backward(loss, [w])[0]
    array([[6.]])
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

PROB_EPS = 1e-6


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


class TapeError(RuntimeError):
    pass


def _check(value: np.ndarray, op: str) -> np.ndarray:
    # NaN/Inf propagate through a sum; only overflow of huge finite values
    # can trip this spuriously, and that is an error state anyway.
    if not math.isfinite(value.sum()):
        raise NonFiniteError(f"non-finite value produced by {op}")
    return value


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# Shared kernels: MLP.predict uses these too, so taped and untaped forward
# passes agree bitwise.
def _elu_parts(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ELU (alpha=1) and its derivative ``exp(min(x, 0))``."""
    e = np.exp(np.minimum(x, 0.0))
    out = e - 1.0
    out += np.maximum(x, 0.0)
    return out, e


def elu(x: np.ndarray) -> np.ndarray:
    return _elu_parts(x)[0]


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def clamp_prob(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


class Parameter:
    """A trainable array owned by a model."""

    __slots__ = ("value", "name")

    def __init__(self, value: np.ndarray, name: str = ""):
        self.value = np.array(value, dtype=np.float64)
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


class Node:
    __slots__ = ("value", "tape", "index", "parents", "vjp", "requires_grad")
    # make numpy defer to our reflected operators (ndarray / Node -> Node)
    __array_ufunc__ = None

    def __init__(self, value, tape, parents=(), vjp=None):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.vjp = vjp
        self.requires_grad = any(p.requires_grad for p in parents)
        self.index = tape._record(self)

    @property
    def shape(self) -> tuple:
        return self.value.shape

    # arithmetic ---------------------------------------------------------
    def _lift(self, other) -> "Node":
        if isinstance(other, Node):
            if other.tape is not self.tape:
                raise TapeError("nodes belong to different tapes")
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        other = self._lift(other)
        sa, sb = self.shape, other.shape
        return self.tape._op(self.value + other.value, (self, other),
                             lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")

    __radd__ = __add__

    def __neg__(self):
        return self.tape._op(-self.value, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        other = self._lift(other)
        sa, sb = self.shape, other.shape
        return self.tape._op(self.value - other.value, (self, other),
                             lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        other = self._lift(other)
        a, b = self.value, other.value
        return self.tape._op(a * b, (self, other),
                             lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
                             "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        a, b = self.value, other.value
        out = a / b
        return self.tape._op(out, (self, other),
                             lambda g: (_unbroadcast(g / b, a.shape),
                                        _unbroadcast(-g * out / b, b.shape)),
                             "div")

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, k: int):
        if k != 2:
            raise NotImplementedError("only squaring is supported")
        a = self.value
        return self.tape._op(a * a, (self,), lambda g: (2.0 * a * g,), "square")

    def __matmul__(self, other):
        other = self._lift(other)
        a, b = self.value, other.value
        ra, rb = self.requires_grad, other.requires_grad
        return self.tape._op(a @ b, (self, other),
                             lambda g: (g @ b.T if ra else None, a.T @ g if rb else None), "matmul")

    # reductions / elementwise ------------------------------------------
    def sum(self) -> "Node":
        shape = self.shape
        return self.tape._op(np.sum(self.value), (self,),
                             lambda g: (np.broadcast_to(g, shape).copy(),), "sum")

    def mean(self) -> "Node":
        shape, n = self.shape, self.value.size
        return self.tape._op(np.sum(self.value) / n, (self,),
                             lambda g: (np.full(shape, g / n),), "mean")

    def __repr__(self) -> str:
        return f"Node(#{self.index}, shape={self.shape})"


class Tape:
    """Records operations for one backward pass."""

    def __init__(self):
        self._nodes: list[Node] = []
        self._params: dict[int, tuple[Parameter, Node]] = {}
        self._consumed = False

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, node: Node) -> int:
        if self._consumed:
            raise TapeError("tape already consumed by backward()")
        self._nodes.append(node)
        return len(self._nodes) - 1

    def _op(self, value, parents, vjp, name) -> Node:
        value = np.asarray(value, dtype=np.float64)
        return Node(_check(value, name), self, parents, vjp)

    def constant(self, value) -> Node:
        return Node(_check(np.asarray(value, dtype=np.float64), "constant"), self)

    def param(self, p: Parameter) -> Node:
        """Attach a parameter as a leaf; repeated calls return the same node."""
        key = id(p)
        if key not in self._params:
            leaf = Node(p.value, self)
            leaf.requires_grad = True
            self._params[key] = (p, leaf)
        return self._params[key][1]

    def backward(self, loss: Node, params: Sequence[Parameter]) -> list[np.ndarray]:
        """Gradients of scalar ``loss`` w.r.t. ``params`` (zeros if unreached)."""
        if self._consumed:
            raise TapeError("tape already consumed by backward()")
        if loss.tape is not self:
            raise TapeError("loss node belongs to a different tape")
        if loss.value.size != 1:
            raise ValueError(f"loss must be scalar, got shape {loss.shape}")
        self._consumed = True
        grads: list = [None] * len(self._nodes)
        grads[loss.index] = np.ones_like(loss.value)
        for node in reversed(self._nodes[: loss.index + 1]):
            g = grads[node.index]
            if g is None or node.vjp is None or not node.requires_grad:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads[parent.index]
                grads[parent.index] = pg if prev is None else prev + pg
        out = []
        for p in params:
            entry = self._params.get(id(p))
            g = grads[entry[1].index] if entry is not None else None
            out.append(np.zeros_like(p.value) if g is None else np.asarray(g).reshape(p.shape))
        return out


# free functions -----------------------------------------------------------

def matmul(a: Node, b: Node) -> Node:
    return a @ b


def elu_node(x: Node) -> Node:
    out, deriv = _elu_parts(x.value)
    return x.tape._op(out, (x,), lambda g: (g * deriv,), "elu")


def sigmoid_node(x: Node) -> Node:
    out = sigmoid(x.value)
    return x.tape._op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def identity_node(x: Node) -> Node:
    return x


def log(x: Node) -> Node:
    v = x.value
    if np.any(v <= 0):
        raise NonFiniteError("log of non-positive value")
    return x.tape._op(np.log(v), (x,), lambda g: (g / v,), "log")


def clamp(x: Node, lo: float, hi: float) -> Node:
    v = x.value
    inside = (v >= lo) & (v <= hi)
    return x.tape._op(np.clip(v, lo, hi), (x,), lambda g: (g * inside,), "clamp")


def relu(x: Node) -> Node:
    """max{0, x}; used for constraint-violation hinges."""
    v = x.value
    return x.tape._op(np.maximum(v, 0.0), (x,), lambda g: (g * (v > 0),), "relu")


def concat(nodes: Sequence[Node]) -> Node:
    """Column-wise concatenation of 2-D nodes."""
    tape = nodes[0].tape
    widths = [n.shape[1] for n in nodes]
    cuts = np.cumsum(widths)[:-1]
    return tape._op(np.concatenate([n.value for n in nodes], axis=1), tuple(nodes),
                    lambda g: tuple(np.split(g, cuts, axis=1)), "concat")


def scale_grad(x: Node, scale: float) -> Node:
    """Identity forward; multiplies the backward signal by ``scale``.

    ``scale=-1`` is a gradient-reversal layer.
    """
    return x.tape._op(x.value, (x,), lambda g: (g * scale,), "scale_grad")


def stop_gradient(x: Node) -> Node:
    return x.tape.constant(x.value)


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "elu": (elu, elu_node),
    "sigmoid": (sigmoid, sigmoid_node),
    "relu": (lambda v: np.maximum(v, 0.0), relu),
    "identity": (lambda v: v, identity_node),
}
