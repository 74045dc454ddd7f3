"""Dense float64 tensors with a reverse-mode gradient tape.

Every op records its parents and a closure mapping the output gradient to
parent gradients. ``Tensor.backward`` walks the tape in reverse topological
order. Ops refuse to publish non-finite values.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np


class TapeError(RuntimeError):
    pass


class Tensor:
    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{tag}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self, grad=None):
        """Accumulate d(self)/d(t) into ``t.grad`` for every tensor on the tape that requires grad."""
        if not self.requires_grad:
            raise TapeError("tensor is not connected to the gradient tape")
        if grad is None:
            if self.data.size != 1:
                raise TapeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64).reshape(self.shape)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad = g.copy() if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make(data, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    """Wrap an op result, recording it on the tape when any parent needs gradients."""
    if not np.isfinite(data).all():
        raise FloatingPointError(f"non-finite values produced by {op}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make(a.data + b.data, (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make(a.data - b.data, (a, b),
                lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make(a.data * b.data, (a, b),
                lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def tsum(x, axis=None):
    def back(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return make(np.asarray(x.data.sum(axis=axis)), (x,), back, "sum")


def mean(x, axis=None):
    n = x.data.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis), 1.0 / n)


def reshape(x, shape):
    return make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def exp(x):
    with np.errstate(over="ignore"):  # make() reports the overflow
        y = np.exp(x.data)
    return make(y, (x,), lambda g: (g * y,), "exp")


def log(x):
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x.data)
    return make(y, (x,), lambda g: (g / x.data,), "log")


def square(x):
    return make(x.data**2, (x,), lambda g: (2.0 * x.data * g,), "square")


def relu(x):
    mask = x.data > 0
    return make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def take_rows(x, index):
    """x[index] along the first axis; duplicated indices accumulate gradient."""
    index = np.asarray(index, dtype=np.int64)

    def back(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return make(x.data[index], (x,), back, "take_rows")


def log_softmax(x):
    """Row-wise log-softmax of a 2-D tensor."""
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    y = shifted - lse
    p = np.exp(y)
    return make(y, (x,), lambda g: (g - p * g.sum(axis=1, keepdims=True),), "log_softmax")


def nll_loss(log_probs, targets):
    """Mean over the batch of -log_probs[i, targets[i]]."""
    targets = np.asarray(targets, dtype=np.int64)
    b = log_probs.shape[0]
    if targets.shape != (b,):
        raise ValueError("need one target per row")
    if ((targets < 0) | (targets >= log_probs.shape[1])).any():
        raise ValueError("target out of range")
    rows = np.arange(b)
    value = -log_probs.data[rows, targets].mean()

    def back(g):
        out = np.zeros_like(log_probs.data)
        out[rows, targets] = -g / b
        return (out,)

    return make(np.asarray(value), (log_probs,), back, "nll_loss")
