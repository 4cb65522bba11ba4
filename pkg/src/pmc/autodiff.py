"""Minimal reverse-mode autodiff over float64 numpy arrays.

Just enough machinery for the recognizer and classifier: elementwise ops,
matmul, row gather, log-softmax, and reductions. Graphs are built per
evaluation and discarded; no in-place mutation of values.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

ArrayLike = "Var | np.ndarray | float"


class Var:
    __slots__ = ("value", "grad", "_parents")

    def __init__(self, value, parents: tuple = ()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        # parents: tuple of (Var, backward_fn) pairs; backward_fn maps the
        # output gradient to this parent's gradient contribution
        self._parents = parents

    @property
    def shape(self):
        return self.value.shape

    def backward(self) -> None:
        """Accumulate gradients of self (summed if non-scalar) into .grad."""
        topo: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node.grad is None:
                continue
            for parent, bw in node._parents:
                contrib = bw(node.grad)
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.value)
                parent.grad = parent.grad + contrib

    # operator sugar
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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to the given shape, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _value(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _binary(a, b, out: np.ndarray, da: Callable, db: Callable) -> Var:
    parents = []
    if isinstance(a, Var):
        parents.append((a, lambda g: _unbroadcast(da(g), a.value.shape)))
    if isinstance(b, Var):
        parents.append((b, lambda g: _unbroadcast(db(g), b.value.shape)))
    return Var(out, tuple(parents))


def add(a, b) -> Var:
    return _binary(a, b, _value(a) + _value(b), lambda g: g, lambda g: g)


def sub(a, b) -> Var:
    return _binary(a, b, _value(a) - _value(b), lambda g: g, lambda g: -g)


def mul(a, b) -> Var:
    av, bv = _value(a), _value(b)
    return _binary(a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def matmul(a, b) -> Var:
    av, bv = _value(a), _value(b)
    out = av @ bv
    return _binary(
        a,
        b,
        out,
        lambda g: g @ bv.swapaxes(-1, -2),
        lambda g: av.swapaxes(-1, -2) @ g,
    )


def _unary(a: Var, out: np.ndarray, da: Callable) -> Var:
    return Var(out, ((a, da),))


def tanh(a: Var) -> Var:
    out = np.tanh(a.value)
    return _unary(a, out, lambda g: g * (1.0 - out * out))


def sigmoid(a: Var) -> Var:
    out = 1.0 / (1.0 + np.exp(-a.value))
    return _unary(a, out, lambda g: g * out * (1.0 - out))


def relu(a: Var) -> Var:
    mask = a.value > 0
    return _unary(a, a.value * mask, lambda g: g * mask)


def exp(a: Var) -> Var:
    out = np.exp(a.value)
    return _unary(a, out, lambda g: g * out)


def log(a: Var) -> Var:
    return _unary(a, np.log(a.value), lambda g: g / a.value)


def vsum(a: Var, axis=None, keepdims: bool = False) -> Var:
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            return np.broadcast_to(g, a.value.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.value.shape).copy()

    return _unary(a, out, bw)


def vmean(a: Var, axis=None) -> Var:
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(vsum(a, axis=axis), 1.0 / n)


def log_softmax(a: Var) -> Var:
    """Log-softmax over the last axis, numerically stable."""
    x = a.value
    m = x.max(axis=-1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse

    def bw(g):
        return g - np.exp(out) * g.sum(axis=-1, keepdims=True)

    return _unary(a, out, bw)


def gather_rows(a: Var, idx: np.ndarray) -> Var:
    """Select rows along axis 0; duplicated indices accumulate in backward."""
    idx = np.asarray(idx, dtype=np.int64)
    out = a.value[idx]

    def bw(g):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g)
        return full

    return _unary(a, out, bw)


def concat(parts: Sequence[Var], axis: int = 0) -> Var:
    values = [_value(p) for p in parts]
    out = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0, *sizes])
    parents = []
    for i, p in enumerate(parts):
        if not isinstance(p, Var):
            continue
        lo, hi = offsets[i], offsets[i + 1]

        def bw(g, lo=lo, hi=hi):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        parents.append((p, bw))
    return Var(out, tuple(parents))


def pick(a: Var, rows: np.ndarray, cols: np.ndarray) -> Var:
    """Select a[rows, cols] pairs from a 2D array."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    out = a.value[rows, cols]

    def bw(g):
        full = np.zeros_like(a.value)
        np.add.at(full, (rows, cols), g)
        return full

    return _unary(a, out, bw)
