"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps one float64 ndarray and records, for each produced value,
the parent tensors and a closure that accumulates gradients into them.
Calling backward() on a scalar runs the closures in reverse topological
order. Elementwise ops broadcast like numpy; gradients of broadcast
operands are summed back to the operand shape.

Only the ops the models in this package need are provided; everything is
built from them (softmax, GRU gates, losses) so gradients are checked once
here and hold everywhere.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ShapeMismatch

Array = np.ndarray


def _as_array(x) -> Array:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward: Callable[[Array], None] | None = None):
        self.data = _as_array(data)
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    # -- graph plumbing ------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accum(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeMismatch("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        o = _wrap(other)
        out = Tensor(self.data + o.data, _parents=(self, o))
        if out.requires_grad:
            def back(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g, self.data.shape))
                if o.requires_grad:
                    o._accum(_unbroadcast(g, o.data.shape))
            out._backward = back
        return out

    def __mul__(self, other):
        o = _wrap(other)
        out = Tensor(self.data * o.data, _parents=(self, o))
        if out.requires_grad:
            def back(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g * o.data, self.data.shape))
                if o.requires_grad:
                    o._accum(_unbroadcast(g * self.data, o.data.shape))
            out._backward = back
        return out

    def __neg__(self):
        out = Tensor(-self.data, _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(-g)
        return out

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __truediv__(self, other):
        o = _wrap(other)
        out = Tensor(self.data / o.data, _parents=(self, o))
        if out.requires_grad:
            def back(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g / o.data, self.data.shape))
                if o.requires_grad:
                    o._accum(_unbroadcast(-g * self.data / (o.data ** 2), o.data.shape))
            out._backward = back
        return out

    def __rtruediv__(self, other):
        return _wrap(other) / self

    __radd__ = __add__
    __rmul__ = __mul__

    def __pow__(self, exponent: float):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = Tensor(self.data ** exponent, _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g * exponent * self.data ** (exponent - 1))
        return out

    def __matmul__(self, other):
        o = _wrap(other)
        if self.data.ndim != 2 or o.data.ndim != 2:
            raise ShapeMismatch(f"matmul expects 2-D operands, got {self.data.shape} @ {o.data.shape}")
        if self.data.shape[1] != o.data.shape[0]:
            raise ShapeMismatch(f"matmul inner dims differ: {self.data.shape} @ {o.data.shape}")
        out = Tensor(self.data @ o.data, _parents=(self, o))
        if out.requires_grad:
            def back(g):
                if self.requires_grad:
                    self._accum(g @ o.data.T)
                if o.requires_grad:
                    o._accum(self.data.T @ g)
            out._backward = back
        return out

    # -- nonlinearities ------------------------------------------------

    def exp(self):
        val = np.exp(self.data)
        out = Tensor(val, _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g * val)
        return out

    def log(self):
        out = Tensor(np.log(self.data), _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g / self.data)
        return out

    def tanh(self):
        val = np.tanh(self.data)
        out = Tensor(val, _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g * (1.0 - val * val))
        return out

    def sigmoid(self):
        val = 0.5 * (np.tanh(0.5 * self.data) + 1.0)  # stable for large |x|
        out = Tensor(val, _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g * val * (1.0 - val))
        return out

    def relu(self):
        mask = self.data > 0
        out = Tensor(np.where(mask, self.data, 0.0), _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g * mask)
        return out

    def clip(self, lo: float, hi: float):
        """Clamp values; gradient passes only inside [lo, hi]."""
        mask = (self.data >= lo) & (self.data <= hi)
        out = Tensor(np.clip(self.data, lo, hi), _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g * mask)
        return out

    # -- reductions and shaping -----------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,))
        if out.requires_grad:
            shape = self.data.shape

            def back(g):
                gg = g
                if axis is not None and not keepdims:
                    gg = np.expand_dims(gg, axis)
                self._accum(np.broadcast_to(gg, shape).copy())
            out._backward = back
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor(self.data.reshape(shape), _parents=(self,))
        if out.requires_grad:
            out._backward = lambda g: self._accum(g.reshape(self.data.shape))
        return out

    def transpose(self, *axes):
        ax = axes if axes else None
        out = Tensor(self.data.transpose(ax) if ax else self.data.T, _parents=(self,))
        if out.requires_grad:
            inv = np.argsort(ax) if ax else None

            def back(g):
                self._accum(g.transpose(inv) if ax else g.T)
            out._backward = back
        return out

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], _parents=(self,))
        if out.requires_grad:
            def back(g):
                if self.grad is None:
                    self.grad = np.zeros_like(self.data)
                np.add.at(self.grad, idx, g)
            out._backward = back
        return out

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: Array, shape: tuple) -> Array:
    """Reduce gradient g (broadcast result shape) back to operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- free functions over tensors ----------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis), _parents=tuple(ts))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in ts]
        splits = np.cumsum(sizes)[:-1]

        def back(g):
            for t, piece in zip(ts, np.split(g, splits, axis=axis)):
                if t.requires_grad:
                    t._accum(piece)
        out._backward = back
    return out


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in ts], axis=axis), _parents=tuple(ts))
    if out.requires_grad:
        def back(g):
            for i, t in enumerate(ts):
                if t.requires_grad:
                    t._accum(np.take(g, i, axis=axis))
        out._backward = back
    return out


def where(cond: Array, a: Tensor, b: Tensor) -> Tensor:
    """Select by a constant boolean mask (the mask itself is not differentiable)."""
    at, bt = _wrap(a), _wrap(b)
    cond = np.asarray(cond, dtype=bool)
    out = Tensor(np.where(cond, at.data, bt.data), _parents=(at, bt))
    if out.requires_grad:
        def back(g):
            if at.requires_grad:
                at._accum(_unbroadcast(np.where(cond, g, 0.0), at.data.shape))
            if bt.requires_grad:
                bt._accum(_unbroadcast(np.where(cond, 0.0, g), bt.data.shape))
        out._backward = back
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax; the max shift is treated as a constant."""
    shift = np.max(x.data, axis=axis, keepdims=True)
    e = (x - Tensor(shift)).exp()
    return e / e.sum(axis=axis, keepdims=True)


def take_rows(x: Tensor, index: Array) -> Tensor:
    """Gather rows x[index] with scatter-add backward (index may repeat)."""
    return x[np.asarray(index, dtype=np.intp)]
