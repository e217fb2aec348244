"""Parameter store and the layer set used by every model in this package:
affine/MLP stacks, a GRU cell, and key-query soft attention.

Parameters live in a ParamStore keyed by dotted names; layers are thin
namespaces over those entries so checkpointing and Adam see one flat dict.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor, concat, softmax


class ParamStore:
    """Named parameter tensors plus per-parameter Adam moments."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def names(self) -> list[str]:
        return list(self.params.keys())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            if k not in arrays:
                raise KeyError(f"checkpoint missing parameter {k!r}")
            if arrays[k].shape != t.data.shape:
                raise ShapeMismatch(f"parameter {k!r}: {arrays[k].shape} != {t.data.shape}")
            t.data = np.asarray(arrays[k], dtype=np.float64).copy()

    def clone_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    def __init__(self, store: ParamStore, name: str, n_in: int, n_out: int,
                 rng: np.random.Generator, zero_init: bool = False):
        w = np.zeros((n_in, n_out)) if zero_init else glorot(rng, n_in, n_out)
        self.w = store.add(f"{name}.w", w)
        self.b = store.add(f"{name}.b", np.zeros(n_out))
        self.n_in, self.n_out = n_in, n_out

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.shape[-1] != self.n_in:
            raise ShapeMismatch(f"linear expects last dim {self.n_in}, got {x.data.shape}")
        flat = x.reshape(-1, self.n_in) if x.data.ndim != 2 else x
        out = flat @ self.w + self.b
        if x.data.ndim != 2:
            out = out.reshape(*x.data.shape[:-1], self.n_out)
        return out


class MLP:
    """Affine chain with ReLU between layers; the final layer is linear."""

    def __init__(self, store: ParamStore, name: str, sizes: Sequence[int],
                 rng: np.random.Generator, zero_init_last: bool = False):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self.layers = []
        for i in range(len(sizes) - 1):
            zero = zero_init_last and i == len(sizes) - 2
            self.layers.append(Linear(store, f"{name}.{i}", sizes[i], sizes[i + 1], rng, zero_init=zero))

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = x.relu()
        return x


def mlp_forward(params: ParamStore, name: str, x: Tensor, layer_sizes: Sequence[int]) -> Tensor:
    """Run an affine-ReLU chain from raw store entries (final layer linear)."""
    for i in range(len(layer_sizes) - 1):
        w, b = params[f"{name}.{i}.w"], params[f"{name}.{i}.b"]
        x = x @ w + b
        if i < len(layer_sizes) - 2:
            x = x.relu()
    return x


class GRUCell:
    """Gated recurrent cell.

    z = sigmoid(Wz x + Uz h + bz)      keep gate: z -> 1 copies h
    r = sigmoid(Wr x + Ur h + br)
    c = tanh(Wh x + Uh (r*h) + bh)
    h' = z*h + (1-z)*c
    """

    def __init__(self, store: ParamStore, name: str, n_in: int, n_hidden: int,
                 rng: np.random.Generator):
        self.n_in, self.n_hidden = n_in, n_hidden
        for gate in ("z", "r", "h"):
            store.add(f"{name}.W{gate}", glorot(rng, n_in, n_hidden))
            store.add(f"{name}.U{gate}", glorot(rng, n_hidden, n_hidden))
            store.add(f"{name}.b{gate}", np.zeros(n_hidden))
        self._s, self._name = store, name

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        if x.data.shape[-1] != self.n_in or h.data.shape[-1] != self.n_hidden:
            raise ShapeMismatch(f"gru expects ({self.n_in}, {self.n_hidden}), got {x.data.shape}, {h.data.shape}")
        s, n = self._s, self._name
        z = (x @ s[f"{n}.Wz"] + h @ s[f"{n}.Uz"] + s[f"{n}.bz"]).sigmoid()
        r = (x @ s[f"{n}.Wr"] + h @ s[f"{n}.Ur"] + s[f"{n}.br"]).sigmoid()
        c = (x @ s[f"{n}.Wh"] + (r * h) @ s[f"{n}.Uh"] + s[f"{n}.bh"]).tanh()
        return z * h + (1.0 - z) * c

    def zero_state(self, batch: int) -> Tensor:
        return Tensor(np.zeros((batch, self.n_hidden)))


def gru_step(store: ParamStore, name: str, x: Tensor, h: Tensor) -> Tensor:
    """One GRU update from raw store entries (same equations as GRUCell)."""
    z = (x @ store[f"{name}.Wz"] + h @ store[f"{name}.Uz"] + store[f"{name}.bz"]).sigmoid()
    r = (x @ store[f"{name}.Wr"] + h @ store[f"{name}.Ur"] + store[f"{name}.br"]).sigmoid()
    c = (x @ store[f"{name}.Wh"] + (r * h) @ store[f"{name}.Uh"] + store[f"{name}.bh"]).tanh()
    return z * h + (1.0 - z) * c


def attention_alpha(f_k: Callable[[Tensor], Tensor], f_q: Callable[[Tensor], Tensor],
                    objects: Sequence[Tensor], action: Tensor) -> Tensor:
    """Soft binding weights over objects.

    Keys come from a shared per-object transform, the query from the action;
    the result is the softmax of the key-query dot products, a length-m
    simplex vector (batched if inputs carry a leading batch axis).
    """
    if len(objects) == 0:
        raise ShapeMismatch("attention needs at least one object")
    keys = [f_k(o) for o in objects]
    q = f_q(action)
    scores = [(k * q).sum(axis=-1, keepdims=True) for k in keys]
    return softmax(concat(scores, axis=-1), axis=-1)
