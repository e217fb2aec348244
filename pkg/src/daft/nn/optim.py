"""Adam with bias correction, operating on a ParamStore in place."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .layers import ParamStore


def adam_update(store: ParamStore, grads: dict[str, np.ndarray], lr: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                only: set[str] | None = None,
                lr_overrides: dict[str, float] | None = None,
                weight_decay: float = 0.0,
                decay_exclude: set[str] | None = None) -> ParamStore:
    """One Adam step. Parameters without a gradient entry are left untouched.

    `only` restricts the update to a subset of names (used by stages that
    freeze everything but a few parameters); `lr_overrides` gives specific
    parameters their own learning rate (gate logits move faster than
    network weights). `weight_decay` is decoupled L2 shrinkage applied to
    every updated parameter not in `decay_exclude`; keeping network weights
    bounded is what stops them from absorbing the scale of a shrinking
    input gate.
    """
    store.step_count += 1
    t = store.step_count
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        if only is not None and name not in only:
            continue
        p = store.params[name]
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"grad for {name!r}: {g.shape} != {p.data.shape}")
        step_lr = lr if lr_overrides is None else lr_overrides.get(name, lr)
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= step_lr * (m / c1) / (np.sqrt(v / c2) + eps)
        if weight_decay > 0.0 and (decay_exclude is None or name not in decay_exclude):
            p.data -= step_lr * weight_decay * p.data
    return store


def collect_grads(store: ParamStore) -> dict[str, np.ndarray]:
    return {k: t.grad for k, t in store.params.items() if t.grad is not None}
