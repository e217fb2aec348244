"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..rng import philox
from .layers import ParamStore
from .tensor import Tensor


def grad_check(loss_fn: Callable[[], Tensor], params, epsilon: float = 1e-5,
               sample_frac: float = 0.05, seed: int = 0) -> float:
    """Max relative error between reverse-mode and central finite differences.

    `params` is a ParamStore or a dict of name -> Tensor. A random 5% of the
    scalar entries of each parameter (at least one per parameter) is probed.
    """
    tensors = params.params if isinstance(params, ParamStore) else dict(params)
    for t in tensors.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for k, t in tensors.items()}

    rng = philox(seed, 7)
    worst = 0.0
    for name in sorted(tensors):
        t = tensors[name]
        flat = t.data.reshape(-1)
        n = flat.size
        k = max(1, int(np.ceil(sample_frac * n)))
        idx = rng.choice(n, size=min(k, n), replace=False)
        for i in sorted(int(j) for j in idx):
            orig = flat[i]
            flat[i] = orig + epsilon
            hi = float(loss_fn().data)
            flat[i] = orig - epsilon
            lo = float(loss_fn().data)
            flat[i] = orig
            fd = (hi - lo) / (2.0 * epsilon)
            ad = float(analytic[name].reshape(-1)[i])
            denom = max(abs(fd), abs(ad), 1.0)
            worst = max(worst, abs(fd - ad) / denom)
    return worst
