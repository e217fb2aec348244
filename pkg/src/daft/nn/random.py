"""Differentiable sampling utilities: Gumbel-softmax relaxation and
Bernoulli KL. Sampling noise always comes from an explicit Philox stream.
"""

from __future__ import annotations

import numpy as np

from ..rng import philox
from .tensor import Tensor, softmax, stack

_PROB_EPS = 1e-6


def _gumbel_noise(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    u = rng.uniform(0.0, 1.0, size=shape)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    return -np.log(-np.log(u))


def gumbel_softmax(logits: Tensor, temperature: float, seed_or_rng) -> Tensor:
    """Relaxed one-hot sample: softmax((logits + g) / temperature).

    As temperature -> 0 the output approaches the exact one-hot at the
    perturbed argmax. Deterministic given the seed (Philox stream).
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else philox(int(seed_or_rng))
    g = _gumbel_noise(rng, logits.data.shape)
    return softmax((logits + Tensor(g)) * (1.0 / temperature), axis=-1)


def gumbel_bernoulli(probs: Tensor, temperature: float, seed_or_rng) -> Tensor:
    """Relaxed Bernoulli sample of independent edge probabilities.

    Each probability p becomes two logits (log p, log(1-p)); the returned
    tensor is the relaxed indicator of the "on" class, elementwise over
    probs. Hard evaluation uses threshold 0.5 on probs instead.
    """
    p = probs.clip(_PROB_EPS, 1.0 - _PROB_EPS)
    logits = stack([p.log(), (1.0 - p).log()], axis=-1)
    relaxed = gumbel_softmax(logits, temperature, seed_or_rng)
    return relaxed[(..., 0)]


def bernoulli_kl(q, p):
    """KL(Bern(q) || Bern(p)), elementwise; inputs clamped to [1e-6, 1-1e-6].

    Accepts Tensors (differentiable) or arrays/floats (returns ndarray).
    """
    if isinstance(q, Tensor) or isinstance(p, Tensor):
        qt = q if isinstance(q, Tensor) else Tensor(q)
        pt = p if isinstance(p, Tensor) else Tensor(p)
        qc = qt.clip(_PROB_EPS, 1.0 - _PROB_EPS)
        pc = pt.clip(_PROB_EPS, 1.0 - _PROB_EPS)
        return qc * (qc.log() - pc.log()) + (1.0 - qc) * ((1.0 - qc).log() - (1.0 - pc).log())
    qa = np.clip(np.asarray(q, dtype=np.float64), _PROB_EPS, 1.0 - _PROB_EPS)
    pa = np.clip(np.asarray(p, dtype=np.float64), _PROB_EPS, 1.0 - _PROB_EPS)
    return qa * np.log(qa / pa) + (1.0 - qa) * np.log((1.0 - qa) / (1.0 - pa))
