"""Shared world-model machinery: input layout, normalization, and the
per-class dynamics trunk reused by every training stage.

The dynamics model of a class is one GRU-centred trunk applied per target
attribute. For target attribute l the input vector concatenates

  [ own attrs * gate_row(l) | action * action_gate(l) |
    latents * latent_gate(l) | per source class: summed interaction
    messages * pattern_column(l) + summed source latents * theta_gate(l) ]

so the trunk built in stage 1 already has slots for the latent and
interaction terms that stages 2.1/2.2 switch on (they are zero before
that). Attribute prediction happens in per-attribute standardized units;
the per-attribute loss weights make one unit of error comparable to the
typical one-step change of that attribute, which is what lets sparsity
regularization prune static inputs without drowning small real effects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ClassSpec
from .errors import ShapeMismatch
from .nn import GRUCell, MLP, ParamStore, Tensor, concat
from .rng import philox

ACTION_DIM = 4
GOAL_DIM = 2  # switch targets are padded with zero


@dataclass(frozen=True)
class Layout:
    """Trunk input layout for one class system (class ids sorted)."""

    classes: tuple[ClassSpec, ...]

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(c.class_id for c in self.classes)

    def spec_of(self, cid: int) -> ClassSpec:
        for c in self.classes:
            if c.class_id == cid:
                return c
        raise ShapeMismatch(f"class {cid} not in layout")

    def n_of(self, cid: int) -> int:
        return self.spec_of(cid).n_attributes

    def latent_of(self, cid: int) -> int:
        return self.spec_of(cid).latent_dim

    @property
    def max_attrs(self) -> int:
        return max(c.n_attributes for c in self.classes)

    def message_width(self) -> int:
        return sum(c.n_attributes + c.latent_dim for c in self.classes)

    def trunk_width(self, cid: int) -> int:
        return self.n_of(cid) + ACTION_DIM + self.latent_of(cid) + self.message_width()


@dataclass
class Normalizer:
    """Per-class affine data statistics.

    mu/sd standardize attribute inputs; sigma is the per-attribute target
    scale (one-step change std, floored at 5% of the attribute std); the
    loss weight is (sd/sigma)^2 in standardized units. Rewards and actions
    get their own affine maps.
    """

    mu: np.ndarray
    sd: np.ndarray
    sigma: np.ndarray
    weight: np.ndarray
    action_mu: np.ndarray
    action_sd: np.ndarray
    reward_mu: float
    reward_sd: float

    def z_attrs(self, attrs: np.ndarray) -> np.ndarray:
        return (attrs - self.mu) / self.sd

    def z_action(self, action: np.ndarray) -> np.ndarray:
        return (action - self.action_mu) / self.action_sd

    def z_reward(self, r: np.ndarray) -> np.ndarray:
        return (r - self.reward_mu) / self.reward_sd

    def un_reward(self, rz: np.ndarray) -> np.ndarray:
        return rz * self.reward_sd + self.reward_mu

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()}

    @staticmethod
    def from_dict(d: dict) -> "Normalizer":
        return Normalizer(
            mu=np.array(d["mu"]), sd=np.array(d["sd"]), sigma=np.array(d["sigma"]),
            weight=np.array(d["weight"]), action_mu=np.array(d["action_mu"]),
            action_sd=np.array(d["action_sd"]), reward_mu=d["reward_mu"],
            reward_sd=d["reward_sd"])


def fit_normalizer(attrs: np.ndarray, actions: np.ndarray, rewards: np.ndarray,
                   sigma_floor: float = 0.05) -> Normalizer:
    """attrs [E, T, n], actions [E, T, 4], rewards [E, T]."""
    flat = attrs.reshape(-1, attrs.shape[-1])
    mu = flat.mean(axis=0)
    sd = np.maximum(flat.std(axis=0), 1e-6)
    delta = (attrs[:, 1:] - attrs[:, :-1]).reshape(-1, attrs.shape[-1])
    sigma = np.maximum.reduce([delta.std(axis=0), sigma_floor * sd,
                               np.full(attrs.shape[-1], 1e-8)])
    weight = (sd / sigma) ** 2
    af = actions.reshape(-1, actions.shape[-1])
    return Normalizer(
        mu=mu, sd=sd, sigma=sigma, weight=weight,
        action_mu=af.mean(axis=0), action_sd=np.maximum(af.std(axis=0), 1e-6),
        reward_mu=float(rewards.mean()), reward_sd=float(max(rewards.std(), 1e-6)),
    )


def normalize_goal(goal: tuple, workspace: tuple) -> np.ndarray:
    """Map a goal (box target position or switch target angle) into [-1, 1]
    coordinates, padded to GOAL_DIM."""
    x0, y0, x1, y1 = workspace
    out = np.zeros(GOAL_DIM)
    if len(goal) == 2:
        out[0] = (goal[0] - (x0 + x1) / 2) / ((x1 - x0) / 2)
        out[1] = (goal[1] - (y0 + y1) / 2) / ((y1 - y0) / 2)
    else:
        out[0] = (goal[0] - 0.5) / 0.5
    return out


class ClassTrunk:
    """Dynamics trunk + reward head of one class.

    Parameter names are prefixed `dyn{cid}.` / `rew{cid}.` inside a shared
    ParamStore. The trunk runs per target attribute: callers pass an input
    of shape [B, n, width] and a hidden state [B*n, gru]; the head returns
    standardized predictions [B, n].
    """

    def __init__(self, store: ParamStore, layout: Layout, cid: int,
                 hidden: int, gru_hidden: int, rng: np.random.Generator,
                 reward_hidden: int | None = None):
        self.cid = cid
        self.layout = layout
        self.n = layout.n_of(cid)
        self.width = layout.trunk_width(cid)
        self.gru_hidden = gru_hidden
        self.pre = MLP(store, f"dyn{cid}.pre", [self.width, hidden, hidden], rng)
        self.cell = GRUCell(store, f"dyn{cid}.gru", hidden, gru_hidden, rng)
        self.post = MLP(store, f"dyn{cid}.post", [gru_hidden, hidden], rng)
        self.head_w = store.add(f"dyn{cid}.head.w", glorot_rows(rng, self.n, hidden))
        self.head_b = store.add(f"dyn{cid}.head.b", np.zeros(self.n))
        rh = reward_hidden or hidden
        self.reward = MLP(store, f"rew{cid}.mlp",
                          [self.n + ACTION_DIM + GOAL_DIM, rh, rh, 1], rng)

    def zero_hidden(self, rows: int) -> Tensor:
        return Tensor(np.zeros((rows, self.gru_hidden)))

    def step(self, x: Tensor, h: Tensor) -> tuple[Tensor, Tensor]:
        """x [B, n, width], h [B*n, gru] -> (predictions [B, n], h')."""
        b = x.data.shape[0]
        flat = x.reshape(b * self.n, self.width)
        h_new = self.cell(self.pre(flat).relu(), h)
        feats = self.post(h_new).relu().reshape(b, self.n, -1)
        preds = (feats * self.head_w).sum(axis=-1) + self.head_b
        return preds, h_new

    def reward_forward(self, gated_attrs: Tensor, gated_action: Tensor,
                       goal_z: Tensor) -> Tensor:
        """All inputs [B, *]; returns standardized reward predictions [B]."""
        x = concat([gated_attrs, gated_action, goal_z], axis=-1)
        return self.reward(x).reshape(-1)


def glorot_rows(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (cols + 1))
    return rng.uniform(-bound, bound, size=(rows, cols))


def sample_gate(prob: Tensor, batch: int | None, temperature: float,
                rng: np.random.Generator) -> Tensor:
    """Relaxed Bernoulli sample of a gate tensor, optionally replicated with
    a leading batch axis (one draw per batch row).

    Entries at exactly 0 or 1 pass through noiselessly, so structurally
    disabled gates stay exact zeros (their inputs get a zero gradient) and
    ablation-forced dense gates stay exact ones.
    """
    from .nn import gumbel_bernoulli, where

    p = prob if batch is None else prob.reshape(1, *prob.data.shape) + Tensor(
        np.zeros((batch,) + prob.data.shape))
    relaxed = gumbel_bernoulli(p, temperature, rng)
    fixed = (p.data == 0.0) | (p.data == 1.0)
    if fixed.any():
        relaxed = where(fixed, Tensor(p.data), relaxed)
    return relaxed


def build_trunk_input(n: int, gate_row: Tensor, z_attrs: Tensor,
                      action_gate: Tensor, action_vec: Tensor,
                      theta_gate: Tensor | None, theta_vec: Tensor | None,
                      message: Tensor | None, message_width: int,
                      latent_dim: int) -> Tensor:
    """Assemble the per-target-attribute input block [B, n, width].

    gate_row: [n, n] gates (row l = incoming mask of target l), or [B, n, n]
              when drawn per batch row
    z_attrs: [B, n] standardized attributes
    action_gate: [n] or [B, n];   action_vec: [B, ACTION_DIM]
    theta_gate: [n] or [B, n];    theta_vec: [B, latent_dim] or None
    message: [B, n, message_width] pre-gated interaction block or None
    """
    b = z_attrs.data.shape[0]

    def per_target(g: Tensor) -> Tensor:
        # -> [., n, 1] so it scales one target row's whole input block
        return g.reshape(1, n, 1) if g.data.ndim == 1 else g.reshape(b, n, 1)

    row = gate_row if gate_row.data.ndim == 3 else gate_row.reshape(1, n, n)
    own = z_attrs.reshape(b, 1, n) * row
    act = action_vec.reshape(b, 1, ACTION_DIM) * per_target(action_gate)
    parts = [own, act]
    if latent_dim > 0:
        if theta_gate is None or theta_vec is None:
            parts.append(Tensor(np.zeros((b, n, latent_dim))))
        else:
            parts.append(theta_vec.reshape(b, 1, latent_dim) * per_target(theta_gate))
    if message is None:
        parts.append(Tensor(np.zeros((b, n, message_width))))
    else:
        parts.append(message)
    return concat(parts, axis=-1)
