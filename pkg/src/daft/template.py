"""Stage 1: per-class template graphs, dynamics and reward models, and the
object classifier, learned from single-object episodes.

Graph edges are sigmoid gates multiplying the trunk inputs; the training
loss is the per-attribute weighted prediction error plus an L1 penalty on
all gate values. After training, gates thresholded at tau become the
class template graphs. Latent-parameter gates stay structurally zero here;
stage 2.2 owns them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassTemplateGraph
from .envs import BUILTIN_CLASSES, Dataset, Episode
from .errors import Diverged, WrongDatasetKind
from .models import (
    ACTION_DIM, ClassTrunk, Layout, Normalizer, build_trunk_input,
    fit_normalizer, normalize_goal,
)
from .nn import MLP, ParamStore, Tensor, adam_update, collect_grads, stack
from .rng import philox


@dataclass
class TemplateConfig:
    hidden: int = 32
    gru_hidden: int = 32
    epochs: int = 80
    batch: int = 256          # windows per optimizer step
    seq_len: int = 1          # window length; 1 keeps structure one-step identifiable
    lr: float = 3e-3
    gate_lr_scale: float = 10.0
    weight_decay: float = 1e-4
    gamma_sparse: float = 0.015
    sparse_warmup: float = 0.3  # fraction of epochs before the L1 weight is fully on
    gate_temperature: float = 0.5
    tau: float = 0.5
    sigma_floor: float = 0.05
    seed: int = 0
    classifier_hidden: int = 32
    classifier_epochs: int = 300
    dense_gates: bool = False  # ablation: pin every gate at 1, skip graph learning

    def to_dict(self) -> dict:
        return dict(self.__dict__)


GATE_KINDS = ("ss", "as", "sr", "ar")


class TemplateModel:
    """Per-class soft template gates plus dynamics/reward networks.

    All parameters live in one ParamStore under `gate{cid}.*`, `dyn{cid}.*`
    and `rew{cid}.*`. Latent gates are not present at this stage: the
    latent block fed to the trunk is zero until stage 2.2 provides it.
    """

    def __init__(self, layout: Layout, config: TemplateConfig,
                 workspaces: dict[str, tuple] | None = None):
        self.layout = layout
        self.config = config
        self.store = ParamStore()
        self.normalizers: dict[int, Normalizer] = {}
        self.trunks: dict[int, ClassTrunk] = {}
        self.curves: dict[int, list[float]] = {}
        rng = philox(config.seed, 101)
        for cid in layout.class_ids:
            n = layout.n_of(cid)
            self.store.add(f"gate{cid}.ss", np.zeros((n, n)))
            self.store.add(f"gate{cid}.as", np.zeros(n))
            self.store.add(f"gate{cid}.sr", np.zeros(n))
            self.store.add(f"gate{cid}.ar", np.zeros(1))
            self.trunks[cid] = ClassTrunk(self.store, layout, cid,
                                          config.hidden, config.gru_hidden, rng)

    # -- gates ----------------------------------------------------------

    def gate_param_names(self) -> set[str]:
        return {k for k in self.store.names() if k.startswith("gate")}

    def soft_gates(self, cid: int, frozen: bool = False) -> dict[str, Tensor]:
        """Gate probabilities in [0, 1]; `frozen` detaches them from autodiff
        (later stages must not move template gates)."""
        if self.config.dense_gates:
            n = self.layout.n_of(cid)
            return {"ss": Tensor(np.ones((n, n))), "as": Tensor(np.ones(n)),
                    "sr": Tensor(np.ones(n)), "ar": Tensor(np.ones(1))}
        out = {}
        for kind in GATE_KINDS:
            g = self.store[f"gate{cid}.{kind}"].sigmoid()
            out[kind] = g.detach() if frozen else g
        return out

    def sampled_gates(self, cid: int, batch: int, rng: np.random.Generator
                      ) -> dict[str, Tensor]:
        """Relaxed Bernoulli draws of the gate probabilities, one per batch
        row. Training consumes these instead of the raw probabilities:
        stochastic masking makes information flow scale with the gate
        probability, which weight magnitude cannot compensate."""
        probs = self.soft_gates(cid)
        temp = self.config.gate_temperature
        return {k: sample_gate(p, batch, temp, rng) for k, p in probs.items()}

    def hard_gates(self, cid: int, tau: float | None = None) -> dict[str, Tensor]:
        """Thresholded binary gates as constants (the fixed graphs every
        stage after 1 conditions on)."""
        tau = self.config.tau if tau is None else tau
        return {k: Tensor((v.data >= tau).astype(float))
                for k, v in self.soft_gates(cid, frozen=True).items()}

    def template_graphs(self, tau: float | None = None) -> dict[int, ClassTemplateGraph]:
        tau = self.config.tau if tau is None else tau
        out = {}
        for cid in self.layout.class_ids:
            g = {k: (v.data >= tau).astype(float) for k, v in self.soft_gates(cid, frozen=True).items()}
            out[cid] = ClassTemplateGraph(
                class_id=cid, g_s_to_s=g["ss"], g_a_to_s=g["as"],
                g_theta_to_s=np.zeros(self.layout.n_of(cid)),
                g_s_to_r=g["sr"], g_a_to_r=float(g["ar"][0]))
        return out

    # -- forward --------------------------------------------------------

    def dynamics_window(self, cid: int, z_attrs: np.ndarray, z_actions: np.ndarray,
                        gates: dict[str, Tensor] | None = None,
                        theta: Tensor | None = None,
                        theta_gate: Tensor | None = None,
                        messages: list[Tensor] | None = None,
                        action_override: list[Tensor] | None = None) -> Tensor:
        """Teacher-forced predictions over a window.

        z_attrs [B, S+1, n] and z_actions [B, S, 4] are standardized arrays;
        returns standardized predictions [B, S, n]. `gates` default to the
        thresholded binary template (the post-stage-1 semantics); training
        passes sampled gates. `action_override` replaces the gated action
        input per step (stage 2.1 feeds the attention-weighted value
        vector); `theta`/`messages` fill the latent and interaction slots
        (stage 2.2).
        """
        trunk = self.trunks[cid]
        gates = gates if gates is not None else self.hard_gates(cid)
        n = trunk.n
        b, s_plus, _ = z_attrs.shape
        s = s_plus - 1
        h = trunk.zero_hidden(b * n)
        preds = []
        for t in range(s):
            act = action_override[t] if action_override is not None else Tensor(z_actions[:, t])
            x = build_trunk_input(
                n, gates["ss"], Tensor(z_attrs[:, t]), gates["as"], act,
                theta_gate, theta,
                messages[t] if messages is not None else None,
                self.layout.message_width(), self.layout.latent_of(cid))
            p, h = trunk.step(x, h)
            preds.append(p)
        return stack(preds, axis=1)

    def reward_window(self, cid: int, z_attrs: np.ndarray, z_actions: np.ndarray,
                      goal_z: np.ndarray, gates: dict[str, Tensor] | None = None) -> Tensor:
        """Standardized reward predictions [B, S] from gated inputs."""
        gates = gates if gates is not None else self.hard_gates(cid)
        b, s = z_actions.shape[:2]
        n = self.layout.n_of(cid)
        g_sr, g_ar = gates["sr"], gates["ar"]
        za = Tensor(z_attrs[:, :s].reshape(b * s, n))
        ac = Tensor(z_actions.reshape(b * s, ACTION_DIM))
        if g_sr.data.ndim == 2:  # per-row samples: repeat across window steps
            g_sr = stack([g_sr] * s, axis=1).reshape(b * s, n)
            g_ar = stack([g_ar] * s, axis=1).reshape(b * s, 1)
        gz = Tensor(np.repeat(goal_z[:, None, :], s, axis=1).reshape(b * s, -1))
        return self.trunks[cid].reward_forward(za * g_sr, ac * g_ar, gz).reshape(b, s)

    # -- persistence ------------------------------------------------------

    def meta(self) -> dict:
        return {
            "kind": "template",
            "config": self.config.to_dict(),
            "classes": [c.class_id for c in self.layout.classes],
            "normalizers": {str(c): n.to_dict() for c, n in self.normalizers.items()},
            "curves": {str(c): v for c, v in self.curves.items()},
        }

    @staticmethod
    def from_meta(meta: dict) -> "TemplateModel":
        layout = Layout(tuple(BUILTIN_CLASSES[c] for c in meta["classes"]))
        model = TemplateModel(layout, TemplateConfig(**meta["config"]))
        model.normalizers = {int(c): Normalizer.from_dict(d)
                             for c, d in meta["normalizers"].items()}
        model.curves = {int(c): v for c, v in meta.get("curves", {}).items()}
        return model


@dataclass
class TemplateBatch:
    """One training batch for one class: raw windows plus goal context."""

    cid: int
    attrs: np.ndarray      # [B, S+1, n]
    actions: np.ndarray    # [B, S, 4]
    rewards: np.ndarray    # [B, S]
    goal_z: np.ndarray     # [B, GOAL_DIM]


def group_single_episodes(dataset: Dataset) -> dict[int, list[Episode]]:
    if dataset.kind == "empty":
        raise WrongDatasetKind("stage 1 requires a nonempty single-object dataset")
    if dataset.kind != "single":
        raise WrongDatasetKind("stage 1 requires single-object episodes only")
    groups: dict[int, list[Episode]] = {}
    for ep in dataset.episodes:
        groups.setdefault(ep.class_ids[0], []).append(ep)
    return groups


def episode_goal_z(dataset: Dataset, ep: Episode, index: int = 0) -> np.ndarray:
    spec = dataset.specs[ep.spec_id]
    return normalize_goal(spec.goals[index], spec.workspace)


def make_window_batch(dataset: Dataset, episodes: list[Episode], cid: int,
                      idx: np.ndarray, starts: np.ndarray, seq_len: int) -> TemplateBatch:
    n = episodes[0].attrs[0].shape[1]
    b = len(idx)
    attrs = np.zeros((b, seq_len + 1, n))
    actions = np.zeros((b, seq_len, ACTION_DIM))
    rewards = np.zeros((b, seq_len))
    goal_z = np.zeros((b, 2))
    for j, (e, s) in enumerate(zip(idx, starts)):
        ep = episodes[e]
        attrs[j] = ep.attrs[0][s:s + seq_len + 1]
        actions[j] = ep.actions[s:s + seq_len]
        rewards[j] = ep.per_object_rewards[s:s + seq_len, 0]
        goal_z[j] = episode_goal_z(dataset, ep)
    return TemplateBatch(cid, attrs, actions, rewards, goal_z)


def step1_loss(model: TemplateModel, batch: TemplateBatch,
               gamma: float | None = None) -> Tensor:
    """Weighted prediction error (dynamics + reward) plus gate sparsity.

    The prediction term is the mean over batch and time of the summed
    per-attribute weighted squared errors; the sparsity term sums every
    soft gate value of the batch's class, scaled by gamma_sparse (callers
    may pass a warmup-scaled gamma).
    """
    cid = batch.cid
    norm = model.normalizers[cid]
    z_attrs = norm.z_attrs(batch.attrs)
    z_act = norm.z_action(batch.actions)
    preds = model.dynamics_window(cid, z_attrs, z_act)
    target = Tensor(z_attrs[:, 1:])
    w = Tensor(norm.weight)
    dyn = (((preds - target) ** 2) * w).sum(axis=-1).mean()
    r_pred = model.reward_window(cid, z_attrs, z_act, batch.goal_z)
    rew = ((r_pred - Tensor(norm.z_reward(batch.rewards))) ** 2).mean()
    gates = model.soft_gates(cid)
    sparse = sum((g.sum() for g in gates.values()), start=Tensor(0.0))
    g = model.config.gamma_sparse if gamma is None else gamma
    return dyn + rew + g * sparse


def train_class_templates(dataset: Dataset, config: TemplateConfig
                          ) -> tuple[TemplateModel, dict[int, ClassTemplateGraph]]:
    """Fit gates and dynamics/reward networks per class on single-object
    data; returns the model and the thresholded template graphs."""
    groups = group_single_episodes(dataset)
    layout = Layout(tuple(BUILTIN_CLASSES[c] for c in sorted(groups)))
    model = TemplateModel(layout, config)
    for cid, eps in sorted(groups.items()):
        stacked = np.stack([ep.attrs[0] for ep in eps])
        acts = np.stack([ep.actions for ep in eps])
        rews = np.stack([ep.per_object_rewards[:, 0] for ep in eps])
        model.normalizers[cid] = fit_normalizer(stacked, acts, rews,
                                                sigma_floor=config.sigma_floor)
        model.curves[cid] = _train_one_class(model, dataset, eps, cid, config)
    return model, model.template_graphs()


def _train_one_class(model: TemplateModel, dataset: Dataset, episodes: list[Episode],
                     cid: int, config: TemplateConfig) -> list[float]:
    horizon = episodes[0].horizon
    if horizon < config.seq_len + 1:
        raise WrongDatasetKind(
            f"episodes of length {horizon} too short for seq_len {config.seq_len}")
    n_eps = len(episodes)
    class_params = {k for k in model.store.names() if f"{cid}." in k}
    if config.dense_gates:
        class_params -= model.gate_param_names()
    gate_lr = {k: config.lr * config.gate_lr_scale
               for k in model.gate_param_names() if f"{cid}." in k}
    n_starts = horizon - config.seq_len
    warmup = max(1, int(config.sparse_warmup * config.epochs))
    curve: list[float] = []
    for epoch in range(config.epochs):
        rng = philox(config.seed, 211, cid, epoch)
        gamma = config.gamma_sparse * min(1.0, epoch / warmup)
        windows = rng.permutation(n_eps * n_starts)
        losses = []
        for off in range(0, len(windows), config.batch):
            chunk = windows[off:off + config.batch]
            idx = chunk // n_starts
            starts = chunk % n_starts
            batch = make_window_batch(dataset, episodes, cid, idx, starts, config.seq_len)
            model.store.zero_grad()
            loss = step1_loss(model, batch, gamma=gamma)
            if not np.isfinite(loss.data):
                raise Diverged(f"stage-1 loss non-finite at epoch {epoch} (class {cid})")
            loss.backward()
            adam_update(model.store, collect_grads(model.store), config.lr,
                        only=class_params, lr_overrides=gate_lr,
                        weight_decay=config.weight_decay,
                        decay_exclude=model.gate_param_names())
            losses.append(float(loss.data))
        curve.append(float(np.mean(losses)))
    return curve


# -- object classifier -------------------------------------------------------

def trajectory_summary(attrs: np.ndarray, max_n: int) -> np.ndarray:
    """Fixed-length per-object features: mean, std, mean |change| and std of
    change per attribute slot, zero-padded to max_n."""
    n = attrs.shape[1]
    out = np.zeros(4 * max_n)
    diff = np.diff(attrs, axis=0) if attrs.shape[0] > 1 else np.zeros_like(attrs)
    out[0:n] = attrs.mean(axis=0)
    out[max_n:max_n + n] = attrs.std(axis=0)
    out[2 * max_n:2 * max_n + n] = np.abs(diff).mean(axis=0)
    out[3 * max_n:3 * max_n + n] = diff.std(axis=0)
    return out


class ObjectClassifier:
    """Supervised class predictor over trajectory summaries."""

    def __init__(self, class_ids: list[int], max_n: int, hidden: int, seed: int):
        self.class_ids = sorted(class_ids)
        self.max_n = max_n
        self.store = ParamStore()
        self.mlp = MLP(self.store, "clf", [4 * max_n, hidden, len(self.class_ids)],
                       philox(seed, 303))
        self.mu = np.zeros(4 * max_n)
        self.sd = np.ones(4 * max_n)

    def logits(self, summaries: np.ndarray) -> Tensor:
        z = (summaries - self.mu) / self.sd
        return self.mlp(Tensor(z))

    def predict(self, summary: np.ndarray) -> int:
        out = self.logits(np.atleast_2d(summary)).data
        return self.class_ids[int(np.argmax(out[0]))]

    def accuracy(self, summaries: np.ndarray, labels: np.ndarray) -> float:
        out = self.logits(summaries).data
        pred = np.array([self.class_ids[i] for i in np.argmax(out, axis=1)])
        return float((pred == labels).mean())

    def meta(self) -> dict:
        return {"class_ids": self.class_ids, "max_n": self.max_n,
                "mu": self.mu.tolist(), "sd": self.sd.tolist()}


def classify_object(classifier: ObjectClassifier, trajectory_summary_vec: np.ndarray) -> int:
    """Argmax of the class logits; exact ties resolve to the lowest id."""
    return classifier.predict(trajectory_summary_vec)


def train_classifier(dataset: Dataset, hidden: int = 32, epochs: int = 300,
                     lr: float = 5e-3, seed: int = 0) -> ObjectClassifier:
    groups = group_single_episodes(dataset)
    class_ids = sorted(groups)
    max_n = max(BUILTIN_CLASSES[c].n_attributes for c in class_ids)
    feats, labels = [], []
    for cid, eps in sorted(groups.items()):
        for ep in eps:
            feats.append(trajectory_summary(ep.attrs[0], max_n))
            labels.append(cid)
    x = np.stack(feats)
    y = np.array(labels)
    clf = ObjectClassifier(class_ids, max_n, hidden, seed)
    clf.mu = x.mean(axis=0)
    clf.sd = np.maximum(x.std(axis=0), 1e-6)
    onehot = np.zeros((len(y), len(class_ids)))
    for i, cid in enumerate(y):
        onehot[i, class_ids.index(cid)] = 1.0
    for epoch in range(epochs):
        clf.store.zero_grad()
        logits = clf.logits(x)
        shift = Tensor(np.max(logits.data, axis=1, keepdims=True))
        lse = ((logits - shift).exp().sum(axis=1, keepdims=True)).log() + shift
        ce = (lse.reshape(-1) - (logits * Tensor(onehot)).sum(axis=1)).mean()
        if not np.isfinite(ce.data):
            raise Diverged("classifier loss non-finite")
        ce.backward()
        adam_update(clf.store, collect_grads(clf.store), lr)
    return clf
