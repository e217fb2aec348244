"""Symbolic push & switch environments with known ground truth.

Two built-in object classes live on a 2-D desk:

  BOX     pos_x, pos_y, vel_x, vel_y, color, shape; latents (mass, friction)
  SWITCH  pos_x, pos_y, angle, color; latent (stiffness)

An action is (ex, ey, fx, fy): the effector is placed at (ex, ey) and
exerts force (fx, fy). The nearest object within the reach radius is bound;
only the bound object feels the action. The reference dynamics below are
the oracle every learned structure is compared against:

  bound box:     v' = (1 - f*dt) v + (F/m) dt     (+ collision coupling)
  unbound box:   v' = (1 - f*dt) v                (+ collision coupling)
  collision:     each ordered box pair within the collide radius adds
                 kappa * (v_other - v_self) to v' (not scaled by dt)
  box position:  p' = p + v dt, clipped to the workspace; the velocity
                 component on a clipped axis is zeroed
  bound switch:  angle' = clamp(angle + k * fx * dt, 0, 1)
  rewards:       box   r_i = -|pos_i - goal_i|_2     (pre-transition state)
                 switch r_i = -|angle_i - target_i|

Rewards are computed on the state the action was applied in, so the action
has no edge into the reward. Episodes, datasets (JSON Lines), and
ground-truth graphs are produced here; everything is deterministic given
(spec, seed) via Philox streams.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    DYNAMIC, STATIC, ClassSpec, ClassTemplateGraph, EnvState,
    InteractionPatternGraph, ObjectState, validate_class_system,
)
from .errors import (
    ConfigError, IoError, NonFiniteAction, PlacementFailed, ShapeMismatch,
    UnknownClass,
)
from .rng import philox

BOX_ID = 0
SWITCH_ID = 1

BOX = ClassSpec(
    class_id=BOX_ID,
    attribute_names=("pos_x", "pos_y", "vel_x", "vel_y", "color", "shape"),
    attribute_kinds=(DYNAMIC, DYNAMIC, DYNAMIC, DYNAMIC, STATIC, STATIC),
    latent_dim=2,  # (mass, friction)
)
SWITCH = ClassSpec(
    class_id=SWITCH_ID,
    attribute_names=("pos_x", "pos_y", "angle", "color"),
    attribute_kinds=(STATIC, STATIC, DYNAMIC, STATIC),
    latent_dim=1,  # (stiffness,)
)
BUILTIN_CLASSES = {BOX_ID: BOX, SWITCH_ID: SWITCH}
MAX_ATTRS = max(c.n_attributes for c in BUILTIN_CLASSES.values())
MAX_LATENT = max(c.latent_dim for c in BUILTIN_CLASSES.values())

# attribute indices
PX, PY, VX, VY, BCOLOR, BSHAPE = range(6)
SANGLE, SCOLOR = 2, 3

COLOR_PALETTE = (0.0, 1 / 3, 2 / 3, 1.0)
SHAPE_PALETTE = (0.0, 0.5, 1.0)

# latent value pools (simulator units)
TRAIN_MASSES = (4.0, 6.0, 8.0, 10.0)
TRAIN_FRICTIONS = (0.4, 0.6, 0.8, 1.0)
TEST_MASSES = (1.0, 2.0, 3.0, 11.0, 13.0, 5.0, 7.0, 9.0)
TEST_FRICTIONS = (0.1, 0.2, 1.1, 1.3, 0.5, 0.7, 0.9)
TRAIN_STIFFNESS = TRAIN_FRICTIONS
TEST_STIFFNESS = TEST_FRICTIONS

SCHEMA_ENV = "daft-env-v1"


@dataclass(frozen=True)
class ObjectConfig:
    """One object in an environment: class, latents, fixed static attributes
    (sampled from the palettes when None), and its placement region."""

    class_id: int
    theta: tuple[float, ...]
    color: float | None = None
    shape: float | None = None
    region: tuple[float, float, float, float] | None = None


@dataclass(frozen=True)
class EnvSpec:
    spec_id: str
    objects: tuple[ObjectConfig, ...]
    goals: tuple[tuple[float, ...], ...]
    dt: float = 0.1
    collide_radius: float = 0.12
    reach_radius: float = 0.2
    workspace: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    horizon: int = 100
    kappa: float = 0.5
    f_max: float = 1.0
    placement_margin: float = 0.15
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "goals", tuple(tuple(g) for g in self.goals))
        validate_env_spec(self)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    @property
    def class_ids(self) -> tuple[int, ...]:
        return tuple(o.class_id for o in self.objects)


def validate_env_spec(spec: EnvSpec) -> None:
    if spec.dt <= 0:
        raise ConfigError("dt must be positive")
    if spec.collide_radius <= 0 or spec.reach_radius <= 0:
        raise ConfigError("radii must be positive")
    if spec.f_max <= 0 or spec.horizon < 1:
        raise ConfigError("f_max must be positive and horizon >= 1")
    x0, y0, x1, y1 = spec.workspace
    if not (x1 > x0 and y1 > y0):
        raise ConfigError("workspace must have positive extent")
    if len(spec.goals) != len(spec.objects):
        raise ConfigError("one goal per object required")
    for obj, goal in zip(spec.objects, spec.goals):
        if obj.class_id not in BUILTIN_CLASSES:
            raise UnknownClass(f"unknown class id {obj.class_id}")
        cls = BUILTIN_CLASSES[obj.class_id]
        if len(obj.theta) != cls.latent_dim:
            raise ConfigError(
                f"class {obj.class_id} expects {cls.latent_dim} latent values, got {len(obj.theta)}")
        if obj.class_id == BOX_ID:
            mass, friction = obj.theta
            if mass <= 0:
                raise ConfigError("box mass must be positive")
            if not (0 < friction * spec.dt < 1):
                raise ConfigError("box friction must satisfy 0 < f*dt < 1")
            if len(goal) != 2:
                raise ConfigError("box goal is a 2-D target position")
        else:
            if obj.theta[0] < 0:
                raise ConfigError("switch stiffness must be nonnegative")
            if len(goal) != 1:
                raise ConfigError("switch goal is a scalar target angle")


@dataclass(frozen=True)
class StepRecord:
    """Outcome of applying one action: the successor state plus the reward,
    binding, and interaction events of the transition (all computed on the
    state the action was applied in)."""

    state: EnvState
    action: np.ndarray
    reward: float
    per_object_reward: np.ndarray
    true_binding: int | None
    true_interactions: frozenset[tuple[int, int]]


# -- array-level simulation core -------------------------------------------

class EnvDynamics:
    """Precomputed per-spec constants plus a batched step function.

    Attribute rows are padded to MAX_ATTRS so boxes and switches share one
    array; per-class masks select the live entries. The batched form is
    what MPC rollouts with the oracle model use.
    """

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        m = spec.n_objects
        self.class_ids = np.array(spec.class_ids, dtype=np.int64)
        self.is_box = self.class_ids == BOX_ID
        self.mass = np.array([o.theta[0] if o.class_id == BOX_ID else 1.0 for o in spec.objects])
        self.friction = np.array([o.theta[1] if o.class_id == BOX_ID else 0.0 for o in spec.objects])
        self.stiffness = np.array([o.theta[0] if o.class_id == SWITCH_ID else 0.0 for o in spec.objects])
        self.goal_pos = np.zeros((m, 2))
        self.goal_angle = np.zeros(m)
        for i, (obj, goal) in enumerate(zip(spec.objects, spec.goals)):
            if obj.class_id == BOX_ID:
                self.goal_pos[i] = goal
            else:
                self.goal_angle[i] = goal[0]

    def rewards(self, attrs: np.ndarray) -> np.ndarray:
        """Per-object rewards of states [..., m, MAX_ATTRS]."""
        pos = attrs[..., :, (PX, PY)]
        box_r = -np.linalg.norm(pos - self.goal_pos, axis=-1)
        switch_r = -np.abs(attrs[..., :, SANGLE] - self.goal_angle)
        return np.where(self.is_box, box_r, switch_r)

    def binding(self, attrs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Index of the nearest object within reach, else -1. [...]-shaped."""
        pos = attrs[..., :, (PX, PY)]
        eff = actions[..., None, :2]
        dist = np.linalg.norm(pos - eff, axis=-1)
        nearest = np.argmin(dist, axis=-1)
        within = np.take_along_axis(dist, nearest[..., None], axis=-1)[..., 0] <= self.spec.reach_radius
        return np.where(within, nearest, -1)

    def interactions(self, attrs: np.ndarray) -> np.ndarray:
        """Boolean [..., m, m] pair matrix: centers within the collide radius
        (diagonal false). Symmetric by construction."""
        pos = attrs[..., :, (PX, PY)]
        diff = pos[..., :, None, :] - pos[..., None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        m = pos.shape[-2]
        eye = np.eye(m, dtype=bool)
        return (dist < self.spec.collide_radius) & ~eye

    def step(self, attrs: np.ndarray, actions: np.ndarray
             ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Advance states [..., m, MAX_ATTRS] under actions [..., 4].

        Returns (next_attrs, per_object_rewards, bound_index, pair_matrix);
        rewards/binding/pairs refer to the input state.
        """
        spec = self.spec
        if not np.isfinite(actions).all():
            raise NonFiniteAction("action contains non-finite entries")
        force = np.clip(actions[..., 2:4], -spec.f_max, spec.f_max)

        rewards = self.rewards(attrs)
        bound = self.binding(attrs, actions)
        pairs = self.interactions(attrs)

        m = attrs.shape[-2]
        bound_onehot = (bound[..., None] == np.arange(m)).astype(np.float64)

        pos = attrs[..., :, (PX, PY)]
        vel = attrs[..., :, (VX, VY)]

        # box velocities: friction decay, bound force, pairwise coupling
        decay = 1.0 - self.friction * spec.dt
        accel = bound_onehot[..., None] * force[..., None, :] / self.mass[..., :, None] * spec.dt
        box_pairs = pairs & self.is_box[:, None] & self.is_box[None, :]
        rel = vel[..., None, :, :] - vel[..., :, None, :]   # [..., i, k, :] = v_k - v_i
        coupling = spec.kappa * (box_pairs[..., None] * rel).sum(axis=-2)
        new_vel = decay[..., :, None] * vel + accel + coupling
        new_vel = np.where(self.is_box[:, None], new_vel, vel)

        # box positions advance with the *old* velocity, then clip
        new_pos = np.where(self.is_box[:, None], pos + vel * spec.dt, pos)
        x0, y0, x1, y1 = spec.workspace
        lo = np.array([x0, y0])
        hi = np.array([x1, y1])
        clipped = np.clip(new_pos, lo, hi)
        hit_wall = clipped != new_pos
        new_vel = np.where(hit_wall & self.is_box[:, None], 0.0, new_vel)

        # switch angles move only while bound
        angle = attrs[..., :, SANGLE]
        d_angle = self.stiffness * force[..., None, 0] * spec.dt * bound_onehot
        new_angle = np.clip(angle + d_angle, 0.0, 1.0)
        new_angle = np.where(self.is_box, angle, new_angle)

        out = attrs.copy()
        out[..., :, (PX, PY)] = clipped
        # slots 2-3 hold (vel_x, vel_y) for boxes but (angle, color) for
        # switches; new_vel was masked to leave switch rows unchanged, and
        # the angle slot then gets its own update
        out[..., :, (VX, VY)] = new_vel
        out[..., :, SANGLE] = np.where(self.is_box, out[..., :, SANGLE], new_angle)
        return out, rewards, bound, pairs


# -- EnvState conversion ----------------------------------------------------

def state_to_attrs(state: EnvState) -> np.ndarray:
    out = np.zeros((state.n_objects, MAX_ATTRS))
    for i, obj in enumerate(state.objects):
        out[i, :obj.attributes.shape[0]] = obj.attributes
    return out


def attrs_to_state(spec: EnvSpec, attrs: np.ndarray, agent: np.ndarray, t: int) -> EnvState:
    objects = []
    for i, cfg in enumerate(spec.objects):
        n = BUILTIN_CLASSES[cfg.class_id].n_attributes
        objects.append(ObjectState(cfg.class_id, attrs[i, :n].copy(), np.array(cfg.theta)))
    return EnvState(tuple(objects), agent, t)


# -- reset / step over EnvState --------------------------------------------

def reset(spec: EnvSpec, seed: int) -> EnvState:
    """Initial state: positions rejection-sampled (pairwise distance above
    the collide radius, at most 1000 tries per object), velocities and
    angles zero, static attributes from the spec or the palettes."""
    rng = philox(seed, spec.seed, 11)
    x0, y0, x1, y1 = spec.workspace
    margin = spec.placement_margin * min(x1 - x0, y1 - y0)
    placed: list[np.ndarray] = []
    objects: list[ObjectState] = []
    for i, cfg in enumerate(spec.objects):
        region = cfg.region or (x0 + margin, y0 + margin, x1 - margin, y1 - margin)
        for attempt in range(1000):
            pos = rng.uniform(region[:2], region[2:])
            if all(np.linalg.norm(pos - p) > spec.collide_radius for p in placed):
                break
        else:
            raise PlacementFailed(f"could not place object {i} after 1000 tries")
        placed.append(pos)
        color = cfg.color if cfg.color is not None else float(rng.choice(COLOR_PALETTE))
        if cfg.class_id == BOX_ID:
            shape = cfg.shape if cfg.shape is not None else float(rng.choice(SHAPE_PALETTE))
            attrs = np.array([pos[0], pos[1], 0.0, 0.0, color, shape])
        else:
            attrs = np.array([pos[0], pos[1], 0.0, color])
        objects.append(ObjectState(cfg.class_id, attrs, np.array(cfg.theta)))
    center = np.array([(x0 + x1) / 2, (y0 + y1) / 2])
    return EnvState(tuple(objects), center, 0)


def step(spec: EnvSpec, state: EnvState, action) -> StepRecord:
    """Apply one action; see the module docstring for the dynamics."""
    act = np.asarray(action, dtype=np.float64)
    if act.shape != (4,):
        raise ShapeMismatch("action must be (ex, ey, fx, fy)")
    dyn = EnvDynamics(spec)
    attrs = state_to_attrs(state)
    nxt, rewards, bound, pairs = dyn.step(attrs, act)
    next_state = attrs_to_state(spec, nxt, act[:2].copy(), state.t + 1)
    inter = frozenset((int(k), int(i)) for k, i in zip(*np.nonzero(pairs)))
    b = int(bound) if int(bound) >= 0 else None
    return StepRecord(
        state=next_state,
        action=act,
        reward=float(rewards.sum()),
        per_object_reward=rewards,
        true_binding=b,
        true_interactions=inter,
    )


# -- ground-truth graphs ----------------------------------------------------

def true_graphs(spec_or_classes) -> tuple[dict[int, ClassTemplateGraph],
                                          dict[tuple[int, int], InteractionPatternGraph]]:
    """Analytic graphs of the reference dynamics for the built-in classes.

    Box: velocity feeds itself and position per axis, positions self-feed,
    static attributes self-feed, the action and latents feed velocity only,
    reward reads position. Switch: angle self-feeds and is the only action
    and latent target, reward reads angle. The only nonzero pattern is
    box -> box velocity coupling per axis; the coupling constant is global,
    so no latent crosses between objects.
    """
    if isinstance(spec_or_classes, EnvSpec):
        class_ids = sorted(set(spec_or_classes.class_ids))
    else:
        class_ids = sorted(set(spec_or_classes))
    for cid in class_ids:
        if cid not in BUILTIN_CLASSES:
            raise UnknownClass(f"no ground truth for class {cid}")

    templates: dict[int, ClassTemplateGraph] = {}
    if BOX_ID in class_ids:
        g = np.zeros((6, 6))
        g[PX, PX] = g[PX, VX] = 1
        g[PY, PY] = g[PY, VY] = 1
        g[VX, VX] = 1
        g[VY, VY] = 1
        g[BCOLOR, BCOLOR] = 1
        g[BSHAPE, BSHAPE] = 1
        templates[BOX_ID] = ClassTemplateGraph(
            class_id=BOX_ID, g_s_to_s=g,
            g_a_to_s=np.array([0, 0, 1, 1, 0, 0.0]),
            g_theta_to_s=np.array([0, 0, 1, 1, 0, 0.0]),
            g_s_to_r=np.array([1, 1, 0, 0, 0, 0.0]),
            g_a_to_r=0.0,
        )
    if SWITCH_ID in class_ids:
        g = np.zeros((4, 4))
        g[PX, PX] = 1
        g[PY, PY] = 1
        g[SANGLE, SANGLE] = 1
        g[SCOLOR, SCOLOR] = 1
        templates[SWITCH_ID] = ClassTemplateGraph(
            class_id=SWITCH_ID, g_s_to_s=g,
            g_a_to_s=np.array([0, 0, 1, 0.0]),
            g_theta_to_s=np.array([0, 0, 1, 0.0]),
            g_s_to_r=np.array([0, 0, 1, 0.0]),
            g_a_to_r=0.0,
        )

    patterns: dict[tuple[int, int], InteractionPatternGraph] = {}
    for src in class_ids:
        for tgt in class_ids:
            n_src = BUILTIN_CLASSES[src].n_attributes
            n_tgt = BUILTIN_CLASSES[tgt].n_attributes
            mat = np.zeros((n_src, n_tgt))
            if src == BOX_ID and tgt == BOX_ID:
                mat[VX, VX] = 1
                mat[VY, VY] = 1
            patterns[(src, tgt)] = InteractionPatternGraph(
                source_class=src, target_class=tgt,
                g_src_to_tgt=mat, g_theta_src_to_tgt=np.zeros(n_tgt),
            )
    return templates, patterns


# -- episodes and datasets --------------------------------------------------

@dataclass
class Episode:
    """One rollout: per-object attribute sequences plus oracle annotations."""

    spec_id: str
    seed: int
    class_ids: tuple[int, ...]
    attrs: list[np.ndarray]            # per object: [T, n_j]
    actions: np.ndarray                # [T, 4]
    rewards: np.ndarray                # [T]
    per_object_rewards: np.ndarray     # [T, m]
    true_binding: np.ndarray           # [T], -1 for none
    true_interactions: list[frozenset[tuple[int, int]]]

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def n_objects(self) -> int:
        return len(self.class_ids)

    def padded_attrs(self) -> np.ndarray:
        """[T, m, MAX_ATTRS] zero-padded attribute array."""
        t, m = self.horizon, self.n_objects
        out = np.zeros((t, m, MAX_ATTRS))
        for i, a in enumerate(self.attrs):
            out[:, i, :a.shape[1]] = a
        return out


@dataclass
class Dataset:
    episodes: list[Episode]
    specs: dict[str, EnvSpec] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        if not self.episodes:
            return "empty"
        counts = {ep.n_objects for ep in self.episodes}
        return "single" if counts == {1} else "multi"

    def __len__(self) -> int:
        return len(self.episodes)


class ScriptedPolicy:
    """Exploration policy that keeps the effector on an object most steps,
    pushes boxes toward goals or other objects (driving collisions), and
    flips switches in both directions. Redraws its plan every few steps."""

    def __init__(self, spec: EnvSpec, rng: np.random.Generator,
                 p_far: float = 0.15, dwell: int = 8):
        self.spec = spec
        self.rng = rng
        self.p_far = p_far
        self.dwell = dwell
        self._steps_left = 0
        self._target = 0
        self._far = False
        self._aim: np.ndarray | None = None
        self._flip_sign = 1.0

    def _replan(self, state: EnvState) -> None:
        rng = self.rng
        spec = self.spec
        self._steps_left = int(rng.integers(self.dwell // 2, self.dwell + 1))
        self._far = rng.uniform() < self.p_far
        self._target = int(rng.integers(0, spec.n_objects))
        obj = state.objects[self._target]
        self._flip_sign = 1.0 if rng.uniform() < 0.7 else -1.0
        mode = rng.uniform()
        if obj.class_id == BOX_ID and mode < 0.4:
            self._aim = np.array(spec.goals[self._target])
        elif obj.class_id == BOX_ID and mode < 0.75 and spec.n_objects > 1:
            others = [i for i in range(spec.n_objects) if i != self._target]
            pick = others[int(rng.integers(0, len(others)))]
            self._aim = state.objects[pick].attributes[:2].copy()
        else:
            self._aim = None

    def __call__(self, state: EnvState) -> np.ndarray:
        rng = self.rng
        spec = self.spec
        if self._steps_left <= 0:
            self._replan(state)
        self._steps_left -= 1
        x0, y0, x1, y1 = spec.workspace
        if self._far:
            eff = rng.uniform([x0, y0], [x1, y1])
            force = rng.uniform(-spec.f_max, spec.f_max, size=2)
            return np.array([eff[0], eff[1], force[0], force[1]])
        obj = state.objects[self._target]
        pos = obj.attributes[:2]
        eff = pos + rng.uniform(-0.4, 0.4, size=2) * spec.reach_radius
        if obj.class_id == SWITCH_ID:
            fx = self._flip_sign * rng.uniform(0.3, 1.0) * spec.f_max
            fy = rng.uniform(-0.2, 0.2) * spec.f_max
        elif self._aim is not None:
            direction = self._aim - pos
            norm = np.linalg.norm(direction)
            direction = direction / norm if norm > 1e-9 else rng.normal(size=2)
            fx, fy = direction * rng.uniform(0.5, 1.0) * spec.f_max
        else:
            fx, fy = rng.uniform(-spec.f_max, spec.f_max, size=2)
        return np.array([eff[0], eff[1], fx, fy])


def random_policy(spec: EnvSpec, rng: np.random.Generator):
    x0, y0, x1, y1 = spec.workspace

    def act(state: EnvState) -> np.ndarray:
        eff = rng.uniform([x0, y0], [x1, y1])
        force = rng.uniform(-spec.f_max, spec.f_max, size=2)
        return np.array([eff[0], eff[1], force[0], force[1]])
    return act


def rollout_episode(spec: EnvSpec, policy, seed: int) -> Episode:
    state = reset(spec, seed)
    m = spec.n_objects
    t_max = spec.horizon
    attrs = [np.zeros((t_max, BUILTIN_CLASSES[c].n_attributes)) for c in spec.class_ids]
    actions = np.zeros((t_max, 4))
    rewards = np.zeros(t_max)
    per_obj = np.zeros((t_max, m))
    binding = np.full(t_max, -1, dtype=np.int64)
    interactions: list[frozenset] = []
    for t in range(t_max):
        for i, obj in enumerate(state.objects):
            attrs[i][t] = obj.attributes
        action = policy(state)
        rec = step(spec, state, action)
        actions[t] = rec.action
        rewards[t] = rec.reward
        per_obj[t] = rec.per_object_reward
        binding[t] = -1 if rec.true_binding is None else rec.true_binding
        interactions.append(rec.true_interactions)
        state = rec.state
    return Episode(spec.spec_id, seed, spec.class_ids, attrs, actions,
                   rewards, per_obj, binding, interactions)


def gen_dataset(spec_list: list[EnvSpec], policy: str, episodes: int, seed: int,
                scripted_p_far: float = 0.15) -> Dataset:
    """Roll out `episodes` episodes round-robin over the specs.

    policy "random" places the effector uniformly; "scripted" keeps it on
    objects and aims pushes (see ScriptedPolicy). Episode e of the dataset
    uses the Philox stream (seed, e), so any prefix of a larger dataset is
    byte-identical to a smaller one.
    """
    if policy not in ("random", "scripted"):
        raise ConfigError(f"unknown policy {policy!r}")
    if not spec_list:
        raise ConfigError("need at least one env spec")
    out: list[Episode] = []
    for e in range(episodes):
        spec = spec_list[e % len(spec_list)]
        rng = philox(seed, e, 3)
        pol = (ScriptedPolicy(spec, rng, p_far=scripted_p_far)
               if policy == "scripted" else random_policy(spec, rng))
        out.append(rollout_episode(spec, pol, seed=int(philox(seed, e, 5).integers(2 ** 31))))
    return Dataset(out, {s.spec_id: s for s in spec_list})


# -- JSON serialization -----------------------------------------------------

def spec_to_dict(spec: EnvSpec) -> dict:
    return {
        "schema": SCHEMA_ENV,
        "spec_id": spec.spec_id,
        "objects": [
            {"class_id": o.class_id, "theta": list(o.theta), "color": o.color,
             "shape": o.shape, "region": list(o.region) if o.region else None}
            for o in spec.objects
        ],
        "goals": [list(g) for g in spec.goals],
        "dt": spec.dt,
        "collide_radius": spec.collide_radius,
        "reach_radius": spec.reach_radius,
        "workspace": list(spec.workspace),
        "horizon": spec.horizon,
        "kappa": spec.kappa,
        "f_max": spec.f_max,
        "placement_margin": spec.placement_margin,
        "seed": spec.seed,
    }


def spec_from_dict(doc: dict) -> EnvSpec:
    if doc.get("schema") != SCHEMA_ENV:
        raise IoError(f"expected schema {SCHEMA_ENV!r}")
    return EnvSpec(
        spec_id=doc["spec_id"],
        objects=tuple(ObjectConfig(o["class_id"], tuple(o["theta"]), o.get("color"),
                                   o.get("shape"),
                                   tuple(o["region"]) if o.get("region") else None)
                      for o in doc["objects"]),
        goals=tuple(tuple(g) for g in doc["goals"]),
        dt=doc["dt"], collide_radius=doc["collide_radius"],
        reach_radius=doc["reach_radius"], workspace=tuple(doc["workspace"]),
        horizon=doc["horizon"], kappa=doc["kappa"], f_max=doc["f_max"],
        placement_margin=doc["placement_margin"], seed=doc["seed"],
    )


def _episode_to_json(ep: Episode) -> str:
    steps = []
    for t in range(ep.horizon):
        steps.append({
            "attrs": [ep.attrs[i][t].tolist() for i in range(ep.n_objects)],
            "action": ep.actions[t].tolist(),
            "reward": float(ep.rewards[t]),
            "per_object_reward": ep.per_object_rewards[t].tolist(),
            "true_binding": None if ep.true_binding[t] < 0 else int(ep.true_binding[t]),
            "true_interactions": sorted([list(p) for p in ep.true_interactions[t]]),
        })
    return json.dumps({"spec_id": ep.spec_id, "seed": ep.seed, "steps": steps},
                      sort_keys=True, separators=(",", ":"))


def save_dataset(ds: Dataset, directory) -> tuple[Path, Path]:
    """Write episodes.jsonl (one episode per line) and specs.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    data_path = d / "episodes.jsonl"
    with open(data_path, "w") as fh:
        for ep in ds.episodes:
            fh.write(_episode_to_json(ep) + "\n")
    specs_path = d / "specs.json"
    with open(specs_path, "w") as fh:
        json.dump({sid: spec_to_dict(s) for sid, s in sorted(ds.specs.items())},
                  fh, sort_keys=True, indent=1)
    return data_path, specs_path


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    data_path = d / "episodes.jsonl"
    specs_path = d / "specs.json"
    if not data_path.exists() or not specs_path.exists():
        raise IoError(f"dataset files missing under {d}")
    with open(specs_path) as fh:
        specs = {sid: spec_from_dict(doc) for sid, doc in json.load(fh).items()}
    episodes = []
    with open(data_path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            spec = specs.get(doc["spec_id"])
            if spec is None:
                raise IoError(f"episode references unknown spec {doc['spec_id']!r}")
            steps = doc["steps"]
            m = spec.n_objects
            t_max = len(steps)
            attrs = [np.zeros((t_max, BUILTIN_CLASSES[c].n_attributes))
                     for c in spec.class_ids]
            actions = np.zeros((t_max, 4))
            rewards = np.zeros(t_max)
            per_obj = np.zeros((t_max, m))
            binding = np.full(t_max, -1, dtype=np.int64)
            inters = []
            for t, s in enumerate(steps):
                for i in range(m):
                    attrs[i][t] = s["attrs"][i]
                actions[t] = s["action"]
                rewards[t] = s["reward"]
                per_obj[t] = s["per_object_reward"]
                binding[t] = -1 if s["true_binding"] is None else s["true_binding"]
                inters.append(frozenset(tuple(p) for p in s["true_interactions"]))
            episodes.append(Episode(doc["spec_id"], doc["seed"], spec.class_ids,
                                    attrs, actions, rewards, per_obj, binding, inters))
    return Dataset(episodes, specs)


# -- spec factories ---------------------------------------------------------

def make_task_spec(spec_id: str, class_ids: list[int], thetas: list[tuple],
                   goals: list[tuple] | None = None, rng: np.random.Generator | None = None,
                   **overrides) -> EnvSpec:
    """Convenience builder; goals are sampled in the inner workspace when
    not given (boxes: positions, switches: target angles in [0.6, 0.95])."""
    rng = rng or philox(0, 17)
    objs = []
    out_goals = []
    for cid, theta in zip(class_ids, thetas):
        objs.append(ObjectConfig(class_id=cid, theta=tuple(theta)))
    ws = overrides.get("workspace", (0.0, 0.0, 1.0, 1.0))
    margin = overrides.get("placement_margin", 0.15) * min(ws[2] - ws[0], ws[3] - ws[1])
    if goals is None:
        for cid in class_ids:
            if cid == BOX_ID:
                g = rng.uniform([ws[0] + margin, ws[1] + margin],
                                [ws[2] - margin, ws[3] - margin])
                out_goals.append((float(g[0]), float(g[1])))
            else:
                out_goals.append((float(rng.uniform(0.6, 0.95)),))
    else:
        out_goals = [tuple(g) for g in goals]
    return EnvSpec(spec_id=spec_id, objects=tuple(objs), goals=tuple(out_goals), **overrides)


def sample_latents(class_id: int, rng: np.random.Generator, heldout: bool = False) -> tuple:
    """Draw latents from the training or held-out value pools."""
    if class_id == BOX_ID:
        masses = TEST_MASSES if heldout else TRAIN_MASSES
        frictions = TEST_FRICTIONS if heldout else TRAIN_FRICTIONS
        return (float(rng.choice(masses)), float(rng.choice(frictions)))
    stiff = TEST_STIFFNESS if heldout else TRAIN_STIFFNESS
    return (float(rng.choice(stiff)),)
