"""Class system, the three graph families, and grounding.

A class system declares object classes with named attributes and a latent
parameter dimension. Three kinds of graphs describe how dynamics and
reward factor over attributes:

  ClassTemplateGraph      per class, time-invariant: which own attributes,
                          the action, and the latent vector feed each
                          next-step attribute and the reward.
  InteractionPatternGraph per ordered class pair, time-invariant: which
                          source attributes (and the source latent) feed
                          each target attribute while the pair interacts.
  DynamicInteractionGraph per episode: a time-indexed object-level edge
                          matrix plus the per-step action-binding weights.

ground_parents combines the three into the exact parent set of one
attribute of one object at one timestep.

All types are immutable value objects; graphs serialize to the
``daft-graphs-v1`` JSON schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateAttribute, DuplicateClassId, IndexOutOfRange, ShapeMismatch,
    UnknownClass,
)

NO_BINDING = -1

STATIC = "static"
DYNAMIC = "dynamic"


@dataclass(frozen=True)
class ClassSpec:
    """One object class: attribute names/kinds and the latent dimension."""

    class_id: int
    attribute_names: tuple[str, ...]
    attribute_kinds: tuple[str, ...]
    latent_dim: int = 0

    def __post_init__(self):
        names = self.attribute_names
        if len(names) < 1:
            raise DuplicateAttribute(f"class {self.class_id}: needs at least one attribute")
        if len(set(names)) != len(names):
            raise DuplicateAttribute(f"class {self.class_id}: attribute names not unique")
        if len(self.attribute_kinds) != len(names):
            raise ShapeMismatch(f"class {self.class_id}: kinds/names length mismatch")
        bad = set(self.attribute_kinds) - {STATIC, DYNAMIC}
        if bad:
            raise ShapeMismatch(f"class {self.class_id}: unknown attribute kinds {bad}")
        if self.latent_dim < 0:
            raise ShapeMismatch(f"class {self.class_id}: latent_dim must be >= 0")

    @property
    def n_attributes(self) -> int:
        return len(self.attribute_names)

    def attr_index(self, name: str) -> int:
        try:
            return self.attribute_names.index(name)
        except ValueError as exc:
            raise IndexOutOfRange(f"class {self.class_id} has no attribute {name!r}") from exc


def validate_class_system(classes: list[ClassSpec]) -> None:
    """Raise if class ids repeat. Per-class name uniqueness is checked at
    construction; re-verified here so plain dicts loaded from JSON fail too."""
    seen: set[int] = set()
    for c in classes:
        if c.class_id in seen:
            raise DuplicateClassId(f"class id {c.class_id} appears twice")
        seen.add(c.class_id)
        if len(set(c.attribute_names)) != len(c.attribute_names):
            raise DuplicateAttribute(f"class {c.class_id}: attribute names not unique")


def _binary(mat, shape, what: str) -> np.ndarray:
    a = np.asarray(mat, dtype=np.float64)
    if a.shape != shape:
        raise ShapeMismatch(f"{what}: expected shape {shape}, got {a.shape}")
    if not np.isin(a, (0.0, 1.0)).all():
        raise ShapeMismatch(f"{what}: entries must be 0 or 1")
    return a


@dataclass(frozen=True)
class ClassTemplateGraph:
    """Binary masks of one class's intra-object dependencies.

    Row ``l`` of ``g_s_to_s`` lists which attributes at t feed attribute l
    at t+1. ``g_a_to_s``/``g_theta_to_s`` flag action and latent edges per
    target attribute; ``g_s_to_r``/``g_a_to_r`` feed the per-object reward.
    """

    class_id: int
    g_s_to_s: np.ndarray
    g_a_to_s: np.ndarray
    g_theta_to_s: np.ndarray
    g_s_to_r: np.ndarray
    g_a_to_r: float

    def __post_init__(self):
        n = self.g_s_to_s.shape[0] if self.g_s_to_s.ndim == 2 else -1
        object.__setattr__(self, "g_s_to_s", _binary(self.g_s_to_s, (n, n), "g_s_to_s"))
        object.__setattr__(self, "g_a_to_s", _binary(self.g_a_to_s, (n,), "g_a_to_s"))
        object.__setattr__(self, "g_theta_to_s", _binary(self.g_theta_to_s, (n,), "g_theta_to_s"))
        object.__setattr__(self, "g_s_to_r", _binary(self.g_s_to_r, (n,), "g_s_to_r"))
        if self.g_a_to_r not in (0, 1):
            raise ShapeMismatch("g_a_to_r must be 0 or 1")
        for arr in ("g_s_to_s", "g_a_to_s", "g_theta_to_s", "g_s_to_r"):
            getattr(self, arr).setflags(write=False)

    @property
    def n_attributes(self) -> int:
        return self.g_s_to_s.shape[0]

    def check_static(self, spec: ClassSpec) -> None:
        """Static attributes may only carry their own self-edge."""
        for l, kind in enumerate(spec.attribute_kinds):
            if kind != STATIC:
                continue
            row = self.g_s_to_s[l]
            ok = row[l] == 1 and row.sum() == 1 and self.g_a_to_s[l] == 0 and self.g_theta_to_s[l] == 0
            if not ok:
                raise ShapeMismatch(
                    f"class {spec.class_id}: static attribute "
                    f"{spec.attribute_names[l]!r} must have exactly its self-edge")


@dataclass(frozen=True)
class InteractionPatternGraph:
    """Attribute-level coupling for an ordered (source -> target) class pair.

    Column ``l`` of ``g_src_to_tgt`` lists which source attributes feed
    target attribute l while the pair interacts; ``g_theta_src_to_tgt[l]``
    flags the source latent feeding target attribute l. Stored per ordered
    pair: (i -> j) and (j -> i) are independent objects.
    """

    source_class: int
    target_class: int
    g_src_to_tgt: np.ndarray
    g_theta_src_to_tgt: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.g_src_to_tgt, dtype=np.float64)
        if a.ndim != 2:
            raise ShapeMismatch("g_src_to_tgt must be n_src x n_tgt")
        object.__setattr__(self, "g_src_to_tgt", _binary(a, a.shape, "g_src_to_tgt"))
        object.__setattr__(self, "g_theta_src_to_tgt",
                           _binary(self.g_theta_src_to_tgt, (a.shape[1],), "g_theta_src_to_tgt"))
        self.g_src_to_tgt.setflags(write=False)
        self.g_theta_src_to_tgt.setflags(write=False)


@dataclass(frozen=True)
class DynamicInteractionGraph:
    """Per-timestep object-level edges plus the action-binding selector.

    ``edges[t, k, i]`` is the edge from object k to object i at step t
    (zero diagonal). ``binding[t]`` is a row-stochastic weight vector over
    objects; ``bound_index[t]`` is its argmax (first index on exact ties)
    or NO_BINDING for steps where no object is bound.
    """

    edges: np.ndarray
    binding: np.ndarray
    bound_index: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.float64)
        b = np.asarray(self.binding, dtype=np.float64)
        idx = np.asarray(self.bound_index, dtype=np.int64)
        if e.ndim != 3 or e.shape[1] != e.shape[2]:
            raise ShapeMismatch(f"edges must be T x m x m, got {e.shape}")
        t, m, _ = e.shape
        if b.shape != (t, m):
            raise ShapeMismatch(f"binding must be {t} x {m}, got {b.shape}")
        if idx.shape != (t,):
            raise ShapeMismatch(f"bound_index must have length {t}")
        if not np.isin(e, (0.0, 1.0)).all():
            raise ShapeMismatch("edges entries must be 0 or 1")
        if m > 0 and np.abs(np.einsum("tii->ti", e)).max(initial=0.0) != 0:
            raise ShapeMismatch("edges diagonal must be zero")
        if m > 0 and np.abs(b.sum(axis=1) - 1.0).max(initial=0.0) > 1e-6:
            raise ShapeMismatch("binding rows must sum to 1")
        if ((idx < NO_BINDING) | (idx >= m)).any():
            raise IndexOutOfRange("bound_index out of range")
        for name, arr in (("edges", e), ("binding", b), ("bound_index", idx)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def horizon(self) -> int:
        return self.edges.shape[0]

    @property
    def n_objects(self) -> int:
        return self.edges.shape[1]

    @staticmethod
    def from_binding(edges: np.ndarray, binding: np.ndarray) -> "DynamicInteractionGraph":
        """Build with bound_index = per-row argmax (lowest index on ties)."""
        b = np.asarray(binding, dtype=np.float64)
        return DynamicInteractionGraph(edges, b, np.argmax(b, axis=1))


@dataclass(frozen=True)
class ObjectState:
    """Attributes of one object plus its latent vector.

    ``theta`` is simulator ground truth: environments and oracles read it,
    learners never do.
    """

    class_id: int
    attributes: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.attributes, dtype=np.float64)
        th = np.asarray(self.theta, dtype=np.float64)
        if not (np.isfinite(a).all() and np.isfinite(th).all()):
            raise ShapeMismatch("object state entries must be finite")
        a.setflags(write=False)
        th.setflags(write=False)
        object.__setattr__(self, "attributes", a)
        object.__setattr__(self, "theta", th)


@dataclass(frozen=True)
class EnvState:
    """All object states plus the effector position at one timestep."""

    objects: tuple[ObjectState, ...]
    agent: np.ndarray
    t: int = 0

    def __post_init__(self):
        ag = np.asarray(self.agent, dtype=np.float64)
        if ag.shape != (2,):
            raise ShapeMismatch("agent must be a length-2 position")
        ag.setflags(write=False)
        object.__setattr__(self, "agent", ag)
        object.__setattr__(self, "objects", tuple(self.objects))

    @property
    def n_objects(self) -> int:
        return len(self.objects)


# -- grounding -----------------------------------------------------------

ATTR = "attr"
ACTION = "action"
LATENT = "latent"


def ground_parents(templates: dict[int, ClassTemplateGraph],
                   patterns: dict[tuple[int, int], InteractionPatternGraph],
                   dyn_graph: DynamicInteractionGraph,
                   class_of: list[int] | tuple[int, ...],
                   t: int, object_index: int, attribute_index: int) -> frozenset:
    """Exact parent set of attribute ``attribute_index`` of object
    ``object_index`` at step t+1.

    Members are tagged tuples: ("attr", k, a) for attribute a of object k,
    ("action",) for the action, ("latent", k) for object k's latent vector.
    Own-class parents come from the template row; the action parent exists
    only when the binding selects this object; interacting sources
    contribute the attributes and latent flagged by their pattern graph.
    """
    m = dyn_graph.n_objects
    if not (0 <= t < dyn_graph.horizon):
        raise IndexOutOfRange(f"timestep {t} outside horizon {dyn_graph.horizon}")
    if not (0 <= object_index < m):
        raise IndexOutOfRange(f"object {object_index} outside 0..{m - 1}")
    if len(class_of) != m:
        raise ShapeMismatch("class_of length must match object count")
    cid = class_of[object_index]
    if cid not in templates:
        raise UnknownClass(f"no template for class {cid}")
    tpl = templates[cid]
    n = tpl.n_attributes
    if not (0 <= attribute_index < n):
        raise IndexOutOfRange(f"attribute {attribute_index} outside 0..{n - 1}")

    parents: set[tuple] = set()
    row = tpl.g_s_to_s[attribute_index]
    for a in np.flatnonzero(row):
        parents.add((ATTR, object_index, int(a)))
    if tpl.g_a_to_s[attribute_index] == 1 and dyn_graph.bound_index[t] == object_index:
        parents.add((ACTION,))
    if tpl.g_theta_to_s[attribute_index] == 1:
        parents.add((LATENT, object_index))
    for k in range(m):
        if k == object_index or dyn_graph.edges[t, k, object_index] != 1:
            continue
        key = (class_of[k], cid)
        if key not in patterns:
            continue
        pat = patterns[key]
        for a in np.flatnonzero(pat.g_src_to_tgt[:, attribute_index]):
            parents.add((ATTR, k, int(a)))
        if pat.g_theta_src_to_tgt[attribute_index] == 1:
            parents.add((LATENT, k))
    return frozenset(parents)


# -- gate utilities --------------------------------------------------------

def threshold_gates(soft_gates, tau: float) -> np.ndarray:
    """Binarize soft gate values: 1 where value >= tau (inclusive)."""
    a = np.asarray(soft_gates, dtype=np.float64)
    if ((a < 0) | (a > 1)).any():
        raise ShapeMismatch("soft gate values must lie in [0, 1]")
    return (a >= tau).astype(np.float64)


def graph_f1(predicted, truth) -> tuple[float, float, float]:
    """Precision/recall/F1 over edge positions of two same-shape binary
    matrices. All three are 0 when either side would divide by zero and the
    matrices disagree; equal nonempty matrices score exactly 1."""
    p = np.asarray(predicted, dtype=np.float64)
    q = np.asarray(truth, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeMismatch(f"shape mismatch: {p.shape} vs {q.shape}")
    tp = float(((p == 1) & (q == 1)).sum())
    fp = float(((p == 1) & (q == 0)).sum())
    fn = float(((p == 0) & (q == 1)).sum())
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


# -- serialization (daft-graphs-v1) ----------------------------------------

SCHEMA_GRAPHS = "daft-graphs-v1"


def graphs_to_json(classes: list[ClassSpec],
                   templates: dict[int, ClassTemplateGraph],
                   patterns: dict[tuple[int, int], InteractionPatternGraph]) -> str:
    doc = {
        "schema": SCHEMA_GRAPHS,
        "classes": [
            {
                "class_id": c.class_id,
                "attribute_names": list(c.attribute_names),
                "attribute_kinds": list(c.attribute_kinds),
                "latent_dim": c.latent_dim,
            } for c in sorted(classes, key=lambda c: c.class_id)
        ],
        "templates": {
            str(cid): {
                "g_s_to_s": tpl.g_s_to_s.tolist(),
                "g_a_to_s": tpl.g_a_to_s.tolist(),
                "g_theta_to_s": tpl.g_theta_to_s.tolist(),
                "g_s_to_r": tpl.g_s_to_r.tolist(),
                "g_a_to_r": float(tpl.g_a_to_r),
            } for cid, tpl in sorted(templates.items())
        },
        "patterns": [
            {
                "source_class": pat.source_class,
                "target_class": pat.target_class,
                "g_src_to_tgt": pat.g_src_to_tgt.tolist(),
                "g_theta_src_to_tgt": pat.g_theta_src_to_tgt.tolist(),
            } for _, pat in sorted(patterns.items())
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=1)


def graphs_from_json(text: str) -> tuple[list[ClassSpec],
                                         dict[int, ClassTemplateGraph],
                                         dict[tuple[int, int], InteractionPatternGraph]]:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA_GRAPHS:
        raise ShapeMismatch(f"expected schema {SCHEMA_GRAPHS!r}")
    classes = [ClassSpec(c["class_id"], tuple(c["attribute_names"]),
                         tuple(c["attribute_kinds"]), c["latent_dim"])
               for c in doc["classes"]]
    validate_class_system(classes)
    templates = {
        int(cid): ClassTemplateGraph(
            class_id=int(cid),
            g_s_to_s=np.array(t["g_s_to_s"]),
            g_a_to_s=np.array(t["g_a_to_s"]),
            g_theta_to_s=np.array(t["g_theta_to_s"]),
            g_s_to_r=np.array(t["g_s_to_r"]),
            g_a_to_r=float(t["g_a_to_r"]),
        ) for cid, t in doc["templates"].items()
    }
    patterns = {}
    for p in doc["patterns"]:
        key = (int(p["source_class"]), int(p["target_class"]))
        patterns[key] = InteractionPatternGraph(
            source_class=key[0], target_class=key[1],
            g_src_to_tgt=np.array(p["g_src_to_tgt"]),
            g_theta_src_to_tgt=np.array(p["g_theta_src_to_tgt"]),
        )
    return classes, templates, patterns
