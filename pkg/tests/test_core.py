"""Class system, graph types, grounding, gate utilities, serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daft.core import (
    ACTION, ATTR, LATENT, NO_BINDING, ClassSpec, ClassTemplateGraph,
    DynamicInteractionGraph, EnvState, InteractionPatternGraph, ObjectState,
    graph_f1, graphs_from_json, graphs_to_json, ground_parents,
    threshold_gates, validate_class_system,
)
from daft.errors import (
    DuplicateAttribute, DuplicateClassId, IndexOutOfRange, ShapeMismatch,
)
from daft.envs import BOX, BOX_ID, SWITCH, SWITCH_ID, true_graphs
from daft.rng import philox


class TestClassSystem:
    def test_wellformed_ok(self):
        validate_class_system([BOX, SWITCH])

    def test_duplicate_class_id(self):
        other = ClassSpec(BOX_ID, ("a",), ("dynamic",), 0)
        with pytest.raises(DuplicateClassId):
            validate_class_system([BOX, other])

    def test_duplicate_attribute(self):
        with pytest.raises(DuplicateAttribute):
            ClassSpec(3, ("x", "x"), ("dynamic", "dynamic"), 0)

    def test_empty_attributes_rejected(self):
        with pytest.raises(DuplicateAttribute):
            ClassSpec(3, (), (), 0)

    def test_negative_latent_dim_rejected(self):
        with pytest.raises(ShapeMismatch):
            ClassSpec(3, ("x",), ("dynamic",), -1)


class TestTemplateGraph:
    def test_nonbinary_rejected(self):
        with pytest.raises(ShapeMismatch):
            ClassTemplateGraph(0, np.full((2, 2), 0.5), np.zeros(2),
                               np.zeros(2), np.zeros(2), 0.0)

    def test_static_check(self):
        tpl, _ = true_graphs([BOX_ID])
        tpl[BOX_ID].check_static(BOX)
        bad = ClassTemplateGraph(
            BOX_ID, np.ones((6, 6)), np.zeros(6), np.zeros(6), np.zeros(6), 0.0)
        with pytest.raises(ShapeMismatch):
            bad.check_static(BOX)


class TestDynamicGraph:
    def test_from_binding_argmax(self):
        alpha = np.array([[0.2, 0.8], [0.5, 0.5]])
        g = DynamicInteractionGraph.from_binding(np.zeros((2, 2, 2)), alpha)
        assert g.bound_index[0] == 1
        assert g.bound_index[1] == 0  # exact tie -> lowest index

    def test_row_sum_enforced(self):
        with pytest.raises(ShapeMismatch):
            DynamicInteractionGraph(np.zeros((1, 2, 2)), np.array([[0.4, 0.4]]),
                                    np.array([0]))

    def test_diagonal_enforced(self):
        e = np.zeros((1, 2, 2))
        e[0, 1, 1] = 1
        with pytest.raises(ShapeMismatch):
            DynamicInteractionGraph(e, np.array([[0.5, 0.5]]), np.array([0]))

    def test_sentinel_allowed(self):
        g = DynamicInteractionGraph(np.zeros((1, 2, 2)), np.array([[0.5, 0.5]]),
                                    np.array([NO_BINDING]))
        assert g.bound_index[0] == NO_BINDING

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_binding_rows_always_simplex(self, seed):
        rng = philox(seed)
        logits = rng.normal(size=(4, 3)) * 5
        alpha = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        g = DynamicInteractionGraph.from_binding(np.zeros((4, 3, 3)), alpha)
        assert np.abs(g.binding.sum(axis=1) - 1).max() < 1e-6
        assert (g.bound_index == np.argmax(alpha, axis=1)).all()


def build_two_box_setup(edges, alpha_rows):
    templates, patterns = true_graphs([BOX_ID])
    graph = DynamicInteractionGraph.from_binding(edges, alpha_rows)
    return templates, patterns, graph


class TestGroundParents:
    def test_no_interaction_not_bound(self):
        # binding selects object 2 of 3; object 1 has only template parents
        templates, patterns = true_graphs([BOX_ID])
        alpha = np.array([[0.1, 0.1, 0.8]])
        graph = DynamicInteractionGraph.from_binding(np.zeros((1, 3, 3)), alpha)
        parents = ground_parents(templates, patterns, graph, [BOX_ID] * 3,
                                 t=0, object_index=1, attribute_index=2)  # vel_x
        assert (ACTION,) not in parents
        assert parents == frozenset({(ATTR, 1, 2), (LATENT, 1)})

    def test_interaction_pulls_pattern_parents(self):
        # edge 0 -> 2 active: velocity of the source feeds target velocity
        templates, patterns = true_graphs([BOX_ID])
        edges = np.zeros((1, 3, 3))
        edges[0, 0, 2] = 1
        alpha = np.array([[0.0, 1.0, 0.0]])
        graph = DynamicInteractionGraph.from_binding(edges, alpha)
        parents = ground_parents(templates, patterns, graph, [BOX_ID] * 3,
                                 t=0, object_index=2, attribute_index=2)
        assert (ATTR, 0, 2) in parents          # source vel_x
        assert (ATTR, 0, 3) not in parents      # not cross-axis
        assert (LATENT, 0) not in parents       # coupling constant is global
        assert (ATTR, 2, 2) in parents          # own vel self-edge

    def test_single_object_dense_row_plus_action(self):
        # all-ones template row: parents = every own attribute + action when bound
        n = 4
        tpl = ClassTemplateGraph(9, np.ones((n, n)), np.ones(n), np.zeros(n),
                                 np.zeros(n), 0.0)
        graph = DynamicInteractionGraph.from_binding(np.zeros((1, 1, 1)),
                                                     np.array([[1.0]]))
        parents = ground_parents({9: tpl}, {}, graph, [9], 0, 0, 1)
        expected = {(ATTR, 0, a) for a in range(n)} | {(ACTION,)}
        assert parents == frozenset(expected)

    def test_pure_function(self):
        templates, patterns = true_graphs([BOX_ID, SWITCH_ID])
        edges = np.zeros((2, 2, 2))
        edges[1, 0, 1] = 1
        graph = DynamicInteractionGraph.from_binding(edges, np.full((2, 2), 0.5))
        a = ground_parents(templates, patterns, graph, [BOX_ID, BOX_ID], 1, 1, 3)
        b = ground_parents(templates, patterns, graph, [BOX_ID, BOX_ID], 1, 1, 3)
        assert a == b

    def test_static_attribute_only_self_edge(self):
        templates, patterns = true_graphs([BOX_ID])
        graph = DynamicInteractionGraph.from_binding(np.zeros((1, 1, 1)),
                                                     np.array([[1.0]]))
        parents = ground_parents(templates, patterns, graph, [BOX_ID], 0, 0, 4)
        assert parents == frozenset({(ATTR, 0, 4)})

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_removing_edges_never_enlarges(self, seed):
        rng = philox(seed)
        templates, patterns = true_graphs([BOX_ID])
        m = 3
        edges = (rng.uniform(size=(2, m, m)) < 0.5).astype(float)
        for t in range(2):
            np.fill_diagonal(edges[t], 0.0)
        alpha = np.full((2, m), 1.0 / m)
        g_full = DynamicInteractionGraph.from_binding(edges, alpha)
        fewer = edges.copy()
        nz = np.argwhere(fewer == 1)
        if len(nz):
            t, k, i = nz[rng.integers(len(nz))]
            fewer[t, k, i] = 0.0
        g_less = DynamicInteractionGraph.from_binding(fewer, alpha)
        for i in range(m):
            for l in range(6):
                p_full = ground_parents(templates, patterns, g_full, [BOX_ID] * m, 1, i, l)
                p_less = ground_parents(templates, patterns, g_less, [BOX_ID] * m, 1, i, l)
                assert p_less <= p_full

    def test_index_errors(self):
        templates, patterns = true_graphs([BOX_ID])
        graph = DynamicInteractionGraph.from_binding(np.zeros((1, 1, 1)),
                                                     np.array([[1.0]]))
        with pytest.raises(IndexOutOfRange):
            ground_parents(templates, patterns, graph, [BOX_ID], 5, 0, 0)
        with pytest.raises(IndexOutOfRange):
            ground_parents(templates, patterns, graph, [BOX_ID], 0, 2, 0)
        with pytest.raises(IndexOutOfRange):
            ground_parents(templates, patterns, graph, [BOX_ID], 0, 0, 99)


class TestThresholdGates:
    def test_examples(self):
        got = threshold_gates([[0.7, 0.2], [0.5, 0.49]], 0.5)
        np.testing.assert_array_equal(got, [[1, 0], [1, 0]])
        np.testing.assert_array_equal(threshold_gates(np.zeros((2, 2)), 0.5),
                                      np.zeros((2, 2)))
        np.testing.assert_array_equal(threshold_gates(np.full(3, 0.3), 0.3),
                                      np.ones(3))

    def test_rejects_out_of_range(self):
        with pytest.raises(ShapeMismatch):
            threshold_gates([1.5], 0.5)


class TestGraphF1:
    def test_half_overlap(self):
        pred = np.array([[1, 1, 0]])  # edges {a, b}
        truth = np.array([[0, 1, 1]])  # edges {b, c}
        assert graph_f1(pred, truth) == (0.5, 0.5, 0.5)

    def test_exact_match(self):
        m = np.array([[1, 0], [1, 1], [0, 1]])
        assert graph_f1(m, m) == (1.0, 1.0, 1.0)

    def test_empty_prediction(self):
        assert graph_f1(np.zeros((2, 2)), np.ones((2, 2))) == (0.0, 0.0, 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            graph_f1(np.zeros((2, 2)), np.zeros((3, 2)))


class TestStateTypes:
    def test_nonfinite_rejected(self):
        with pytest.raises(ShapeMismatch):
            ObjectState(BOX_ID, np.array([np.nan, 0.0]), np.zeros(2))

    def test_env_state_agent_shape(self):
        obj = ObjectState(BOX_ID, np.zeros(6), np.array([4.0, 0.4]))
        with pytest.raises(ShapeMismatch):
            EnvState((obj,), np.zeros(3), 0)


class TestSerialization:
    def test_roundtrip(self):
        templates, patterns = true_graphs([BOX_ID, SWITCH_ID])
        text = graphs_to_json([BOX, SWITCH], templates, patterns)
        classes, t2, p2 = graphs_from_json(text)
        assert [c.class_id for c in classes] == [BOX_ID, SWITCH_ID]
        for cid in templates:
            np.testing.assert_array_equal(templates[cid].g_s_to_s, t2[cid].g_s_to_s)
            np.testing.assert_array_equal(templates[cid].g_theta_to_s, t2[cid].g_theta_to_s)
        for key in patterns:
            np.testing.assert_array_equal(patterns[key].g_src_to_tgt, p2[key].g_src_to_tgt)

    def test_schema_tag_checked(self):
        with pytest.raises(ShapeMismatch):
            graphs_from_json('{"schema": "other"}')
