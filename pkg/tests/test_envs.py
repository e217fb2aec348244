"""Reference dynamics, dataset generation, and ground-truth graph checks.

The dynamics assertions plug numbers into the documented update equations
by hand; the consistency test checks that finite-difference sensitivities
vanish exactly for every non-parent declared by the ground-truth graphs.
"""

import numpy as np
import pytest

from daft.core import ACTION, ATTR, DynamicInteractionGraph, LATENT, ground_parents
from daft.envs import (
    BOX_ID, BUILTIN_CLASSES, EnvDynamics, EnvSpec, MAX_ATTRS, ObjectConfig,
    PX, PY, SANGLE, SWITCH_ID, VX, VY, gen_dataset, load_dataset, make_task_spec,
    reset, rollout_episode, save_dataset, spec_from_dict, spec_to_dict, step,
    true_graphs, ScriptedPolicy,
)
from daft.errors import ConfigError, NonFiniteAction, PlacementFailed
from daft.rng import philox


def one_box_spec(mass=4.0, friction=0.4, **kw) -> EnvSpec:
    return EnvSpec(
        spec_id="1box",
        objects=(ObjectConfig(BOX_ID, (mass, friction), color=0.0, shape=0.0),),
        goals=((0.8, 0.8),), **kw)


def two_box_spec(**kw) -> EnvSpec:
    return EnvSpec(
        spec_id="2box",
        objects=(ObjectConfig(BOX_ID, (4.0, 0.4), color=0.0, shape=0.0),
                 ObjectConfig(BOX_ID, (6.0, 0.6), color=1.0, shape=0.5)),
        goals=((0.8, 0.8), (0.2, 0.2)), **kw)


def box_switch_spec() -> EnvSpec:
    return EnvSpec(
        spec_id="bs",
        objects=(ObjectConfig(BOX_ID, (4.0, 0.4), color=0.0, shape=0.0),
                 ObjectConfig(SWITCH_ID, (0.8,), color=1.0)),
        goals=((0.8, 0.8), (0.9,)))


def state_with(spec, positions, velocities=None, angles=None):
    """Build a state by overriding attributes of a reset state."""
    from daft.core import EnvState, ObjectState
    st = reset(spec, seed=0)
    objs = []
    for i, obj in enumerate(st.objects):
        a = obj.attributes.copy()
        a[:2] = positions[i]
        if obj.class_id == BOX_ID and velocities is not None:
            a[2:4] = velocities[i]
        if obj.class_id == SWITCH_ID and angles is not None:
            a[SANGLE] = angles[i]
        objs.append(ObjectState(obj.class_id, a, obj.theta))
    return EnvState(tuple(objs), st.agent, 0)


class TestStepDynamics:
    def test_friction_decay_and_position_advance(self):
        # v=(1,0), f=0.4, dt=0.1, unbound -> v'=(0.96,0), pos += (0.1,0)
        spec = one_box_spec()
        st = state_with(spec, [(0.5, 0.5)], velocities=[(1.0, 0.0)])
        far = np.array([0.0, 0.0, 0.5, 0.5])  # effector in the corner, out of reach
        rec = step(spec, st, far)
        box = rec.state.objects[0]
        np.testing.assert_allclose(box.attributes[2:4], [0.96, 0.0], rtol=1e-12)
        np.testing.assert_allclose(box.attributes[:2], [0.6, 0.5], rtol=1e-12)
        assert rec.true_binding is None

    def test_zero_velocity_unbound_static(self):
        spec = one_box_spec()
        st = state_with(spec, [(0.5, 0.5)], velocities=[(0.0, 0.0)])
        rec = step(spec, st, np.array([0.0, 0.0, 1.0, 1.0]))
        np.testing.assert_array_equal(rec.state.objects[0].attributes[:2], [0.5, 0.5])

    def test_collision_term_by_hand(self):
        # distance < d_c, v1=(1,0), v2=(-1,0): v1' = 0.96*1 + 0.5*(-2) = -0.04
        spec = two_box_spec()
        st = state_with(spec, [(0.5, 0.5), (0.58, 0.5)],
                        velocities=[(1.0, 0.0), (-1.0, 0.0)])
        rec = step(spec, st, np.array([0.0, 0.0, 0.0, 0.0]))
        v1 = rec.state.objects[0].attributes[2:4]
        v2 = rec.state.objects[1].attributes[2:4]
        np.testing.assert_allclose(v1, [(1 - 0.04) * 1.0 + 0.5 * (-2.0), 0.0], rtol=1e-12)
        np.testing.assert_allclose(v2, [(1 - 0.06) * (-1.0) + 0.5 * (2.0), 0.0], rtol=1e-12)
        assert (0, 1) in rec.true_interactions and (1, 0) in rec.true_interactions

    def test_bound_force_scales_with_mass(self):
        spec = one_box_spec(mass=4.0, friction=0.4)
        st = state_with(spec, [(0.5, 0.5)], velocities=[(0.0, 0.0)])
        rec = step(spec, st, np.array([0.5, 0.5, 1.0, 0.0]))
        assert rec.true_binding == 0
        np.testing.assert_allclose(rec.state.objects[0].attributes[2:4],
                                   [(1.0 / 4.0) * 0.1, 0.0], rtol=1e-12)

    def test_switch_moves_only_when_bound(self):
        spec = box_switch_spec()
        st = state_with(spec, [(0.2, 0.2), (0.7, 0.7)], angles=[None, 0.3])
        on_switch = np.array([0.7, 0.7, 1.0, 0.0])
        rec = step(spec, st, on_switch)
        assert rec.true_binding == 1
        np.testing.assert_allclose(rec.state.objects[1].attributes[SANGLE],
                                   0.3 + 0.8 * 1.0 * 0.1, rtol=1e-12)
        off_switch = np.array([0.2, 0.2, 1.0, 0.0])
        rec2 = step(spec, st, off_switch)
        assert rec2.true_binding == 0
        np.testing.assert_allclose(rec2.state.objects[1].attributes[SANGLE], 0.3)

    def test_angle_clamped(self):
        spec = box_switch_spec()
        st = state_with(spec, [(0.2, 0.2), (0.7, 0.7)], angles=[None, 0.98])
        rec = step(spec, st, np.array([0.7, 0.7, 1.0, 0.0]))
        assert rec.state.objects[1].attributes[SANGLE] == 1.0

    def test_wall_clip_zeroes_velocity_axis(self):
        spec = one_box_spec()
        st = state_with(spec, [(0.99, 0.5)], velocities=[(1.0, 0.2)])
        rec = step(spec, st, np.array([0.0, 0.0, 0.0, 0.0]))
        box = rec.state.objects[0].attributes
        assert box[PX] == 1.0
        assert box[VX] == 0.0
        assert box[VY] != 0.0

    def test_reward_is_pretransition_distance(self):
        spec = one_box_spec()
        st = state_with(spec, [(0.5, 0.5)], velocities=[(1.0, 0.0)])
        rec = step(spec, st, np.array([0.0, 0.0, 0.0, 0.0]))
        np.testing.assert_allclose(rec.reward,
                                   -np.linalg.norm([0.5 - 0.8, 0.5 - 0.8]), rtol=1e-12)

    def test_reward_additivity(self):
        spec = two_box_spec()
        st = state_with(spec, [(0.3, 0.3), (0.7, 0.7)])
        rec = step(spec, st, np.array([0.0, 0.0, 0.3, 0.1]))
        assert rec.reward == pytest.approx(rec.per_object_reward.sum(), abs=1e-12)

    def test_nonfinite_action_rejected(self):
        spec = one_box_spec()
        st = reset(spec, 0)
        with pytest.raises(NonFiniteAction):
            step(spec, st, np.array([0.0, np.nan, 0.0, 0.0]))

    def test_binding_picks_nearest(self):
        spec = two_box_spec()
        st = state_with(spec, [(0.4, 0.5), (0.6, 0.5)])
        rec = step(spec, st, np.array([0.45, 0.5, 0.0, 0.0]))
        assert rec.true_binding == 0

    def test_energy_decay_without_action(self):
        spec = one_box_spec(mass=6.0, friction=0.8)
        rng = philox(4)
        st = state_with(spec, [(0.5, 0.5)], velocities=[rng.normal(size=2) * 0.3])
        far = np.array([0.0, 0.0, 0.0, 0.0])
        prev = np.linalg.norm(st.objects[0].attributes[2:4])
        for _ in range(20):
            rec = step(spec, st, far)
            cur = np.linalg.norm(rec.state.objects[0].attributes[2:4])
            assert cur <= prev + 1e-12
            prev = cur
            st = rec.state


class TestReset:
    def test_deterministic(self):
        spec = two_box_spec()
        a, b = reset(spec, 7), reset(spec, 7)
        for oa, ob in zip(a.objects, b.objects):
            np.testing.assert_array_equal(oa.attributes, ob.attributes)

    def test_velocities_zero(self):
        st = reset(one_box_spec(), 3)
        np.testing.assert_array_equal(st.objects[0].attributes[2:4], [0.0, 0.0])

    def test_many_objects_spaced(self):
        objs = tuple(ObjectConfig(BOX_ID, (4.0, 0.4)) for _ in range(8))
        goals = tuple((0.5, 0.5) for _ in range(8))
        spec = EnvSpec("many", objs, goals, collide_radius=0.02, workspace=(0, 0, 4, 4))
        st = reset(spec, 1)
        pos = np.array([o.attributes[:2] for o in st.objects])
        for i in range(8):
            for j in range(i + 1, 8):
                assert np.linalg.norm(pos[i] - pos[j]) > spec.collide_radius

    def test_placement_failure(self):
        objs = tuple(ObjectConfig(BOX_ID, (4.0, 0.4)) for _ in range(9))
        goals = tuple((0.5, 0.5) for _ in range(9))
        spec = EnvSpec("crowded", objs, goals, collide_radius=0.9,
                       workspace=(0, 0, 1, 1))
        with pytest.raises(PlacementFailed):
            reset(spec, 0)


class TestTrueGraphs:
    def test_box_template_axes(self):
        templates, _ = true_graphs([BOX_ID])
        g = templates[BOX_ID].g_s_to_s
        assert g[PX, VX] == 1       # vel_x feeds pos_x
        assert g[VX, PX] == 0       # position does not feed velocity
        assert g[VX, VY] == 0

    def test_switch_action_edge_only_angle(self):
        templates, _ = true_graphs([SWITCH_ID])
        np.testing.assert_array_equal(templates[SWITCH_ID].g_a_to_s, [0, 0, 1, 0])

    def test_static_rows_self_only(self):
        templates, _ = true_graphs([BOX_ID, SWITCH_ID])
        for cid, tpl in templates.items():
            tpl.check_static(BUILTIN_CLASSES[cid])

    def test_pattern_velocity_only_no_theta(self):
        _, patterns = true_graphs([BOX_ID, SWITCH_ID])
        bb = patterns[(BOX_ID, BOX_ID)]
        assert bb.g_src_to_tgt[VX, VX] == 1 and bb.g_src_to_tgt[VY, VY] == 1
        assert bb.g_src_to_tgt.sum() == 2
        assert bb.g_theta_src_to_tgt.sum() == 0
        assert patterns[(BOX_ID, SWITCH_ID)].g_src_to_tgt.sum() == 0
        assert patterns[(SWITCH_ID, SWITCH_ID)].g_src_to_tgt.sum() == 0


class TestGroundTruthConsistency:
    """Finite-difference sensitivity of each next attribute to every
    non-parent input is zero (geometry kept away from clip, reach, and
    collide boundaries so events cannot flip under the perturbation)."""

    def test_sensitivities_match_parent_sets(self):
        spec = EnvSpec(
            spec_id="consistency",
            objects=(ObjectConfig(BOX_ID, (4.0, 0.4), color=0.0, shape=0.0),
                     ObjectConfig(BOX_ID, (6.0, 0.8), color=1.0, shape=0.5),
                     ObjectConfig(SWITCH_ID, (0.8,), color=1 / 3)),
            goals=((0.8, 0.8), (0.2, 0.8), (0.9,)))
        # boxes 0,1 collide; effector binds the switch; all away from walls
        st = state_with(spec, [(0.45, 0.5), (0.52, 0.5), (0.8, 0.2)],
                        velocities=[(0.2, 0.1), (-0.1, 0.05), None],
                        angles=[None, None, 0.4])
        action = np.array([0.8, 0.2, 0.6, -0.3])
        dyn = EnvDynamics(spec)
        base_attrs = np.zeros((3, MAX_ATTRS))
        for i, o in enumerate(st.objects):
            base_attrs[i, :len(o.attributes)] = o.attributes

        nxt, _, bound, pairs = dyn.step(base_attrs, action)
        assert int(bound) == 2 and pairs[0, 1] and not pairs[0, 2]

        templates, patterns = true_graphs(spec)
        edges = np.zeros((1, 3, 3))
        edges[0][pairs] = 1.0
        alpha = np.zeros((1, 3))
        alpha[0, int(bound)] = 1.0
        graph = DynamicInteractionGraph.from_binding(edges, alpha)
        class_of = list(spec.class_ids)

        eps = 1e-6

        def next_attrs(attrs, act):
            return dyn.step(attrs, act)[0]

        for i in range(3):
            n_i = BUILTIN_CLASSES[class_of[i]].n_attributes
            for l in range(n_i):
                parents = ground_parents(templates, patterns, graph, class_of, 0, i, l)
                # attribute inputs
                for k in range(3):
                    for a in range(BUILTIN_CLASSES[class_of[k]].n_attributes):
                        pert = base_attrs.copy()
                        pert[k, a] += eps
                        hi = next_attrs(pert, action)[i, l]
                        pert[k, a] -= 2 * eps
                        lo = next_attrs(pert, action)[i, l]
                        sens = abs(hi - lo) / (2 * eps)
                        if (ATTR, k, a) not in parents:
                            assert sens < 1e-9, (i, l, "attr", k, a)
                # action input
                act_sens = 0.0
                for c in range(4):
                    pa = action.copy()
                    pa[c] += eps
                    hi = next_attrs(base_attrs, pa)[i, l]
                    pa[c] -= 2 * eps
                    lo = next_attrs(base_attrs, pa)[i, l]
                    act_sens = max(act_sens, abs(hi - lo) / (2 * eps))
                if (ACTION,) not in parents:
                    assert act_sens < 1e-9, (i, l, "action")
                # latent inputs (rebuild dynamics with perturbed theta)
                for k in range(3):
                    sens = 0.0
                    for d in range(len(spec.objects[k].theta)):
                        for sign in (+1, -1):
                            theta = list(spec.objects[k].theta)
                            theta[d] += sign * eps
                            objs = list(spec.objects)
                            objs[k] = ObjectConfig(objs[k].class_id, tuple(theta),
                                                   objs[k].color, objs[k].shape)
                            pspec = EnvSpec(spec.spec_id, tuple(objs), spec.goals)
                            val = EnvDynamics(pspec).step(base_attrs, action)[0][i, l]
                            sens = max(sens, abs(val - nxt[i, l]) / eps)
                    if (LATENT, k) not in parents:
                        assert sens < 1e-6, (i, l, "latent", k)


class TestDatasets:
    def test_sizes_and_kind(self):
        specs = [one_box_spec(), box_switch_spec()]
        ds = gen_dataset(specs, "scripted", episodes=4, seed=0)
        assert len(ds) == 4
        assert ds.kind == "multi"
        single = gen_dataset([one_box_spec()], "random", episodes=2, seed=0)
        assert single.kind == "single"

    def test_deterministic_files(self, tmp_path):
        specs = [two_box_spec()]
        for name in ("a", "b"):
            ds = gen_dataset(specs, "scripted", episodes=3, seed=42)
            save_dataset(ds, tmp_path / name)
        a = (tmp_path / "a" / "episodes.jsonl").read_bytes()
        b = (tmp_path / "b" / "episodes.jsonl").read_bytes()
        assert a == b and len(a) > 0

    def test_empty_dataset_valid_file(self, tmp_path):
        ds = gen_dataset([one_box_spec()], "random", episodes=0, seed=0)
        assert len(ds) == 0
        save_dataset(ds, tmp_path)
        assert load_dataset(tmp_path).episodes == []

    def test_roundtrip(self, tmp_path):
        ds = gen_dataset([box_switch_spec()], "scripted", episodes=2, seed=5)
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert len(back) == 2
        ep0, ep1 = ds.episodes[0], back.episodes[0]
        np.testing.assert_allclose(ep0.actions, ep1.actions)
        np.testing.assert_allclose(ep0.attrs[0], ep1.attrs[0])
        assert ep0.true_interactions == ep1.true_interactions
        np.testing.assert_array_equal(ep0.true_binding, ep1.true_binding)

    def test_unknown_policy(self):
        with pytest.raises(ConfigError):
            gen_dataset([one_box_spec()], "jazz", episodes=1, seed=0)

    def test_scripted_policy_binds_often(self):
        spec = two_box_spec(horizon=60)
        ep = rollout_episode(spec, ScriptedPolicy(spec, philox(0), p_far=0.15), seed=0)
        frac_bound = (ep.true_binding >= 0).mean()
        assert frac_bound > 0.5

    def test_interaction_symmetry_in_data(self):
        spec = two_box_spec(horizon=80)
        ep = rollout_episode(spec, ScriptedPolicy(spec, philox(1)), seed=1)
        for pairs in ep.true_interactions:
            for (a, b) in pairs:
                assert (b, a) in pairs

    def test_spec_json_roundtrip(self):
        spec = box_switch_spec()
        back = spec_from_dict(spec_to_dict(spec))
        assert back == spec

    def test_make_task_spec_goals(self):
        spec = make_task_spec("t", [BOX_ID, SWITCH_ID], [(4.0, 0.4), (0.8,)],
                              rng=philox(3))
        assert len(spec.goals[0]) == 2 and len(spec.goals[1]) == 1
