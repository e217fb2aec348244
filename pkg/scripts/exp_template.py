"""Calibration run: stage-1 recovery on desk-scale single-object data."""

import sys
import time

import numpy as np

sys.path.insert(0, "src")

from daft.core import graph_f1
from daft.envs import (
    BOX_ID, SWITCH_ID, gen_dataset, make_task_spec, sample_latents, true_graphs,
)
from daft.rng import philox
from daft.template import TemplateConfig, train_class_templates, train_classifier

def build_single_dataset(episodes_per_class=60, horizon=60, seed=0):
    rng = philox(seed, 1000)
    specs = []
    for i in range(episodes_per_class):
        specs.append(make_task_spec(f"box{i}", [BOX_ID], [sample_latents(BOX_ID, rng)],
                                    rng=rng, horizon=horizon))
        specs.append(make_task_spec(f"sw{i}", [SWITCH_ID], [sample_latents(SWITCH_ID, rng)],
                                    rng=rng, horizon=horizon))
    return gen_dataset(specs, "scripted", episodes=2 * episodes_per_class, seed=seed,
                       scripted_p_far=0.0)

def flat_template(tpl):
    return np.concatenate([tpl.g_s_to_s.reshape(-1), tpl.g_a_to_s,
                           tpl.g_s_to_r, [tpl.g_a_to_r]])

def main():
    t0 = time.time()
    ds = build_single_dataset(episodes_per_class=int(sys.argv[1]) if len(sys.argv) > 1 else 60,
                              horizon=60)
    print(f"dataset: {len(ds)} episodes, {time.time()-t0:.1f}s")
    cfg = TemplateConfig(epochs=int(sys.argv[2]) if len(sys.argv) > 2 else 120, seed=0)
    t0 = time.time()
    model, graphs = train_class_templates(ds, cfg)
    print(f"train: {time.time()-t0:.1f}s")
    truth, _ = true_graphs([BOX_ID, SWITCH_ID])
    for cid in (BOX_ID, SWITCH_ID):
        p, r, f1 = graph_f1(flat_template(graphs[cid]), flat_template(truth[cid]))
        print(f"class {cid}: precision {p:.3f} recall {r:.3f} F1 {f1:.3f}")
        soft = model.soft_gates(cid)
        print(" ss gates:\n", np.round(soft["ss"].data, 2))
        print(" as:", np.round(soft["as"].data, 2), " sr:", np.round(soft["sr"].data, 2),
              " ar:", np.round(soft["ar"].data, 2))
        print(" true ss:\n", truth[cid].g_s_to_s.astype(int))
        print(" curve head/tail:", [round(v, 3) for v in model.curves[cid][:3]],
              [round(v, 3) for v in model.curves[cid][-3:]])
    t0 = time.time()
    clf = train_classifier(ds)
    print(f"classifier: {time.time()-t0:.1f}s")

if __name__ == "__main__":
    main()
