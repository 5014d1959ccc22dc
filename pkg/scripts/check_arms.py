"""Evaluate cached acceptance runs and print the arm ordering so far."""

import os
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from test_acceptance import ARMS, CACHE_DIR, SEEDS, acceptance_arm_configs  # noqa: E402

from textgate.harness import TrainingData, evaluate, load_model, run_key  # noqa: E402


def main():
    configs = acceptance_arm_configs()
    accs = {}
    for (arm, seed), cfg in configs.items():
        path = os.path.join(CACHE_DIR, run_key(cfg), "checkpoint.bin")
        if not os.path.exists(path):
            continue
        model, _ = load_model(path)
        tdata = TrainingData(cfg)
        rep = evaluate(model, tdata.test_set(), arm=arm, seed=seed,
                       reference_labeler=tdata.reference_labeler)
        r = rep.record
        accs[(arm, seed)] = r.seq_accuracy
        print(f"{arm:<14} seed {seed}: acc {r.seq_accuracy:.4f} "
              f"ned {r.mean_norm_edit_dist:.4f} "
              f"gate strong/weak {r.gate_strong_mean:.4f}/{r.gate_weak_mean:.4f}",
              flush=True)
    for arm in ARMS:
        vals = [accs[(arm, s)] for s in SEEDS if (arm, s) in accs]
        if vals:
            print(f"MEAN {arm:<14} {np.mean(vals):.4f} over {len(vals)} seeds")


if __name__ == "__main__":
    main()
