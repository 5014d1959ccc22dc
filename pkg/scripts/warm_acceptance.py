"""Pre-train the cached runs the acceptance suite needs (hours on one CPU)."""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from test_acceptance import CACHE_DIR, acceptance_arm_configs  # noqa: E402

from textgate.harness import ensure_trained, run_key  # noqa: E402


def main():
    jobs = acceptance_arm_configs()
    only = sys.argv[1].split(",") if len(sys.argv) > 1 else None
    for (arm, seed), cfg in jobs.items():
        if only and f"{arm}:{seed}" not in only and arm not in only:
            continue
        t0 = time.time()
        print(f"=== {arm} seed {seed} key {run_key(cfg)}", flush=True)
        ensure_trained(cfg, CACHE_DIR, log=lambda m: print(f"[{arm}|{seed}] {m}",
                                                           flush=True))
        print(f"=== {arm} seed {seed} done in {time.time() - t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
