"""Compare the compiled and numpy kernel backends.

Each backend runs in its own subprocess (the backend is chosen at import),
timing normal-equation accumulation, robust cost, projection and a full
11-iteration refinement on a KITTI-scale synthetic trial.

    python3 benchmarks/bench_kernels.py --points 2000 --repeat 20
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

CHILD = r"""
import json, sys, timeit
import numpy as np
from jointcal import _backend
from jointcal.camera import Z_MIN
from jointcal.pipeline import RefinementConfig
from jointcal.providers import NoiseSchedule, synthetic_correspondences
from jointcal.simulation import TrialSetup, make_trial, run_trial

n_points, repeat = int(sys.argv[1]), int(sys.argv[2])
trial = make_trial(0, TrialSetup(n_frames=10, points_per_frame=max(n_points // 10, 1)))
cs, _ = synthetic_correspondences(trial.scene, trial.truth, NoiseSchedule(), 0, 0)
intr, R, t = trial.initial.arrays()
k = _backend.kernels
cases = {
    "normal_equations": lambda: k.accumulate_normal_equations(cs.points, cs.pixels, cs.weights, intr, R, t, 1.0, Z_MIN),
    "robust_cost": lambda: k.robust_cost(cs.points, cs.pixels, cs.weights, intr, R, t, 1.0, Z_MIN),
    "project": lambda: k.project_batch(cs.points, intr, R, t, Z_MIN),
    "refinement": lambda: run_trial(trial, NoiseSchedule(), RefinementConfig(rng_seed=0), n_rays=1000),
}
out = {"backend": _backend.NAME, "n": len(cs)}
for name, fn in cases.items():
    reps = 1 if name == "refinement" else repeat
    out[name] = min(timeit.repeat(fn, number=reps, repeat=3)) / reps
print(json.dumps(out))
"""


def run_backend(name, points, repeat):
    env = dict(os.environ, JOINTCAL_BACKEND=name)
    proc = subprocess.run([sys.executable, "-c", CHILD, str(points), str(repeat)], env=env,
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise SystemExit(f"{name} backend failed:\n{proc.stderr}")
    return json.loads(proc.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--points", type=int, default=2000)
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--json", action="store_true", help="print raw timings as JSON")
    args = parser.parse_args(argv)

    results = [run_backend(b, args.points, args.repeat) for b in ("python", "cython")]
    if results[1]["backend"] != "cython":
        print("compiled extension not built; only the python backend is available", file=sys.stderr)
    if args.json:
        print(json.dumps(results, indent=2))
        return
    py, cy = results
    print(f"{py['n']} correspondences")
    print(f"{'kernel':<18}{'python [ms]':>14}{cy['backend'] + ' [ms]':>14}{'speedup':>10}")
    for name in ("normal_equations", "robust_cost", "project", "refinement"):
        a, b = py[name] * 1e3, cy[name] * 1e3
        print(f"{name:<18}{a:>14.3f}{b:>14.3f}{a / b:>9.1f}x")


if __name__ == "__main__":
    main()
