"""Compare the numba kernels with their numpy twins.

Times each kernel on a posterior-sized ensemble in this process, then one
full adaptive run in a subprocess per backend (the dispatch is fixed at
import time by ROTBAYES_DISABLE_NUMBA).

    python benchmarks/bench_kernels.py [--n-p 5000] [--budget 5000] [--repeat 20]
"""
import argparse
import json
import math
import os
import subprocess
import sys
import time

import numpy as np

from rotbayes import kernels
from rotbayes.model import S_VALUES

RUN_SNIPPET = """
import json, time
from rotbayes._accel import backend_name
from rotbayes.calibration import load_si_table
from rotbayes.design import WeightMatrix
from rotbayes.harness import CampaignConfig, run_estimation
from rotbayes.model import ParameterPoint
pts, mean = load_si_table()
cfg = CampaignConfig(G=WeightMatrix.select("theta"), true_points=(ParameterPoint(pts[2].theta, mean),),
                     n_p={n_p}, N_max={budget})
run_estimation(cfg, 0, 99)  # warm up (compilation or cache load)
t = time.perf_counter()
r = run_estimation(cfg, 0, 0)
print(json.dumps({{"backend": backend_name(), "seconds": time.perf_counter() - t, "photons": r.record.K}}))
"""


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_table(n_p, repeat):
    rng = np.random.default_rng(0)
    s = np.array(S_VALUES, dtype=float)
    x = np.vstack([(0.4 + 0.05 * rng.standard_normal(n_p)) % math.pi, rng.random((4, n_p))])
    w = rng.random(n_p)
    w /= w.sum()
    trig = kernels.trig_table_np(x[0], s)
    g = np.array([1.0, 0, 0, 0, 1.0])
    fixed = np.array([False, False, True, False])
    mu = np.array([0.4, 0.5, 0.5, 0.5, 0.5])
    cases = {
        "trig_table": lambda k: k(x[0], s),
        "reweight": lambda k: k(w, trig[2], x[1], 1),
        "weighted_sums": lambda k: k(x, w, trig),
        "centered_cov": lambda k: k(x, w, mu),
        "score_candidates": lambda k: k(x, w, trig, g, fixed),
    }
    rows = []
    for name, call in cases.items():
        nb = getattr(kernels, f"{name}_nb")
        np_ = getattr(kernels, f"{name}_np")
        t_nb = best_of(lambda: call(nb), repeat)
        t_np = best_of(lambda: call(np_), repeat)
        rows.append((name, t_nb, t_np))
    return rows


def full_run(n_p, budget, disable):
    env = dict(os.environ, ROTBAYES_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", RUN_SNIPPET.format(n_p=n_p, budget=budget)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-p", type=int, default=5000)
    ap.add_argument("--budget", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    print(f"kernels, n_p={args.n_p} (best of {args.repeat})")
    print(f"{'kernel':<18}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, t_nb, t_np in kernel_table(args.n_p, args.repeat):
        print(f"{name:<18}{1e3 * t_nb:>10.3f}{1e3 * t_np:>10.3f}{t_np / t_nb:>9.2f}")

    print(f"\nfull run, n_p={args.n_p}, N_max={args.budget}")
    for disable in (False, True):
        r = full_run(args.n_p, args.budget, disable)
        print(f"{r['backend']:<8}{r['seconds']:>8.3f} s  ({r['photons']} photons)")


if __name__ == "__main__":
    main()
