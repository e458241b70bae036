"""Time the per-sample density pass under the numba and numpy backends.

Each backend runs in its own interpreter because the switch is read at
import time (LGMI_DISABLE_NUMBA=1 selects numpy). The numba timing excludes
compilation: one warm-up pass runs first.

    python3 benchmarks/bench_kernels.py --n 200 500 --d 2
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = """
import json, sys, time
import numpy as np
import lgmi
from lgmi.lgde import LgdeOptions, lgde_density_at_samples
n, d, tk, reps = (int(a) for a in sys.argv[1:5])
opts = LgdeOptions(truncation_k=tk or None)
warm = lgmi.SampleSet(np.random.default_rng(1).normal(size=(40, d)))
lgde_density_at_samples(warm, LgdeOptions(truncation_k=10))
lgde_density_at_samples(warm)
s = lgmi.SampleSet(np.random.default_rng(0).normal(size=(n, d)))
best = float("inf")
for _ in range(reps):
    t0 = time.perf_counter()
    dp = lgde_density_at_samples(s, opts)
    best = min(best, time.perf_counter() - t0)
print(json.dumps({"backend": lgmi.backend(), "seconds": best, "entropy": -float(dp.log_density.mean())}))
"""


def run(backend, n, d, tk, reps):
    env = dict(os.environ)
    env.pop("LGMI_DISABLE_NUMBA", None)
    if backend == "numpy":
        env["LGMI_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", CHILD, str(n), str(d), str(tk), str(reps)],
                         env=env, capture_output=True, text=True, check=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[200, 500])
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--truncation-k", type=int, default=0, help="0 sums over all samples")
    p.add_argument("--reps", type=int, default=3)
    args = p.parse_args(argv)
    print(f"{'n':>6} {'d':>2} {'numba s':>10} {'numpy s':>10} {'speedup':>8} {'|dH|':>9}")
    for n in args.n:
        fast = run("numba", n, args.d, args.truncation_k, args.reps)
        slow = run("numpy", n, args.d, args.truncation_k, args.reps)
        if fast["backend"] != "numba":
            print("numba is not importable; both runs used numpy", file=sys.stderr)
        dh = abs(fast["entropy"] - slow["entropy"])
        print(f"{n:>6} {args.d:>2} {fast['seconds']:>10.3f} {slow['seconds']:>10.3f} "
              f"{slow['seconds'] / fast['seconds']:>8.1f} {dh:>9.1e}")


if __name__ == "__main__":
    main()
