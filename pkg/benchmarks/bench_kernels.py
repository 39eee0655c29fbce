"""Time the hot kernels with numba and with the pure numpy/python fallback.

Each path runs in its own interpreter because the switch is read at import:

    python3 benchmarks/bench_kernels.py [--repeat 3] [--samples 100]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from promisetune import _kernels
from promisetune.bench import synthetic_landscape
from promisetune.causal import fci
from promisetune.forest import extract_paths, train_arrays
from promisetune.rules import featurize, rules_from_paths
from promisetune.space import draw

repeat, n = int(sys.argv[1]), int(sys.argv[2])
obj = synthetic_landscape("rugged-wells", 10, 0)
X = draw(obj.space, n, np.random.default_rng(0))
y = obj.evaluate_many(X)
kinds = obj.space.kinds


def forest_rule():
    return train_arrays(X, y, kinds, 10, 100, 1)


def forest_perf():
    return train_arrays(X, y, kinds, 1, 100, 1)


f_perf = forest_perf()
f_rule = forest_rule()
rules = rules_from_paths(extract_paths(f_rule), obj.space)
cand = draw(obj.space, 1000, np.random.default_rng(1))
data = featurize((X, y), rules)
cols = min(data.n_rules, 60)
sub = np.column_stack([data.matrix[:, :cols].astype(float), y])

cases = {
    "forest l=10 (100 trees)": forest_rule,
    "forest l=1 (100 trees)": forest_perf,
    "predict 1000 configs": lambda: f_perf.predict_many(cand),
    f"fits matrix {n}x{len(rules)}": lambda: featurize((X, y), rules),
    f"fci {cols} rules": lambda: fci(sub),
}
out = {"numba": _kernels.USE_NUMBA}
for name, fn in cases.items():
    fn()  # warm-up, includes compilation on the numba path
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    out[name] = best
print(json.dumps(out))
"""


def run(disable: bool, repeat: int, samples: int) -> dict:
    env = dict(os.environ)
    env["PROMISETUNE_DISABLE_NUMBA"] = "1" if disable else ""
    proc = subprocess.run([sys.executable, "-c", WORKER, str(repeat), str(samples)], env=env,
                          capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--samples", type=int, default=100)
    args = ap.parse_args()
    fast = run(False, args.repeat, args.samples)
    slow = run(True, args.repeat, args.samples)
    if not fast.pop("numba"):
        print("warning: numba unavailable, both columns use the fallback")
    slow.pop("numba")
    width = max(len(k) for k in fast)
    print(f"{'kernel':<{width}}  {'numba s':>10}  {'fallback s':>10}  {'speedup':>8}")
    for k in fast:
        print(f"{k:<{width}}  {fast[k]:>10.4f}  {slow[k]:>10.4f}  {slow[k] / fast[k]:>7.1f}x")


if __name__ == "__main__":
    main()
