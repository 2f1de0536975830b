"""Compiled vs pure-numpy tree walker, timed per Brownian increment.

Each backend runs in its own interpreter because the choice is made at
import time by ``BRANCHMLMC_DISABLE_NUMBA``.

    python benchmarks/bench_kernels.py [--reps 2000] [--level 6]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = """
import json, sys, time
from branchmlmc._accel import backend
from branchmlmc.estimators import make_config

reps, level = int(sys.argv[1]), int(sys.argv[2])
cases = [("gbm", "euler", True), ("gbm", "milstein", True), ("gbm", "euler", False),
         ("clark-cameron", "antithetic-cc", True)]
rows = []
for model, scheme, branching in cases:
    cfg = make_config(model, scheme, branching=branching, seed=1)
    cfg.sample_level(level, 0, 8, threads=1)  # compile / warm caches
    t0 = time.perf_counter()
    y, w = cfg.sample_level(level, 0, reps, threads=1)
    dt = time.perf_counter() - t0
    rows.append({"case": f"{model}/{scheme}/{'branching' if branching else 'plain'}",
                 "seconds": dt, "increments": int(w.sum()), "mean": float(y.mean())})
print(json.dumps({"backend": backend(), "rows": rows}))
"""


def run_backend(disable: bool, reps: int, level: int) -> dict:
    env = dict(os.environ)
    if disable:
        env["BRANCHMLMC_DISABLE_NUMBA"] = "1"
    else:
        env.pop("BRANCHMLMC_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", _WORKER, str(reps), str(level)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=2000, help="trees per case")
    ap.add_argument("--level", type=int, default=6)
    args = ap.parse_args(argv)

    fast = run_backend(False, args.reps, args.level)
    slow = run_backend(True, args.reps, args.level)
    print(f"level {args.level}, {args.reps} trees per case, single thread")
    print(f"{'case':<36} {fast['backend'] + ' ns/inc':>14} {slow['backend'] + ' ns/inc':>14} {'speed-up':>9}  same mean")
    for a, b in zip(fast["rows"], slow["rows"]):
        na = 1e9 * a["seconds"] / a["increments"]
        nb = 1e9 * b["seconds"] / b["increments"]
        same = abs(a["mean"] - b["mean"]) < 1e-12
        print(f"{a['case']:<36} {na:>14.1f} {nb:>14.1f} {nb / na:>8.1f}x  {same}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
