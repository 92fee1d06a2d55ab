"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints per-kernel best-of timings and the speedup, then times one
end-to-end pipeline run under each backend (separate processes, selected
with FINECLUSTER_BACKEND).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from finecluster import _kernels_py as py

try:
    from finecluster import _kernels as cy
except ImportError:
    cy = None

PIPELINE = (
    "import time; from finecluster import datagen as g, pipeline as p, BACKEND;"
    "X, _ = g.generate(g.a1_spec(), 3000, 0, exact_counts=True);"
    "t = time.perf_counter(); p.cluster(X, 1/3, seed=0);"
    "print(BACKEND, time.perf_counter() - t)"
)


def cases(rng):
    Z = rng.standard_normal((3000, 10))
    w = rng.random(3000)
    X = rng.standard_normal((1500, 10))
    C = rng.standard_normal((8, 10))
    U = np.linalg.qr(rng.standard_normal((10, 3)))[0]
    return {
        "weighted_scatter": ("weighted_scatter", (Z, w)),
        "ball_counts": ("ball_counts", (X, np.array([0.5, 1.0, 2.0, 4.0]))),
        "nearest_center": ("nearest_center", (Z, C)),
        "projected_energy": ("projected_energy", (Z, U)),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for label, (name, inputs) in cases(rng).items():
        t_py = min(timeit.repeat(lambda: getattr(py, name)(*inputs), number=1, repeat=args.repeat))
        if cy is None:
            print(f"{label:<18}{t_py * 1e3:>12.2f}{'n/a':>12}{'n/a':>10}")
            continue
        t_cy = min(timeit.repeat(lambda: getattr(cy, name)(*inputs), number=1, repeat=args.repeat))
        print(f"{label:<18}{t_py * 1e3:>12.2f}{t_cy * 1e3:>12.2f}{t_py / t_cy:>10.1f}")
    print("\npipeline, A1 fixture, n=3000:")
    for backend in ("python", "cython"):
        env = dict(os.environ, FINECLUSTER_BACKEND=backend)
        r = subprocess.run([sys.executable, "-c", PIPELINE], env=env, capture_output=True, text=True)
        print("  " + (r.stdout.strip() or f"{backend} unavailable"))


if __name__ == "__main__":
    main()
