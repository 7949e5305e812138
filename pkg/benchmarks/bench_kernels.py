#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy counterparts.

Two parts:
  1. kernel-level timings (both implementations called directly, same inputs)
  2. end-to-end Monte Carlo information run in two subprocesses, one with
     REMLSPLIT_DISABLE_NUMBA=1

Usage:
    python benchmarks/bench_kernels.py [--n 400] [--repeats 5] [--replicates 20000]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from remlsplit import _kernels

E2E = """
import time, numpy as np
from remlsplit import BACKEND
from remlsplit.model import ThetaVector, composite, indicator_matrix
from remlsplit.simulate import SimSpec, monte_carlo_information
n = 20
Z, _ = indicator_matrix(np.repeat(np.arange(5), 4))
spec = SimSpec(np.ones((n, 1)), Z, composite([Z], n), ThetaVector(1.0, [0.8, 0.4]), [0.0], 1, {reps})
monte_carlo_information(SimSpec(spec.X, spec.Z, spec.model, spec.theta_true, spec.tau_true, 1, 100))
t = time.perf_counter()
monte_carlo_information(spec)
print(BACKEND, time.perf_counter() - t)
"""


def best_of(fn, repeats):
    fn()  # warm-up (includes JIT compilation for numba)
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--replicates", type=int, default=20000)
    args = ap.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba unavailable (or disabled); only the numpy path can be timed")
    rng = np.random.default_rng(0)
    n = args.n
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, n))
    U = rng.standard_normal((n, 5000))
    V = rng.standard_normal((n, 5000))

    cases = [
        ("ar1_structure", lambda k: k(n, 0.6), "ar1_structure"),
        ("trace_product", lambda k: k(A, B), "trace_product"),
        ("column_dots", lambda k: k(U, V), "column_dots"),
    ]
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, call, attr in cases:
        t_np = best_of(lambda: call(getattr(_kernels, attr + "_numpy")), args.repeats)
        if _kernels.HAVE_NUMBA:
            t_nb = best_of(lambda: call(getattr(_kernels, attr + "_numba")), args.repeats)
            print(f"{name:<16}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.2f}")
        else:
            print(f"{name:<16}{1e3 * t_np:>12.3f}{'-':>12}{'-':>10}")

    print(f"\nMonte Carlo information, {args.replicates} replicates (n=20, AR(1) + one variance component)")
    code = E2E.format(reps=args.replicates)
    for flag in ("0", "1"):
        env = {**os.environ, "REMLSPLIT_DISABLE_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  backend={backend:<6} {float(secs):8.3f} s")


if __name__ == "__main__":
    main()
