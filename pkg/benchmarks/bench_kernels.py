"""Benchmark the compiled particle kernels against the pure-NumPy fallback.

Verifies bitwise equality first, then reports per-call timings for the
normal-variate generator and the fused Langevin update.

Usage: python benchmarks/bench_kernels.py [--particles N] [--dim D] [--reps R]
"""

import argparse
import time

import numpy as np

from emflows.kernels import _philox


def best_of(reps, fn, *args):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--particles", type=int, default=100_000)
    parser.add_argument("--dim", type=int, default=2)
    parser.add_argument("--reps", type=int, default=7)
    args = parser.parse_args()

    try:
        from emflows.kernels import _speedups
    except ImportError:
        print("compiled kernels not built; nothing to compare "
              "(pip install -e . rebuilds them)")
        return 0

    n, d = args.particles, args.dim
    rng = np.random.default_rng(0)
    x = rng.standard_normal((n, d))
    drift_mat = -0.5 * np.eye(d) + 0.05 * rng.standard_normal((d, d))
    drift_vec = rng.standard_normal(d)
    h = 0.05

    same_normals = (
        _philox.standard_normals(7, 3, n, d)
        == _speedups.standard_normals(7, 3, n, d)
    ).all()
    same_update = (
        _philox.langevin_affine_update(x, drift_mat, drift_vec, h, 7, 4)
        == _speedups.langevin_affine_update(x, drift_mat, drift_vec, h, 7, 4)
    ).all()
    print(f"bitwise equality: normals={bool(same_normals)} "
          f"update={bool(same_update)}")
    if not (same_normals and same_update):
        print("BACKENDS DISAGREE - benchmark aborted")
        return 1

    rows = [
        ("standard_normals", lambda m: m.standard_normals(7, 3, n, d)),
        ("langevin_affine_update",
         lambda m: m.langevin_affine_update(x, drift_mat, drift_vec, h, 7, 4)),
    ]
    print(f"\nn = {n}, d = {d}, best of {args.reps}")
    print(f"{'kernel':<24} {'numpy':>12} {'cython':>12} {'speedup':>9}")
    for name, call in rows:
        t_py = best_of(args.reps, call, _philox)
        t_cy = best_of(args.reps, call, _speedups)
        print(f"{name:<24} {t_py * 1e3:>10.2f}ms {t_cy * 1e3:>10.2f}ms "
              f"{t_py / t_cy:>8.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
