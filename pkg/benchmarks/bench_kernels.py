"""Compare the numba and pure-numpy kernel paths on the hot workloads.

Usage:  python benchmarks/bench_kernels.py [--points N] [--boxes NX NY] [--q Q]

Covers the two runtime-dominant pieces: RK4 integration of the built-in
time-dependent gyre field over a large point cloud, and full transition
matrix assembly for that flow.  The same comparison can be forced package
wide with DYNLAP_BACKEND=numpy|numba.
"""
import argparse
import time

import numpy as np

from dynlap import Grid, build_ulam, builtin_transitory_flow
from dynlap import accel


def time_call(fn, repeat=1):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_rk4(n_points):
    rng = np.random.default_rng(0)
    pts = rng.random((n_points, 2))
    results = {}
    for backend in ("numba", "numpy") if accel.HAS_NUMBA else ("numpy",):
        accel.set_backend(backend)
        accel.transitory_map_points(pts[:128], 0.0, 1.0, 0.01)  # warm up / compile
        dt = time_call(lambda: accel.transitory_map_points(pts, 0.0, 1.0, 0.01))
        results[backend] = dt
    accel.set_backend(None)
    return results


def bench_ulam(nx, ny, q):
    flow = builtin_transitory_flow(0.01)
    grid = Grid(flow.source, nx, ny)
    results = {}
    for backend in ("numba", "numpy") if accel.HAS_NUMBA else ("numpy",):
        accel.set_backend(backend)
        dt = time_call(lambda: build_ulam(grid, grid, flow, q))
        results[backend] = dt
    accel.set_backend(None)
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--boxes", type=int, nargs=2, default=[64, 64])
    ap.add_argument("--q", type=int, default=10)
    args = ap.parse_args()

    print(f"== RK4 gyre integration, {args.points} points, 100 steps ==")
    rk4 = bench_rk4(args.points)
    for backend, dt in rk4.items():
        per = dt / (args.points * 400) * 1e9
        print(f"  {backend:>6}: {dt:8.3f} s   ({per:6.1f} ns per stage-point)")
    if len(rk4) == 2:
        print(f"  speedup numba vs numpy: {rk4['numpy'] / rk4['numba']:.1f}x")

    nx, ny = args.boxes
    print(f"== transition matrix assembly, {nx}x{ny} boxes, q={args.q} ==")
    ulam = bench_ulam(nx, ny, args.q)
    for backend, dt in ulam.items():
        print(f"  {backend:>6}: {dt:8.3f} s")
    if len(ulam) == 2:
        print(f"  speedup numba vs numpy: {ulam['numpy'] / ulam['numba']:.1f}x")

    # agreement check between the two paths
    if accel.HAS_NUMBA:
        rng = np.random.default_rng(1)
        pts = rng.random((20_000, 2))
        accel.set_backend("numba")
        a = accel.transitory_map_points(pts, 0.0, 1.0, 0.01)
        accel.set_backend("numpy")
        b = accel.transitory_map_points(pts, 0.0, 1.0, 0.01)
        accel.set_backend(None)
        print(f"max backend deviation after 100 steps: {np.abs(a - b).max():.3e}")


if __name__ == "__main__":
    main()
