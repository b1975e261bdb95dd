#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the three hot paths: reference-flow grid strides, symplectic-net
grid strides, and fused training passes. Run from the repo root:

    python3 benchmarks/bench_kernels.py [--nodes 20000] [--threads N]
"""

import argparse
import time

import numpy as np

from ldbench import _kernels_py

try:
    from ldbench import _kernels

    BACKENDS = {"python": _kernels_py, "compiled": _kernels}
except ImportError:
    BACKENDS = {"python": _kernels_py}


def timeit(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_reference(impl, nodes, threads):
    rng = np.random.default_rng(0)
    y = np.ascontiguousarray(rng.uniform(-1.2, 1.2, (nodes, 2)))
    active = np.ones(nodes, dtype=np.uint8)

    def run():
        impl.reference_stride(0, 0.0, y, active, 0.1, 1e-12, 1e-12, threads)

    return timeit(run)


def bench_sympnet(impl, nodes, threads):
    rng = np.random.default_rng(1)
    K = np.ascontiguousarray(rng.normal(0, 0.3, (20, 50, 1)))
    a = np.ascontiguousarray(rng.normal(0, 0.3, (20, 50)))
    b = np.ascontiguousarray(rng.normal(0, 0.3, (20, 50)))
    y = np.ascontiguousarray(rng.normal(0, 1.0, (nodes, 2)))
    active = np.ones(nodes, dtype=np.uint8)

    def run():
        impl.sympnet_stride(K, a, b, y, active, 1, threads)

    return timeit(run)


def bench_training(impl, batch=4096):
    rng = np.random.default_rng(2)
    K = np.ascontiguousarray(rng.normal(0, 0.3, (20, 50, 1)))
    a = np.ascontiguousarray(rng.normal(0, 0.3, (20, 50)))
    b = np.ascontiguousarray(rng.normal(0, 0.3, (20, 50)))
    X = np.ascontiguousarray(rng.normal(0, 1.0, (batch, 2)))
    Y = np.ascontiguousarray(rng.normal(0, 1.0, (batch, 2)))
    grads = [np.zeros_like(K), np.zeros_like(a), np.zeros_like(b)]

    def run():
        impl.sympnet_grads(K, a, b, X, Y, *grads)

    return timeit(run)


def bench_reservoir(impl, nodes, threads):
    from scipy.sparse import random as sparse_random

    rng = np.random.default_rng(3)
    n_h = 400
    wx = sparse_random(n_h, n_h, density=0.006, random_state=5,
                       data_rvs=lambda k: rng.uniform(-1, 1, k)).tocsr()
    indptr = wx.indptr.astype(np.int64)
    indices = wx.indices.astype(np.int64)
    data = wx.data.astype(np.float64)
    wu = np.ascontiguousarray(rng.uniform(-0.5, 0.5, (n_h, 2)))
    wout = np.ascontiguousarray(rng.normal(0, 0.1, (2, n_h)))
    u = np.ascontiguousarray(rng.uniform(-1, 1, (nodes, 2)))
    x = np.zeros((nodes, n_h))
    active = np.ones(nodes, dtype=np.uint8)

    def run():
        impl.reservoir_update(indptr, indices, data, wu, 0.9, u, x, active, threads)
        impl.reservoir_readout(wout, x, u, active, threads)

    return timeit(run)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--nodes", type=int, default=20000)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()
    import os

    threads = args.threads or os.cpu_count() or 1
    rows = []
    for case, fn in (
        ("reference stride (RK45, tol 1e-12)", bench_reference),
        ("sympnet stride (l=10, m=50)", bench_sympnet),
        ("reservoir step (N_h=400)", bench_reservoir),
    ):
        times = {name: fn(impl, args.nodes, threads) for name, impl in BACKENDS.items()}
        rows.append((case, times))
    times = {name: bench_training(impl) for name, impl in BACKENDS.items()}
    rows.append(("sympnet training pass (batch 4096)", times))

    print(f"nodes={args.nodes} threads={threads}")
    header = f"{'case':42s}" + "".join(f"{name:>12s}" for name in BACKENDS)
    if len(BACKENDS) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for case, times in rows:
        line = f"{case:42s}" + "".join(f"{times[b] * 1e3:9.1f} ms" for b in BACKENDS)
        if len(BACKENDS) == 2:
            line += f"{times['python'] / times['compiled']:9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
