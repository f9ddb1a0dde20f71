#!/usr/bin/env python3
"""Benchmark the compiled propagation kernel against the pure-Python
fallback on the workloads that dominate pipeline runtime.

    python3 benchmarks/bench_backends.py [--days 7] [--repeats 3]

Workloads:
  - state-only propagation (dataset generation),
  - STM-augmented propagation (covariance transport),
  - raw acceleration evaluations.
"""

import argparse
import math
import time

import numpy as np

from aolcorr import kernels
from aolcorr.astro import OsculatingElements, elements_to_cart


def initial_state():
    el = OsculatingElements(
        a=6878.0, e=0.002, i=math.radians(53.0), raan=0.4, argp=1.0, true_anomaly=0.0
    )
    return elements_to_cart(el)


def params():
    return kernels.pack_params(
        zonal_degree=4,
        drag_enabled=True,
        density_scale=1.2,
        f10_kappa=0.4,
        ballistic_coefficient=0.03,
        srp_enabled=False,
        srp_coefficient=0.0,
        f10=155.0,
    )


def time_propagation(backend, days, with_stm, repeats):
    s0 = initial_state()
    p = params()
    targets = np.array([days * 86400.0])
    best = math.inf
    stats = None
    for _ in range(repeats):
        out = np.empty((1, 6))
        stms = np.empty((1, 36)) if with_stm else None
        t0 = time.perf_counter()
        stats = backend.integrate(
            0.0, s0.rv, targets, p, 1e-8, 1e-8, 1e-11, 1e-3, 300.0, with_stm, out, stms
        )
        best = min(best, time.perf_counter() - t0)
    return best, stats


def time_accel(backend, n, repeats):
    s0 = initial_state()
    p = params()
    y = s0.rv
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for k in range(n):
            backend.accel_eci(float(k), y, p)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--days", type=float, default=7.0, help="propagation span")
    parser.add_argument("--repeats", type=int, default=3, help="best-of repeats")
    parser.add_argument("--accel-evals", type=int, default=20000)
    args = parser.parse_args()

    backends = {"fallback": kernels.get_backend("fallback")}
    try:
        backends["native"] = kernels.get_backend("native")
    except ImportError:
        print("native kernel not built; benchmarking the fallback only\n")

    results = {}
    for name, backend in backends.items():
        t_state, stats = time_propagation(backend, args.days, False, args.repeats)
        t_stm, _ = time_propagation(backend, args.days, True, args.repeats)
        t_accel = time_accel(backend, args.accel_evals, args.repeats)
        results[name] = (t_state, t_stm, t_accel)
        print(
            f"{name:9s} {args.days:.0f}-day propagation: {1000 * t_state:9.2f} ms "
            f"({stats[2]} steps, {stats[3]} rhs evals)"
        )
        print(f"{name:9s} {args.days:.0f}-day with STM:    {1000 * t_stm:9.2f} ms")
        print(
            f"{name:9s} acceleration eval:   "
            f"{1e6 * t_accel / args.accel_evals:9.3f} us per call"
        )

    if len(results) == 2:
        f = results["fallback"]
        n = results["native"]
        print(
            f"\nspeedup (native vs fallback): state {f[0] / n[0]:.0f}x, "
            f"STM {f[1] / n[1]:.0f}x, accel {f[2] / n[2]:.0f}x"
        )


if __name__ == "__main__":
    main()
