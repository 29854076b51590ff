#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Covers the per-tick hot spots: the three dynamics steps and polyline
projection, plus a whole-session closed-loop run through each kernel.
"""

from __future__ import annotations

import argparse
import math
import os
import random
import sys
import time
from array import array

from junction import kernels


def bench(label: str, fn, number: int, repeat: int) -> float:
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        best = min(best, time.perf_counter() - t0)
    per_call_us = best / number * 1e6
    print(f"  {label:<28} {per_call_us:10.3f} us/call "
          f"({number / best:,.0f} calls/s)")
    return per_call_us


def polyline(rng, n):
    pts = [(0.0, 0.0)]
    for _ in range(n - 1):
        x, y = pts[-1]
        pts.append((x + rng.uniform(1, 8), y + rng.uniform(-4, 4)))
    xs = array("d", (p[0] for p in pts))
    ys = array("d", (p[1] for p in pts))
    cum = array("d", [0.0])
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        cum.append(cum[-1] + math.hypot(x1 - x0, y1 - y0))
    return xs, ys, cum


def run_kernel_suite(impl, name: str, repeat: int):
    print(f"{name}:")
    rng = random.Random(42)
    xs, ys, cum = polyline(rng, 12)
    results = {}
    results["project_point"] = bench(
        "project_point (12 vertices)",
        lambda: impl.project_point(xs, ys, cum, 31.7, 2.4),
        20_000, repeat)
    results["step_vehicle"] = bench(
        "step_vehicle",
        lambda: impl.step_vehicle(0.0, 0.0, 0.1, 12.0, 1.2, 0.5, 0.0, 1.0,
                                  2.7, 15.0, 0.6, 3.0, 8.0, 0.05, 60.0,
                                  0.01, 0.01),
        50_000, repeat)
    results["step_cyclist"] = bench(
        "step_cyclist",
        lambda: impl.step_cyclist(0.0, 0.0, 0.1, 6.0, 180.0, 0.1, 0.0, 1.0,
                                  85.0, 0.005, 0.5, 1.225, 0.97, 9.81, 1.1,
                                  0.6, 400.0, 20.0, 0.02, 0.01),
        50_000, repeat)
    results["step_pedestrian"] = bench(
        "step_pedestrian",
        lambda: impl.step_pedestrian(0.0, 0.0, 0.1, 1.2, 1.5, 0.6, 0.3,
                                     4.0, 4.0, 0.01),
        50_000, repeat)
    return results


def run_session_suite(pure: bool, repeat: int) -> float:
    """Closed-loop fig6 session throughput (ticks/s) per kernel choice."""
    env = "1" if pure else ""
    os.environ["JUNCTION_PURE_PYTHON"] = env
    for mod in list(sys.modules):
        if mod.startswith("junction"):
            del sys.modules[mod]
    from junction.scenario import load_scenario
    from junction.server import Session, SessionConfig

    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    text = open(os.path.join(root, "scenarios", "fig6.json")).read()
    best = math.inf
    ticks = 1500
    for _ in range(repeat):
        sess = Session(load_scenario(text), SessionConfig(tick_rate_hz=100))
        t0 = time.perf_counter()
        for _ in range(ticks):
            sess.run_tick()
            sess.take_outbound()
        best = min(best, time.perf_counter() - t0)
    rate = ticks / best
    print(f"  fig6 closed loop              {rate:10,.0f} ticks/s")
    return rate


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    impls = kernels.implementations()
    results = {}
    for name in ("python", "compiled"):
        if name not in impls:
            print(f"{name}: not available")
            continue
        results[name] = run_kernel_suite(impls[name], name, args.repeat)

    if "compiled" in results:
        print("speedups (compiled vs python):")
        for key in results["python"]:
            ratio = results["python"][key] / results["compiled"][key]
            print(f"  {key:<28} {ratio:6.1f}x")

    print("session throughput:")
    rate_py = run_session_suite(pure=True, repeat=args.repeat)
    if "compiled" in impls:
        rate_cy = run_session_suite(pure=False, repeat=args.repeat)
        print(f"  session speedup               {rate_cy / rate_py:6.2f}x")


if __name__ == "__main__":
    main()
