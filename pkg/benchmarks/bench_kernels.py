#!/usr/bin/env python3
"""Benchmark the compiled kernels against their interpreted fallbacks.

The package selects the compiled path automatically; FEEDSIM_NO_NUMBA=1
forces the interpreted path everywhere. This script times both objects
side by side (the jitted one is warmed first so compilation is excluded).

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from feedsim._kernels import (
    NUMBA_ENABLED,
    advance_item,
    advance_item_py,
    knapsack_dp,
    knapsack_dp_py,
    lru_simulate,
    lru_simulate_py,
    q_update,
    q_update_py,
    schedule_loop,
    schedule_loop_py,
)


def timed(fn, *args, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_lru(rng, repeat):
    n_files = 20_000
    pop = np.arange(1, n_files + 1) ** -1.2
    pop /= pop.sum()
    ids = rng.choice(n_files, size=500_000, p=pop)
    sizes = rng.uniform(1e6, 2e7, n_files)
    cap = 0.1 * sizes.sum()
    args = lambda: (ids.copy(), sizes, cap)
    lru_simulate(*args())  # warm the jit
    t_jit, (h1, _) = timed(lru_simulate, *args(), repeat=repeat)
    t_py, (h2, _) = timed(lru_simulate_py, *args(), repeat=repeat)
    assert np.array_equal(h1, h2)
    return "lru_simulate (500k req)", t_jit, t_py


def bench_schedule(rng, repeat):
    values = rng.uniform(0, 10, (200_000, 3))
    req_bytes = rng.uniform(1e5, 1e6, 200_000)
    targets = np.array([0.5, 0.3, 0.2])
    schedule_loop(values, req_bytes, targets, 0.004, np.zeros(3))
    t_jit, c1 = timed(schedule_loop, values, req_bytes, targets, 0.004, np.zeros(3), repeat=repeat)
    t_py, c2 = timed(schedule_loop_py, values, req_bytes, targets, 0.004, np.zeros(3), repeat=repeat)
    assert np.array_equal(c1, c2)
    return "schedule_loop (200k req)", t_jit, t_py


def bench_advance(rng, repeat):
    bw = rng.uniform(500, 5000, 36_000)

    def run(fn):
        pre_needed = np.array([2e5, 2e5])
        pre_got = np.zeros(2)
        buf = np.zeros(36_000)
        dl = np.zeros(36_000)
        reb = np.zeros(36_000, dtype=np.uint8)
        total = 0.0
        for start in range(0, 30_000, 600):
            res = fn(bw, start, 0.1, 7.5e6, 2.5e5, 2e5, 0.0, 30.0, 7.5e6, np.inf, 1.0,
                     pre_needed, pre_got, buf, dl, reb)
            total += res[4]
        return total

    run(advance_item)
    t_jit, a = timed(run, advance_item, repeat=repeat)
    t_py, b = timed(run, advance_item_py, repeat=repeat)
    assert a == b
    return "advance_item (50 items x 1h trace)", t_jit, t_py


def bench_knapsack(rng, repeat):
    weights = rng.integers(1, 50, 200)
    values = rng.uniform(1, 100, 200)
    knapsack_dp(weights, values, 4000)
    t_jit, (v1, _) = timed(knapsack_dp, weights, values, 4000, repeat=repeat)
    t_py, (v2, _) = timed(knapsack_dp_py, weights, values, 4000, repeat=repeat)
    assert v1 == v2
    return "knapsack_dp (200 x 4000)", t_jit, t_py


def bench_q(rng, repeat):
    n = 1_000_000
    states = rng.integers(0, 27, n)
    actions = rng.integers(0, 3, n)
    rewards = rng.normal(0, 1, n)
    nexts = rng.integers(0, 27, n)
    term = rng.integers(0, 2, n).astype(np.uint8)
    q_update(states, actions, rewards, nexts, term, np.zeros((27, 3)), 0.5, 0.9)
    t_jit, q1 = timed(q_update, states, actions, rewards, nexts, term, np.zeros((27, 3)), 0.5, 0.9, repeat=repeat)
    t_py, q2 = timed(q_update_py, states, actions, rewards, nexts, term, np.zeros((27, 3)), 0.5, 0.9, repeat=repeat)
    assert np.allclose(q1, q2)
    return "q_update (1M transitions)", t_jit, t_py


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    rng = np.random.default_rng(0)

    if not NUMBA_ENABLED:
        print("note: numba path disabled (FEEDSIM_NO_NUMBA or numba missing); "
              "both columns run the interpreted fallback")

    rows = [
        bench_lru(rng, args.repeat),
        bench_schedule(rng, args.repeat),
        bench_advance(rng, args.repeat),
        bench_knapsack(rng, args.repeat),
        bench_q(rng, args.repeat),
    ]
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'jit (s)':>9}  {'python (s)':>11}  {'speedup':>8}")
    for name, t_jit, t_py in rows:
        print(f"{name:<{width}}  {t_jit:>9.4f}  {t_py:>11.4f}  {t_py / t_jit:>7.1f}x")


if __name__ == "__main__":
    main()
