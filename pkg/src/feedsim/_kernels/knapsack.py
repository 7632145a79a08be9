"""0/1 knapsack DP kernel with in-kernel reconstruction."""

import numpy as np

from . import maybe_jit


def knapsack_dp_py(weights, values, capacity):
    """Exact 0/1 knapsack: integer weights, float rewards.

    Returns (best_value, selected uint8[n]). The keep table costs
    n * (capacity + 1) cells; callers gate instance size before calling.
    """
    n = weights.shape[0]
    dp = np.zeros(capacity + 1, dtype=np.float64)
    keep = np.zeros((n, capacity + 1), dtype=np.uint8)
    for i in range(n):
        w = weights[i]
        v = values[i]
        if w > capacity:
            continue
        for c in range(capacity, w - 1, -1):
            cand = dp[c - w] + v
            if cand > dp[c]:
                dp[c] = cand
                keep[i, c] = 1
    selected = np.zeros(n, dtype=np.uint8)
    c = capacity
    for i in range(n - 1, -1, -1):
        if keep[i, c] == 1:
            selected[i] = 1
            c -= weights[i]
    return dp[capacity], selected


knapsack_dp = maybe_jit(knapsack_dp_py)
