"""Share-constrained quality scheduling kernel.

Processes a request stream sequentially: each request goes to the vendor
with the highest predicted value among vendors whose realized byte share
has not drifted above target by more than the slack, with the most
under-target vendor breaking ties (and taking over entirely when every
vendor is above its band).
"""

import numpy as np

from . import maybe_jit


def schedule_loop_py(values, req_bytes, targets, slack, served):
    """values: float64[n_req, n_vendors]; served: running byte totals, mutated.

    Returns the per-request vendor choices.
    """
    n_req, n_ven = values.shape
    choices = np.empty(n_req, dtype=np.int64)
    total = 0.0
    for j in range(n_ven):
        total += served[j]

    for i in range(n_req):
        best = -1
        best_v = -np.inf
        best_deficit = -np.inf
        for j in range(n_ven):
            share = served[j] / total if total > 0.0 else 0.0
            if share - targets[j] > slack:
                continue
            v = values[i, j]
            deficit = targets[j] - share
            if v > best_v or (v == best_v and deficit > best_deficit):
                best = j
                best_v = v
                best_deficit = deficit
        if best < 0:
            # every vendor above its band: constraint satisfaction wins
            best_deficit = -np.inf
            for j in range(n_ven):
                share = served[j] / total if total > 0.0 else 0.0
                deficit = targets[j] - share
                if deficit > best_deficit:
                    best = j
                    best_deficit = deficit
        choices[i] = best
        served[best] += req_bytes[i]
        total += req_bytes[i]
    return choices


schedule_loop = maybe_jit(schedule_loop_py)
