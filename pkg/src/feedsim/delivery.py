"""Server-side ladder-subset delivery and the context time-series service.

The delivery question: of an item's K renditions, which subset is worth
sending to the client, trading the chance that the client's best rendition
is missing (substitution cost against the best delivered alternative)
against the metadata transmission overhead of each rendition sent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

EXACT_K_CAP = 30


@dataclass(frozen=True)
class DeliveryDecision:
    delivered: tuple  # bits d_0..d_{K-1}
    expected_cost: float
    exact: bool  # False when the greedy fallback produced it

    def __post_init__(self):
        if not any(self.delivered):
            raise ValueError("a delivery decision must send at least one ladder")


@dataclass(frozen=True)
class LadderChoiceModel:
    """Per state bucket, the probability each ladder is the client's best."""

    probs: Mapping[int, np.ndarray]
    n_ladders: int

    def __post_init__(self):
        for bucket, p in self.probs.items():
            if len(p) != self.n_ladders or abs(float(np.sum(p)) - 1.0) > 1e-9 or np.any(p < 0):
                raise ValueError(f"bucket {bucket} probabilities are not a distribution")

    def for_bucket(self, bucket: int) -> np.ndarray:
        if bucket in self.probs:
            return self.probs[bucket]
        return np.full(self.n_ladders, 1.0 / self.n_ladders)


def decision_cost(delivered, probs, replace_cost, deliver_costs) -> float:
    """Expected cost of one subset: substitution risk plus delivery overhead."""
    delivered_idx = [j for j, d in enumerate(delivered) if d]
    cost = sum(deliver_costs[j] for j in delivered_idx)
    for i, p in enumerate(probs):
        if p == 0.0:
            continue
        cost += p * min(replace_cost[i][j] for j in delivered_idx)
    return cost


def optimal_delivery(
    probs: Sequence[float],
    replace_cost: Sequence[Sequence[float]],
    deliver_costs: Sequence[float],
) -> DeliveryDecision:
    """Minimum expected-cost nonempty ladder subset.

    Exact branch-and-bound enumeration up to K = 30 (pruning on the
    delivery-overhead partial sum); beyond that a marginal-gain greedy
    runs and the result is flagged approximate. Ties prefer fewer
    delivered ladders, then the lexicographically smallest bit vector.
    """
    k = len(probs)
    if k == 0:
        raise ValueError("no ladders")
    probs = np.asarray(probs, dtype=np.float64)
    rc = np.asarray(replace_cost, dtype=np.float64)
    dc = np.asarray(deliver_costs, dtype=np.float64)
    if rc.shape != (k, k):
        raise ValueError("replace_cost must be K x K")
    if np.any(rc < 0) or np.any(np.diag(rc) != 0):
        raise ValueError("replace_cost must be nonnegative with zero diagonal")

    if k > EXACT_K_CAP:
        return _greedy_delivery(probs, rc, dc)

    best_bits = None
    best_cost = math.inf
    best_count = k + 1

    def better(cost, count, bits):
        if cost < best_cost - 1e-12:
            return True
        if cost > best_cost + 1e-12:
            return False
        if count != best_count:
            return count < best_count
        return bits < best_bits

    # DFS over inclusion decisions, carrying the running min substitution
    # cost per ladder; the partial delivery cost alone bounds the subtree,
    # since the substitution term is nonnegative.
    def rec(j, bits, dcost, minrc):
        nonlocal best_bits, best_cost, best_count
        if dcost > best_cost + 1e-12:
            return
        if j == k:
            if not bits:
                return
            cost = dcost + float(probs @ minrc)
            count = len(bits)
            full = tuple(1 if i in bits else 0 for i in range(k))
            if better(cost, count, full):
                best_bits = full
                best_cost = cost
                best_count = count
            return
        rec(j + 1, bits, dcost, minrc)
        bits.add(j)
        rec(j + 1, bits, dcost + dc[j], np.minimum(minrc, rc[:, j]))
        bits.discard(j)

    rec(0, set(), 0.0, np.full(k, math.inf))
    return DeliveryDecision(delivered=best_bits, expected_cost=best_cost, exact=True)


def _greedy_delivery(probs, rc, dc) -> DeliveryDecision:
    k = len(probs)
    bits = [0] * k
    start = int(np.argmin([decision_cost(_single(k, j), probs, rc, dc) for j in range(k)]))
    bits[start] = 1
    cost = decision_cost(bits, probs, rc, dc)
    improved = True
    while improved:
        improved = False
        for j in range(k):
            if bits[j]:
                continue
            bits[j] = 1
            cand = decision_cost(bits, probs, rc, dc)
            if cand < cost - 1e-12:
                cost = cand
                improved = True
            else:
                bits[j] = 0
    return DeliveryDecision(delivered=tuple(bits), expected_cost=cost, exact=False)


def _single(k, j):
    bits = [0] * k
    bits[j] = 1
    return bits


def estimate_p_inductive(
    history: Sequence[tuple],
    n_ladders: int,
    n_buckets: int | None = None,
) -> LadderChoiceModel:
    """Add-one smoothed per-bucket frequencies of the finally chosen ladder.

    history holds (state_bucket, chosen_ladder) pairs. With no history the
    model is a uniform prior over ladders for every bucket.
    """
    counts: dict = {}
    for bucket, chosen in history:
        if not 0 <= chosen < n_ladders:
            raise ValueError(f"chosen ladder {chosen} out of range")
        counts.setdefault(bucket, np.zeros(n_ladders))[chosen] += 1
    probs = {}
    for bucket, c in counts.items():
        smoothed = c + 1.0
        probs[bucket] = smoothed / smoothed.sum()
    if n_buckets is not None:
        for bucket in range(n_buckets):
            probs.setdefault(bucket, np.full(n_ladders, 1.0 / n_ladders))
    return LadderChoiceModel(probs=probs, n_ladders=n_ladders)


def deliver_cost(meta_bytes: float, device_factor: float, network_factor: float, scale: float = 1.0) -> float:
    """Metadata overhead of sending one ladder, in replace-cost units."""
    if device_factor <= 0 or network_factor <= 0:
        raise ValueError("device and network factors must be > 0")
    return meta_bytes * (1.0 / device_factor) * (1.0 / network_factor) * scale


def default_replace_cost(ladders, quality_weight: float = 1.0, bitrate_weight: float = 0.5) -> np.ndarray:
    """Substitution cost matrix monotone in quality and bitrate gaps."""
    k = len(ladders)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            dq = abs(ladders[i].quality_score_d - ladders[j].quality_score_d)
            db = abs(ladders[i].bitrate_kbps - ladders[j].bitrate_kbps) / 1000.0
            out[i, j] = quality_weight * dq + bitrate_weight * db
    return out


# ---------------------------------------------------------------------------
# context service
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ForecastModel:
    history_window_k: int
    horizon_n: int
    method: str = "moving-average"  # or "seasonal-naive"
    period: int = 288  # slots per day

    def __post_init__(self):
        if self.history_window_k < 1 or self.horizon_n < 1:
            raise ValueError("window and horizon must be >= 1")
        if self.method not in ("moving-average", "seasonal-naive"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class Forecast:
    values: np.ndarray
    day_percentiles: np.ndarray  # percentile of each forecast within the day profile


def forecast(series, model: ForecastModel) -> Forecast:
    """Predict the next N values and their percentile within the day profile.

    Moving average repeats the mean of the last k observations;
    seasonal naive repeats the value one period back. The day profile is
    the trailing period of observations (or the whole series when shorter);
    a value's percentile counts strictly-below plus half of ties, so a
    constant series sits at the 50th percentile.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.size < model.history_window_k:
        raise ValueError("series shorter than the history window")
    n = model.horizon_n
    if model.method == "moving-average":
        values = np.full(n, float(series[-model.history_window_k :].mean()))
    else:
        if series.size < model.period:
            raise ValueError("series shorter than one period for seasonal-naive")
        idx = np.arange(series.size, series.size + n) - model.period
        # beyond one period ahead, wrap within the trailing period
        idx = series.size - model.period + (idx - (series.size - model.period)) % model.period
        values = series[idx]
    profile = series[-model.period :] if series.size >= model.period else series
    percentiles = np.empty(n)
    for i, v in enumerate(values):
        less = float(np.sum(profile < v))
        equal = float(np.sum(profile == v))
        percentiles[i] = 100.0 * (less + 0.5 * equal) / profile.size
    return Forecast(values=values, day_percentiles=percentiles)
