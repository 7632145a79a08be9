"""Multi-vendor CDN machinery.

Covers the cost side (95th-percentile and traffic billing), per-request
quality scheduling under share constraints, share allocation search,
popularity hash scheduling, edge-cache simulation with back-to-source
accounting, valley pre-caching, and peak staggering across vendors.

Percentile convention used everywhere: the value at index
ceil(0.95 * N) - 1 of the ascending-sorted slot series. Slots above that
watermark are free under peak billing.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._kernels import lru_simulate, schedule_loop

DEFAULT_SHARE_SLACK = 0.004  # keeps worst-case drift (n-1)*slack under the 1% contract
MBPS_TO_BYTES_PER_S = 1e6 / 8.0


def peak_percentile(series, q: float = 0.95) -> float:
    """Ascending sort, value at index ceil(q * N) - 1."""
    arr = np.sort(np.asarray(series, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("empty series")
    idx = math.ceil(q * arr.size) - 1
    return float(arr[max(idx, 0)])


# ---------------------------------------------------------------------------
# vendors and requests
# ---------------------------------------------------------------------------


class QualityStats:
    """Exponentially weighted download-speed stats per (region, hour)."""

    def __init__(self, prior_mbps: float = 10.0, alpha: float = 0.3):
        self.prior_mbps = prior_mbps
        self.alpha = alpha
        self._mean: dict = {}
        self._global = prior_mbps
        self._n = 0

    def observe(self, region: str, hour: int, speed_mbps: float):
        key = (region, hour)
        if key in self._mean:
            self._mean[key] = (1 - self.alpha) * self._mean[key] + self.alpha * speed_mbps
        else:
            self._mean[key] = speed_mbps
        self._n += 1
        self._global += (speed_mbps - self._global) / self._n

    def predict(self, region: str, hour: int) -> float:
        key = (region, hour)
        if key in self._mean:
            return self._mean[key]
        return self._global if self._n else self.prior_mbps


@dataclass
class VendorState:
    id: str
    unit_price: float  # per Mbps under peak billing, per GB under traffic billing
    target_share: float
    capacity_mbps: float
    quality: QualityStats = field(default_factory=QualityStats)
    cache_capacity_bytes: float = 0.0
    bandwidth_series: np.ndarray | None = None  # edge + back-to-source Mbps per slot

    def __post_init__(self):
        if not 0.0 <= self.target_share <= 1.0:
            raise ValueError("target_share must be in [0, 1]")
        if self.capacity_mbps <= 0:
            raise ValueError("capacity must be > 0")


def check_vendor_shares(vendors: Sequence[VendorState]):
    total = sum(v.target_share for v in vendors)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"target shares must sum to 1, got {total}")


@dataclass(frozen=True)
class RequestState:
    id: int
    bytes: float
    region: str = "r0"
    hour: int = 12
    rebuffer_sens: float = 1.0
    urgency: float = 0.5  # low buffer means high urgency

    def __post_init__(self):
        if self.bytes <= 0:
            raise ValueError("request bytes must be > 0")


def urgency_from_buffer(buffer_s: float, scale_s: float = 6.0) -> float:
    return max(0.0, 1.0 - buffer_s / scale_s)


# ---------------------------------------------------------------------------
# billing
# ---------------------------------------------------------------------------


def cost_95peak(vendors: Sequence[VendorState]) -> dict:
    """Monthly peak bill: unit price times the 95th-percentile slot per vendor."""
    bills = {}
    for v in vendors:
        if v.bandwidth_series is None or len(v.bandwidth_series) == 0:
            raise ValueError(f"vendor {v.id} has no bandwidth series")
        bills[v.id] = v.unit_price * peak_percentile(v.bandwidth_series)
    return {"per_vendor": bills, "total": sum(bills.values())}


def cost_traffic(vendors: Sequence[VendorState], slot_seconds: float = 300.0) -> dict:
    """Traffic bill: unit price per GB times bytes served."""
    bills = {}
    for v in vendors:
        if v.bandwidth_series is None:
            raise ValueError(f"vendor {v.id} has no bandwidth series")
        gb = float(np.sum(v.bandwidth_series)) * MBPS_TO_BYTES_PER_S * slot_seconds / 1e9
        bills[v.id] = v.unit_price * gb
    return {"per_vendor": bills, "total": sum(bills.values())}


# ---------------------------------------------------------------------------
# quality scheduling under share constraints
# ---------------------------------------------------------------------------


class ShareTracker:
    """Running realized byte shares for incremental scheduling."""

    def __init__(self, n_vendors: int):
        self.served = np.zeros(n_vendors, dtype=np.float64)

    def shares(self) -> np.ndarray:
        total = self.served.sum()
        return self.served / total if total > 0 else np.zeros_like(self.served)


def request_values(req: RequestState, vendors: Sequence[VendorState], cost_weight: float = 0.0) -> np.ndarray:
    """Predicted value of serving req from each vendor.

    Speed prediction for the request's (region, hour), weighted by the
    user's rebuffer sensitivity and urgency; an optional cost term makes
    the scheduler price-aware.
    """
    out = np.empty(len(vendors))
    for j, v in enumerate(vendors):
        speed = v.quality.predict(req.region, req.hour)
        out[j] = req.rebuffer_sens * req.urgency * speed - cost_weight * v.unit_price
    return out


def schedule_request(
    req: RequestState,
    vendors: Sequence[VendorState],
    tracker: ShareTracker,
    slack: float = DEFAULT_SHARE_SLACK,
    cost_weight: float = 0.0,
) -> str:
    """Route one request; realized shares stay within slack of targets."""
    check_vendor_shares(vendors)
    values = request_values(req, vendors, cost_weight)[None, :]
    targets = np.array([v.target_share for v in vendors])
    choice = schedule_loop(values, np.array([req.bytes]), targets, slack, tracker.served)
    return vendors[int(choice[0])].id


def schedule_requests(
    reqs: Sequence[RequestState],
    vendors: Sequence[VendorState],
    slack: float = DEFAULT_SHARE_SLACK,
    cost_weight: float = 0.0,
    tracker: ShareTracker | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Bulk path: returns (vendor index per request, realized shares)."""
    check_vendor_shares(vendors)
    tracker = tracker or ShareTracker(len(vendors))
    values = np.empty((len(reqs), len(vendors)))
    for i, r in enumerate(reqs):
        values[i] = request_values(r, vendors, cost_weight)
    req_bytes = np.array([r.bytes for r in reqs], dtype=np.float64)
    targets = np.array([v.target_share for v in vendors])
    choices = schedule_loop(values, req_bytes, targets, slack, tracker.served)
    return choices, tracker.shares()


# ---------------------------------------------------------------------------
# share allocation search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShareAllocation:
    shares: tuple
    utility: float
    feasible: bool
    reason: str = ""


def _simplex_grid(n: int, step: float):
    k = round(1.0 / step)
    if abs(k * step - 1.0) > 1e-9:
        raise ValueError("grid step must divide 1")

    def rec(prefix, remaining, slots):
        if slots == 1:
            yield prefix + (remaining,)
            return
        for units in range(remaining + 1):
            yield from rec(prefix + (units,), remaining - units, slots - 1)

    for combo in rec((), k, n):
        yield tuple(u * step for u in combo)


def allocation_utility(
    shares: Sequence[float],
    vendors: Sequence[VendorState],
    demand_mbps: float,
    ltv_per_mbps: float = 2.0,
    n_sim: int = 512,
    seed: int = 7,
    slack: float = DEFAULT_SHARE_SLACK,
) -> float:
    """Experience value minus bandwidth cost for one candidate share vector.

    Runs a short scheduling simulation with the candidate targets and
    values the realized mean predicted speed.
    """
    rng = np.random.default_rng(seed)
    speeds = np.array([v.quality.predict("r0", 12) for v in vendors])
    values = np.tile(speeds, (n_sim, 1))
    req_bytes = rng.uniform(0.5e6, 2e6, size=n_sim)
    targets = np.asarray(shares, dtype=np.float64)
    served = np.zeros(len(vendors))
    choices = schedule_loop(values, req_bytes, targets, slack, served)
    mean_speed = float(np.average(speeds[choices], weights=req_bytes))
    cost = demand_mbps * sum(p * b for p, b in zip((v.unit_price for v in vendors), shares))
    return ltv_per_mbps * mean_speed - cost


def allocate_shares(
    vendors: Sequence[VendorState],
    eta: int,
    grid_step: float,
    demand_mbps: float,
    ltv_per_mbps: float = 2.0,
    seed: int = 7,
) -> ShareAllocation:
    """Grid search over the share simplex under disaster and capacity limits."""
    if eta > len(vendors):
        raise ValueError("eta exceeds vendor count")
    best = None
    best_u = -math.inf
    any_feasible = False
    for cand in _simplex_grid(len(vendors), grid_step):
        if sum(1 for b in cand if b > 0) < eta:
            continue
        if any(b * demand_mbps > v.capacity_mbps + 1e-9 for b, v in zip(cand, vendors)):
            continue
        any_feasible = True
        u = allocation_utility(cand, vendors, demand_mbps, ltv_per_mbps, seed=seed)
        if u > best_u + 1e-12 or (abs(u - best_u) <= 1e-12 and best is not None and cand < best):
            best, best_u = cand, u
    if not any_feasible:
        return ShareAllocation(shares=(), utility=0.0, feasible=False, reason="capacities below demand")
    return ShareAllocation(shares=best, utility=best_u, feasible=True)


# ---------------------------------------------------------------------------
# popularity hash scheduling
# ---------------------------------------------------------------------------


def _stable_hash(name: str) -> int:
    return int.from_bytes(hashlib.sha1(name.encode()).digest()[:8], "big")


@dataclass(frozen=True)
class HashPlan:
    cold_files: frozenset
    subset: tuple  # vendor ids receiving cold traffic

    def vendor_of(self, file_id: str):
        """Pinned vendor id for cold files, None for hot (quality-scheduled)."""
        if file_id not in self.cold_files:
            return None
        return self.subset[_stable_hash(file_id) % len(self.subset)]


def hash_schedule(
    popularity: Mapping[str, float],
    vendors: Sequence[VendorState],
    cold_fraction: float,
    m: int,
) -> HashPlan:
    """Pin the coldest files to a small vendor subset; hot files flow on."""
    if not 0 < m <= len(vendors):
        raise ValueError("m must be in 1..vendor count")
    if not 0.0 <= cold_fraction <= 1.0:
        raise ValueError("cold_fraction must be in [0, 1]")
    ordered = sorted(popularity, key=lambda f: (popularity[f], f))
    n_cold = int(round(cold_fraction * len(ordered)))
    subset = tuple(sorted(v.id for v in vendors))[:m]
    return HashPlan(cold_files=frozenset(ordered[:n_cold]), subset=subset)


# ---------------------------------------------------------------------------
# edge cache simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CacheResult:
    hit_rate: float
    hits: np.ndarray  # per request
    bts_series: np.ndarray  # back-to-source bytes per slot
    bts_bytes: float
    oversize_files: tuple  # files larger than the whole cache; always-miss


def simulate_edge_cache(
    file_ids: np.ndarray,
    file_bytes: np.ndarray,
    capacity_bytes: float,
    slots: np.ndarray | None = None,
    n_slots: int | None = None,
) -> CacheResult:
    """LRU replay: hits cost nothing, misses add back-to-source bytes."""
    if capacity_bytes <= 0:
        raise ValueError("capacity must be > 0")
    file_ids = np.ascontiguousarray(file_ids, dtype=np.int64)
    file_bytes = np.ascontiguousarray(file_bytes, dtype=np.float64)
    hits, oversize = lru_simulate(file_ids, file_bytes, float(capacity_bytes))
    miss = hits == 0
    miss_bytes = file_bytes[file_ids[miss]]
    if slots is None:
        slots = np.zeros(len(file_ids), dtype=np.int64)
        n_slots = n_slots or 1
    else:
        slots = np.asarray(slots, dtype=np.int64)
        n_slots = n_slots or (int(slots.max()) + 1 if len(slots) else 1)
    bts_series = np.bincount(slots[miss], weights=miss_bytes, minlength=n_slots)
    hit_rate = float(hits.mean()) if len(hits) else 0.0
    return CacheResult(
        hit_rate=hit_rate,
        hits=hits,
        bts_series=bts_series,
        bts_bytes=float(miss_bytes.sum()),
        oversize_files=tuple(np.nonzero(oversize)[0].tolist()),
    )


# ---------------------------------------------------------------------------
# valley pre-caching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrecacheEntry:
    slot: int
    vendor_id: str
    region: str
    file_id: str
    bytes: float


@dataclass(frozen=True)
class PrecachePlan:
    entries: tuple
    projected_series: Mapping[str, np.ndarray]
    diagnostics: str = ""


def precache_plan(
    forecast_scores: Mapping[str, float],
    file_bytes: Mapping[str, float],
    vendor_series: Mapping[str, np.ndarray],
    slot_seconds: float = 300.0,
    regions: Mapping[str, float] | None = None,
    confidence_weight: float = 1.0,
    score_threshold: float = 0.0,
    similarity: Mapping[tuple, float] | None = None,
    max_files: int = 64,
) -> PrecachePlan:
    """Push top-forecast files into valley slots without raising any 95-peak.

    Valley slots are those strictly below the vendor's current watermark;
    pushes fill at most up to the watermark. Files spread across
    (vendor, region) nodes greedily, placing each file on the node where
    it is least similar to what is already there.
    """
    regions = regions or {"r0": 1.0}
    similarity = similarity or {}
    ranked = sorted(
        (f for f in forecast_scores if forecast_scores[f] * confidence_weight > score_threshold),
        key=lambda f: (-forecast_scores[f], f),
    )[:max_files]

    headroom = {}
    projected = {}
    for vid, series in vendor_series.items():
        series = np.asarray(series, dtype=np.float64)
        watermark = peak_percentile(series)
        head = np.maximum(watermark - series, 0.0) * MBPS_TO_BYTES_PER_S * slot_seconds
        projected[vid] = series.copy()
        for region, frac in regions.items():
            headroom[(vid, region)] = head * frac

    if not ranked:
        return PrecachePlan(entries=(), projected_series=projected, diagnostics="nothing above threshold")
    if all(h.sum() <= 0 for h in headroom.values()):
        return PrecachePlan(entries=(), projected_series=projected, diagnostics="no valley capacity")

    assigned: dict = {node: [] for node in headroom}
    entries = []
    for f in ranked:
        size = file_bytes[f]
        best_node, best_sim, best_slot = None, math.inf, -1
        for node in sorted(headroom):
            room = headroom[node]
            fits = np.nonzero(room >= size)[0]
            if len(fits) == 0:
                continue
            sim = sum(similarity.get((f, g), similarity.get((g, f), 0.0)) for g in assigned[node])
            if sim < best_sim - 1e-12:
                best_node, best_sim, best_slot = node, sim, int(fits[0])
        if best_node is None:
            continue
        headroom[best_node][best_slot] -= size
        assigned[best_node].append(f)
        vid = best_node[0]
        projected[vid][best_slot] += size / (MBPS_TO_BYTES_PER_S * slot_seconds)
        entries.append(PrecacheEntry(slot=best_slot, vendor_id=vid, region=best_node[1], file_id=f, bytes=size))

    diag = "" if entries else "no valley capacity"
    return PrecachePlan(entries=tuple(entries), projected_series=projected, diagnostics=diag)


# ---------------------------------------------------------------------------
# peak staggering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeakPlan:
    mode: str
    days: tuple  # per day: (carrying vendor ids, share vector)


@dataclass(frozen=True)
class StaggerResult:
    feasible: bool
    plan: PeakPlan | None
    per_vendor_series: Mapping[str, np.ndarray] | None
    srr_value: float
    reason: str = ""


def srr(total_waveform, per_vendor_series: Mapping[str, np.ndarray]) -> float:
    """Scheduling reuse rate: 1 - sum of vendor 95-peaks over the total 95-peak."""
    total = np.asarray(total_waveform, dtype=np.float64)
    stacked = np.zeros_like(total)
    for series in per_vendor_series.values():
        stacked = stacked + np.asarray(series, dtype=np.float64)
    if np.max(np.abs(stacked - total)) > 1e-6:
        raise ValueError("per-vendor series do not sum to the total waveform")
    t95 = peak_percentile(total)
    if t95 == 0:
        raise ValueError("undefined reuse rate: total 95-peak is zero")
    return (t95 - sum(peak_percentile(s) for s in per_vendor_series.values())) / t95


def proportional_split(total_waveform, vendors: Sequence[VendorState]) -> dict:
    total = np.asarray(total_waveform, dtype=np.float64)
    return {v.id: v.target_share * total for v in vendors}


def stagger_peaks(
    total_waveform,
    vendors: Sequence[VendorState],
    slots_per_day: int,
    mode: str = "cross-day-shift",
    free_slot_fraction: float = 0.05,
) -> StaggerResult:
    """Rotate peak carriage so each vendor's peaks stay inside its free slots.

    Slots whose demand exceeds the rotation threshold are carried by the
    designated vendor while the others hold at their proportional share of
    the threshold. The threshold is the tightest level whose excess-slot
    count fits into the vendors' combined free budget under peak billing.
    """
    check_vendor_shares(vendors)
    total = np.asarray(total_waveform, dtype=np.float64)
    n_slots = total.size
    n = len(vendors)
    if n_slots % slots_per_day != 0:
        raise ValueError("waveform length must be a whole number of days")
    if np.max(total) > sum(v.capacity_mbps for v in vendors) + 1e-9:
        return StaggerResult(False, None, None, 0.0, "demand exceeds combined capacity")

    shares = np.array([v.target_share for v in vendors])
    if n == 1:
        series = {vendors[0].id: total.copy()}
        days = tuple(((vendors[0].id,), (1.0,)) for _ in range(n_slots // slots_per_day))
        return StaggerResult(True, PeakPlan(mode, days), series, srr(total, series))

    free_per_vendor = n_slots - math.ceil(0.95 * n_slots)  # slots above the watermark are free
    budget = int(n * min(free_per_vendor, free_slot_fraction * n_slots))
    budget = min(budget, n_slots - 1)
    if budget <= 0:
        threshold = float(np.max(total))
    else:
        threshold = float(np.sort(total)[n_slots - budget])

    n_days = n_slots // slots_per_day
    out = np.zeros((n, n_slots))
    for t in range(n_slots):
        day = t // slots_per_day
        if mode == "cross-day-shift":
            designated = day % n
        elif mode == "phase-shift":
            designated = (t % slots_per_day) * n // slots_per_day
        elif mode == "complementary-shift":
            designated = t % n
        else:
            raise ValueError(f"unknown mode {mode!r}")
        demand = total[t]
        if demand <= threshold:
            out[:, t] = shares * demand
        else:
            held = shares * threshold
            out[:, t] = held
            out[designated, t] = demand - (held.sum() - held[designated])

    for j, v in enumerate(vendors):
        if np.any(out[j] > v.capacity_mbps + 1e-9):
            return StaggerResult(False, None, None, 0.0, f"vendor {v.id} capacity exceeded")

    series = {v.id: out[j] for j, v in enumerate(vendors)}
    days = []
    for d in range(n_days):
        if mode == "cross-day-shift":
            days.append(((vendors[d % n].id,), tuple(shares)))
        else:
            days.append((tuple(v.id for v in vendors), tuple(shares)))
    value = srr(total, series)
    return StaggerResult(True, PeakPlan(mode, tuple(days)), series, value)
