"""User-item aware encoding.

Predicts per-video value (selectable regression losses), updates each hot
video's ladder group window by window toward its forecast audience, prices
candidate groups as profit minus bandwidth/compute/storage cost deltas,
and admits transcode tasks under a rolling quota steered by a PID loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import core
from ._kernels import knapsack_dp
from .playback import LadderGroup

DP_CELL_LIMIT = 1_000_000

# normalized transcode-seconds per content-second
DEFAULT_CALC_TABLE = {
    ("fast", "cpu"): 1.0,
    ("medium", "cpu"): 2.0,
    ("slow", "cpu"): 4.0,
    ("fast", "fpga"): 0.5,
    ("medium", "fpga"): 1.0,
    ("slow", "fpga"): 2.0,
    ("fast", "gpu"): 0.3,
    ("medium", "gpu"): 0.6,
    ("slow", "gpu"): 1.2,
}


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def mse_loss(y: np.ndarray, pred: np.ndarray):
    resid = pred - y
    return 0.5 * float(np.mean(resid**2)), resid


def huber_loss(y: np.ndarray, pred: np.ndarray, delta: float):
    resid = pred - y
    a = np.abs(resid)
    quad = a < delta
    value = np.where(quad, 0.5 * resid**2, delta * (a - 0.5 * delta))
    grad = np.where(quad, resid, delta * np.sign(resid))
    return float(np.mean(value)), grad


def weighted_log_loss(y: np.ndarray, logits: np.ndarray):
    """-y*log(p) - log(1-p) with p the sigmoid of the model output."""
    p = 1.0 / (1.0 + np.exp(-logits))
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    value = float(np.mean(-y * np.log(p) - np.log(1.0 - p)))
    grad = -y * (1.0 - p) + p
    return value, grad


# ---------------------------------------------------------------------------
# value model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValueSample:
    author_activity: float
    author_posts: float
    author_fans: float
    duration_s: float
    playback_volume: float
    likes: float
    vv_growth_rate: float
    category_id: int
    hour: int
    holiday: bool
    targets: Mapping[str, float]

    def features(self) -> np.ndarray:
        return np.array(
            [
                self.author_activity,
                math.log1p(self.author_posts),
                math.log1p(self.author_fans),
                self.duration_s / 60.0,
                math.log1p(self.playback_volume),
                math.log1p(self.likes),
                self.vv_growth_rate,
                float(self.category_id),
                self.hour / 24.0,
                1.0 if self.holiday else 0.0,
            ]
        )


def samples_to_matrix(samples: Sequence[ValueSample], target: str):
    x = np.stack([s.features() for s in samples])
    y = np.array([s.targets[target] for s in samples], dtype=np.float64)
    if np.any(y < 0):
        raise ValueError("targets must be >= 0")
    return x, y


@dataclass
class ValueModel:
    weights: np.ndarray  # last entry is the bias on standardized features
    loss_kind: str  # mse | huber | wll
    huber_delta: float
    log_target: bool
    target: str
    feat_mean: np.ndarray
    feat_std: np.ndarray
    degenerate: bool = False
    train_losses: list = field(default_factory=list)

    def _design(self, x: np.ndarray) -> np.ndarray:
        z = (np.atleast_2d(x) - self.feat_mean) / self.feat_std
        return np.hstack([z, np.ones((z.shape[0], 1))])

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Raw score: log1p scale for mse/huber with log targets, logit for wll."""
        return self._design(x) @ self.weights

    def predict_target(self, x: np.ndarray) -> np.ndarray:
        s = self.predict(x)
        if self.loss_kind == "wll":
            return 1.0 / (1.0 + np.exp(-s))
        return np.expm1(s) if self.log_target else s


def train_value_model(
    x: np.ndarray,
    y: np.ndarray,
    loss_kind: str = "mse",
    huber_delta: float = 1.0,
    log_target: bool | None = None,
    target: str = "view_volume",
    epochs: int = 200,
    lr: float = 0.1,
) -> ValueModel:
    """Gradient-descent fit of a linear head under the selected loss.

    Targets train on log1p scale by default for the squared and Huber
    losses (heavy-tailed value); the weighted log loss keeps raw targets
    and models a probability.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0 or len(x) != len(y):
        raise ValueError("need a nonempty (n, d) feature matrix with matching targets")
    if loss_kind not in ("mse", "huber", "wll"):
        raise ValueError(f"unknown loss {loss_kind!r}")
    if loss_kind == "huber" and huber_delta <= 0:
        raise ValueError("huber delta must be > 0")
    if log_target is None:
        log_target = loss_kind != "wll"

    feat_mean = x.mean(axis=0)
    feat_std = x.std(axis=0)
    feat_std[feat_std == 0] = 1.0
    model = ValueModel(
        weights=np.zeros(x.shape[1] + 1),
        loss_kind=loss_kind,
        huber_delta=huber_delta,
        log_target=log_target,
        target=target,
        feat_mean=feat_mean,
        feat_std=feat_std,
    )
    y_fit = np.log1p(y) if log_target and loss_kind != "wll" else y
    if np.allclose(y_fit, y_fit[0]):
        w = np.zeros(x.shape[1] + 1)
        w[-1] = y_fit[0] if loss_kind != "wll" else _logit(min(max(y_fit[0], 1e-6), 1 - 1e-6))
        model.weights = w
        model.degenerate = True
        return model

    design = model._design(x)
    w = model.weights
    for _ in range(epochs):
        pred = design @ w
        if loss_kind == "mse":
            value, grad = mse_loss(y_fit, pred)
        elif loss_kind == "huber":
            value, grad = huber_loss(y_fit, pred, huber_delta)
        else:
            value, grad = weighted_log_loss(y_fit, pred)
        w = w - lr * (design.T @ grad) / len(y_fit)
        model.train_losses.append(value)
    model.weights = w
    return model


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def evaluate_value_model(model: ValueModel, x: np.ndarray, y: np.ndarray, top_fraction: float = 0.1):
    """(rec_auc, mae): ranking AUC against top-fraction membership, plus MAE.

    rec_auc asks how well the scores rank the items whose true target lands
    in the top fraction; mae is on the scale the model was trained on.
    """
    if len(y) == 0:
        raise ValueError("empty test set")
    if not 0.0 < top_fraction < 1.0:
        raise ValueError("top_fraction must be in (0, 1)")
    y = np.asarray(y, dtype=np.float64)
    scores = model.predict(x)
    k = max(int(math.ceil(top_fraction * len(y))), 1)
    labels = np.zeros(len(y), dtype=bool)
    labels[np.argsort(-y, kind="mergesort")[:k]] = True
    n_pos = int(labels.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: binarized labels are single-class")
    ranks = _average_ranks(scores)
    auc = (ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    if model.loss_kind == "wll":
        y_scale = y
    else:
        y_scale = np.log1p(y) if model.log_target else y
    pred_scale = model.predict(x) if model.loss_kind != "wll" else model.predict_target(x)
    mae = float(np.mean(np.abs(pred_scale - y_scale)))
    return float(auc), mae


# ---------------------------------------------------------------------------
# windowed ladder update
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowRecord:
    t: int
    ug_hist: tuple  # consumer-cluster mass fractions
    qop: core.QoPVector
    profit: float
    qd_prob: float
    fd_prob: float
    ladder: LadderGroup

    def __post_init__(self):
        if not 0.0 <= self.qd_prob <= 1.0 or not 0.0 <= self.fd_prob <= 1.0:
            raise ValueError("preference probabilities must be fractions")
        if abs(sum(self.ug_hist) - 1.0) > 1e-9:
            raise ValueError("cluster histogram must sum to 1")


def exp_smooth(values: Sequence[float], alpha: float = 0.3) -> float:
    it = iter(values)
    state = next(it)
    for v in it:
        state = (1 - alpha) * state + alpha * v
    return state


@dataclass(frozen=True)
class ConsumptionForecast:
    plays: float
    mean_watch_s: float


@dataclass(frozen=True)
class CostComponents:
    bw_bytes: float
    calc_units: float
    store_bytes: float

    def currency(self, bw_price_per_gb: float, calc_price: float, store_price_per_gb: float) -> float:
        return (
            self.bw_bytes / 1e9 * bw_price_per_gb
            + self.calc_units * calc_price
            + self.store_bytes / 1e9 * store_price_per_gb
        )


def cost_components(
    group: LadderGroup,
    duration_s: float,
    forecast: ConsumptionForecast,
    selection_shares: Sequence[float],
    preset: str = "medium",
    resource: str = "cpu",
    calc_table: Mapping = None,
) -> CostComponents:
    """Physical cost of one ladder group for the forecast consumption.

    Bandwidth weights each rendition by its predicted selection share;
    compute is a (preset, resource) table lookup per content second;
    storage is bitrate times duration, in bytes.
    """
    if forecast.plays < 0:
        raise ValueError("forecast plays must be >= 0")
    table = DEFAULT_CALC_TABLE if calc_table is None else calc_table
    if (preset, resource) not in table:
        raise KeyError(f"no compute-cost entry for preset/resource pair ({preset!r}, {resource!r})")
    shares = np.asarray(selection_shares, dtype=np.float64)
    if len(shares) != len(group) or abs(shares.sum() - 1.0) > 1e-9:
        raise ValueError("selection shares must be a distribution over the group")
    bw = 0.0
    store = 0.0
    for lad, share in zip(group, shares):
        bw += share * forecast.plays * lad.bitrate_kbps * 125.0 * forecast.mean_watch_s
        store += lad.bitrate_kbps * 125.0 * duration_s
    calc = table[(preset, resource)] * duration_s * len(group)
    return CostComponents(bw_bytes=bw, calc_units=calc, store_bytes=store)


@dataclass(frozen=True)
class RewardContext:
    """Everything needed to price a candidate ladder group for an audience."""

    impacts: core.ImpactTable
    economy: core.EconomyParams
    cluster_sens: tuple  # per cluster: sensitivity mapping (QoP metrics + "quality")
    qop_response: Callable  # (LadderGroup, cluster_index) -> QoPVector
    selection_shares: Callable  # (LadderGroup, cluster_index) -> share vector
    baseline: LadderGroup
    duration_s: float
    forecast: ConsumptionForecast
    arpu_quality_coeff: float = 0.0005
    bw_price_per_gb: float = 0.05
    calc_price: float = 0.002
    store_price_per_gb: float = 0.02
    preset: str = "medium"
    resource: str = "cpu"
    calc_table: Mapping = None

    def cost_of(self, group: LadderGroup) -> float:
        shares = np.zeros(len(group))
        for g in range(len(self.cluster_sens)):
            shares = shares + np.asarray(self.selection_shares(group, g)) / len(self.cluster_sens)
        shares = shares / shares.sum()
        comp = cost_components(
            group, self.duration_s, self.forecast, shares,
            preset=self.preset, resource=self.resource, calc_table=self.calc_table,
        )
        return comp.currency(self.bw_price_per_gb, self.calc_price, self.store_price_per_gb)


def reward(group: LadderGroup, ug_hist: Sequence[float], ctx: RewardContext) -> float:
    """Audience-weighted value change of a ladder group, net of cost deltas.

    Per cluster, the predicted QoP under the candidate is priced against
    the baseline group through the sensitivity-weighted lifetime mapping,
    and the quality preference through the revenue-rate coefficient. Cost
    is the bandwidth/compute/storage delta against the baseline.
    """
    ug = np.asarray(ug_hist, dtype=np.float64)
    if abs(ug.sum() - 1.0) > 1e-9 or np.any(ug < 0):
        raise ValueError("cluster histogram must be a distribution")
    ltv = 0.0
    for g, weight in enumerate(ug):
        if weight == 0.0:
            continue
        sens = ctx.cluster_sens[g]
        base_qop = ctx.qop_response(ctx.baseline, g)
        cand_qop = ctx.qop_response(group, g)
        lt_frac = core.qop_delta_to_lt(base_qop, cand_qop, ctx.impacts, sens=sens).value
        delta_lt_days = lt_frac * ctx.economy.lt_base
        base_q = ctx.baseline.mean_quality()
        q_pct = (group.mean_quality() - base_q) / base_q * 100.0 if base_q > 0 else 0.0
        delta_arpu = ctx.arpu_quality_coeff * float(sens.get("quality", 0.0)) * q_pct
        ltv += weight * (ctx.economy.lt_base * delta_arpu + delta_lt_days * ctx.economy.arpu_base)
    delta_cost = ctx.cost_of(group) - ctx.cost_of(ctx.baseline)
    return ltv * ctx.forecast.plays - delta_cost


@dataclass(frozen=True)
class LadderUpdate:
    ladder: LadderGroup
    direction: str | None  # "quality" | "fluency" | None when withdrawn
    reward_value: float | None
    flagged: str = ""


def update_ladder(
    history: Sequence[WindowRecord],
    value_score: float,
    score_th: float,
    candidates: Sequence[LadderGroup],
    ctx_builder: Callable,
    smoothing_alpha: float = 0.3,
) -> LadderUpdate:
    """Pick the next window's ladder group from forecast preferences.

    Below the value threshold the current group is withheld unchanged.
    Otherwise the audience histogram and the quality/fluency preferences
    are forecast by exponential smoothing, the optimization direction
    follows whichever preference is rising faster, and the best candidate
    in that direction by reward is selected.
    """
    if not history:
        raise ValueError("history must be nonempty")
    if not candidates:
        raise ValueError("candidate space must be nonempty")
    current = history[-1].ladder
    if value_score < score_th:
        return LadderUpdate(ladder=current, direction=None, reward_value=None, flagged="withdrawn")

    qd_level = exp_smooth([r.qd_prob for r in history], smoothing_alpha)
    fd_level = exp_smooth([r.fd_prob for r in history], smoothing_alpha)
    ug_next = np.array([exp_smooth([r.ug_hist[g] for r in history], smoothing_alpha) for g in range(len(history[-1].ug_hist))])
    ug_next = ug_next / ug_next.sum()
    # a rising preference shows as the last observation above its smoothed level
    qd_trend = history[-1].qd_prob - qd_level
    fd_trend = history[-1].fd_prob - fd_level
    direction = "quality" if qd_trend >= fd_trend else "fluency"

    if direction == "quality":
        pool = [c for c in candidates if c.mean_quality() >= current.mean_quality()]
    else:
        pool = [c for c in candidates if c.mean_bitrate() <= current.mean_bitrate()]
    if current not in pool:
        pool.append(current)
    if len(pool) == 1 and pool[0] == current and len(candidates) > 1:
        flag = "no candidates in direction"
    else:
        flag = ""

    ctx = ctx_builder(current, ug_next)
    best, best_r = None, -math.inf
    for cand in pool:
        r = reward(cand, ug_next, ctx)
        if r > best_r:
            best, best_r = cand, r
    return LadderUpdate(ladder=best, direction=direction, reward_value=best_r, flagged=flag)


# ---------------------------------------------------------------------------
# transcode allocation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TranscodeTask:
    item_id: str
    ladder: LadderGroup | None
    predicted_reward: float
    quota_cost: float  # normalized transcode-seconds
    resource: str = "cpu"

    def __post_init__(self):
        if self.quota_cost <= 0:
            raise ValueError("quota cost must be > 0")


@dataclass(frozen=True)
class AllocationResult:
    accepted: tuple  # item ids
    total_reward: float
    quota_used: float
    method: str  # "dp" | "greedy"


def allocate_transcodes(
    tasks: Sequence[TranscodeTask],
    budget: float,
    granularity: float = 1.0,
) -> AllocationResult:
    """Admit tasks under the quota: exact DP when the table fits, else greedy.

    The greedy path fills by reward density, keeps the better of that and
    the single best item (the classic half-optimum guarantee), then tries
    single swaps.
    """
    if budget <= 0:
        raise ValueError("budget must be > 0")
    if not tasks:
        return AllocationResult((), 0.0, 0.0, "dp")
    weights = np.array([int(round(t.quota_cost / granularity)) for t in tasks], dtype=np.int64)
    weights = np.maximum(weights, 1)
    cap = int(math.floor(budget / granularity))
    if len(tasks) * (cap + 1) <= DP_CELL_LIMIT:
        values = np.array([t.predicted_reward for t in tasks], dtype=np.float64)
        best, selected = knapsack_dp(weights, values, cap)
        ids = tuple(t.item_id for t, s in zip(tasks, selected) if s)
        used = float(sum(t.quota_cost for t, s in zip(tasks, selected) if s))
        return AllocationResult(ids, float(best), used, "dp")
    return _greedy_knapsack(tasks, budget)


def _greedy_knapsack(tasks: Sequence[TranscodeTask], budget: float) -> AllocationResult:
    order = sorted(range(len(tasks)), key=lambda i: (-tasks[i].predicted_reward / tasks[i].quota_cost, i))
    chosen: list = []
    used = 0.0
    for i in order:
        if used + tasks[i].quota_cost <= budget:
            chosen.append(i)
            used += tasks[i].quota_cost
    reward_sum = sum(tasks[i].predicted_reward for i in chosen)
    # best single feasible item: together with density greedy this is a 1/2 bound
    singles = [i for i in range(len(tasks)) if tasks[i].quota_cost <= budget]
    if singles:
        best_single = max(singles, key=lambda i: tasks[i].predicted_reward)
        if tasks[best_single].predicted_reward > reward_sum:
            chosen = [best_single]
            used = tasks[best_single].quota_cost
            reward_sum = tasks[best_single].predicted_reward

    improved = True
    while improved:
        improved = False
        inside = set(chosen)
        for i in chosen:
            for j in range(len(tasks)):
                if j in inside:
                    continue
                new_used = used - tasks[i].quota_cost + tasks[j].quota_cost
                gain = tasks[j].predicted_reward - tasks[i].predicted_reward
                if new_used <= budget and gain > 1e-12:
                    chosen.remove(i)
                    chosen.append(j)
                    inside = set(chosen)
                    used = new_used
                    reward_sum += gain
                    improved = True
                    break
            if improved:
                break
    ids = tuple(tasks[i].item_id for i in sorted(chosen))
    return AllocationResult(ids, reward_sum, used, "greedy")


# ---------------------------------------------------------------------------
# PID quota control
# ---------------------------------------------------------------------------


@dataclass
class QuotaController:
    kp: float = 0.6
    ki: float = 0.05
    kd: float = 0.0
    target: float = 0.8  # utilization setpoint
    output_scale: float = 100.0
    integral: float = 0.0
    last_error: float = 0.0

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0 or self.kd < 0:
            raise ValueError("gains must be >= 0")


def pid_quota(
    controller: QuotaController,
    measured_utilization: float,
    dt: float,
    current_budget: float,
    max_budget: float,
) -> float:
    """Incremental PID step on the quota; clamped to [0, max_budget]."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    e = controller.target - measured_utilization
    controller.integral += e * dt
    deriv = (e - controller.last_error) / dt
    controller.last_error = e
    delta = (controller.kp * e + controller.ki * controller.integral + controller.kd * deriv) * controller.output_scale
    return float(min(max(current_budget + delta, 0.0), max_budget))


def simulate_quota_loop(
    controller: QuotaController,
    plant_capacity: float,
    steps: int,
    disturbance: Sequence[float] | None = None,
    budget0: float = 0.0,
    max_budget: float = 1000.0,
    dt: float = 1.0,
) -> np.ndarray:
    """Closed loop against a proportional plant; returns utilization per step."""
    dist = np.zeros(steps) if disturbance is None else np.asarray(disturbance, dtype=np.float64)
    budget = budget0
    out = np.empty(steps)
    for t in range(steps):
        measured = max(budget / plant_capacity + dist[t], 0.0)
        out[t] = measured
        budget = pid_quota(controller, measured, dt, budget, max_budget)
    return out


# ---------------------------------------------------------------------------
# consumer clustering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterResult:
    labels: np.ndarray
    centers: np.ndarray
    histogram: np.ndarray  # cluster mass fractions
    k_effective: int
    flagged: str = ""


def cluster_consumers(vectors: np.ndarray, k: int, seed: int = 0, max_iter: int = 100) -> ClusterResult:
    """Seeded k-means (k-means++ init) over user sensitivity vectors."""
    x = np.asarray(vectors, dtype=np.float64)
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError("k must be in 1..n_users")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0:
            centers[j] = x[rng.integers(n)]
            continue
        centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))

    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        dists = np.linalg.norm(x[:, None, :] - centers[None, :, :], axis=2)
        new_labels = np.argmin(dists, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = x[mask].mean(axis=0)

    flagged = ""
    occupied = np.unique(labels)
    if len(occupied) < k:
        remap = {old: new for new, old in enumerate(occupied)}
        labels = np.array([remap[l] for l in labels])
        centers = centers[occupied]
        flagged = f"dropped {k - len(occupied)} empty clusters"
    hist = np.bincount(labels, minlength=len(occupied)).astype(np.float64) / n
    return ClusterResult(labels=labels, centers=centers, histogram=hist, k_effective=len(occupied), flagged=flagged)
