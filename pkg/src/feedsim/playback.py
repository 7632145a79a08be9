"""Client-side feed session simulator and decision stack.

A session walks an item list under a fixed-step fluid download model. At
each item boundary the active decision function picks the rendition, the
pre-download depth, the per-item download cap and whether to pre-render;
the slot loop then advances download and playback until the user swipes
(at a playtime sampled once per item) or the network trace runs out.

Deciders come in three flavors: rule or fixed-action baselines, a linear
parametric form trained by mini-batch gradient descent, and a tabular Q
form trained from (s, a, r, s') episodes. Rewards for training are the
per-user estimated profit of the observed QoP change.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import core
from ._kernels import advance_item, q_update

log = logging.getLogger(__name__)

DECIDER_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ladder:
    index: int
    bitrate_kbps: float
    quality_score_d: float  # 0..100
    file_bytes: float
    meta_bytes: float
    resolution_class: str = "sd"

    def __post_init__(self):
        if not 0.0 <= self.quality_score_d <= 100.0:
            raise ValueError("quality_score_d must be in [0, 100]")
        if self.bitrate_kbps <= 0 or self.file_bytes <= 0:
            raise ValueError("bitrate and file size must be positive")


class LadderGroup:
    """An item's available renditions, ordered by bitrate."""

    def __init__(self, ladders: Sequence[Ladder]):
        if not ladders:
            raise ValueError("a ladder group needs at least one ladder")
        self.ladders = tuple(sorted(ladders, key=lambda l: l.index))
        for a, b in zip(self.ladders, self.ladders[1:]):
            if b.bitrate_kbps <= a.bitrate_kbps:
                raise ValueError("bitrate must be strictly increasing with index")
            if b.quality_score_d < a.quality_score_d:
                raise ValueError("quality must be nondecreasing with bitrate")

    def __len__(self):
        return len(self.ladders)

    def __getitem__(self, i) -> Ladder:
        return self.ladders[i]

    def __iter__(self):
        return iter(self.ladders)

    def __eq__(self, other):
        return isinstance(other, LadderGroup) and self.ladders == other.ladders

    def __hash__(self):
        return hash(self.ladders)

    def mean_bitrate(self) -> float:
        return float(np.mean([l.bitrate_kbps for l in self.ladders]))

    def mean_quality(self) -> float:
        return float(np.mean([l.quality_score_d for l in self.ladders]))


@dataclass(frozen=True)
class Item:
    id: str
    duration_s: float
    ladders: LadderGroup
    popularity_weight: float = 1.0
    value_score: float = 0.0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be > 0")


@dataclass(frozen=True)
class UserState:
    id: str
    device_score: float = 0.5
    buffer_s: float = 0.0
    portraits: Mapping[str, int] = field(default_factory=dict)
    qop_sens: Mapping[str, float] = field(default_factory=dict)
    network_trace_id: str = ""
    context: tuple = ("feed", 12, "fair")  # (page, hour, network class)

    def __post_init__(self):
        if self.buffer_s < 0:
            raise ValueError("buffer_s must be >= 0")
        if any(w < 0 for w in self.qop_sens.values()):
            raise ValueError("sensitivity weights must be >= 0")

    @property
    def network_class(self) -> str:
        return self.context[2]


@dataclass(frozen=True)
class ActionEntry:
    module_id: str
    impl_id: str
    resource_id: str
    usage: float
    qop_impact: Mapping[str, float]  # metric -> relative change in percent


class ActionMatrix:
    def __init__(self, entries: Sequence[ActionEntry]):
        keys = [(e.module_id, e.impl_id, e.resource_id) for e in entries]
        if len(set(keys)) != len(keys):
            raise ValueError("(module, implementation, resource) triples must be unique")
        self.entries = tuple(entries)

    def __len__(self):
        return len(self.entries)


def top_k_actions(matrix: ActionMatrix, k: int, impacts: core.ImpactTable) -> list[ActionEntry]:
    """The k entries with greatest absolute lifetime-equivalent impact.

    Stable magnitude sort; ties break on the (module, implementation,
    resource) triple ascending. k beyond the matrix size returns everything.
    """
    if k < 1:
        raise ValueError("k must be >= 1")

    def lt_equiv(e: ActionEntry) -> float:
        return core.lt_impact_of_changes(e.qop_impact, impacts)

    ranked = sorted(
        matrix.entries,
        key=lambda e: (-abs(lt_equiv(e)), e.module_id, e.impl_id, e.resource_id),
    )
    return ranked[: min(k, len(ranked))]


# ---------------------------------------------------------------------------
# playtime models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedDist:
    value: float

    def mean(self) -> float:
        return self.value

    def sample(self, rng) -> float:
        return self.value


@dataclass(frozen=True)
class EmpiricalDist:
    values: tuple

    def mean(self) -> float:
        return float(np.mean(self.values))

    def sample(self, rng) -> float:
        return float(self.values[rng.integers(len(self.values))])


@dataclass(frozen=True)
class GeometricPlaytime:
    """Per-step stop probability, truncated at the item duration.

    The residual mass of stopping beyond the duration collapses onto a
    full watch.
    """

    stop_prob: float
    cap_s: float
    step_s: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.stop_prob <= 1.0:
            raise ValueError("stop_prob must be in (0, 1]")
        if self.cap_s <= 0:
            raise ValueError("cap_s must be > 0")

    def mean(self) -> float:
        p, q = self.stop_prob, 1.0 - self.stop_prob
        n = int(math.ceil(self.cap_s / self.step_s))
        # E[min(k*step, cap)] over k ~ Geometric(p), plus the truncated tail
        total = 0.0
        for k in range(1, n + 1):
            total += min(k * self.step_s, self.cap_s) * q ** (k - 1) * p
        total += self.cap_s * q**n
        return total

    def sample(self, rng) -> float:
        u = rng.random()
        k = int(math.ceil(math.log1p(-u) / math.log1p(-self.stop_prob))) if self.stop_prob < 1.0 else 1
        return min(k * self.step_s, self.cap_s)


@dataclass(frozen=True)
class MixtureDist:
    components: tuple
    weights: tuple

    def mean(self) -> float:
        return sum(w * c.mean() for w, c in zip(self.weights, self.components))

    def sample(self, rng) -> float:
        i = rng.choice(len(self.components), p=np.asarray(self.weights))
        return self.components[i].sample(rng)


@dataclass(frozen=True)
class PlaytimeModel:
    """Playtime fused from duration-bucket, per-item and per-user components."""

    bucket_edges: tuple  # duration-bucket upper edges, last bucket open
    bucket_dist: Mapping[int, object]
    item_dist: Mapping[str, object] = field(default_factory=dict)
    user_dist: Mapping[str, object] = field(default_factory=dict)
    alphas: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.alphas) != 3 or any(a < 0 for a in self.alphas):
            raise ValueError("alphas must be three nonnegative weights")
        if abs(sum(self.alphas) - 1.0) > 1e-9:
            raise ValueError("alphas must sum to 1")

    def bucket_of(self, duration_s: float) -> int:
        return bisect.bisect_left(self.bucket_edges, duration_s)


def estimate_playtime(u: UserState, i: Item, m: PlaytimeModel):
    """Expected playtime and the fused distribution for (user, item).

    Components missing history fall back onto the duration-bucket component
    with their weight re-normalized onto it.
    """
    bucket = m.bucket_of(i.duration_s)
    if bucket not in m.bucket_dist:
        raise KeyError(f"no playtime distribution configured for duration bucket {bucket}")
    a1, a2, a3 = m.alphas
    comps = [m.bucket_dist[bucket]]
    weights = [a1]
    item_c = m.item_dist.get(i.id)
    user_c = m.user_dist.get(u.id)
    if item_c is not None:
        comps.append(item_c)
        weights.append(a2)
    else:
        weights[0] += a2
    if user_c is not None:
        comps.append(user_c)
        weights.append(a3)
    else:
        weights[0] += a3
    dist = MixtureDist(components=tuple(comps), weights=tuple(weights))
    return dist.mean(), dist


# ---------------------------------------------------------------------------
# uplift portraits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UpliftPortraitModel:
    """Buckets users by predicted treatment-minus-control outcome."""

    y_treat: Callable
    y_control: Callable
    thresholds: tuple

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly increasing")


def uplift_bucket(user_features, model: UpliftPortraitModel) -> int:
    """1-based bucket id; bucket 1 is uplift <= first threshold."""
    uplift = model.y_treat(user_features) - model.y_control(user_features)
    return 1 + bisect.bisect_left(model.thresholds, uplift)


def qoe(quality, block_dur, quality_switch, cost, alpha, beta, gamma) -> float:
    """Fixed-weight quality-of-experience baseline objective."""
    if alpha < 0 or beta < 0 or gamma < 0:
        raise ValueError("hyperparameters must be >= 0")
    return quality - alpha * block_dur - beta * quality_switch - gamma * cost


# ---------------------------------------------------------------------------
# network traces
# ---------------------------------------------------------------------------


class NetworkTrace:
    """Step-function bandwidth over time; covers [0, last timestamp)."""

    def __init__(self, t_ms, bandwidth_kbps):
        self.t_ms = np.asarray(t_ms, dtype=np.float64)
        self.bandwidth_kbps = np.asarray(bandwidth_kbps, dtype=np.float64)
        if self.t_ms.shape != self.bandwidth_kbps.shape or self.t_ms.size < 2:
            raise ValueError("trace needs matching t/bandwidth arrays with >= 2 points")
        if np.any(np.diff(self.t_ms) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(self.bandwidth_kbps < 0):
            raise ValueError("bandwidth must be >= 0")

    @classmethod
    def constant(cls, bandwidth_kbps: float, duration_ms: float) -> "NetworkTrace":
        return cls([0.0, duration_ms], [bandwidth_kbps, bandwidth_kbps])

    @classmethod
    def from_csv(cls, path) -> "NetworkTrace":
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=np.float64)
        return cls(np.atleast_1d(data["t_ms"]), np.atleast_1d(data["bandwidth_kbps"]))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t_ms,bandwidth_kbps\n")
            for t, b in zip(self.t_ms, self.bandwidth_kbps):
                fh.write(f"{t:.0f},{b:.6g}\n")

    def to_slots(self, step_ms: float) -> np.ndarray:
        n = int(self.t_ms[-1] // step_ms)
        starts = np.arange(n) * step_ms
        idx = np.searchsorted(self.t_ms, starts, side="right") - 1
        return self.bandwidth_kbps[np.clip(idx, 0, len(self.bandwidth_kbps) - 1)]


# ---------------------------------------------------------------------------
# deciders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActionParams:
    ladder_index: int
    predownload_items: int = 1
    download_cap_s: float = 60.0  # seconds of media the player may prefetch
    prerender: bool = True


@dataclass(frozen=True)
class DecisionContext:
    user: UserState
    item: Item
    item_index: int
    buffer_s: float
    bw_est_kbps: float
    predicted_playtime_s: float
    last_ladder_index: int | None = None


@dataclass(frozen=True)
class BucketScheme:
    """State bucketing for tabular deciders; total over client states."""

    buffer_edges: tuple = (2.0, 6.0)
    network_classes: tuple = ("poor", "fair", "good")
    n_portrait_buckets: int = 3

    def n_states(self) -> int:
        return (len(self.buffer_edges) + 1) * len(self.network_classes) * self.n_portrait_buckets

    def bucket(self, buffer_s: float, network_class: str, portrait: int) -> int:
        b = bisect.bisect_right(self.buffer_edges, buffer_s)
        try:
            n = self.network_classes.index(network_class)
        except ValueError:
            n = len(self.network_classes) // 2
        p = min(max(int(portrait), 0), self.n_portrait_buckets - 1)
        return (b * len(self.network_classes) + n) * self.n_portrait_buckets + p

    def bucket_of_ctx(self, ctx: DecisionContext) -> int:
        portrait = ctx.user.portraits.get("sens_cluster", 0)
        return self.bucket(ctx.buffer_s, ctx.user.network_class, portrait)


class Decider:
    """Base decision function: state -> action parameters."""

    kind = "base"

    def decide(self, ctx: DecisionContext) -> ActionParams:
        raise NotImplementedError

    def to_json(self) -> str:
        return json.dumps({"version": DECIDER_FORMAT_VERSION, "kind": self.kind, **self._params()})

    def _params(self) -> dict:
        return {}

    @staticmethod
    def from_json(text: str) -> "Decider":
        doc = json.loads(text)
        if doc.get("version") != DECIDER_FORMAT_VERSION:
            raise ValueError(f"unsupported decider format version {doc.get('version')}")
        kind = doc["kind"]
        if kind == "rule":
            return RuleDecider(safety=doc["safety"], low_buffer_s=doc["low_buffer_s"])
        if kind == "fixed":
            return FixedDecider(ActionParams(**doc["params"]))
        if kind == "qoe":
            return QoeDecider(alpha=doc["alpha"], beta=doc["beta"], gamma=doc["gamma"])
        if kind == "sensitivity":
            return SensitivityDecider(quality_weight=doc["quality_weight"], rebuffer_weight=doc["rebuffer_weight"])
        if kind == "linear":
            d = LinearDecider(np.asarray(doc["theta"], dtype=np.float64))
            return d
        if kind == "tabular_q":
            scheme = BucketScheme(
                buffer_edges=tuple(doc["scheme"]["buffer_edges"]),
                network_classes=tuple(doc["scheme"]["network_classes"]),
                n_portrait_buckets=doc["scheme"]["n_portrait_buckets"],
            )
            d = TabularQDecider(scheme, n_actions=doc["n_actions"], epsilon=doc.get("epsilon", 0.0))
            d.q = np.asarray(doc["q"], dtype=np.float64)
            d.visited = np.asarray(doc["visited"], dtype=np.int64)
            return d
        raise ValueError(f"unknown decider kind {kind!r}")


class FixedDecider(Decider):
    kind = "fixed"

    def __init__(self, params: ActionParams):
        self.params = params

    def decide(self, ctx: DecisionContext) -> ActionParams:
        p = self.params
        if p.ladder_index >= len(ctx.item.ladders):
            p = replace(p, ladder_index=len(ctx.item.ladders) - 1)
        return p

    def _params(self) -> dict:
        return {"params": self.params.__dict__}


class RuleDecider(Decider):
    """Bandwidth-safety rendition choice with a low-buffer step-down."""

    kind = "rule"

    def __init__(self, safety: float = 0.8, low_buffer_s: float = 2.0):
        self.safety = safety
        self.low_buffer_s = low_buffer_s

    def decide(self, ctx: DecisionContext) -> ActionParams:
        usable = ctx.bw_est_kbps * self.safety
        idx = 0
        for j, lad in enumerate(ctx.item.ladders):
            if lad.bitrate_kbps <= usable:
                idx = j
        if ctx.buffer_s < self.low_buffer_s and idx > 0:
            idx -= 1
        cap = ctx.predicted_playtime_s + 2.0
        return ActionParams(
            ladder_index=idx,
            predownload_items=1,
            download_cap_s=cap,
            prerender=ctx.user.device_score >= 0.5,
        )

    def _params(self) -> dict:
        return {"safety": self.safety, "low_buffer_s": self.low_buffer_s}


_BW_RISK_FRACTIONS = (0.4, 0.7, 1.0)  # pessimistic bandwidth quantiles


def _expected_stall_s(lad: Ladder, ctx: DecisionContext) -> float:
    """Risk-weighted stall estimate for one item at the current bandwidth.

    Averages the fluid stall time over a few pessimistic fractions of the
    bandwidth estimate, so renditions near the estimate still carry risk.
    """
    if ctx.bw_est_kbps <= 0:
        return ctx.predicted_playtime_s
    stall = 0.0
    for frac in _BW_RISK_FRACTIONS:
        ratio = lad.bitrate_kbps / (ctx.bw_est_kbps * frac)
        stall += max(0.0, ratio - 1.0) * ctx.predicted_playtime_s
    return stall / len(_BW_RISK_FRACTIONS)


class QoeDecider(Decider):
    """Fixed-weight QoE maximizer: quality minus stall, switch and traffic terms."""

    kind = "qoe"

    def __init__(self, alpha: float = 2.0, beta: float = 0.5, gamma: float = 0.5):
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma

    def decide(self, ctx: DecisionContext) -> ActionParams:
        last = ctx.last_ladder_index
        best, best_score = 0, -math.inf
        for j, lad in enumerate(ctx.item.ladders):
            switch = abs(j - last) if last is not None else 0.0
            score = qoe(
                quality=lad.quality_score_d / 10.0,
                block_dur=_expected_stall_s(lad, ctx),
                quality_switch=switch,
                cost=lad.bitrate_kbps / 1000.0,
                alpha=self.alpha,
                beta=self.beta,
                gamma=self.gamma,
            )
            if score > best_score:
                best, best_score = j, score
        return ActionParams(
            ladder_index=best,
            predownload_items=1,
            download_cap_s=ctx.predicted_playtime_s + 2.0,
            prerender=True,
        )

    def _params(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


class SensitivityDecider(Decider):
    """Scores renditions with the user's own QoP sensitivities.

    Works like the QoE baseline but replaces its fixed stall/quality
    weights with the per-user sensitivity portrait, so rebuffer-averse
    users are steered to safer renditions and quality-seeking users on
    healthy networks to richer ones.
    """

    kind = "sensitivity"

    def __init__(self, quality_weight: float = 1.0, rebuffer_weight: float = 2.0):
        self.quality_weight = quality_weight
        self.rebuffer_weight = rebuffer_weight

    def decide(self, ctx: DecisionContext) -> ActionParams:
        sens = ctx.user.qop_sens
        q_sens = float(sens.get("quality", 0.0))
        r_sens = float(sens.get("rebuffer_ratio", 0.0))
        t_sens = float(sens.get("traffic_bytes", 0.0))
        best, best_score = 0, -math.inf
        for j, lad in enumerate(ctx.item.ladders):
            score = (
                self.quality_weight * q_sens * lad.quality_score_d / 10.0
                - self.rebuffer_weight * r_sens * _expected_stall_s(lad, ctx)
                - t_sens * lad.bitrate_kbps / 1000.0
            )
            if score > best_score:
                best, best_score = j, score
        return ActionParams(
            ladder_index=best,
            predownload_items=1,
            download_cap_s=ctx.predicted_playtime_s + 2.0,
            prerender=True,
        )

    def _params(self) -> dict:
        return {"quality_weight": self.quality_weight, "rebuffer_weight": self.rebuffer_weight}


class LinearDecider(Decider):
    """Linear parametric decider; also the regressor trained offline."""

    kind = "linear"

    def __init__(self, theta: np.ndarray, feature_fn: Callable | None = None):
        self.theta = np.asarray(theta, dtype=np.float64)
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta must be finite")
        self.feature_fn = feature_fn or _default_ladder_features
        self.fit_history: list = []

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.theta

    def decide(self, ctx: DecisionContext) -> ActionParams:
        scores = [float(self.feature_fn(lad, ctx) @ self.theta) for lad in ctx.item.ladders]
        idx = int(np.argmax(scores))
        return ActionParams(
            ladder_index=idx,
            predownload_items=1,
            download_cap_s=ctx.predicted_playtime_s + 2.0,
            prerender=True,
        )

    def _params(self) -> dict:
        return {"theta": self.theta.tolist()}


def _default_ladder_features(lad: Ladder, ctx: DecisionContext) -> np.ndarray:
    return np.array(
        [
            1.0,
            lad.quality_score_d / 100.0,
            _expected_stall_s(lad, ctx),
            lad.bitrate_kbps / max(ctx.bw_est_kbps, 1.0),
        ]
    )


class TabularQDecider(Decider):
    """Q-table over bucketed client states; actions are ladder indices."""

    kind = "tabular_q"

    def __init__(self, scheme: BucketScheme, n_actions: int, epsilon: float = 0.0, fallback: Decider | None = None):
        self.scheme = scheme
        self.n_actions = n_actions
        self.epsilon = epsilon
        self.q = np.zeros((scheme.n_states(), n_actions), dtype=np.float64)
        self.visited = np.zeros(scheme.n_states(), dtype=np.int64)
        self.fallback = fallback or RuleDecider()

    def decide(self, ctx: DecisionContext) -> ActionParams:
        s = self.scheme.bucket_of_ctx(ctx)
        if self.visited[s] == 0:
            log.debug("unvisited state %d, falling back to %s decider", s, self.fallback.kind)
            return self.fallback.decide(ctx)
        idx = int(np.argmax(self.q[s]))
        idx = min(idx, len(ctx.item.ladders) - 1)
        return ActionParams(
            ladder_index=idx,
            predownload_items=1,
            download_cap_s=ctx.predicted_playtime_s + 2.0,
            prerender=True,
        )

    def _params(self) -> dict:
        return {
            "scheme": {
                "buffer_edges": list(self.scheme.buffer_edges),
                "network_classes": list(self.scheme.network_classes),
                "n_portrait_buckets": self.scheme.n_portrait_buckets,
            },
            "n_actions": self.n_actions,
            "epsilon": self.epsilon,
            "q": self.q.tolist(),
            "visited": self.visited.tolist(),
        }


# ---------------------------------------------------------------------------
# session simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SessionConfig:
    clock_step_ms: float = 100.0
    startup_bytes: float = 200_000.0
    startup_media_s: float = 1.0
    refill_buffer_s: float = 1.0
    render_latency_ms: float = 100.0  # added to first frame when pre-render is off
    prerender_cpu_pct: float = 0.02
    prerender_power: float = 0.01
    network_class_kbps: Mapping[str, float] = field(
        default_factory=lambda: {"poor": 800.0, "fair": 3000.0, "good": 10000.0}
    )
    device_baseline: Mapping[str, float] = field(
        default_factory=lambda: {
            "power_avg": 0.2,
            "storage_pct": 0.5,
            "cpu_pct": 0.3,
            "mem_pct": 0.4,
            "temperature_c": 30.0,
            "fps": 30.0,
            "frame_drop_rate": 0.01,
            "anr_crash_rate": 0.001,
            "oom_rate": 0.0005,
            "publish_success_ratio": 0.95,
        }
    )
    global_traffic_cap_bytes: float | None = None  # off by default


@dataclass(frozen=True)
class ItemPlayRecord:
    item_id: str
    ladder_index: int
    playtime_target_s: float
    played_s: float
    rebuffer_s: float
    first_frame_ms: float  # -1 when the first frame never arrived
    downloaded_bytes: float
    prerender: bool
    start_slot: int
    end_slot: int
    truncated: bool


@dataclass
class SessionTrace:
    t_ms: np.ndarray
    buffer_s: np.ndarray
    downloaded_bytes: np.ndarray
    rebuffering: np.ndarray
    item_index: np.ndarray
    items: list
    episodes: list  # (state_bucket, action, reward, next_state_bucket, terminal)
    truncated: bool

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for rec in self.items:
                fh.write(json.dumps(rec.__dict__) + "\n")


def episodes_to_jsonl(episodes, path):
    """One transition per line: state, action, reward, next state, terminal."""
    with open(path, "w") as fh:
        for s, a, r, sp, done in episodes:
            fh.write(json.dumps({"s": int(s), "a": int(a), "r": float(r), "sp": int(sp), "done": int(done)}) + "\n")


def episodes_from_jsonl(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            d = json.loads(line)
            out.append((d["s"], d["a"], d["r"], d["sp"], d["done"]))
    return out


@dataclass(frozen=True)
class SessionResult:
    qop: core.QoPVector
    mean_quality: float
    n_switches: int
    trace: SessionTrace


@dataclass(frozen=True)
class ProfitModel:
    """Converts a session outcome into estimated per-user profit."""

    impacts: core.ImpactTable
    economy: core.EconomyParams
    baseline_qop: core.QoPVector
    baseline_quality: float = 60.0
    arpu_quality_coeff: float = 0.0005  # currency/day per 1% quality change per unit sensitivity
    traffic_price_per_gb: float = 0.05

    @classmethod
    def default(cls) -> "ProfitModel":
        return cls(
            impacts=core.ImpactTable.default(),
            economy=core.EconomyParams.default(),
            baseline_qop=default_baseline_qop(),
        )


def default_baseline_qop() -> core.QoPVector:
    cfg = SessionConfig()
    return core.QoPVector(
        first_feed_ms=800.0,
        first_frame_ms=500.0,
        rebuffer_ratio=0.02,
        rebuffer_dur_per_vv_ms=300.0,
        traffic_bytes=50e6,
        **cfg.device_baseline,
    )


def est_profit(
    qop: core.QoPVector,
    mean_quality: float,
    sens: Mapping[str, float],
    model: ProfitModel,
) -> core.ProfitBreakdown:
    """Per-user estimated profit of a session relative to the baseline.

    Lifetime moves with the sensitivity-weighted QoP delta; the quality
    preference maps to a revenue-rate change through the configured
    coefficient (the impact table prices lifetime only); traffic above the
    baseline is billed as cost.
    """
    lt = core.qop_delta_to_lt(model.baseline_qop, qop, model.impacts, sens=sens)
    delta_lt_days = lt.value * model.economy.lt_base
    if model.baseline_quality > 0:
        q_pct = (mean_quality - model.baseline_quality) / model.baseline_quality * 100.0
    else:
        q_pct = 0.0
    delta_arpu = model.arpu_quality_coeff * float(sens.get("quality", 0.0)) * q_pct
    delta_cost = (qop.traffic_bytes - model.baseline_qop.traffic_bytes) / 1e9 * model.traffic_price_per_gb
    return core.profit(delta_lt_days, delta_arpu, delta_cost, model.economy)


def run_session(
    decider: Decider,
    user: UserState,
    items: Sequence[Item],
    net: NetworkTrace,
    playtime_model: PlaytimeModel | None = None,
    config: SessionConfig = SessionConfig(),
    seed: int = 0,
    profit_model: ProfitModel | None = None,
    scheme: BucketScheme | None = None,
) -> SessionResult:
    """Simulate one feed session; deterministic for a given (inputs, seed)."""
    if not items:
        raise ValueError("session needs at least one item")
    rng = np.random.default_rng(seed)
    scheme = scheme or BucketScheme()
    step_ms = config.clock_step_ms
    step_s = step_ms / 1000.0
    bw = net.to_slots(step_ms)
    n_slots = bw.shape[0]
    if n_slots == 0:
        raise ValueError("trace shorter than one clock step")

    out_buffer = np.zeros(n_slots)
    out_downloaded = np.zeros(n_slots)
    out_rebuffer = np.zeros(n_slots, dtype=np.uint8)
    item_of_slot = np.full(n_slots, -1, dtype=np.int64)

    pre_credit = np.zeros(len(items))
    records: list[ItemPlayRecord] = []
    episodes: list = []
    slot = 0
    traffic = 0.0
    bw_est = config.network_class_kbps.get(user.network_class, 3000.0)
    truncated = False
    any_prerender = False
    prev_state = None
    prev_action = None
    prev_reward = None
    last_ladder = None

    for idx, item in enumerate(items):
        if slot >= n_slots:
            truncated = True
            break
        buffer_now = user.buffer_s if idx == 0 else 0.0
        if playtime_model is not None:
            mean_pt, dist = estimate_playtime(user, item, playtime_model)
            playtime = min(float(dist.sample(rng)), item.duration_s)
            predicted = min(mean_pt, item.duration_s)
        else:
            playtime = item.duration_s
            predicted = item.duration_s

        ctx = DecisionContext(
            user=user,
            item=item,
            item_index=idx,
            buffer_s=buffer_now,
            bw_est_kbps=bw_est,
            predicted_playtime_s=predicted,
            last_ladder_index=last_ladder,
        )
        params = decider.decide(ctx)
        lad_idx = min(max(params.ladder_index, 0), len(item.ladders) - 1)
        lad = item.ladders[lad_idx]
        bps = lad.file_bytes / item.duration_s
        startup = min(config.startup_bytes, config.startup_media_s * bps)
        init_bytes = min(pre_credit[idx] + buffer_now * bps, lad.file_bytes)
        cap_bytes = min(max(params.download_cap_s * bps, startup), lad.file_bytes)
        if config.global_traffic_cap_bytes is not None:
            dl_budget = max(config.global_traffic_cap_bytes - traffic, 0.0)
        else:
            dl_budget = np.inf

        depth = max(int(params.predownload_items), 0)
        pre_idx = [j for j in range(idx + 1, min(idx + 1 + depth, len(items)))]
        pre_needed = np.array(
            [max(_startup_bytes(items[j], config) - pre_credit[j], 0.0) for j in pre_idx],
            dtype=np.float64,
        )
        pre_got = np.zeros_like(pre_needed)

        start_slot = slot
        end_slot, played, rebuf, ff_ms, dl, trunc = advance_item(
            bw,
            slot,
            step_s,
            lad.file_bytes,
            bps,
            startup,
            init_bytes,
            playtime,
            cap_bytes,
            dl_budget,
            config.refill_buffer_s,
            pre_needed,
            pre_got,
            out_buffer,
            out_downloaded,
            out_rebuffer,
        )
        for k, j in enumerate(pre_idx):
            pre_credit[j] += pre_got[k]
        item_of_slot[start_slot:end_slot] = idx
        if ff_ms >= 0.0 and not params.prerender:
            ff_ms += config.render_latency_ms
        if params.prerender:
            any_prerender = True

        slot_bytes = float(out_downloaded[start_slot:end_slot].sum())
        traffic += slot_bytes
        rec = ItemPlayRecord(
            item_id=item.id,
            ladder_index=lad_idx,
            playtime_target_s=playtime,
            played_s=played,
            rebuffer_s=rebuf,
            first_frame_ms=ff_ms,
            downloaded_bytes=slot_bytes,
            prerender=params.prerender,
            start_slot=start_slot,
            end_slot=end_slot,
            truncated=bool(trunc),
        )
        records.append(rec)
        if end_slot > start_slot:
            seen = bw[start_slot:end_slot]
            bw_est = 0.5 * bw_est + 0.5 * float(seen.mean())

        state = scheme.bucket(buffer_now, user.network_class, user.portraits.get("sens_cluster", 0))
        if prev_state is not None:
            episodes.append((prev_state, prev_action, prev_reward, state, 0))
        prev_state = state
        prev_action = lad_idx
        prev_reward = _item_reward(rec, lad, user, profit_model, config)
        last_ladder = lad_idx
        slot = end_slot
        if trunc:
            truncated = True
            break

    if prev_state is not None:
        episodes.append((prev_state, prev_action, prev_reward, prev_state, 1))

    qop, mean_quality, n_switches = _aggregate_qop(records, items, traffic, config, any_prerender)
    trace = SessionTrace(
        t_ms=np.arange(n_slots) * step_ms,
        buffer_s=out_buffer,
        downloaded_bytes=out_downloaded,
        rebuffering=out_rebuffer,
        item_index=item_of_slot,
        items=records,
        episodes=episodes,
        truncated=truncated,
    )
    return SessionResult(qop=qop, mean_quality=mean_quality, n_switches=n_switches, trace=trace)


def _startup_bytes(item: Item, config: SessionConfig) -> float:
    lad = item.ladders[0]
    return min(config.startup_bytes, config.startup_media_s * lad.file_bytes / item.duration_s)


def _item_reward(rec, lad, user, profit_model, config) -> float:
    if profit_model is None:
        return -rec.rebuffer_s
    played = max(rec.played_s, 1e-9)
    qop = _qop_from_parts(
        first_feed_ms=rec.first_frame_ms if rec.first_frame_ms >= 0 else 0.0,
        ff_values=[rec.first_frame_ms] if rec.first_frame_ms >= 0 else [],
        rebuffer_s=rec.rebuffer_s,
        played_s=played,
        n_items=1,
        traffic=rec.downloaded_bytes,
        config=config,
        any_prerender=rec.prerender,
    )
    return est_profit(qop, lad.quality_score_d, user.qop_sens, profit_model).profit


def _qop_from_parts(first_feed_ms, ff_values, rebuffer_s, played_s, n_items, traffic, config, any_prerender):
    base = dict(config.device_baseline)
    if any_prerender:
        base["cpu_pct"] = min(base["cpu_pct"] + config.prerender_cpu_pct, 1.0)
        base["power_avg"] = base["power_avg"] + config.prerender_power
    return core.QoPVector(
        first_feed_ms=first_feed_ms,
        first_frame_ms=float(np.median(ff_values)) if ff_values else 0.0,
        rebuffer_ratio=min(rebuffer_s / (rebuffer_s + played_s), 1.0) if played_s > 0 else (1.0 if rebuffer_s > 0 else 0.0),
        rebuffer_dur_per_vv_ms=rebuffer_s * 1000.0 / max(n_items, 1),
        traffic_bytes=traffic,
        **base,
    )


def _aggregate_qop(records, items, traffic, config, any_prerender):
    ff_values = [r.first_frame_ms for r in records if r.first_frame_ms >= 0]
    total_rebuf = sum(r.rebuffer_s for r in records)
    total_played = sum(r.played_s for r in records)
    qop = _qop_from_parts(
        first_feed_ms=records[0].first_frame_ms if records and records[0].first_frame_ms >= 0 else 0.0,
        ff_values=ff_values,
        rebuffer_s=total_rebuf,
        played_s=total_played,
        n_items=len(records),
        traffic=traffic,
        config=config,
        any_prerender=any_prerender,
    )
    qualities = []
    weights = []
    switches = 0
    last = None
    for rec, item in zip(records, items):
        qualities.append(item.ladders[rec.ladder_index].quality_score_d)
        weights.append(max(rec.played_s, 1e-9))
        if last is not None and rec.ladder_index != last:
            switches += 1
        last = rec.ladder_index
    mean_quality = float(np.average(qualities, weights=weights)) if qualities else 0.0
    return qop, mean_quality, switches


# ---------------------------------------------------------------------------
# offline decider optimization
# ---------------------------------------------------------------------------


def mse_loss(pred: np.ndarray, y: np.ndarray):
    resid = pred - y
    return 0.5 * float(np.mean(resid**2)), resid / len(y)


def optimize_decider_gradient(
    decider: LinearDecider,
    data,
    loss=mse_loss,
    epochs: int = 100,
    batch_size: int = 32,
    lr: float = 0.01,
    seed: int = 0,
) -> LinearDecider:
    """Mini-batch gradient descent on the decider's linear parameters."""
    x, y = data
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lr <= 0:
        raise ValueError("lr must be > 0")
    if x.size == 0:
        raise ValueError("empty training data")
    theta = decider.theta.copy()
    rng = np.random.default_rng(seed)
    history = []
    n = len(y)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            sel = order[start : start + batch_size]
            xb, yb = x[sel], y[sel]
            _, dpred = loss(xb @ theta, yb)
            theta -= lr * (xb.T @ dpred)
        history.append(loss(x @ theta, y)[0])
    fitted = LinearDecider(theta, feature_fn=decider.feature_fn)
    fitted.fit_history = history
    return fitted


def optimize_decider_q(
    episodes,
    scheme: BucketScheme,
    n_actions: int,
    alpha_lr: float = 0.5,
    gamma_disc: float = 0.9,
    epsilon: float = 0.1,
    sweeps: int = 1,
    fallback: Decider | None = None,
) -> TabularQDecider:
    """Fit a tabular-Q decider from (s, a, r, s', terminal) episodes.

    Episodes are replayed `sweeps` times through the TD update. epsilon is
    stored on the decider for its behavior policy when exploring online.
    """
    flat = [t for ep in episodes for t in ep]
    if not flat:
        raise ValueError("no transitions to learn from")
    states = np.array([t[0] for t in flat], dtype=np.int64)
    actions = np.array([t[1] for t in flat], dtype=np.int64)
    rewards = np.array([t[2] for t in flat], dtype=np.float64)
    nexts = np.array([t[3] for t in flat], dtype=np.int64)
    terminal = np.array([t[4] if len(t) > 4 else 0 for t in flat], dtype=np.uint8)

    decider = TabularQDecider(scheme, n_actions=n_actions, epsilon=epsilon, fallback=fallback)
    for _ in range(sweeps):
        q_update(states, actions, rewards, nexts, terminal, decider.q, alpha_lr, gamma_disc)
    np.add.at(decider.visited, states, 1)
    return decider


def ql_collect(env_step, q: np.ndarray, epsilon: float, n_steps: int, rng, s0: int = 0):
    """Collect one epsilon-greedy episode against env_step(s, a) -> (r, s', done)."""
    transitions = []
    s = s0
    n_actions = q.shape[1]
    for _ in range(n_steps):
        if rng.random() < epsilon:
            a = int(rng.integers(n_actions))
        else:
            a = int(np.argmax(q[s]))
        r, sp, done = env_step(s, a)
        transitions.append((s, a, r, sp, int(done)))
        if done:
            break
        s = sp
    return transitions


@dataclass(frozen=True)
class EvalEpisode:
    """One validation scenario for ranking candidate deciders."""

    user: UserState
    items: tuple
    trace: NetworkTrace
    seed: int


def heuristic_search(
    candidates: Sequence[Decider],
    validation: Sequence[EvalEpisode],
    profit_model: ProfitModel,
    playtime_model: PlaytimeModel | None = None,
    config: SessionConfig = SessionConfig(),
) -> Decider:
    """Pick the candidate with the best mean estimated profit on the validation set.

    Every candidate sees the same episodes and seeds; ties keep the earliest
    registered candidate.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    best = None
    best_score = -math.inf
    for cand in candidates:
        total = 0.0
        for ep in validation:
            res = run_session(
                cand, ep.user, ep.items, ep.trace,
                playtime_model=playtime_model, config=config, seed=ep.seed,
            )
            total += est_profit(res.qop, res.mean_quality, ep.user.qop_sens, profit_model).profit
        score = total / len(validation) if validation else 0.0
        if score > best_score:
            best, best_score = cand, score
    return best
