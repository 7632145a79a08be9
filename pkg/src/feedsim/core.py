"""Economic core: performance-experience vectors and the mapping to value.

Everything downstream prices a decision the same way: a change in the
multi-metric performance record (QoPVector) converts to a lifetime change
through per-metric impact coefficients, lifetime and revenue-rate changes
convert to currency, and a cost-adjusted profit with an ROI gate decides
whether the change would ship.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from importlib import resources
from typing import Mapping

__all__ = [
    "QoPVector",
    "MetricImpact",
    "ImpactTable",
    "EconomyParams",
    "ProfitBreakdown",
    "LtDelta",
    "discounted_value",
    "qop_delta_to_lt",
    "lt_impact_of_changes",
    "profit",
]

_FRACTION_METRICS = (
    "rebuffer_ratio",
    "frame_drop_rate",
    "anr_crash_rate",
    "storage_pct",
    "cpu_pct",
    "mem_pct",
    "oom_rate",
    "publish_success_ratio",
)
_NONNEGATIVE_METRICS = (
    "first_feed_ms",
    "first_frame_ms",
    "rebuffer_dur_per_vv_ms",
    "fps",
    "traffic_bytes",
    "power_avg",
)


@dataclass(frozen=True)
class QoPVector:
    """One performance-experience record; units per field name."""

    first_feed_ms: float = 0.0
    first_frame_ms: float = 0.0
    rebuffer_ratio: float = 0.0
    rebuffer_dur_per_vv_ms: float = 0.0
    frame_drop_rate: float = 0.0
    anr_crash_rate: float = 0.0
    power_avg: float = 0.0
    storage_pct: float = 0.0
    cpu_pct: float = 0.0
    mem_pct: float = 0.0
    oom_rate: float = 0.0
    fps: float = 0.0
    traffic_bytes: float = 0.0
    temperature_c: float = 0.0
    publish_success_ratio: float = 0.0

    def __post_init__(self):
        for name in _FRACTION_METRICS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a fraction in [0, 1], got {v}")
        for name in _NONNEGATIVE_METRICS:
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


METRIC_NAMES = tuple(f.name for f in fields(QoPVector))


@dataclass(frozen=True)
class MetricImpact:
    """Lifetime impact of a 1% relative change in one metric."""

    coefficient: float  # fraction of LT, >= 0
    increase_helps: bool  # direction: raising the metric is good (fps) or bad (rebuffer)

    def __post_init__(self):
        if self.coefficient < 0.0:
            raise ValueError("impact coefficient must be >= 0")


class ImpactTable:
    """Per-metric lifetime impact coefficients.

    Every QoPVector metric is either priced or explicitly listed as not
    available (contributing zero). Construct from a config mapping or use
    the shipped baseline.
    """

    def __init__(self, impacts: Mapping[str, MetricImpact], not_available=()):
        self.impacts = dict(impacts)
        self.not_available = frozenset(not_available)
        for name in self.impacts:
            if name not in METRIC_NAMES:
                raise ValueError(f"unknown metric {name!r}")
        missing = set(METRIC_NAMES) - set(self.impacts) - self.not_available
        if missing:
            raise ValueError(f"metrics neither priced nor marked not-available: {sorted(missing)}")

    @classmethod
    def from_config(cls, cfg: Mapping) -> "ImpactTable":
        impacts = {}
        na = []
        for name, entry in cfg.items():
            if entry.get("not_available"):
                na.append(name)
            else:
                impacts[name] = MetricImpact(
                    coefficient=float(entry["coefficient"]),
                    increase_helps=bool(entry["increase_helps"]),
                )
        return cls(impacts, na)

    @classmethod
    def default(cls) -> "ImpactTable":
        return cls.from_config(_load_defaults()["impacts"])

    def to_config(self) -> dict:
        out = {}
        for name, imp in self.impacts.items():
            out[name] = {"coefficient": imp.coefficient, "increase_helps": imp.increase_helps}
        for name in self.not_available:
            out[name] = {"not_available": True}
        return out


@dataclass(frozen=True)
class EconomyParams:
    lt_base: float  # days
    arpu_base: float  # currency per day
    roi_gamma: float  # ROI gate threshold
    discount_rate_r: float  # per-period discount rate

    def __post_init__(self):
        if self.lt_base <= 0.0:
            raise ValueError("lt_base must be > 0")
        if self.arpu_base < 0.0:
            raise ValueError("arpu_base must be >= 0")
        if self.roi_gamma < 0.0:
            raise ValueError("roi_gamma must be >= 0")
        if not 0.0 <= self.discount_rate_r < 1.0:
            raise ValueError("discount_rate_r must be in [0, 1)")

    @classmethod
    def default(cls) -> "EconomyParams":
        return cls(**_load_defaults()["economy"])


@dataclass(frozen=True)
class ProfitBreakdown:
    delta_lt: float  # days
    delta_arpu: float  # currency per day
    delta_cost: float  # currency
    profit: float  # currency
    roi: float
    passes_gate: bool


@dataclass(frozen=True)
class LtDelta:
    """Result of pricing a QoP change: lifetime change as a fraction of LT."""

    value: float
    skipped: tuple = ()  # metrics skipped for a zero baseline

    def __float__(self):
        return self.value


def _load_defaults() -> dict:
    text = resources.files("feedsim").joinpath("data/economy_defaults.json").read_text()
    return json.loads(text)


def discounted_value(cashflows, r: float) -> float:
    """Present value of a cashflow sequence at per-period rate r (t from 1)."""
    if not 0.0 <= r < 1.0:
        raise ValueError(f"discount rate must be in [0, 1), got {r}")
    return sum(d / (1.0 + r) ** t for t, d in enumerate(cashflows, start=1))


def lt_impact_of_changes(
    pct_changes: Mapping[str, float],
    impacts: ImpactTable,
    sens: Mapping[str, float] | None = None,
) -> float:
    """Price explicit relative changes (percent per metric) as a lifetime fraction."""
    total = 0.0
    for name, pct in pct_changes.items():
        imp = impacts.impacts.get(name)
        if imp is None:
            continue
        sign = 1.0 if imp.increase_helps else -1.0
        weight = 1.0 if sens is None else float(sens.get(name, 0.0))
        total += sign * imp.coefficient * pct * weight
    return total


def qop_delta_to_lt(
    qop_before: QoPVector,
    qop_after: QoPVector,
    impacts: ImpactTable,
    sens: Mapping[str, float] | None = None,
) -> LtDelta:
    """Price a QoP change as a lifetime fraction.

    Sums, over metrics with an available coefficient, the signed coefficient
    times the relative change in percent ((after - before) / before * 100).
    Metrics marked not-available contribute zero. A metric whose baseline is
    zero but actually moved cannot be priced and is skipped (reported in the
    result). `sens` optionally weights each metric's contribution, which is
    how per-user sensitivity enters estimated profit.
    """
    changes = {}
    skipped = []
    for name in impacts.impacts:
        before = getattr(qop_before, name)
        after = getattr(qop_after, name)
        if after == before:
            continue
        if before == 0.0:
            skipped.append(name)
            continue
        changes[name] = (after - before) / before * 100.0
    total = lt_impact_of_changes(changes, impacts, sens=sens)
    return LtDelta(value=total, skipped=tuple(skipped))


def profit(
    delta_lt: float,
    delta_arpu: float,
    delta_cost: float,
    params: EconomyParams,
) -> ProfitBreakdown:
    """Linearized profit of a change, with the launch gate applied.

    profit = lt_base * delta_arpu + delta_lt * arpu_base - delta_cost.
    The gate needs positive profit, and for changes that add cost, an ROI
    above the configured threshold.
    """
    p = params.lt_base * delta_arpu + delta_lt * params.arpu_base - delta_cost
    if delta_cost > 0.0:
        roi = p / delta_cost
    elif p > 0.0:
        roi = math.inf
    else:
        roi = 0.0
    passes = p > 0.0 and (delta_cost <= 0.0 or roi > params.roi_gamma)
    return ProfitBreakdown(
        delta_lt=delta_lt,
        delta_arpu=delta_arpu,
        delta_cost=delta_cost,
        profit=p,
        roi=roi,
        passes_gate=passes,
    )
