"""Synthetic workload generation.

Catalogs follow a Zipf popularity law with the exponent solved numerically
so the top 1% of items carries about 70% of playback volume, and per-item
watch time is geometric (short life cycle, early drop-off) truncated at the
item duration. Populations mix sensitivity portraits; waveforms repeat a
peaky diurnal shape with multiplicative noise.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .playback import (
    GeometricPlaytime,
    Item,
    Ladder,
    LadderGroup,
    NetworkTrace,
    PlaytimeModel,
    UserState,
)

MIN_CALIBRATABLE_ITEMS = 1000


@dataclass(frozen=True)
class LadderTemplate:
    bitrates_kbps: tuple = (400.0, 1000.0, 1600.0)
    qualities: tuple = (40.0, 60.0, 80.0)
    meta_bytes: tuple = (1500.0, 2000.0, 2500.0)
    resolution_classes: tuple = ("sd", "hd", "fhd")


@dataclass(frozen=True)
class CatalogSpec:
    n_items: int = 10_000
    zipf_exponent: float | None = None  # None solves for the concentration target
    top_fraction: float = 0.01
    top_mass_target: float = 0.70
    duration_mixture: tuple = ((15.0, 0.5), (45.0, 0.3), (120.0, 0.2))
    stop_prob_range: tuple = (0.03, 0.15)  # per-second swipe hazard
    ladder_template: LadderTemplate = field(default_factory=LadderTemplate)

    def __post_init__(self):
        if self.n_items < 1:
            raise ValueError("n_items must be >= 1")
        if abs(sum(w for _, w in self.duration_mixture) - 1.0) > 1e-9:
            raise ValueError("duration mixture must sum to 1")


@dataclass(frozen=True)
class PortraitClass:
    name: str
    share: float
    qop_sens: Mapping[str, float]
    network_class: str = "fair"


@dataclass(frozen=True)
class PopulationSpec:
    n_users: int = 1000
    portraits: tuple = (
        PortraitClass("rebuffer_sensitive", 0.5, {"rebuffer_ratio": 2.0, "first_frame_ms": 1.0, "quality": 0.0}, "fair"),
        PortraitClass("quality_sensitive", 0.5, {"rebuffer_ratio": 0.3, "first_frame_ms": 0.5, "quality": 2.0}, "fair"),
    )
    device_score_beta: tuple = (5.0, 2.0)

    def __post_init__(self):
        if abs(sum(p.share for p in self.portraits) - 1.0) > 1e-9:
            raise ValueError("portrait shares must sum to 1")


def zipf_top_mass(exponent: float, n_items: int, top_fraction: float) -> float:
    ranks = np.arange(1, n_items + 1, dtype=np.float64)
    w = ranks**-exponent
    k = max(int(np.floor(top_fraction * n_items)), 1)
    return float(w[:k].sum() / w.sum())


def solve_zipf_exponent(
    n_items: int,
    top_fraction: float = 0.01,
    target_mass: float = 0.70,
    lo: float = 0.1,
    hi: float = 3.0,
) -> float:
    """Bisect the Zipf exponent so the top slice carries the target mass."""
    if zipf_top_mass(hi, n_items, top_fraction) < target_mass:
        raise ValueError("target mass unreachable within the exponent bracket")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if zipf_top_mass(mid, n_items, top_fraction) < target_mass:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Catalog:
    items: tuple
    stop_probs: Mapping[str, float]  # per-item per-second swipe hazard
    zipf_exponent: float
    calibrated: bool

    def popularity(self) -> np.ndarray:
        return np.array([it.popularity_weight for it in self.items])

    def playtime_model(self, alphas=(0.4, 0.4, 0.2)) -> PlaytimeModel:
        """Duration-bucket plus per-item geometric playtime fusion."""
        durations = sorted({it.duration_s for it in self.items})
        edges = tuple(d + 1e-9 for d in durations[:-1])
        bucket_dist = {}
        for it in self.items:
            b = bisect_idx(edges, it.duration_s)
            bucket_dist.setdefault(b, []).append(self.stop_probs[it.id])
        bucket_dist = {
            b: GeometricPlaytime(stop_prob=float(np.mean(ps)), cap_s=durations[min(b, len(durations) - 1)])
            for b, ps in bucket_dist.items()
        }
        item_dist = {
            it.id: GeometricPlaytime(stop_prob=self.stop_probs[it.id], cap_s=it.duration_s) for it in self.items
        }
        return PlaytimeModel(bucket_edges=edges, bucket_dist=bucket_dist, item_dist=item_dist, alphas=alphas)


def bisect_idx(edges, value) -> int:
    return int(np.searchsorted(np.asarray(edges), value))


def generate_catalog(spec: CatalogSpec, seed: int) -> Catalog:
    """Deterministic item catalog with calibrated popularity weights."""
    rng = np.random.default_rng(seed)
    n = spec.n_items
    calibrated = True
    if spec.zipf_exponent is not None:
        exponent = spec.zipf_exponent
    elif n < MIN_CALIBRATABLE_ITEMS:
        warnings.warn(f"catalog of {n} items is too small to calibrate; using exponent 1.0", stacklevel=2)
        exponent = 1.0
        calibrated = False
    else:
        exponent = solve_zipf_exponent(n, spec.top_fraction, spec.top_mass_target)

    ranks = np.arange(1, n + 1, dtype=np.float64)
    pop = ranks ** -exponent if exponent != 0 else np.ones(n)
    pop /= pop.sum()

    durations = [d for d, _ in spec.duration_mixture]
    weights = [w for _, w in spec.duration_mixture]
    dur_choice = rng.choice(len(durations), size=n, p=weights)
    stop_probs = rng.uniform(*spec.stop_prob_range, size=n)

    items = []
    tpl = spec.ladder_template
    for i in range(n):
        dur = durations[dur_choice[i]]
        ladders = LadderGroup(
            [
                Ladder(
                    index=j,
                    bitrate_kbps=tpl.bitrates_kbps[j],
                    quality_score_d=tpl.qualities[j],
                    file_bytes=tpl.bitrates_kbps[j] * 125.0 * dur,
                    meta_bytes=tpl.meta_bytes[j],
                    resolution_class=tpl.resolution_classes[j],
                )
                for j in range(len(tpl.bitrates_kbps))
            ]
        )
        items.append(
            Item(
                id=f"v{i:06d}",
                duration_s=dur,
                ladders=ladders,
                popularity_weight=float(pop[i]),
                value_score=float(pop[i] * n),  # popularity-scaled prior value
            )
        )
    stop_map = {it.id: float(p) for it, p in zip(items, stop_probs)}
    return Catalog(items=tuple(items), stop_probs=stop_map, zipf_exponent=float(exponent), calibrated=calibrated)


def default_diurnal_shape(slots_per_day: int = 288, base: float = 100.0) -> np.ndarray:
    """Daily demand in Mbps: a broad daytime swell plus a sharp evening peak."""
    t = np.arange(slots_per_day) / slots_per_day
    swell = base + 0.4 * base * np.sin(2 * np.pi * (t - 0.3))
    spike = 1.2 * base * np.exp(-0.5 * ((t - 0.83) / 0.025) ** 2)
    return swell + spike


def generate_waveform(
    days: int,
    slots_per_day: int,
    shape: np.ndarray | None = None,
    noise: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Total demand series over a simulated month, Mbps per slot."""
    if days < 1 or slots_per_day < 1:
        raise ValueError("days and slots_per_day must be >= 1")
    shape = default_diurnal_shape(slots_per_day) if shape is None else np.asarray(shape, dtype=np.float64)
    if shape.size != slots_per_day:
        raise ValueError("shape length must equal slots_per_day")
    rng = np.random.default_rng(seed)
    wave = np.tile(shape, days)
    if noise > 0:
        wave = wave * (1.0 + noise * rng.standard_normal(wave.size))
    return np.maximum(wave, 0.0)


def generate_population(spec: PopulationSpec, seed: int) -> list[UserState]:
    """Deterministic user pool with portrait-driven sensitivities."""
    rng = np.random.default_rng(seed)
    shares = np.array([p.share for p in spec.portraits])
    classes = rng.choice(len(spec.portraits), size=spec.n_users, p=shares)
    device = rng.beta(*spec.device_score_beta, size=spec.n_users)
    users = []
    for i in range(spec.n_users):
        p = spec.portraits[classes[i]]
        users.append(
            UserState(
                id=f"u{i:06d}",
                device_score=float(device[i]),
                buffer_s=0.0,
                portraits={"sens_cluster": int(classes[i]), "name_idx": int(classes[i])},
                qop_sens=dict(p.qop_sens),
                network_trace_id=f"{p.network_class}-{i % 8}",
                context=("feed", int(rng.integers(0, 24)), p.network_class),
            )
        )
    return users


_CLASS_KBPS = {"poor": (500.0, 1200.0), "fair": (600.0, 4200.0), "good": (6000.0, 14000.0)}


def generate_network_trace(
    network_class: str,
    duration_ms: float,
    seed: int,
    segment_ms: float = 1000.0,
) -> NetworkTrace:
    """Piecewise-constant bandwidth trace for one network class."""
    lo, hi = _CLASS_KBPS[network_class]
    rng = np.random.default_rng(seed)
    n = max(int(duration_ms // segment_ms), 1)
    bw = rng.uniform(lo, hi, size=n)
    t = np.arange(n + 1) * segment_ms
    return NetworkTrace(t, np.append(bw, bw[-1]))
