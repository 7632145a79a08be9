"""Publishing-side planners.

Decides how a finished creation gets out of the device: the encoding mode
(software, hardware, or skip), the concrete encoding parameters, the
upload shape (chunk size, parallelism, node, or streaming), whether to
pre-upload ahead of the publish click, and how to prioritize the upload
process against whatever the user is doing now.

Publish duration is the max of encoding and upload time since the two
pipeline; high consumption-value items tolerate slower encodes through a
multiplicative relaxation of the duration penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

QUANTILE_GRID = 4096  # quadrature resolution for distribution expectations


# ---------------------------------------------------------------------------
# distributions (deterministic quantile quadrature)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedValue:
    value: float

    def quantile(self, q: float) -> float:
        return self.value

    def mean(self) -> float:
        return self.value


@dataclass(frozen=True)
class LognormalValue:
    mu: float
    sigma: float

    def quantile(self, q: float) -> float:
        return math.exp(self.mu + self.sigma * NormalDist().inv_cdf(q))

    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sigma**2)


def expect(dist, fn, grid: int = QUANTILE_GRID) -> float:
    """E[fn(X)] by midpoint quantile quadrature."""
    qs = (np.arange(grid) + 0.5) / grid
    return float(np.mean([fn(dist.quantile(q)) for q in qs]))


# ---------------------------------------------------------------------------
# jobs and options
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetworkModel:
    bandwidth_bytes_per_s: float
    connect_latency_s: float
    chunk_fail_beta: float  # p_fail(chunk) = 1 - exp(-chunk_bytes / beta)

    def p_fail(self, chunk_bytes: float) -> float:
        return 1.0 - math.exp(-chunk_bytes / self.chunk_fail_beta)


@dataclass(frozen=True)
class PublishJob:
    material_bytes: float
    duration_s: float
    complexity: float  # content complexity score, scales encode time
    author_quality_weight: float  # vs speed; in [0, 1]
    alpha_ui: float  # predicted consumption-value coefficient
    network: NetworkModel
    encode_speed: Mapping[str, float]  # mode -> content seconds encoded per wall second

    def __post_init__(self):
        if self.material_bytes <= 0:
            raise ValueError("material bytes must be > 0")
        if self.alpha_ui < 0:
            raise ValueError("alpha_ui must be >= 0")


@dataclass(frozen=True)
class EncodeOption:
    mode: str  # soft | hard | skip
    output_ratio: float  # output bytes / input bytes
    quality_delta: float  # vs skip (source quality)
    speed_factor: float = 1.0  # multiplies the device's encode speed

    def __post_init__(self):
        if self.mode == "skip" and (self.output_ratio != 1.0):
            raise ValueError("skip must leave the material unchanged")


def encoding_duration(job: PublishJob, opt: EncodeOption) -> float:
    if opt.mode == "skip":
        return 0.0
    speed = job.encode_speed[opt.mode] * opt.speed_factor
    return job.duration_s * job.complexity / speed


def fixed_encoding_duration(raw_duration: float, alpha_ui: float, relax_lambda: float = 0.5) -> float:
    """Duration penalty relaxed for high consumption value."""
    return raw_duration / (1.0 + relax_lambda * alpha_ui)


def upload_duration(job: PublishJob, output_bytes: float) -> float:
    return output_bytes / job.network.bandwidth_bytes_per_s


@dataclass(frozen=True)
class EncodingDecision:
    option: EncodeOption
    publish_duration_s: float
    upload_s: float
    encode_s: float


def choose_encoding_mode(
    job: PublishJob,
    options: Sequence[EncodeOption],
    quality_floor: float = 0.0,
    relax_lambda: float = 0.5,
) -> EncodingDecision:
    """Pick the mode minimizing perceived publish duration.

    Upload overlaps encoding, so the perceived duration is their max, with
    the encode term relaxed by the consumption-value coefficient. Options
    whose quality delta falls below the floor are ruled out (the consume
    side must not lose); duration ties prefer higher quality.
    """
    if not options:
        raise ValueError("need at least one encode option")
    violations = [o.mode for o in options if o.quality_delta < quality_floor]
    feasible = [o for o in options if o.quality_delta >= quality_floor]
    if not feasible:
        raise ValueError(f"no encoding option meets the quality floor: rejected {violations}")
    best = None
    for opt in feasible:
        enc = fixed_encoding_duration(encoding_duration(job, opt), job.alpha_ui, relax_lambda)
        up = upload_duration(job, job.material_bytes * opt.output_ratio)
        dur = max(enc, up)
        if best is None or dur < best.publish_duration_s - 1e-12 or (
            abs(dur - best.publish_duration_s) <= 1e-12 and opt.quality_delta > best.option.quality_delta
        ):
            best = EncodingDecision(option=opt, publish_duration_s=dur, upload_s=up, encode_s=enc)
    return best


# ---------------------------------------------------------------------------
# encoding parameter grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamPoint:
    qp: int
    fps: int
    bitrate_kbps: float
    codec: str
    audio_channels: int


@dataclass(frozen=True)
class ResponseSurfaces:
    """Configured quality/size/speed responses over the parameter grid."""

    quality: Mapping[ParamPoint, float]  # content-quality score
    output_bytes: Mapping[ParamPoint, float]
    encode_speed: Mapping[ParamPoint, float]  # content seconds per wall second


@dataclass(frozen=True)
class ParamDecision:
    point: ParamPoint
    score: float
    features: Mapping[str, float]
    skipped: tuple = ()


def choose_encoding_params(
    job: PublishJob,
    grid: Sequence[ParamPoint],
    surfaces: ResponseSurfaces,
    quality_value: float = 1.0,
    duration_value: float = 1.0,
) -> ParamDecision:
    """Maximize quality value plus (negative) publish-duration value.

    The author's expectation weights trade the two terms; grid points
    outside the response-surface domain are skipped with a diagnostic.
    """
    if not grid:
        raise ValueError("empty parameter grid")
    skipped = []
    best = None
    best_score = -math.inf
    for pt in grid:
        if pt not in surfaces.quality or pt not in surfaces.output_bytes or pt not in surfaces.encode_speed:
            skipped.append(pt)
            continue
        enc = job.duration_s * job.complexity / surfaces.encode_speed[pt]
        enc = fixed_encoding_duration(enc, job.alpha_ui)
        up = upload_duration(job, surfaces.output_bytes[pt])
        dur = max(enc, up)
        w_q = job.author_quality_weight
        score = w_q * quality_value * surfaces.quality[pt] - (1.0 - w_q) * duration_value * dur
        if score > best_score:
            best, best_score = pt, score
    if best is None:
        raise ValueError("every grid point fell outside the response surfaces")
    features = {
        "content_complexity": job.complexity,
        "author_quality_weight": job.author_quality_weight,
        "alpha_ui": job.alpha_ui,
    }
    return ParamDecision(point=best, score=best_score, features=features, skipped=tuple(skipped))


# ---------------------------------------------------------------------------
# upload planning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UploadNode:
    id: str
    bandwidth_bytes_per_s: float
    connect_latency_s: float
    available: bool = True


@dataclass(frozen=True)
class ChunkPlan:
    mode: str  # chunk | streaming
    chunk_bytes: float
    parallelism: int
    node_id: str
    expected_duration_s: float
    expected_retries_per_chunk: float

    def __post_init__(self):
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


def expected_upload_duration(
    total_bytes: float,
    chunk_bytes: float,
    parallelism: int,
    node: UploadNode,
    fail_beta: float,
    streaming: bool = False,
) -> tuple[float, float]:
    """(expected duration, expected retries per chunk) for one candidate.

    Chunk retries are geometric: E[repeat] = 1 / (1 - p_fail). Streaming is
    a single logical chunk whose resume-on-failure halves the retry cost.
    Each parallel wave pays one connection round trip.
    """
    n_chunks = max(int(math.ceil(total_bytes / chunk_bytes)), 1)
    p = 1.0 - math.exp(-chunk_bytes / fail_beta)
    repeat = 1.0 / (1.0 - p)
    chunk_time = chunk_bytes / node.bandwidth_bytes_per_s
    if streaming:
        # breakpoint resume: retried bytes restart from the failure offset
        effective_repeat = 1.0 + (repeat - 1.0) / 2.0
        duration = chunk_time * n_chunks * effective_repeat + node.connect_latency_s
        return duration, effective_repeat
    waves = math.ceil(n_chunks / parallelism)
    duration = (1.0 / parallelism) * n_chunks * chunk_time * repeat + node.connect_latency_s * waves
    return duration, repeat


def plan_upload(
    total_bytes: float,
    chunk_sizes: Sequence[float],
    parallelisms: Sequence[int],
    nodes: Sequence[UploadNode],
    fail_beta: float,
    allow_streaming: bool = True,
) -> ChunkPlan:
    """Minimize expected upload duration over the candidate grid.

    Ties favor larger chunks, then higher parallelism (fewer connection
    rounds, simpler bookkeeping).
    """
    if not chunk_sizes or not parallelisms or not nodes:
        raise ValueError("need candidates on every axis")
    live = [n for n in nodes if n.available]
    if not live:
        raise ValueError("no upload node available")
    best = None

    def consider(cand: ChunkPlan):
        nonlocal best
        if best is None or cand.expected_duration_s < best.expected_duration_s - 1e-12:
            best = cand
            return
        if abs(cand.expected_duration_s - best.expected_duration_s) <= 1e-12:
            if (-cand.chunk_bytes, -cand.parallelism) < (-best.chunk_bytes, -best.parallelism):
                best = cand

    for node in live:
        for size in chunk_sizes:
            for p in parallelisms:
                dur, rep = expected_upload_duration(total_bytes, size, p, node, fail_beta)
                consider(ChunkPlan("chunk", size, p, node.id, dur, rep))
        if allow_streaming:
            dur, rep = expected_upload_duration(total_bytes, total_bytes, 1, node, fail_beta, streaming=True)
            consider(ChunkPlan("streaming", total_bytes, 1, node.id, dur, rep))
    return best


# ---------------------------------------------------------------------------
# pre-upload
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PreuploadGain:
    expected_saving_s: float
    expected_waste_bytes: float
    recommended: bool


def preupload_gain(
    lead_time_dist,
    encrypt_duration_s: float,
    upload_duration_s: float,
    cancel_prob: float,
    preupload_bytes: float,
    value_per_second: float = 1.0,
    cost_per_byte: float = 0.0,
) -> PreuploadGain:
    """Perceived-duration saving from encrypting and uploading ahead of the click.

    Perceived duration with pre-upload is E[max(0, upload + encrypt - lead)];
    the baseline is the plain upload. Waste is the cancel probability times
    the bytes pushed early.
    """
    if not 0.0 <= cancel_prob < 1.0:
        raise ValueError("cancel probability must be in [0, 1)")
    perceived = expect(lead_time_dist, lambda lead: max(0.0, upload_duration_s + encrypt_duration_s - lead))
    saving = upload_duration_s - perceived
    waste = cancel_prob * preupload_bytes
    return PreuploadGain(
        expected_saving_s=saving,
        expected_waste_bytes=waste,
        recommended=saving * value_per_second > waste * cost_per_byte,
    )


# ---------------------------------------------------------------------------
# adaptive process priority
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PriorityLevel:
    level: int
    quota: float  # resource units this priority consumes


@dataclass(frozen=True)
class PriorityDecision:
    level: int
    suspended: bool


def adapt_priority(
    app_state: str,  # background | foreground-publish | other-page
    ladder: Sequence[PriorityLevel],
    consume_degradation: Mapping[int, float],  # level -> modeled consume-QoP loss
    epsilon: float,
    consume_quota: float = 0.0,
    max_quota: float = math.inf,
) -> PriorityDecision:
    """Highest upload priority whose consume-side damage stays within epsilon.

    In the background the consume side cannot degrade, so the upload takes
    the top priority outright. On another page the transfer must yield: if
    even the lowest level degrades beyond epsilon, it suspends.
    """
    if not ladder:
        raise ValueError("priority ladder must be nonempty")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    levels = sorted(ladder, key=lambda l: -l.level)
    if app_state == "background":
        for lv in levels:
            if lv.quota + consume_quota <= max_quota:
                return PriorityDecision(level=lv.level, suspended=False)
        return PriorityDecision(level=levels[-1].level, suspended=True)
    for lv in levels:
        if lv.quota + consume_quota > max_quota:
            continue
        if consume_degradation.get(lv.level, math.inf) <= epsilon:
            return PriorityDecision(level=lv.level, suspended=False)
    return PriorityDecision(level=min(l.level for l in ladder), suspended=True)
