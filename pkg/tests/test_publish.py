import math

import numpy as np
import pytest

from feedsim.publish import (
    ChunkPlan,
    EncodeOption,
    FixedValue,
    LognormalValue,
    NetworkModel,
    ParamPoint,
    PriorityLevel,
    PublishJob,
    ResponseSurfaces,
    UploadNode,
    adapt_priority,
    choose_encoding_mode,
    choose_encoding_params,
    expect,
    expected_upload_duration,
    fixed_encoding_duration,
    plan_upload,
    preupload_gain,
)

OPTIONS = [
    EncodeOption(mode="soft", output_ratio=0.4, quality_delta=0.5, speed_factor=1.0),
    EncodeOption(mode="hard", output_ratio=0.6, quality_delta=0.5, speed_factor=3.0),
    EncodeOption(mode="skip", output_ratio=1.0, quality_delta=0.0),
]


def make_job(bandwidth=2e6, alpha_ui=0.0, quality_weight=0.5):
    return PublishJob(
        material_bytes=100e6,
        duration_s=30.0,
        complexity=1.0,
        author_quality_weight=quality_weight,
        alpha_ui=alpha_ui,
        network=NetworkModel(bandwidth_bytes_per_s=bandwidth, connect_latency_s=0.1, chunk_fail_beta=64e6),
        encode_speed={"soft": 1.0, "hard": 3.0},
    )


class TestChooseEncodingMode:
    def test_infinite_bandwidth_prefers_fastest_allowed(self):
        job = make_job(bandwidth=1e15)
        dec = choose_encoding_mode(job, OPTIONS, quality_floor=-1.0)
        assert dec.option.mode == "skip"  # upload term vanishes, zero encode wins

    def test_quality_floor_rules_out_skip_then_speed_decides(self):
        job = make_job(bandwidth=1e15)
        dec = choose_encoding_mode(job, OPTIONS, quality_floor=0.1)
        # soft and hard tie on quality; hard encodes three times faster
        assert dec.option.mode == "hard"

    def test_matches_enumerate_oracle(self):
        job = make_job(bandwidth=3e6, alpha_ui=1.0)
        floor = 0.0
        dec = choose_encoding_mode(job, OPTIONS, quality_floor=floor, relax_lambda=0.5)
        best_mode, best_dur, best_q = None, math.inf, -math.inf
        for o in OPTIONS:  # independent evaluation
            if o.quality_delta < floor:
                continue
            enc = 0.0 if o.mode == "skip" else job.duration_s * job.complexity / job.encode_speed[o.mode]
            enc = enc / (1.0 + 0.5 * job.alpha_ui)
            up = job.material_bytes * o.output_ratio / job.network.bandwidth_bytes_per_s
            dur = max(enc, up)
            if dur < best_dur - 1e-12 or (abs(dur - best_dur) <= 1e-12 and o.quality_delta > best_q):
                best_mode, best_dur, best_q = o.mode, dur, o.quality_delta
        assert dec.option.mode == best_mode
        assert dec.publish_duration_s == pytest.approx(best_dur)

    def test_alpha_ui_relaxes_encode_penalty(self):
        raw = 30.0
        assert fixed_encoding_duration(raw, 0.0) == raw
        assert fixed_encoding_duration(raw, 2.0) == pytest.approx(raw / 2.0)

    def test_no_option_passes_floor(self):
        job = make_job()
        with pytest.raises(ValueError, match="quality floor"):
            choose_encoding_mode(job, OPTIONS, quality_floor=1.0)

    def test_empty_options(self):
        with pytest.raises(ValueError):
            choose_encoding_mode(make_job(), [])


def small_grid():
    grid = [
        ParamPoint(qp=qp, fps=30, bitrate_kbps=br, codec="h264", audio_channels=2)
        for qp in (23, 28, 33)
        for br in (2000.0, 4000.0, 8000.0)
    ]
    surfaces = ResponseSurfaces(
        quality={p: 100.0 - 2.0 * p.qp + 3.0 * np.log1p(p.bitrate_kbps / 1000.0) for p in grid},
        output_bytes={p: p.bitrate_kbps * 125.0 * 30.0 for p in grid},
        encode_speed={p: 2.0 * (33.0 / p.qp) for p in grid},
    )
    return grid, surfaces


class TestChooseEncodingParams:
    def test_speed_only_author_takes_fastest(self):
        grid, surfaces = small_grid()
        job = make_job(quality_weight=0.0)
        dec = choose_encoding_params(job, grid, surfaces)
        durations = {
            p: max(
                job.duration_s * job.complexity / surfaces.encode_speed[p],
                surfaces.output_bytes[p] / job.network.bandwidth_bytes_per_s,
            )
            for p in grid
        }
        assert durations[dec.point] == pytest.approx(min(durations.values()))

    def test_pareto_dominant_point_chosen(self):
        p_good = ParamPoint(23, 30, 2000.0, "h264", 2)
        p_bad = ParamPoint(33, 30, 8000.0, "h264", 2)
        surfaces = ResponseSurfaces(
            quality={p_good: 90.0, p_bad: 50.0},
            output_bytes={p_good: 1e6, p_bad: 5e7},
            encode_speed={p_good: 5.0, p_bad: 1.0},
        )
        dec = choose_encoding_params(make_job(), [p_good, p_bad], surfaces)
        assert dec.point == p_good

    def test_matches_exhaustive_oracle_27_grid(self):
        grid = [
            ParamPoint(qp, fps, br, "h264", 2)
            for qp in (23, 28, 33)
            for fps in (24, 30, 60)
            for br in (2000.0, 4000.0, 8000.0)
        ]
        rng = np.random.default_rng(70)
        surfaces = ResponseSurfaces(
            quality={p: float(rng.uniform(30, 90)) for p in grid},
            output_bytes={p: float(rng.uniform(1e7, 2e8)) for p in grid},
            encode_speed={p: float(rng.uniform(0.5, 5.0)) for p in grid},
        )
        job = make_job(quality_weight=0.6, alpha_ui=0.5)
        dec = choose_encoding_params(job, grid, surfaces, quality_value=1.0, duration_value=2.0)
        best, best_score = None, -math.inf
        for p in grid:  # independent exhaustive evaluation
            enc = job.duration_s * job.complexity / surfaces.encode_speed[p]
            enc /= 1.0 + 0.5 * job.alpha_ui
            up = surfaces.output_bytes[p] / job.network.bandwidth_bytes_per_s
            score = 0.6 * 1.0 * surfaces.quality[p] - 0.4 * 2.0 * max(enc, up)
            if score > best_score:
                best, best_score = p, score
        assert dec.point == best
        assert dec.score == pytest.approx(best_score)

    def test_out_of_domain_points_skipped(self):
        grid, surfaces = small_grid()
        extra = ParamPoint(99, 30, 500.0, "h264", 2)
        dec = choose_encoding_params(make_job(), grid + [extra], surfaces)
        assert extra in dec.skipped

    def test_records_decision_features(self):
        grid, surfaces = small_grid()
        job = make_job(alpha_ui=1.5)
        dec = choose_encoding_params(job, grid, surfaces)
        assert dec.features["alpha_ui"] == 1.5
        assert dec.features["author_quality_weight"] == job.author_quality_weight


class TestPlanUpload:
    def nodes(self):
        return [UploadNode("n1", 4e6, 0.1), UploadNode("n2", 2e6, 0.05)]

    def test_overhead_free_limit_prefers_big_chunks_max_parallelism(self):
        nodes = [UploadNode("n1", 4e6, 0.0)]
        plan = plan_upload(
            64e6, chunk_sizes=(1e6, 4e6), parallelisms=(1, 2, 4), nodes=nodes,
            fail_beta=math.inf, allow_streaming=False,
        )
        assert plan.chunk_bytes == 4e6
        assert plan.parallelism == 4

    def test_geometric_retry_expectation(self):
        # failure probability one half makes the expected attempts exactly two
        beta = 1e6 / math.log(2.0)
        _, repeat = expected_upload_duration(8e6, 1e6, 1, UploadNode("n", 1e6, 0.0), beta)
        assert repeat == pytest.approx(2.0)

    def test_matches_exhaustive_oracle(self):
        sizes = (1e6, 2e6, 8e6, 16e6)
        pars = (1, 2, 4)
        nodes = self.nodes()
        total = 96e6
        beta = 32e6
        plan = plan_upload(total, sizes, pars, nodes, beta, allow_streaming=True)
        best = None  # independent enumeration
        for node in nodes:
            for s in sizes:
                for p in pars:
                    n_chunks = math.ceil(total / s)
                    pf = 1.0 - math.exp(-s / beta)
                    dur = (1 / p) * n_chunks * (s / node.bandwidth_bytes_per_s) / (1.0 - pf)
                    dur += node.connect_latency_s * math.ceil(n_chunks / p)
                    cand = ("chunk", s, p, node.id, dur)
                    if best is None or dur < best[4] - 1e-12 or (
                        abs(dur - best[4]) <= 1e-12 and (-s, -p) < (-best[1], -best[2])
                    ):
                        best = cand
            pf = 1.0 - math.exp(-total / beta)
            rep = 1.0 + (1.0 / (1.0 - pf) - 1.0) / 2.0
            dur = total / node.bandwidth_bytes_per_s * rep + node.connect_latency_s
            if dur < best[4] - 1e-12:
                best = ("streaming", total, 1, node.id, dur)
        assert (plan.mode, plan.chunk_bytes, plan.parallelism, plan.node_id) == best[:4]
        assert plan.expected_duration_s == pytest.approx(best[4])

    def test_monotone_in_bandwidth_and_failure(self):
        rng = np.random.default_rng(71)
        for _ in range(20):
            bw = rng.uniform(1e6, 8e6)
            beta = rng.uniform(8e6, 128e6)
            node_fast = UploadNode("f", bw * 1.5, 0.1)
            node_slow = UploadNode("s", bw, 0.1)
            d_fast, _ = expected_upload_duration(50e6, 4e6, 2, node_fast, beta)
            d_slow, _ = expected_upload_duration(50e6, 4e6, 2, node_slow, beta)
            assert d_fast <= d_slow
            d_safe, _ = expected_upload_duration(50e6, 4e6, 2, node_slow, beta * 2)
            assert d_safe <= d_slow  # lower failure rate never slows it down

    def test_down_nodes_rejected(self):
        nodes = [UploadNode("n1", 4e6, 0.1, available=False)]
        with pytest.raises(ValueError):
            plan_upload(1e6, (1e6,), (1,), nodes, 64e6)

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            ChunkPlan("chunk", 1e6, 0, "n", 1.0, 1.0)


class TestPreupload:
    def test_zero_lead_saving_nonpositive(self):
        gain = preupload_gain(FixedValue(0.0), 2.0, 30.0, 0.0, 1e6)
        assert gain.expected_saving_s <= 0.0

    def test_full_hiding(self):
        gain = preupload_gain(FixedValue(100.0), 2.0, 30.0, 0.0, 1e6)
        assert gain.expected_saving_s == pytest.approx(30.0)

    def test_exact_zero_when_no_lead_and_no_encrypt(self):
        gain = preupload_gain(FixedValue(0.0), 0.0, 30.0, 0.0, 1e6)
        assert gain.expected_saving_s == 0.0

    def test_lognormal_matches_monte_carlo(self):
        dist = LognormalValue(mu=np.log(20.0), sigma=0.8)
        up, enc = 25.0, 2.0
        gain = preupload_gain(dist, enc, up, 0.1, 1e6)
        rng = np.random.default_rng(72)  # independent sampling oracle
        leads = rng.lognormal(np.log(20.0), 0.8, 1_000_000)
        mc_perceived = np.maximum(0.0, up + enc - leads).mean()
        assert up - gain.expected_saving_s == pytest.approx(mc_perceived, rel=0.01)

    def test_waste_and_recommendation(self):
        gain = preupload_gain(FixedValue(100.0), 1.0, 30.0, 0.5, 1e6, value_per_second=1.0, cost_per_byte=1e-3)
        assert gain.expected_waste_bytes == pytest.approx(5e5)
        assert not gain.recommended  # waste cost 500 dwarfs 30 s saved

    def test_quantile_quadrature_matches_closed_form_mean(self):
        dist = LognormalValue(mu=1.0, sigma=0.5)
        assert expect(dist, lambda x: x) == pytest.approx(dist.mean(), rel=1e-3)

    def test_invalid_cancel_prob(self):
        with pytest.raises(ValueError):
            preupload_gain(FixedValue(1.0), 1.0, 1.0, 1.0, 1e6)


class TestAdaptPriority:
    def ladder(self):
        return [PriorityLevel(level=l, quota=5.0 * l) for l in (1, 2, 3, 4)]

    def degradation(self):
        return {1: 0.0, 2: 0.01, 3: 0.05, 4: 0.2}

    def test_background_gets_max_priority(self):
        dec = adapt_priority("background", self.ladder(), self.degradation(), epsilon=0.0, max_quota=100.0)
        assert dec.level == 4
        assert not dec.suspended

    def test_zero_epsilon_with_any_degradation_drops_to_floor(self):
        degr = {1: 0.01, 2: 0.02, 3: 0.05, 4: 0.2}
        dec = adapt_priority("foreground-publish", self.ladder(), degr, epsilon=0.0)
        assert dec.level == 1
        assert dec.suspended

    def test_matches_linear_scan_oracle(self):
        rng = np.random.default_rng(73)
        for _ in range(40):
            degr = {l: float(v) for l, v in zip((1, 2, 3, 4), np.sort(rng.uniform(0, 0.3, 4)))}
            eps = float(rng.uniform(0, 0.3))
            dec = adapt_priority("foreground-publish", self.ladder(), degr, epsilon=eps, max_quota=100.0)
            feasible = [l for l in (1, 2, 3, 4) if degr[l] <= eps]
            if feasible:
                assert dec.level == max(feasible)
                assert not dec.suspended
            else:
                assert dec.level == 1
                assert dec.suspended

    def test_monotone_in_epsilon(self):
        levels = []
        for eps in (0.0, 0.01, 0.05, 0.2):
            dec = adapt_priority("foreground-publish", self.ladder(), self.degradation(), epsilon=eps)
            levels.append(dec.level if not dec.suspended else 0)
        assert levels == sorted(levels)

    def test_quota_constraint_limits_background(self):
        dec = adapt_priority("background", self.ladder(), self.degradation(), epsilon=0.0,
                             consume_quota=8.0, max_quota=20.0)
        assert dec.level == 2  # quota 10 + consume 8 fits; level 3 would not

    def test_other_page_suspends_when_everything_degrades(self):
        degr = {1: 0.5, 2: 0.5, 3: 0.5, 4: 0.5}
        dec = adapt_priority("other-page", self.ladder(), degr, epsilon=0.01)
        assert dec.suspended
        assert dec.level == 1

    def test_empty_ladder_rejected(self):
        with pytest.raises(ValueError):
            adapt_priority("background", [], {}, epsilon=0.1)
