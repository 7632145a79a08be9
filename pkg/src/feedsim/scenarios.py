"""Scenario pipelines behind the CLI subcommands.

Each runner takes the merged config and returns (section dict, named
series for CSV emission). Everything is seeded; a report value always
comes from a module operation, never computed ad hoc here.
"""

from __future__ import annotations

import numpy as np

from . import cdn, config, core, delivery, experiment, playback, publish, uiae, workload


class InfeasibleError(Exception):
    pass


def _profit_model(cfg, impacts, economy) -> playback.ProfitModel:
    pb = cfg["playback"]
    return playback.ProfitModel(
        impacts=impacts,
        economy=economy,
        baseline_qop=playback.default_baseline_qop(),
        arpu_quality_coeff=pb["arpu_quality_coeff"],
        traffic_price_per_gb=pb["traffic_price_per_gb"],
    )


# ---------------------------------------------------------------------------
# playback
# ---------------------------------------------------------------------------


def run_playback(cfg: dict, seed: int, impacts: core.ImpactTable, economy: core.EconomyParams):
    pb = cfg["playback"]
    rng = np.random.default_rng(seed)
    catalog = workload.generate_catalog(
        workload.CatalogSpec(**cfg["workload"]["catalog"]), seed=seed
    )
    users = workload.generate_population(
        workload.PopulationSpec(n_users=pb["n_sessions"]), seed=seed + 1
    )
    ptm = catalog.playtime_model()
    model = _profit_model(cfg, impacts, economy)
    pop = catalog.popularity()

    deciders = {"qoe": playback.QoeDecider(), "sensitivity": playback.SensitivityDecider()}
    totals = {name: [] for name in deciders}
    traffic = {name: 0.0 for name in deciders}
    qop_acc = {name: {"first_frame_ms": [], "rebuffer_ratio": [], "quality": []} for name in deciders}
    first_trace = None
    episodes = []

    for u_idx, user in enumerate(users):
        item_idx = rng.choice(len(catalog.items), size=pb["items_per_session"], p=pop, replace=False)
        items = tuple(catalog.items[i] for i in item_idx)
        trace = workload.generate_network_trace(user.network_class, pb["trace_duration_ms"], seed=seed + 100 + u_idx)
        for name, dec in deciders.items():
            res = playback.run_session(
                dec, user, items, trace,
                playtime_model=ptm, seed=seed + 1000 + u_idx, profit_model=model,
            )
            totals[name].append(playback.est_profit(res.qop, res.mean_quality, user.qop_sens, model).profit)
            traffic[name] += res.qop.traffic_bytes
            qop_acc[name]["first_frame_ms"].append(res.qop.first_frame_ms)
            qop_acc[name]["rebuffer_ratio"].append(res.qop.rebuffer_ratio)
            qop_acc[name]["quality"].append(res.mean_quality)
            if name == "qoe":
                episodes.append(res.trace.episodes)
                if first_trace is None:
                    first_trace = res.trace

    q_decider = playback.optimize_decider_q(
        episodes, playback.BucketScheme(), n_actions=3, alpha_lr=0.5, gamma_disc=0.3, sweeps=3
    )
    validation = [
        playback.EvalEpisode(
            user=users[i],
            items=tuple(catalog.items[j] for j in rng.choice(len(catalog.items), size=4, p=pop, replace=False)),
            trace=workload.generate_network_trace(users[i].network_class, pb["trace_duration_ms"], seed=seed + 5000 + i),
            seed=seed + 6000 + i,
        )
        for i in range(min(8, len(users)))
    ]
    winner = playback.heuristic_search(
        [deciders["qoe"], deciders["sensitivity"], q_decider], validation, model, playtime_model=ptm
    )

    section = {
        "est_profit": {
            name: {"mean": float(np.mean(vals)), "total": float(np.sum(vals))} for name, vals in totals.items()
        },
        "uplift_mean": float(np.mean(totals["sensitivity"]) - np.mean(totals["qoe"])),
        "traffic_bytes": {name: traffic[name] for name in traffic},
        "traffic_ratio": traffic["sensitivity"] / traffic["qoe"] if traffic["qoe"] else None,
        "qop": {
            name: {
                "first_frame_ms_mean": float(np.mean(acc["first_frame_ms"])),
                "rebuffer_ratio_mean": float(np.mean(acc["rebuffer_ratio"])),
                "quality_mean": float(np.mean(acc["quality"])),
            }
            for name, acc in qop_acc.items()
        },
        "search_winner": winner.kind,
        "n_sessions": len(users),
    }
    series = {}
    if first_trace is not None:
        series = {
            "buffer_s": first_trace.buffer_s,
            "downloaded_bytes": first_trace.downloaded_bytes,
            "rebuffering": first_trace.rebuffering.astype(float),
        }
    return section, series


# ---------------------------------------------------------------------------
# cdn
# ---------------------------------------------------------------------------


def _vendors_from(cfg) -> list:
    out = []
    for v in cfg["cdn"]["vendors"]:
        out.append(
            cdn.VendorState(
                id=v["id"],
                unit_price=v["unit_price"],
                target_share=v["target_share"],
                capacity_mbps=v["capacity_mbps"],
                quality=cdn.QualityStats(prior_mbps=v.get("speed_mbps", 10.0)),
                cache_capacity_bytes=cfg["cdn"]["cache_capacity_bytes"],
            )
        )
    return out


def run_cdn(cfg: dict, seed: int, impacts: core.ImpactTable, economy: core.EconomyParams):
    wf_cfg = cfg["workload"]["waveform"]
    wave = workload.generate_waveform(
        wf_cfg["days"], wf_cfg["slots_per_day"], noise=wf_cfg["noise"], seed=seed
    )
    vendors = _vendors_from(cfg)
    rng = np.random.default_rng(seed + 1)

    prop = cdn.proportional_split(wave, vendors)
    for v in vendors:
        v.bandwidth_series = prop[v.id]
    bills_peak = cdn.cost_95peak(vendors)
    bills_traffic = cdn.cost_traffic(vendors)
    srr_prop = cdn.srr(wave, prop)

    stagger = cdn.stagger_peaks(wave, vendors, wf_cfg["slots_per_day"], mode="cross-day-shift")
    if not stagger.feasible:
        raise InfeasibleError(f"peak staggering infeasible: {stagger.reason}")
    phase = cdn.stagger_peaks(wave, vendors, wf_cfg["slots_per_day"], mode="phase-shift")

    n_req = cfg["cdn"]["n_requests"]
    reqs = [
        cdn.RequestState(
            id=i,
            bytes=float(rng.uniform(0.5e6, 2e6)),
            region="r0",
            hour=int(rng.integers(0, 24)),
            rebuffer_sens=float(rng.uniform(0.5, 2.0)),
            urgency=float(rng.uniform(0.0, 1.0)),
        )
        for i in range(n_req)
    ]
    choices, shares = cdn.schedule_requests(reqs, vendors, slack=cfg["cdn"]["share_slack"])
    targets = np.array([v.target_share for v in vendors])
    share_dev = float(np.max(np.abs(shares - targets)))
    request_counts = np.bincount(choices, minlength=len(vendors))

    catalog = workload.generate_catalog(workload.CatalogSpec(**cfg["workload"]["catalog"]), seed=seed)
    pop = catalog.popularity()
    n_files = len(catalog.items)
    file_bytes = np.array([it.ladders[1].file_bytes for it in catalog.items])
    n_cache_req = min(60_000, n_req * 3)
    stream = rng.choice(n_files, size=n_cache_req, p=pop)
    cap = cfg["cdn"]["cache_capacity_bytes"]

    plan = cdn.hash_schedule(
        {it.id: it.popularity_weight for it in catalog.items},
        vendors,
        cold_fraction=cfg["cdn"]["cold_fraction"],
        m=cfg["cdn"]["subset_m"],
    )
    id_of = {it.id: i for i, it in enumerate(catalog.items)}
    pinned = np.full(n_files, -1, dtype=np.int64)
    vendor_index = {v.id: j for j, v in enumerate(vendors)}
    for fid in plan.cold_files:
        pinned[id_of[fid]] = vendor_index[plan.vendor_of(fid)]
    rand_vendor = rng.integers(0, len(vendors), size=n_cache_req)
    hash_vendor = np.where(pinned[stream] >= 0, pinned[stream], rand_vendor)

    def hit_rate(assign):
        hits = 0
        for j in range(len(vendors)):
            sel = assign == j
            if not sel.any():
                continue
            res = cdn.simulate_edge_cache(stream[sel], file_bytes, cap)
            hits += int(res.hits.sum())
        return hits / len(stream)

    hr_hash = hit_rate(hash_vendor)
    hr_random = hit_rate(rand_vendor)

    forecast_scores = {it.id: it.popularity_weight for it in catalog.items}
    fb_map = {it.id: float(file_bytes[id_of[it.id]]) for it in catalog.items}
    pre = cdn.precache_plan(forecast_scores, fb_map, stagger.per_vendor_series, max_files=16)
    for v in vendors:
        v.bandwidth_series = pre.projected_series[v.id]
    bills_after_precache = cdn.cost_95peak(vendors)

    section = {
        "billing": {
            "peak_total": bills_peak["total"],
            "traffic_total": bills_traffic["total"],
            "peak_after_precache": bills_after_precache["total"],
        },
        "srr": {
            "proportional": srr_prop,
            "cross_day": stagger.srr_value,
            "phase_shift": phase.srr_value if phase.feasible else None,
        },
        "share_tracking": {
            "max_abs_deviation": share_dev,
            "realized": {v.id: float(shares[j]) for j, v in enumerate(vendors)},
            "request_counts": {v.id: int(request_counts[j]) for j, v in enumerate(vendors)},
            "n_requests": n_req,
        },
        "cache": {
            "hit_rate_hash": hr_hash,
            "hit_rate_random": hr_random,
            "hash_beats_random": hr_hash > hr_random,
            "n_requests": int(n_cache_req),
        },
        "precache": {"n_entries": len(pre.entries), "diagnostics": pre.diagnostics},
        "n_vendors": len(vendors),
    }
    series = {"waveform_mbps": wave[: wf_cfg["slots_per_day"] * 2]}
    for vid, s in stagger.per_vendor_series.items():
        series[f"stagger_{vid}"] = s[: wf_cfg["slots_per_day"] * 2]
    return section, series


# ---------------------------------------------------------------------------
# delivery
# ---------------------------------------------------------------------------


def _delivery_ladders(n: int) -> list:
    return [
        playback.Ladder(
            index=j,
            bitrate_kbps=300.0 * 1.5**j,
            quality_score_d=min(30.0 + 8.0 * j, 100.0),
            file_bytes=300.0 * 1.5**j * 125.0 * 30.0,
            meta_bytes=1500.0 + 300.0 * j,
        )
        for j in range(n)
    ]


def run_delivery(cfg: dict, seed: int, impacts: core.ImpactTable, economy: core.EconomyParams):
    dl = cfg["delivery"]
    rng = np.random.default_rng(seed)
    ladders = _delivery_ladders(dl["n_ladders"])
    k = len(ladders)
    rc = delivery.default_replace_cost(ladders)
    dc = [
        delivery.deliver_cost(l.meta_bytes, device_factor=1.0, network_factor=1.0, scale=dl["cost_scale"])
        for l in ladders
    ]

    # ground truth: each bucket prefers a band of renditions
    history = []
    for b in range(dl["n_buckets"]):
        center = b * (k - 1) / max(dl["n_buckets"] - 1, 1)
        logits = -0.6 * (np.arange(k) - center) ** 2
        p = np.exp(logits) / np.exp(logits).sum()
        chosen = rng.choice(k, size=dl["history_per_bucket"], p=p)
        history.extend((b, int(c)) for c in chosen)
    model = delivery.estimate_p_inductive(history, n_ladders=k, n_buckets=dl["n_buckets"])

    decisions = {}
    saved = 0.0
    for b in range(dl["n_buckets"]):
        probs = model.for_bucket(b)
        dec = delivery.optimal_delivery(probs, rc, dc)
        all_cost = delivery.decision_cost([1] * k, probs, rc, dc)
        decisions[str(b)] = {
            "delivered": list(dec.delivered),
            "expected_cost": dec.expected_cost,
            "deliver_all_cost": all_cost,
            "exact": dec.exact,
        }
        saved += all_cost - dec.expected_cost

    wf_cfg = cfg["workload"]["waveform"]
    wave = workload.generate_waveform(2, wf_cfg["slots_per_day"], noise=0.05, seed=seed + 2)
    fm_ma = delivery.ForecastModel(dl["forecast_window"], dl["forecast_horizon"], "moving-average", wf_cfg["slots_per_day"])
    fm_sn = delivery.ForecastModel(dl["forecast_window"], dl["forecast_horizon"], "seasonal-naive", wf_cfg["slots_per_day"])
    f_ma = delivery.forecast(wave, fm_ma)
    f_sn = delivery.forecast(wave, fm_sn)

    section = {
        "decisions": decisions,
        "mean_saving_vs_deliver_all": saved / dl["n_buckets"],
        "forecast": {
            "moving_average": f_ma.values.tolist(),
            "seasonal_naive": f_sn.values.tolist(),
            "day_percentiles": f_sn.day_percentiles.tolist(),
        },
    }
    series = {"forecast_ma": f_ma.values, "forecast_sn": f_sn.values}
    return section, series


# ---------------------------------------------------------------------------
# uiae
# ---------------------------------------------------------------------------


def synth_value_samples(n: int, seed: int):
    """Long-tailed synthetic value data with a planted feature signal."""
    rng = np.random.default_rng(seed)
    x = np.column_stack(
        [
            rng.uniform(0, 1, n),  # author activity
            rng.integers(0, 500, n),  # posts
            rng.integers(0, 100_000, n),  # fans
            rng.uniform(5, 120, n),  # duration
            rng.integers(0, 1_000_000, n),  # playback volume
            rng.integers(0, 50_000, n),  # likes
            rng.uniform(-1, 3, n),  # growth
            rng.integers(0, 20, n),  # category
            rng.integers(0, 24, n),  # hour
            rng.integers(0, 2, n),  # holiday
        ]
    ).astype(np.float64)
    signal = (
        1.5 * x[:, 0]
        + 0.8 * np.log1p(x[:, 4])
        + 0.4 * np.log1p(x[:, 5])
        + 0.3 * x[:, 6]
    )
    y = np.expm1(np.clip(signal * 0.35 + rng.normal(0, 0.25, n), 0, None))
    return x, y


def run_uiae(cfg: dict, seed: int, impacts: core.ImpactTable, economy: core.EconomyParams):
    ui = cfg["uiae"]
    rng = np.random.default_rng(seed)
    x, y = synth_value_samples(ui["n_samples"], seed)
    half = len(y) // 2
    model = uiae.train_value_model(x[:half], y[:half], loss_kind=ui["loss"])
    rec_auc, mae = uiae.evaluate_value_model(model, x[half:], y[half:])

    users = workload.generate_population(workload.PopulationSpec(n_users=400), seed=seed + 3)
    sens_matrix = np.array(
        [[u.qop_sens.get("rebuffer_ratio", 0.0), u.qop_sens.get("quality", 0.0)] for u in users]
    )
    clusters = uiae.cluster_consumers(sens_matrix, k=ui["n_clusters"], seed=seed)

    base_ladders = _delivery_ladders(3)
    current = playback.LadderGroup(base_ladders)
    candidates = [_scaled_group(base_ladders, f) for f in (0.8, 1.0, 1.25)]
    ctx_builder = _reward_ctx_builder(impacts, economy, clusters.k_effective)
    qd, fd = 0.4, 0.6
    hist = []
    directions = []
    group = current
    for t in range(ui["n_windows"]):
        qd = min(qd + 0.04, 1.0)  # audience drifting toward quality
        fd = max(fd - 0.03, 0.0)
        hist.append(
            uiae.WindowRecord(
                t=t,
                ug_hist=tuple(clusters.histogram),
                qop=playback.default_baseline_qop(),
                profit=0.0,
                qd_prob=qd,
                fd_prob=fd,
                ladder=group,
            )
        )
        upd = uiae.update_ladder(hist, value_score=0.9, score_th=ui["score_th"], candidates=candidates, ctx_builder=ctx_builder)
        directions.append(upd.direction)
        group = upd.ladder
    withdrawn = uiae.update_ladder(hist, value_score=0.1, score_th=ui["score_th"], candidates=candidates, ctx_builder=ctx_builder)

    catalog = workload.generate_catalog(workload.CatalogSpec(n_items=2000), seed=seed + 4)
    top = sorted(catalog.items, key=lambda it: -it.popularity_weight)[:60]
    tasks = [
        uiae.TranscodeTask(
            item_id=it.id,
            ladder=it.ladders,
            predicted_reward=float(it.popularity_weight * 1e4 * rng.uniform(0.8, 1.2)),
            quota_cost=float(max(round(it.duration_s * rng.uniform(0.5, 1.5)), 1)),
        )
        for it in top
    ]
    alloc = uiae.allocate_transcodes(tasks, budget=ui["budget"])

    controller = uiae.QuotaController()
    disturbance = np.zeros(ui["pid_steps"])
    disturbance[ui["pid_steps"] // 2 :] = -0.2
    util = uiae.simulate_quota_loop(controller, plant_capacity=400.0, steps=ui["pid_steps"], disturbance=disturbance)
    tol = 0.05 * controller.target
    settled = _settle_step(util[ui["pid_steps"] // 2 :], controller.target, tol)

    pop = catalog.popularity()
    order = np.sort(pop)[::-1]
    top_mass = float(order[: max(len(order) // 100, 1)].sum())

    section = {
        "value_model": {"loss": ui["loss"], "rec_auc": rec_auc, "mae": mae, "degenerate": model.degenerate},
        "ladder_updates": {
            "directions": directions,
            "final_mean_bitrate": group.mean_bitrate(),
            "withdrawal_keeps_ladder": withdrawn.ladder == group and withdrawn.flagged == "withdrawn",
        },
        "allocation": {
            "method": alloc.method,
            "accepted": len(alloc.accepted),
            "total_reward": alloc.total_reward,
            "quota_used": alloc.quota_used,
            "budget": ui["budget"],
        },
        "pid": {"settle_steps_after_disturbance": settled, "final_utilization": float(util[-1])},
        "clusters": {"k": clusters.k_effective, "histogram": clusters.histogram.tolist()},
        "catalog_top1pct_mass": top_mass,
    }
    return section, {"pid_utilization": util}


def _scaled_group(ladders, factor: float) -> playback.LadderGroup:
    return playback.LadderGroup(
        [
            playback.Ladder(
                index=l.index,
                bitrate_kbps=l.bitrate_kbps * factor,
                quality_score_d=min(l.quality_score_d * (0.7 + 0.3 * factor), 100.0),
                file_bytes=l.file_bytes * factor,
                meta_bytes=l.meta_bytes,
            )
            for l in ladders
        ]
    )


def _reward_ctx_builder(impacts, economy, n_clusters):
    cluster_sens = tuple(
        {"rebuffer_ratio": 2.0 - 1.5 * g / max(n_clusters - 1, 1), "quality": 0.3 + 1.5 * g / max(n_clusters - 1, 1)}
        for g in range(n_clusters)
    )
    cluster_bw = [1500.0 + 2500.0 * g / max(n_clusters - 1, 1) for g in range(n_clusters)]

    def qop_response(group: playback.LadderGroup, g: int) -> core.QoPVector:
        base = playback.default_baseline_qop()
        load = group.mean_bitrate() / cluster_bw[g]
        ratio = min(max(0.02 * load / 0.5, 0.0), 1.0)
        return core.QoPVector(
            first_feed_ms=base.first_feed_ms,
            first_frame_ms=200.0 + 300.0 * load,
            rebuffer_ratio=ratio,
            rebuffer_dur_per_vv_ms=300.0 * load,
            traffic_bytes=base.traffic_bytes * load,
            power_avg=base.power_avg,
            storage_pct=base.storage_pct,
            cpu_pct=base.cpu_pct,
            mem_pct=base.mem_pct,
            oom_rate=base.oom_rate,
            fps=base.fps,
            temperature_c=base.temperature_c,
            frame_drop_rate=base.frame_drop_rate,
            anr_crash_rate=base.anr_crash_rate,
            publish_success_ratio=base.publish_success_ratio,
        )

    def selection_shares(group: playback.LadderGroup, g: int):
        fit = np.array([1.0 / (1.0 + abs(l.bitrate_kbps - cluster_bw[g] * 0.5) / 500.0) for l in group])
        return fit / fit.sum()

    def builder(current, ug):
        return uiae.RewardContext(
            impacts=impacts,
            economy=economy,
            cluster_sens=cluster_sens,
            qop_response=qop_response,
            selection_shares=selection_shares,
            baseline=current,
            duration_s=30.0,
            forecast=uiae.ConsumptionForecast(plays=2000.0, mean_watch_s=12.0),
        )

    return builder


def _settle_step(tail: np.ndarray, target: float, tol: float) -> int:
    for i in range(len(tail)):
        if np.all(np.abs(tail[i:] - target) <= tol):
            return i
    return -1


# ---------------------------------------------------------------------------
# publish
# ---------------------------------------------------------------------------


def run_publish(cfg: dict, seed: int, impacts: core.ImpactTable, economy: core.EconomyParams):
    pubcfg = cfg["publish"]
    rng = np.random.default_rng(seed)
    options = [
        publish.EncodeOption(mode="soft", output_ratio=0.45, quality_delta=0.5, speed_factor=1.0),
        publish.EncodeOption(mode="hard", output_ratio=0.6, quality_delta=0.2, speed_factor=3.0),
        publish.EncodeOption(mode="skip", output_ratio=1.0, quality_delta=0.0),
    ]
    grid = [
        publish.ParamPoint(qp=qp, fps=fps, bitrate_kbps=br, codec="h264", audio_channels=2)
        for qp in (23, 28, 33)
        for fps in (24, 30, 60)
        for br in (2000.0, 4000.0, 8000.0)
    ]
    surfaces = publish.ResponseSurfaces(
        quality={p: 100.0 - 1.5 * p.qp + 0.05 * p.fps + 2.0 * np.log1p(p.bitrate_kbps / 1000.0) for p in grid},
        output_bytes={p: p.bitrate_kbps * 125.0 * 30.0 * (60.0 / p.fps) ** -0.2 for p in grid},
        encode_speed={p: 3.0 * (33.0 / p.qp) ** -0.3 * (30.0 / p.fps) for p in grid},
    )
    nodes = [
        publish.UploadNode("edge-1", 6e6, 0.15),
        publish.UploadNode("edge-2", 4e6, 0.05),
    ]

    mode_counts: dict = {}
    plan_counts: dict = {}
    durations = []
    recommends = 0
    priorities = {}
    for j in range(pubcfg["n_jobs"]):
        job = publish.PublishJob(
            material_bytes=float(rng.uniform(20e6, 200e6)),
            duration_s=float(rng.uniform(10, 60)),
            complexity=float(rng.uniform(0.5, 2.0)),
            author_quality_weight=float(rng.uniform(0.2, 0.8)),
            alpha_ui=float(rng.uniform(0.0, 2.0)),
            network=publish.NetworkModel(
                bandwidth_bytes_per_s=float(rng.uniform(1e6, 8e6)),
                connect_latency_s=0.1,
                chunk_fail_beta=pubcfg["fail_beta"],
            ),
            encode_speed={"soft": 1.0, "hard": 3.0},
        )
        dec = publish.choose_encoding_mode(job, options, quality_floor=pubcfg["quality_floor"])
        mode_counts[dec.option.mode] = mode_counts.get(dec.option.mode, 0) + 1
        durations.append(dec.publish_duration_s)
        pdec = publish.choose_encoding_params(job, grid, surfaces)
        plan = publish.plan_upload(
            job.material_bytes * dec.option.output_ratio,
            chunk_sizes=(1e6, 4e6, 16e6),
            parallelisms=(1, 2, 4),
            nodes=nodes,
            fail_beta=pubcfg["fail_beta"],
        )
        plan_counts[plan.mode] = plan_counts.get(plan.mode, 0) + 1
        gain = publish.preupload_gain(
            publish.LognormalValue(mu=np.log(20.0), sigma=0.8),
            encrypt_duration_s=2.0,
            upload_duration_s=plan.expected_duration_s,
            cancel_prob=0.05,
            preupload_bytes=job.material_bytes,
            value_per_second=1.0,
            cost_per_byte=1e-9,
        )
        recommends += int(gain.recommended)
        ladder = [publish.PriorityLevel(level=l, quota=10.0 * l) for l in (1, 2, 3, 4)]
        degr = {1: 0.0, 2: 0.01, 3: 0.04, 4: 0.1}
        for state in ("background", "foreground-publish", "other-page"):
            p = publish.adapt_priority(state, ladder, degr, epsilon=0.02, consume_quota=5.0, max_quota=50.0)
            priorities.setdefault(state, []).append(p.level)
        _ = pdec

    section = {
        "encoding_modes": mode_counts,
        "mean_publish_duration_s": float(np.mean(durations)),
        "upload_plan_modes": plan_counts,
        "preupload_recommend_rate": recommends / pubcfg["n_jobs"],
        "priority_mean": {state: float(np.mean(v)) for state, v in priorities.items()},
    }
    return section, {}


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------


def synth_views(n_users: int, views_per_user: int, n_catalog: int, seed: int):
    rng = np.random.default_rng(seed)
    n_views = n_users * views_per_user
    users = np.repeat(np.arange(n_users, dtype=np.int64), views_per_user)
    vids = rng.integers(0, n_catalog, size=n_views)
    playtimes = rng.uniform(8.0, 12.0, size=n_views)
    return users, vids, playtimes


def run_experiment(cfg: dict, seed: int, impacts: core.ImpactTable, economy: core.EconomyParams):
    ex = cfg["experiment"]
    rng = np.random.default_rng(seed)
    n_catalog = ex["n_catalog"]
    n_split = int(ex["ab_share"] * n_catalog)
    split_ids = list(range(n_split))
    covariates = np.column_stack(
        [rng.uniform(10, 60, n_split), rng.integers(0, 8, n_split), rng.integers(0, 3, n_split)]
    )

    estimates = []
    deltas = []
    for s in range(ex["n_seeds"]):
        users, vids, playtimes = synth_views(ex["n_users"], ex["views_per_user"], n_catalog, seed + 10 * s)
        out = experiment.run_quasi_pipeline(
            users, vids, playtimes, split_ids, covariates,
            treatment_lift=ex["treatment_lift"], seed=seed + 10 * s,
        )
        estimates.append(out.relative_effect)
        deltas.append(out.delta_exact)
    estimates = np.array(estimates)

    tags = experiment.interleave(10_000, mode="random", seed=seed)
    t_share = tags.count("T") / len(tags)
    arm_counts = np.zeros(2)
    for i in range(20_000):
        arm_counts[experiment.ab_assign(f"user-{i}", "salt-x", (0.5, 0.5))] += 1

    windows = [
        experiment.StrategyWindow("s-control", "control", 0.0, 100.0, 0.5),
        experiment.StrategyWindow("s-treat", "treatment", 0.0, 100.0, 0.5),
    ]
    outputs = [(f"o{i}", "treatment" if i % 2 else "control", float(i % 100)) for i in range(200)]
    labeled, resolver = experiment.label_outputs(outputs, windows)
    resolved = sum(1 for l in labeled if l.strategy_id != experiment.UNTAGGED)

    section = {
        "quasi": {
            "injected_lift": ex["treatment_lift"],
            "estimates": estimates.tolist(),
            "mean_estimate": float(estimates.mean()),
            "max_abs_error": float(np.max(np.abs(estimates - ex["treatment_lift"]))),
            "delta_exact_mean": float(np.mean(deltas)),
            "n_seeds": ex["n_seeds"],
        },
        "interleave_t_share": t_share,
        "ab_split": {"arm0": int(arm_counts[0]), "arm1": int(arm_counts[1])},
        "label_resolved": resolved,
        "n_outputs": len(outputs),
    }
    return section, {}


RUNNERS = {
    "playback": run_playback,
    "cdn": run_cdn,
    "delivery": run_delivery,
    "uiae": run_uiae,
    "publish": run_publish,
    "experiment": run_experiment,
}


def run_scenario(cfg: dict, subcommand: str, seed: int | None = None):
    """Execute one pipeline (or all); returns (sections, series)."""
    seed = cfg["seed"] if seed is None else seed
    impacts = config.impacts_from(cfg)
    economy = config.economy_from(cfg)
    names = list(RUNNERS) if subcommand == "full" else [subcommand]
    if any(n not in RUNNERS for n in names):
        raise config.ConfigError(f"unknown subcommand {subcommand!r}")
    sections = {}
    series = {}
    for name in names:
        sec, ser = RUNNERS[name](cfg, seed, impacts, economy)
        sections[name] = sec
        for key, arr in ser.items():
            series[f"{name}_{key}"] = arr
    return sections, series
