"""Scenario configuration: JSON file over shipped defaults, dotted overrides."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from . import core


class ConfigError(Exception):
    pass


DEFAULT_CONFIG: dict = {
    "schema_version": 1,
    "seed": 42,
    "out_dir": "reports",
    "economy": {},  # overrides for the shipped economy defaults
    "impacts": {},  # per-metric overrides for the shipped impact table
    "workload": {
        "catalog": {"n_items": 2000, "zipf_exponent": None},
        "population": {"n_users": 200},
        "waveform": {"days": 30, "slots_per_day": 288, "noise": 0.0},
    },
    "playback": {
        "n_sessions": 60,
        "items_per_session": 6,
        "trace_duration_ms": 120_000,
        "arpu_quality_coeff": 0.0005,
        "traffic_price_per_gb": 0.05,
    },
    "cdn": {
        "vendors": [
            {"id": "cdn-a", "unit_price": 1.0, "target_share": 0.5, "capacity_mbps": 1e6, "speed_mbps": 12.0},
            {"id": "cdn-b", "unit_price": 0.9, "target_share": 0.5, "capacity_mbps": 1e6, "speed_mbps": 9.0},
        ],
        "share_slack": 0.004,
        "n_requests": 20_000,
        "cache_capacity_bytes": 1e9,
        "cold_fraction": 0.5,
        "subset_m": 1,
        "traffic_price_per_gb": 0.05,
    },
    "delivery": {
        "n_ladders": 8,
        "n_buckets": 6,
        "history_per_bucket": 400,
        "cost_scale": 0.001,
        "forecast_window": 12,
        "forecast_horizon": 6,
    },
    "uiae": {
        "n_samples": 4000,
        "loss": "mse",
        "budget": 50.0,
        "n_windows": 8,
        "score_th": 0.5,
        "n_clusters": 2,
        "pid_steps": 60,
    },
    "publish": {
        "n_jobs": 24,
        "quality_floor": -0.5,
        "fail_beta": 64e6,
    },
    "experiment": {
        "n_users": 8000,
        "views_per_user": 100,
        "n_catalog": 300,
        "ab_share": 0.5,
        "treatment_lift": 0.05,
        "n_seeds": 3,
    },
}


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply --set key.path=value pairs onto the config."""
    out = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        path, raw = item.split("=", 1)
        node = out
        parts = path.split(".")
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = _parse_value(raw)
    return out


@dataclass(frozen=True)
class LoadedConfig:
    cfg: dict
    config_hash: str
    source: str
    overrides: tuple


def load_config(path: str | None = None, overrides=()) -> LoadedConfig:
    """Merge a JSON config file (or the built-in defaults) with overrides."""
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        raw = p.read_bytes()
        try:
            user_cfg = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(user_cfg, dict):
            raise ConfigError("config root must be an object")
        cfg = _merge(DEFAULT_CONFIG, user_cfg)
        digest = hashlib.sha256(raw).hexdigest()
        source = str(path)
    else:
        cfg = copy.deepcopy(DEFAULT_CONFIG)
        digest = hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
        source = "<defaults>"
    cfg = apply_overrides(cfg, overrides)
    _validate(cfg)
    return LoadedConfig(cfg=cfg, config_hash=digest, source=source, overrides=tuple(overrides or ()))


def _validate(cfg: dict):
    if not isinstance(cfg.get("seed"), int):
        raise ConfigError("seed is required and must be an integer")
    shares = [v["target_share"] for v in cfg["cdn"]["vendors"]]
    if abs(sum(shares) - 1.0) > 1e-9:
        raise ConfigError("cdn vendor target shares must sum to 1")
    for key in ("catalog", "population", "waveform"):
        if key not in cfg["workload"]:
            raise ConfigError(f"workload.{key} missing")


def economy_from(cfg: dict) -> core.EconomyParams:
    base = core.EconomyParams.default()
    over = cfg.get("economy", {})
    return core.EconomyParams(
        lt_base=over.get("lt_base", base.lt_base),
        arpu_base=over.get("arpu_base", base.arpu_base),
        roi_gamma=over.get("roi_gamma", base.roi_gamma),
        discount_rate_r=over.get("discount_rate_r", base.discount_rate_r),
    )


def impacts_from(cfg: dict) -> core.ImpactTable:
    table = core.ImpactTable.default().to_config()
    table.update(cfg.get("impacts", {}))
    return core.ImpactTable.from_config(table)
