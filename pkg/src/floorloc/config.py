"""Run configuration: one flat YAML mapping, overridable from the command line."""
from __future__ import annotations

import copy
import math
from pathlib import Path

import yaml

from .errors import ConfigError

# key -> default.  None means "not set".
DEFAULTS: dict = {
    # inputs
    "floorplan": None,
    "floorplan_resolution": None,
    "floorplan_origin": None,
    "scans": None,
    "frame": 0,
    "multi_scans": None,
    "motions": None,
    "gt_poses": None,
    "estimates": None,
    "features": None,
    "meta": None,
    "pair_probs": None,
    "out": "out",
    # pose grid
    "o_bins": 16,
    "pose_cell_size": None,
    # observation model
    "rays": 40,
    "multi_rays": 160,
    "fov_deg": 108.0,
    "max_range": 10.0,
    "sigma": 0.1,
    "fusion_omega": 1.0,
    "fusion_factor": 1,
    # histogram filter
    "sigma_trans": 0.05,
    "sigma_rot": 0.05,
    "floor_prob": 1e-9,
    "dump_maps": False,
    "heatmaps": False,
    # room style clustering
    "lambda": 0.25,
    "tau": 0.07,
    "gamma": 1.0,
    "knn": 10,
    "teleport": 0.15,
    "trials": 8,
    "blank_threshold": 0,
    # metrics
    "thresholds": [0.1, 0.5, 1.0],
    "angle_bound_deg": 30.0,
    "success_threshold": 1.0,
    # synthesis
    "scene": "random",
    "room_grid": None,
    "room_cells": [18, 32],
    "n_steps": 20,
    "depth_noise": 0.0,
    "odom_noise": 0.0,
    # run
    "seed": 0,
    "threads": 1,
}

PATH_KEYS = ("floorplan", "scans", "multi_scans", "motions", "gt_poses", "features", "meta",
             "pair_probs")

_RANGES = {
    "o_bins": (1, None), "rays": (1, None), "multi_rays": (1, None), "fov_deg": (0, 360),
    "max_range": (0, None), "sigma": (0, None), "fusion_omega": (0, 1),
    "fusion_factor": (1, None), "sigma_trans": (0, None), "sigma_rot": (0, None),
    "floor_prob": (0, 1e-3), "tau": (0, None), "gamma": (0, None), "knn": (1, None),
    "teleport": (0, 1), "trials": (1, None), "blank_threshold": (0, None),
    "angle_bound_deg": (0, 180), "success_threshold": (0, None), "n_steps": (1, None),
    "depth_noise": (0, None), "odom_noise": (0, None), "threads": (1, None), "frame": (0, None),
}
_STRICT_LOW = {"fov_deg", "max_range", "sigma", "floor_prob", "tau", "teleport",
               "success_threshold", "angle_bound_deg"}
_STRICT_HIGH = {"teleport"}


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a key-value mapping")
        _merge(cfg, _anchor_paths(data, Path(path).parent), str(path))
    if overrides:
        _merge(cfg, overrides, "command line")
    validate(cfg)
    return cfg


def _anchor_paths(data: dict, base: Path) -> dict:
    """Relative input paths in a config file are relative to that file."""
    out = dict(data)
    for k in PATH_KEYS + ("estimates",):
        v = out.get(k)
        if isinstance(v, str):
            out[k] = _join(base, v)
        elif isinstance(v, list):
            out[k] = [_join(base, p) if isinstance(p, str) else p for p in v]
    return out


def _join(base: Path, p: str) -> str:
    return p if Path(p).is_absolute() else str(base / p)


def _merge(cfg, data, source):
    for k, v in data.items():
        if k not in DEFAULTS:
            raise ConfigError(f"unknown config key {k!r} ({source})")
        cfg[k] = v


def parse_assignment(text: str) -> tuple[str, object]:
    """``key=value`` with the value parsed as YAML (so numbers and lists work)."""
    if "=" not in text:
        raise ConfigError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k.strip(), yaml.safe_load(v)
    except yaml.YAMLError:
        raise ConfigError(f"bad value for {k!r}: {v!r}") from None


def validate(cfg: dict) -> None:
    for key, (lo, hi) in _RANGES.items():
        v = cfg[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{key} must be a number, got {v!r}")
        if lo is not None and (v < lo or (key in _STRICT_LOW and v == lo)):
            raise ConfigError(f"{key}={v} below its allowed range")
        if hi is not None and (v > hi or (key in _STRICT_HIGH and v == hi)):
            raise ConfigError(f"{key}={v} above its allowed range")
    for key in ("o_bins", "rays", "multi_rays", "fusion_factor", "knn", "trials", "n_steps",
                "threads", "frame", "blank_threshold", "seed"):
        if isinstance(cfg[key], bool) or not isinstance(cfg[key], int):
            raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}")
    for key in ("room_grid", "room_cells"):
        v = cfg[key]
        if v is None and key == "room_grid":
            continue
        if not (isinstance(v, list) and len(v) == 2
                and all(isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in v)):
            raise ConfigError(f"{key} must be a pair of positive integers, got {v!r}")
    if not isinstance(cfg["lambda"], (int, float)):
        raise ConfigError("lambda must be a number")
    th = cfg["thresholds"]
    if not isinstance(th, list) or not th or any(
            isinstance(t, bool) or not isinstance(t, (int, float)) or t <= 0 for t in th):
        raise ConfigError("thresholds must be a non-empty list of positive numbers")


def require(cfg: dict, *keys: str) -> None:
    """Check that the named inputs are set and, for file inputs, exist."""
    for k in keys:
        v = cfg.get(k)
        if v is None:
            raise ConfigError(f"missing required setting {k!r}")
        if k in PATH_KEYS or k == "estimates":
            for p in (v if isinstance(v, list) else [v]):
                if not Path(p).exists():
                    raise ConfigError(f"{k}: file {p} does not exist")


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None)
