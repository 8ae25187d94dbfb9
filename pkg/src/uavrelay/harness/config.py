"""TOML scenario configuration with dotted keys, validated into a :class:`Scenario`."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from ..channel import ChannelConfigError, SegmentModel
from ..cost import COST_KINDS, RelayCost
from ..geometry import Heights, Point2
from ..search import SearchParams
from ..terrain import BlockSpec, UrbanMap, generate_map


class ConfigError(ValueError):
    """Invalid or missing configuration; ``key`` names the offending dotted key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


REQUIRED = object()

# dotted key -> (type, default)
SCHEMA: dict[str, tuple[type, Any]] = {
    "scenario.world": (str, REQUIRED),
    "scenario.map_file": (str, ""),
    "scenario.map_seed": (int, 0),
    "scenario.extent": (list, [1000.0, 1000.0]),
    "scenario.block_size": (float, 90.0),
    "scenario.street_width": (float, 30.0),
    "scenario.max_lots": (int, 2),
    "scenario.block_offset": (float, 15.0),
    "scenario.height_min": (float, 5.0),
    "scenario.height_max": (float, 45.0),
    "scenario.bs": (list, [1000.0, 1000.0]),
    "scenario.user": (list, []),
    "scenario.h_bs": (float, 45.0),
    "scenario.h_uav": (float, 50.0),
    "scenario.h_user": (float, 0.0),
    "scenario.K": (int, 2),
    "scenario.nested_r_min": (float, 20.0),
    "scenario.nested_r_max": (float, 250.0),
    "scenario.nested_bins": (int, 360),
    "channel.alpha0": (float, 2.08),
    "channel.log10beta0": (float, -3.85),
    "channel.alpha": (list, []),
    "channel.log10beta": (list, []),
    "channel.sigma_db": (list, []),
    "channel.detector": (str, "oracle"),
    "cost.kind": (str, "df_rate"),
    "cost.p_b_dbm": (float, 33.0),
    "cost.p_u_dbm": (float, 33.0),
    "cost.noise_dbm": (float, -80.0),
    "cost.half_prelog": (bool, True),
    "search.delta": (float, REQUIRED),
    "search.max_steps": (int, 0),
    "study.seed": (int, 0),
    "study.n_users": (int, 200),
    "study.exhaustive_spacing": (float, 5.0),
    "study.prob_spacing": (float, 5.0),
    "study.prob_distance": (str, "horizontal"),
    "study.los_users": (int, 2000),
    "study.los_uav_samples": (int, 20),
    "study.edge_pct": (float, 20.0),
    "study.n_clusters": (int, 50),
    "study.cluster_size": (int, 20),
    "study.radii": (list, [0.0, 10.0, 20.0, 40.0]),
    "maps.spacing": (float, 10.0),
    "maps.p_b_dbm": (float, 30.0),
    "maps.p_u_dbm": (float, 36.0),
}


def flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, typ: type, v: Any):
    if typ is float and isinstance(v, (int, float)) and not isinstance(v, bool):
        if not math.isfinite(v):
            raise ConfigError(key, "must be finite")
        return float(v)
    if typ is int and isinstance(v, int) and not isinstance(v, bool):
        return v
    if typ in (str, bool, list) and isinstance(v, typ):
        return list(v) if typ is list else v
    raise ConfigError(key, f"expected {typ.__name__}, got {type(v).__name__}")


def resolve(raw: dict) -> dict:
    """Apply defaults, reject unknown keys and report the first missing required key."""
    flat = flatten(raw)
    for key in flat:
        if key not in SCHEMA:
            raise ConfigError(key, "unknown configuration key")
    cfg = {}
    for key, (typ, default) in SCHEMA.items():
        if key in flat:
            cfg[key] = _coerce(key, typ, flat[key])
        elif default is REQUIRED:
            raise ConfigError(key, "missing required key")
        else:
            cfg[key] = list(default) if isinstance(default, list) else default
    return cfg


def load_config(path) -> dict:
    try:
        raw = tomllib.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError("--config", f"file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("--config", f"TOML syntax error: {exc}") from exc
    return resolve(raw)


@dataclass(frozen=True)
class Scenario:
    world: str  # map | nested
    umap: Optional[UrbanMap]
    x_b: Point2
    heights: Heights
    model: SegmentModel
    cost: RelayCost
    params: SearchParams
    seed: int
    cfg: dict

    @property
    def K(self) -> int:
        return self.model.K

    def cost_of_kind(self, kind: str, p_b_dbm: Optional[float] = None, p_u_dbm: Optional[float] = None) -> RelayCost:
        c = self.cfg
        return RelayCost.from_dbm(
            kind,
            c["cost.p_b_dbm"] if p_b_dbm is None else p_b_dbm,
            c["cost.p_u_dbm"] if p_u_dbm is None else p_u_dbm,
            c["cost.noise_dbm"],
            c["cost.half_prelog"],
        )

    @property
    def user(self) -> Optional[Point2]:
        u = self.cfg["scenario.user"]
        return Point2(float(u[0]), float(u[1])) if u else None


def _pair(cfg: dict, key: str) -> tuple[float, float]:
    v = cfg[key]
    if len(v) != 2 or not all(isinstance(t, (int, float)) for t in v):
        raise ConfigError(key, "expected a two-element numeric list")
    return float(v[0]), float(v[1])


def _model(cfg: dict, K: int) -> SegmentModel:
    base = SegmentModel.two_segment_default() if K == 2 else SegmentModel.ladder(K)
    lists = {}
    for name, default in (("alpha", base.alpha), ("log10beta", base.log10beta), ("sigma_db", base.sigma_db)):
        key = f"channel.{name}"
        v = cfg[key] or list(default)
        if len(v) != K:
            raise ConfigError(key, f"needs {K} entries (one per segment), got {len(v)}")
        lists[name] = tuple(float(t) for t in v)
    try:
        return SegmentModel(lists["alpha"], lists["log10beta"], lists["sigma_db"], cfg["channel.alpha0"], cfg["channel.log10beta0"])
    except ChannelConfigError as exc:
        raise ConfigError("channel", str(exc)) from exc


def build_scenario(cfg: dict, seed: Optional[int] = None) -> Scenario:
    world = cfg["scenario.world"]
    if world not in ("map", "nested"):
        raise ConfigError("scenario.world", "must be 'map' or 'nested'")
    K = cfg["scenario.K"]
    if K < 1:
        raise ConfigError("scenario.K", "must be >= 1")
    if world == "map" and K < 2:
        raise ConfigError("scenario.K", "map worlds need K >= 2")
    if cfg["cost.kind"] not in COST_KINDS:
        raise ConfigError("cost.kind", f"must be one of {COST_KINDS}")
    if cfg["channel.detector"] not in ("oracle", "noisy"):
        raise ConfigError("channel.detector", "must be 'oracle' or 'noisy'")
    if cfg["study.prob_distance"] not in ("horizontal", "3d"):
        raise ConfigError("study.prob_distance", "must be 'horizontal' or '3d'")
    if cfg["search.delta"] <= 0:
        raise ConfigError("search.delta", "must be positive")
    try:
        heights = Heights(cfg["scenario.h_uav"], cfg["scenario.h_bs"], cfg["scenario.h_user"])
    except ValueError as exc:
        raise ConfigError("scenario.h_uav", str(exc)) from exc
    extent = _pair(cfg, "scenario.extent")
    x_b = Point2(*_pair(cfg, "scenario.bs"))
    if cfg["scenario.user"]:
        _pair(cfg, "scenario.user")

    umap = None
    if world == "map":
        if cfg["scenario.map_file"]:
            try:
                umap = UrbanMap.load(cfg["scenario.map_file"])
            except (OSError, ValueError) as exc:
                raise ConfigError("scenario.map_file", str(exc)) from exc
        else:
            spec = BlockSpec(cfg["scenario.block_size"], cfg["scenario.street_width"], cfg["scenario.max_lots"], cfg["scenario.block_offset"])
            try:
                umap = generate_map(cfg["scenario.map_seed"], extent, spec, (cfg["scenario.height_min"], cfg["scenario.height_max"]))
            except ValueError as exc:
                raise ConfigError("scenario.extent", str(exc)) from exc
        if heights.h_bs < umap.max_height:
            raise ConfigError("scenario.h_bs", f"BS at {heights.h_bs} m is below the tallest building ({umap.max_height} m)")
        x0, y0, x1, y1 = umap.extent
        if not (x0 <= x_b[0] <= x1 and y0 <= x_b[1] <= y1):
            raise ConfigError("scenario.bs", "BS must lie inside the map extent")
        extent = (x1 - x0, y1 - y0)

    model = _model(cfg, K)
    d_min = heights.uav_user_gap
    d_max = math.hypot(math.hypot(*extent), heights.uav_user_gap)
    try:
        model.check_ordering(d_min, d_max)
    except ChannelConfigError as exc:
        raise ConfigError("channel.alpha", str(exc)) from exc

    cost = RelayCost.from_dbm(cfg["cost.kind"], cfg["cost.p_b_dbm"], cfg["cost.p_u_dbm"], cfg["cost.noise_dbm"], cfg["cost.half_prelog"])
    params = SearchParams(cfg["search.delta"], cfg["search.max_steps"] or None)
    return Scenario(world, umap, x_b, heights, model, cost, params, cfg["study.seed"] if seed is None else seed, cfg)


def scenario_from_dict(raw: dict, seed: Optional[int] = None) -> Scenario:
    return build_scenario(resolve(raw), seed)
