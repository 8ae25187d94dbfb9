"""Monte Carlo studies: single users over a map, hotspot clusters, and power/capacity maps."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..baselines import (
    LosProbabilityTable,
    build_los_table,
    classify_users,
    direct_link_eval,
    exhaustive_placement,
    probabilistic_cluster_placement,
    probabilistic_placement,
    region_grid,
    simple_search_placement,
)
from ..channel import DetectorOracle, gain_bs, gain_user
from ..cost import AF_OUTAGE, DF_RATE, RelayCost, RelayProblem, VirtualUserOracle, user_throughputs
from ..geometry import Point2, RelayLink
from ..search import SearchOutcome, shaded_contour_search
from ..terrain import MapOracle, bs_link_blocked, random_street_points
from .config import ConfigError, Scenario

SCHEMES = ("proposed", "probabilistic", "simple", "exhaustive")


class StudyError(RuntimeError):
    pass


@dataclass
class ExperimentReport:
    rows: list
    summary: dict
    tables: dict = field(default_factory=dict)
    outcomes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.summary.get("length_violations", 0) == 0


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(seed ^ index)


def los_table_for(scen: Scenario) -> LosProbabilityTable:
    c = scen.cfg
    rng = np.random.default_rng([scen.seed, 0x105])
    return build_los_table(scen.umap, c["study.los_users"], c["study.los_uav_samples"], scen.heights, rng)


def _require_map(scen: Scenario):
    if scen.umap is None:
        raise ConfigError("scenario.world", "this study needs a map world")


def throughput_at(problem: RelayProblem, cost: RelayCost, x) -> float:
    """DF throughput at x with the true segment, independent of which scheme chose x."""
    link, m = problem.link, problem.model
    k = problem.oracle.segment(x)
    g_u = gain_user(x, link.x_u, k, m, link.heights)
    return float(cost.throughput(g_u, gain_bs(x, link, m)))


def search_oracle(scen: Scenario, true_oracle, rng):
    if scen.cfg["channel.detector"] == "noisy":
        return DetectorOracle(true_oracle, scen.model, true_oracle.x_u, scen.heights, rng)
    return true_oracle


def single_user_trial(scen: Scenario, table: LosProbabilityTable, index: int, keep_outcome: bool = False):
    rng = trial_rng(scen.seed, index)
    xu = random_street_points(scen.umap, 1, rng)[0]
    h = scen.heights
    link = RelayLink(Point2(*xu), scen.x_b, h)
    truth = MapOracle(scen.umap, link.x_u, h, scen.K)
    seeker = search_oracle(scen, truth, rng)
    c = scen.cfg
    df, af = scen.cost_of_kind(DF_RATE), scen.cost_of_kind(AF_OUTAGE)
    direct = direct_link_eval(link, scen.model, df, scen.umap)
    grid = region_grid(link, c["study.exhaustive_spacing"])
    segs = truth.segments(grid)

    chosen = {}
    outcomes = {}
    for cost in (df, af):
        seek = RelayProblem(link, scen.model, cost, seeker)
        true_pb = RelayProblem(link, scen.model, cost, truth)
        out = shaded_contour_search(seek, scen.params)
        outcomes[cost.kind] = out
        chosen[("proposed", cost.kind)] = out.result
        chosen[("simple", cost.kind)] = simple_search_placement(seek, scen.params.delta)
        chosen[("exhaustive", cost.kind)] = exhaustive_placement(true_pb, grid=grid, segs=segs)
        chosen[("probabilistic", cost.kind)] = probabilistic_placement(
            link, table, scen.model, cost, c["study.prob_spacing"], c["study.prob_distance"]
        )

    p_df = RelayProblem(link, scen.model, df, truth)
    p_af = RelayProblem(link, scen.model, af, truth)
    rows = []
    for scheme in SCHEMES:
        r_df, r_af = chosen[(scheme, DF_RATE)], chosen[(scheme, AF_OUTAGE)]
        row = {
            "trial": index,
            "user_x": float(xu[0]),
            "user_y": float(xu[1]),
            "L": link.L,
            "bs_link_los": int(direct.segment == 1),
            "direct_rate": direct.rate,
            "scheme": scheme,
            "x": r_df.x[0],
            "y": r_df.x[1],
            "throughput": throughput_at(p_df, df, r_df.x),
            "x_af": r_af.x[0],
            "y_af": r_af.x[1],
            "outage_ratio": p_af.true_cost(r_af.x) / direct.outage_ref,
            "traj_length": "",
            "length_bound": "",
            "within_bound": "",
        }
        if scheme == "proposed":
            o_df, o_af = outcomes[DF_RATE], outcomes[AF_OUTAGE]
            row["traj_length"] = o_df.lengths.total
            row["length_bound"] = o_df.lengths.bound
            ok = all(o.lengths.within_bound and o.lengths.branches_within for o in (o_df, o_af))
            row["within_bound"] = int(ok)
        rows.append(row)
    return (rows, outcomes) if keep_outcome else rows


def _fan_out(fn, args_list, jobs: int):
    if jobs <= 1:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futs = [pool.submit(fn, *a) for a in args_list]
        return [f.result() for f in futs]


def _cdf_rows(rows, metric: str) -> list:
    out = []
    for scheme in SCHEMES:
        vals = np.sort([r[metric] for r in rows if r["scheme"] == scheme])
        n = len(vals)
        out += [{"scheme": scheme, metric: v, "cdf": (i + 1) / n} for i, v in enumerate(vals)]
    return out


def summarize_single(rows, edge_pct: float) -> tuple[dict, list]:
    by = {s: [r for r in rows if r["scheme"] == s] for s in SCHEMES}
    n = len(by["proposed"])
    cats = classify_users([r["direct_rate"] for r in by["proposed"]], edge_pct) if n else []
    for s in SCHEMES:
        for r, cat in zip(by[s], cats):
            r["category"] = cat
    bars = []
    for s in SCHEMES:
        for cat in ("edge", "center", "all"):
            sel = [r for r in by[s] if cat == "all" or r["category"] == cat]
            if sel:
                bars.append({
                    "scheme": s, "category": cat, "n": len(sel),
                    "mean_throughput": float(np.mean([r["throughput"] for r in sel])),
                    "mean_outage_ratio": float(np.mean([r["outage_ratio"] for r in sel])),
                })
    mean_thr = {s: float(np.mean([r["throughput"] for r in by[s]])) for s in SCHEMES}
    mean_out = {s: float(np.mean([r["outage_ratio"] for r in by[s]])) for s in SCHEMES}
    diffs = np.abs(
        np.array([r["throughput"] for r in by["proposed"]]) - np.array([r["throughput"] for r in by["exhaustive"]])
    )
    summary = {
        "n_users": n,
        "mean_throughput": mean_thr,
        "mean_outage_ratio": mean_out,
        "throughput_ratio_proposed_over_probabilistic": mean_thr["proposed"] / mean_thr["probabilistic"],
        "p95_abs_diff_proposed_vs_exhaustive": float(np.percentile(diffs, 95)),
        "length_violations": int(sum(1 for r in by["proposed"] if not r["within_bound"])),
        "bs_link_los_fraction": float(np.mean([r["bs_link_los"] for r in by["proposed"]])),
    }
    return summary, bars


def run_single_user_study(scen: Scenario, jobs: int = 1, n_users: Optional[int] = None) -> ExperimentReport:
    _require_map(scen)
    n = scen.cfg["study.n_users"] if n_users is None else n_users
    if n < 1:
        raise ConfigError("study.n_users", "must be >= 1")
    table = los_table_for(scen)
    per_trial = _fan_out(single_user_trial, [(scen, table, i) for i in range(n)], jobs)
    rows = [r for tr in per_trial for r in tr]
    summary, bars = summarize_single(rows, scen.cfg["study.edge_pct"])
    return ExperimentReport(rows, summary, {"cdf": _cdf_rows(rows, "throughput"), "bars": bars, "lostable": table})


def cluster_users(umap, center, r: float, n_u: int, base: np.ndarray) -> np.ndarray:
    """First n_u outdoor points of center + r * base; shared ``base`` couples the radii."""
    if r == 0:
        return np.tile(center, (n_u, 1))
    cand = center + r * base
    ok = umap.is_outdoor(cand)
    x0, y0, x1, y1 = umap.extent
    ok &= (cand[:, 0] >= x0) & (cand[:, 0] <= x1) & (cand[:, 1] >= y0) & (cand[:, 1] <= y1)
    sel = cand[ok][:n_u]
    if len(sel) < n_u:
        raise StudyError(f"could not place {n_u} street users within {r} m of {tuple(center)}")
    return sel


def obstructed_center(scen: Scenario, rng, max_tries: int = 10000) -> np.ndarray:
    for _ in range(max_tries):
        c = random_street_points(scen.umap, 1, rng)[0]
        if bs_link_blocked(scen.umap, c, scen.x_b, scen.heights) > 0 and math.hypot(*(c - scen.x_b)) > 0:
            return c
    raise StudyError("no obstructed hotspot center found")


def cluster_trial(scen: Scenario, table: LosProbabilityTable, index: int):
    rng = trial_rng(scen.seed, index)
    c = scen.cfg
    n_u = c["study.cluster_size"]
    center = obstructed_center(scen, rng)
    ang = rng.uniform(0, 2 * math.pi, 400 * n_u)
    rad = np.sqrt(rng.uniform(0, 1, 400 * n_u))
    base = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    h = scen.heights
    df = scen.cost_of_kind(DF_RATE)
    link = RelayLink(Point2(*center), scen.x_b, h)
    single = shaded_contour_search(RelayProblem(link, scen.model, df, MapOracle(scen.umap, link.x_u, h, scen.K)), scen.params)
    rows = []
    for r in c["study.radii"]:
        users = cluster_users(scen.umap, center, float(r), n_u, base)
        truths = [MapOracle(scen.umap, Point2(*u), h, scen.K) for u in users]
        seekers = [search_oracle(scen, t, rng) for t in truths]
        virt = RelayProblem(link, scen.model, df, VirtualUserOracle(seekers))
        out = shaded_contour_search(virt, scen.params)
        prob = probabilistic_cluster_placement(link, users, table, scen.model, df, c["study.prob_spacing"], c["study.prob_distance"])
        base_row = {"cluster": index, "center_x": float(center[0]), "center_y": float(center[1]), "r_u": float(r)}
        prop_rate = float(np.mean(user_throughputs(users, out.result.x, truths, scen.model, df, h, scen.x_b)))
        rows.append({
            **base_row, "scheme": "proposed", "x": out.result.x[0], "y": out.result.x[1], "sum_rate": prop_rate,
            "within_bound": int(out.lengths.within_bound and out.lengths.branches_within),
            "matches_single_user": int(out.result.x == single.result.x) if r == 0 else "",
        })
        rows.append({
            **base_row, "scheme": "probabilistic", "x": prob.x[0], "y": prob.x[1],
            "sum_rate": float(np.mean(user_throughputs(users, prob.x, truths, scen.model, df, h, scen.x_b))),
            "within_bound": "", "matches_single_user": "",
        })
    return rows


def summarize_clusters(rows, radii) -> dict:
    per_r = []
    for r in radii:
        rec = {"r_u": float(r)}
        for s in ("proposed", "probabilistic"):
            v = np.array([x["sum_rate"] for x in rows if x["scheme"] == s and x["r_u"] == float(r)])
            rec[f"{s}_mean"] = float(v.mean())
            rec[f"{s}_se"] = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        per_r.append(rec)
    nonincreasing = all(
        b["proposed_mean"] <= a["proposed_mean"] + max(a["proposed_se"], b["proposed_se"])
        for a, b in zip(per_r, per_r[1:])
    )
    r0 = [x["matches_single_user"] for x in rows if x["scheme"] == "proposed" and x["r_u"] == 0.0]
    return {
        "n_clusters": len({x["cluster"] for x in rows}),
        "per_radius": per_r,
        "proposed_nonincreasing_within_se": nonincreasing,
        "proposed_ge_probabilistic_all_radii": all(p["proposed_mean"] >= p["probabilistic_mean"] for p in per_r),
        "r0_single_user_match_rate": float(np.mean(r0)) if r0 else None,
        "length_violations": int(sum(1 for x in rows if x["scheme"] == "proposed" and not x["within_bound"])),
    }


def run_cluster_study(scen: Scenario, jobs: int = 1, n_clusters: Optional[int] = None) -> ExperimentReport:
    _require_map(scen)
    if scen.K != 2:
        raise ConfigError("scenario.K", "the cluster study compares against a two-segment baseline; use K = 2")
    n = scen.cfg["study.n_clusters"] if n_clusters is None else n_clusters
    if n < 1:
        raise ConfigError("study.n_clusters", "must be >= 1")
    if scen.cfg["study.cluster_size"] < 1:
        raise ConfigError("study.cluster_size", "must be >= 1")
    if any(r < 0 for r in scen.cfg["study.radii"]) or not scen.cfg["study.radii"]:
        raise ConfigError("study.radii", "need a nonempty list of nonnegative radii")
    table = los_table_for(scen)
    per_trial = _fan_out(cluster_trial, [(scen, table, i) for i in range(n)], jobs)
    rows = [r for tr in per_trial for r in tr]
    return ExperimentReport(rows, summarize_clusters(rows, scen.cfg["study.radii"]), {"lostable": table})


@dataclass
class PowerMaps:
    xs: np.ndarray
    ys: np.ndarray
    segment: np.ndarray  # (ny, nx)
    power_dbm: np.ndarray
    capacity: np.ndarray
    user: Point2
    outcome: SearchOutcome
    x_hat_capacity: float


def emit_power_capacity_maps(scen: Scenario, user: Optional[Point2] = None) -> PowerMaps:
    """Received UAV-user power and DF capacity on a cell-centre grid, plus one search path."""
    _require_map(scen)
    c = scen.cfg
    if user is None:
        user = scen.user
    if user is None:
        user = Point2(*random_street_points(scen.umap, 1, trial_rng(scen.seed, 0))[0])
    if not scen.umap.is_outdoor([user])[0]:
        raise ConfigError("scenario.user", "user must stand on a street")
    s = c["maps.spacing"]
    if s <= 0:
        raise ConfigError("maps.spacing", "must be positive")
    x0, y0, x1, y1 = scen.umap.extent
    xs = np.arange(x0 + s / 2, x1, s)
    ys = np.arange(y0 + s / 2, y1, s)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    h = scen.heights
    link = RelayLink(user, scen.x_b, h)
    oracle = MapOracle(scen.umap, link.x_u, h, scen.K)
    cost = scen.cost_of_kind(DF_RATE, c["maps.p_b_dbm"], c["maps.p_u_dbm"])
    pb = RelayProblem(link, scen.model, cost, oracle)
    segs = oracle.segments(pts)
    m = scen.model
    du = np.sqrt((pts[:, 0] - user[0]) ** 2 + (pts[:, 1] - user[1]) ** 2 + h.uav_user_gap**2)
    db = np.sqrt((pts[:, 0] - scen.x_b[0]) ** 2 + (pts[:, 1] - scen.x_b[1]) ** 2 + h.uav_bs_gap**2)
    g_u = 10.0 ** np.asarray(m.log10beta)[segs - 1] * du ** (-np.asarray(m.alpha)[segs - 1])
    g_b = m.beta0 * db ** (-m.alpha0)
    power = c["maps.p_u_dbm"] + 10 * np.log10(g_u)
    cap = cost.throughput(g_u, g_b)
    out = shaded_contour_search(pb, scen.params)
    shape = X.shape
    return PowerMaps(
        xs, ys, segs.reshape(shape), power.reshape(shape), np.asarray(cap).reshape(shape),
        user, out, throughput_at(pb, cost, out.result.x),
    )
