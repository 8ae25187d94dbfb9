"""Command-line entry point.

Exit status 0 on success, 1 on configuration/validation errors, 2 on runtime
failures. Errors also produce one JSON line on stderr prefixed ``error: ``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..cost import RelayProblem
from ..geometry import Point2, RelayLink
from ..search import SearchError, shaded_contour_search
from ..terrain import MapOracle, NestedBoundaryField, NestedOracle, random_street_points
from . import report
from .config import ConfigError, Scenario, build_scenario, load_config
from .study import (
    emit_power_capacity_maps,
    los_table_for,
    run_cluster_study,
    run_single_user_study,
    search_oracle,
    throughput_at,
    trial_rng,
)
from .verify import run_verify

log = logging.getLogger("uavrelay")


def _error(code: str, message: str, key: str = "") -> None:
    rec = {"code": code, "message": message}
    if key:
        rec["key"] = key
    print("error: " + json.dumps(rec, sort_keys=True), file=sys.stderr)


def _scenario(args) -> Scenario:
    if not args.config:
        raise ConfigError("--config", "a config file is required for this command")
    return build_scenario(load_config(args.config), args.seed)


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_map(args) -> int:
    scen = _scenario(args)
    if scen.umap is None:
        raise ConfigError("scenario.world", "the map command needs a map world")
    path = _out(args) / "map.txt"
    scen.umap.save(path)
    print(f"wrote {path} ({len(scen.umap.buildings)} buildings)")
    return 0


def cmd_lostable(args) -> int:
    scen = _scenario(args)
    if scen.umap is None:
        raise ConfigError("scenario.world", "the lostable command needs a map world")
    table = los_table_for(scen)
    path = _out(args) / "lostable.csv"
    table.save(path)
    print(f"wrote {path}")
    return 0


def _single_problem(scen: Scenario):
    rng = trial_rng(scen.seed, 0)
    h = scen.heights
    if scen.world == "map":
        user = scen.user or Point2(*random_street_points(scen.umap, 1, rng)[0])
        if not scen.umap.is_outdoor([user])[0]:
            raise ConfigError("scenario.user", "user must stand on a street")
        link = RelayLink(user, scen.x_b, h)
        truth = MapOracle(scen.umap, link.x_u, h, scen.K)
    else:
        user = scen.user or Point2(0.0, 0.0)
        link = RelayLink(user, scen.x_b, h)
        c = scen.cfg
        fld = NestedBoundaryField.random(rng, scen.K, c["scenario.nested_r_min"], c["scenario.nested_r_max"], c["scenario.nested_bins"])
        truth = NestedOracle(fld, link.x_u)
    seeker = search_oracle(scen, truth, rng) if scen.world == "map" else truth
    return RelayProblem(link, scen.model, scen.cost, seeker), RelayProblem(link, scen.model, scen.cost, truth)


def cmd_search(args) -> int:
    scen = _scenario(args)
    pb, truth = _single_problem(scen)
    out_dir = _out(args)
    try:
        outcome = shaded_contour_search(pb, scen.params)
    except SearchError as exc:
        report.write_csv(out_dir / "trajectory_partial.csv", report.trajectory_rows([exc.trajectory]), report.TRAJECTORY_COLUMNS)
        raise
    report.write_csv(out_dir / "trajectory.csv", report.trajectory_rows(outcome.trajectories), report.TRAJECTORY_COLUMNS)
    x = outcome.result.x
    lengths = outcome.lengths
    summary = {
        "user": list(pb.link.x_u),
        "bs": list(pb.link.x_b),
        "L": pb.link.L,
        "cost_kind": scen.cost.kind,
        "x_hat": list(x),
        "f_min": outcome.result.cost,
        "true_cost_at_x_hat": truth.true_cost(x),
        "throughput_at_x_hat": throughput_at(truth, scen.cost, x),
        "critical_points": outcome.critical,
        "trajectory_length": lengths.total,
        "per_branch_length": lengths.per_branch,
        "length_bound": lengths.bound,
        "within_bound": lengths.within_bound,
        "branches_within": lengths.branches_within,
        "stats": outcome.stats,
    }
    report.write_json(out_dir / "result.json", summary)
    if scen.umap is not None:
        paths = [np.array([(w.x, w.y) for w in t.waypoints]) for t in outcome.trajectories if t.phase != "axis"]
        axis = np.array([pb.link.x_u, pb.link.x_b])
        svg = report.svg_heatmap(
            None, None, None, 1.0, scen.umap.extent,
            buildings=scen.umap.boxes, paths=[axis] + paths,
            markers=[(pb.link.x_u[0], pb.link.x_u[1], "#ffffff"), (pb.link.x_b[0], pb.link.x_b[1], "#ff0000"), (x[0], x[1], "#a020f0")],
        )
        (out_dir / "trajectory.svg").write_text(svg)
    print(json.dumps(report._jsonable({"x_hat": list(x), "f_min": outcome.result.cost, "within_bound": lengths.within_bound})))
    if not (lengths.within_bound and lengths.branches_within):
        _error("length_bound", "trajectory length bound violated")
        return 2
    return 0


def cmd_study(args) -> int:
    scen = _scenario(args)
    out_dir = _out(args)
    if args.kind == "single":
        rep = run_single_user_study(scen, jobs=args.jobs)
        report.write_csv(out_dir / "results.csv", rep.rows)
        report.write_csv(out_dir / "cdf.csv", rep.tables["cdf"])
        report.write_csv(out_dir / "bars.csv", rep.tables["bars"])
    else:
        rep = run_cluster_study(scen, jobs=args.jobs)
        report.write_csv(out_dir / "cluster_results.csv", rep.rows)
        report.write_csv(out_dir / "cluster_summary.csv", rep.summary["per_radius"])
    rep.tables["lostable"].save(out_dir / "lostable.csv")
    report.write_json(out_dir / "summary.json", rep.summary)
    print(json.dumps(report._jsonable(rep.summary), sort_keys=True))
    if not rep.ok:
        _error("length_bound", f"{rep.summary['length_violations']} trajectories exceeded the length bound")
        return 2
    return 0


def cmd_maps(args) -> int:
    scen = _scenario(args)
    out_dir = _out(args)
    pm = emit_power_capacity_maps(scen)
    X, Y = np.meshgrid(pm.xs, pm.ys)
    rows = [
        {"x": a, "y": b, "segment": int(s), "power_dbm": p, "capacity": c}
        for a, b, s, p, c in zip(X.ravel(), Y.ravel(), pm.segment.ravel(), pm.power_dbm.ravel(), pm.capacity.ravel())
    ]
    report.write_csv(out_dir / "power_capacity.csv", rows)
    report.write_csv(out_dir / "trajectory.csv", report.trajectory_rows(pm.outcome.trajectories), report.TRAJECTORY_COLUMNS)
    spacing = scen.cfg["maps.spacing"]
    x_hat = pm.outcome.result.x
    marks = [(pm.user[0], pm.user[1], "#ffffff"), (scen.x_b[0], scen.x_b[1], "#ff0000")]
    paths = [np.array([(w.x, w.y) for w in t.waypoints]) for t in pm.outcome.trajectories if t.phase != "axis"]
    (out_dir / "power_map.svg").write_text(
        report.svg_heatmap(pm.power_dbm, pm.xs, pm.ys, spacing, scen.umap.extent, scen.umap.boxes, markers=marks)
    )
    (out_dir / "capacity_map.svg").write_text(
        report.svg_heatmap(
            pm.capacity, pm.xs, pm.ys, spacing, scen.umap.extent, scen.umap.boxes,
            paths=paths, markers=marks + [(x_hat[0], x_hat[1], "#a020f0")],
        )
    )
    report.write_json(out_dir / "maps_summary.json", {
        "user": list(pm.user), "x_hat": list(x_hat), "capacity_at_x_hat": pm.x_hat_capacity,
        "max_grid_capacity": float(np.max(pm.capacity)),
    })
    print(f"wrote maps to {out_dir}")
    return 0


def cmd_verify(args) -> int:
    seed = args.seed if args.seed is not None else 0
    if args.config:
        seed = build_scenario(load_config(args.config), args.seed).seed
    results = run_verify(seed, n_worlds=args.worlds, quick=args.quick)
    failed = 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
        failed += not r.passed
    if args.out:
        report.write_json(_out(args) / "verify.json", [r.__dict__ for r in results])
    if failed:
        _error("verify", f"{failed} property checks failed")
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML scenario file")
    common.add_argument("--seed", type=int, help="master seed, overrides study.seed")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for studies")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="uavrelay", description="UAV relay placement simulator", parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("map", parents=[common], help="generate and serialise the urban map").set_defaults(fn=cmd_map)
    sub.add_parser("lostable", parents=[common], help="build the elevation-angle LOS table").set_defaults(fn=cmd_lostable)
    sub.add_parser("search", parents=[common], help="run one placement search").set_defaults(fn=cmd_search)
    st = sub.add_parser("study", parents=[common], help="Monte Carlo studies")
    st.add_argument("kind", choices=["single", "cluster"])
    st.set_defaults(fn=cmd_study)
    sub.add_parser("maps", parents=[common], help="power and capacity maps with a search path").set_defaults(fn=cmd_maps)
    vf = sub.add_parser("verify", parents=[common], help="run the property suites")
    vf.add_argument("--worlds", type=int, default=30, help="nested worlds for trajectory checks")
    vf.add_argument("--quick", action="store_true", help="smaller sample counts")
    vf.set_defaults(fn=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and args.seed < 0:
        _error("config", "seed must be a nonnegative integer", "--seed")
        return 1
    if args.jobs < 1:
        _error("config", "--jobs must be >= 1", "--jobs")
        return 1
    try:
        return args.fn(args)
    except ConfigError as exc:
        _error("config", str(exc), exc.key)
        return 1
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        log.debug("runtime failure", exc_info=True)
        _error("runtime", f"{type(exc).__name__}: {exc}")
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
