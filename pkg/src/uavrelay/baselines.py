"""Comparison placement schemes and the direct BS-user reference link."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import SegmentModel
from .cost import RelayCost, RelayProblem
from .geometry import Heights, Point2, RelayLink, elevation_angle_many
from .search import PlacementResult, axis_scan
from .terrain import UrbanMap, bs_link_blocked, los_blocked_many, random_street_points

N_PHI_BINS = 64
REFERENCE_DISTANCE = 1.0


@dataclass(frozen=True)
class LosProbabilityTable:
    """Empirical LOS probability per elevation-angle bin; NaN marks an empty bin."""

    edges: np.ndarray
    p_los: np.ndarray
    n_samples: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, float)
        p = np.asarray(self.p_los, float)
        n = np.asarray(self.n_samples, np.int64)
        if e.ndim != 1 or len(e) != len(p) + 1 or len(n) != len(p):
            raise ValueError("need len(edges) == len(p_los) + 1 == len(n_samples) + 1")
        if np.any(np.diff(e) <= 0):
            raise ValueError("bin edges must increase")
        ok = ~np.isnan(p)
        if np.any((p[ok] < 0) | (p[ok] > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        if not ok.any():
            raise ValueError("table has no populated bins")
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "p_los", p)
        object.__setattr__(self, "n_samples", n)

    @classmethod
    def constant(cls, p: float, n_bins: int = N_PHI_BINS) -> "LosProbabilityTable":
        return cls(np.linspace(0, math.pi / 2, n_bins + 1), np.full(n_bins, float(p)), np.ones(n_bins, np.int64))

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    def __call__(self, phi):
        """Linear interpolation between populated bin centres, flat beyond the ends."""
        ok = ~np.isnan(self.p_los)
        return np.interp(phi, self.centers[ok], self.p_los[ok])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["phi_low_rad", "phi_high_rad", "p_los", "n_samples"])
        for lo, hi, p, n in zip(self.edges[:-1], self.edges[1:], self.p_los, self.n_samples):
            w.writerow([f"{lo:.6g}", f"{hi:.6g}", "" if np.isnan(p) else f"{p:.6g}", int(n)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LosProbabilityTable":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise ValueError("empty LOS table")
        lo = [float(r["phi_low_rad"]) for r in rows]
        edges = np.array(lo + [float(rows[-1]["phi_high_rad"])])
        p = np.array([float(r["p_los"]) if r["p_los"] else np.nan for r in rows])
        n = np.array([int(r["n_samples"]) for r in rows])
        return cls(edges, p, n)

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "LosProbabilityTable":
        return cls.from_csv(Path(path).read_text())


def sample_uav_offsets(rng: np.random.Generator, n: int, gap: float) -> np.ndarray:
    """Horizontal UAV offsets with elevation uniform on (0, pi/2] and uniform azimuth."""
    phi = math.pi / 2 - rng.uniform(0.0, math.pi / 2, n)
    psi = rng.uniform(0.0, 2 * math.pi, n)
    r = gap / np.tan(np.maximum(phi, 1e-3))
    return np.column_stack([r * np.cos(psi), r * np.sin(psi)])


def build_los_table(
    umap: UrbanMap,
    n_users: int,
    n_uav_samples: int,
    h: Heights,
    rng: np.random.Generator,
    n_bins: int = N_PHI_BINS,
) -> LosProbabilityTable:
    """Count LOS rays from random street users to random UAV positions per elevation bin.

    UAV positions are drawn with elevation uniform over the bins so every bin
    gets data; draws landing outside the map extent are discarded.
    """
    if n_users < 1 or n_uav_samples < 1:
        raise ValueError("n_users and n_uav_samples must be >= 1")
    users = random_street_points(umap, n_users, rng)
    x0, y0, x1, y1 = umap.extent
    a_all, b_all = [], []
    for xu in users:
        uav = xu + sample_uav_offsets(rng, n_uav_samples, h.uav_user_gap)
        keep = (uav[:, 0] >= x0) & (uav[:, 0] <= x1) & (uav[:, 1] >= y0) & (uav[:, 1] <= y1)
        uav = uav[keep]
        a_all.append(np.tile([xu[0], xu[1], h.h_user], (len(uav), 1)))
        b_all.append(np.column_stack([uav, np.full(len(uav), h.h_uav)]))
    a = np.vstack(a_all)
    b = np.vstack(b_all)
    return los_table_from_rays(umap, a, b, h, n_bins)


def los_table_from_rays(umap: UrbanMap, a: np.ndarray, b: np.ndarray, h: Heights, n_bins: int = N_PHI_BINS):
    los = los_blocked_many(umap, a, b) == 0
    phi = np.arctan2(h.uav_user_gap, np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]))
    edges = np.linspace(0.0, math.pi / 2, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, phi, side="left") - 1, 0, n_bins - 1)
    n = np.bincount(idx, minlength=n_bins)
    hits = np.bincount(idx, weights=los.astype(float), minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(n > 0, hits / np.maximum(n, 1), np.nan)
    return LosProbabilityTable(edges, p, n)


def region_grid(link: RelayLink, spacing: float) -> np.ndarray:
    """World-aligned grid points (multiples of ``spacing``) inside the closed half-disk region.

    The region is the disk with the BS-user segment as diameter, the set
    {rho <= L cos(theta)}. The user and BS positions are always included so
    the set is never empty.
    """
    if not spacing > 0:
        raise ValueError("grid spacing must be positive")
    c = 0.5 * (np.asarray(link.x_u) + np.asarray(link.x_b))
    r = 0.5 * link.L
    i0, i1 = math.floor((c[0] - r) / spacing), math.ceil((c[0] + r) / spacing)
    j0, j1 = math.floor((c[1] - r) / spacing), math.ceil((c[1] + r) / spacing)
    gx = np.arange(i0, i1 + 1) * spacing
    gy = np.arange(j0, j1 + 1) * spacing
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    inside = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) <= r * (1 + 1e-12) + 1e-9
    return np.vstack([pts[inside], [link.x_u, link.x_b]])


def exhaustive_placement(
    problem: RelayProblem, spacing: float = 5.0, grid: Optional[np.ndarray] = None, segs: Optional[np.ndarray] = None
) -> PlacementResult:
    """Grid argmin of the true cost; ``segs`` may carry precomputed oracle answers for ``grid``."""
    pts = region_grid(problem.link, spacing) if grid is None else np.atleast_2d(grid)
    costs = problem.true_costs(pts, segs)
    i = int(np.argmin(costs))
    return PlacementResult("exhaustive", Point2(*map(float, pts[i])), float(costs[i]), meta={"n_grid": len(pts)})


def simple_search_placement(problem: RelayProblem, delta: float = 5.0, tol: float = 1e-3) -> PlacementResult:
    """Axis-only search: best true cost among the per-partition critical points."""
    scan = axis_scan(problem, delta, tol)
    best = None
    for r in scan.critical:
        if r is None:
            continue
        x = problem.link.point(r, 0.0)
        f = problem.true_cost(x)
        if best is None or f < best[1]:
            best = (x, f)
    return PlacementResult("simple", best[0], best[1], problem.link.L, {"critical": scan.critical})


def averaged_user_gain(xs, x_u, table: LosProbabilityTable, model: SegmentModel, h: Heights, distance: str = "horizontal"):
    """LOS-probability-weighted mix of the segment-1 and segment-2 gains.

    Horizontal distances are floored at the 1 m reference distance so the
    point right above the user keeps a finite gain.
    """
    xs = np.atleast_2d(np.asarray(xs, float))
    r = np.hypot(xs[:, 0] - x_u[0], xs[:, 1] - x_u[1])
    if distance == "3d":
        r = np.sqrt(r * r + h.uav_user_gap**2)
    elif distance == "horizontal":
        r = np.maximum(r, REFERENCE_DISTANCE)
    else:
        raise ValueError("distance must be 'horizontal' or '3d'")
    p = table(elevation_angle_many(xs, x_u, h))
    return p * model.beta(1) * r ** (-model.alpha[0]) + (1 - p) * model.beta(2) * r ** (-model.alpha[1])


def _bs_gain(xs, link: RelayLink, model: SegmentModel):
    h = link.heights
    db = np.sqrt((xs[:, 0] - link.x_b[0]) ** 2 + (xs[:, 1] - link.x_b[1]) ** 2 + h.uav_bs_gap**2)
    return model.beta0 * db ** (-model.alpha0)


def _finite_argmin(vals: np.ndarray) -> int:
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("non-finite cost on the probabilistic grid")
    return int(np.argmin(vals))


def _require_two_segments(model: SegmentModel):
    if model.K != 2:
        raise ValueError(f"the probabilistic baseline is defined for K = 2, got K = {model.K}")


def probabilistic_placement(
    link: RelayLink,
    table: LosProbabilityTable,
    model: SegmentModel,
    cost: RelayCost,
    spacing: float = 5.0,
    distance: str = "horizontal",
) -> PlacementResult:
    _require_two_segments(model)
    pts = region_grid(link, spacing)
    g_u = averaged_user_gain(pts, link.x_u, table, model, link.heights, distance)
    vals = np.asarray(cost(g_u, _bs_gain(pts, link, model)), float)
    i = _finite_argmin(vals)
    return PlacementResult("probabilistic", Point2(*map(float, pts[i])), float(vals[i]))


def probabilistic_cluster_placement(
    link: RelayLink,
    users,
    table: LosProbabilityTable,
    model: SegmentModel,
    cost: RelayCost,
    spacing: float = 5.0,
    distance: str = "horizontal",
) -> PlacementResult:
    """Minimise the user-averaged cost under the LOS-probability channel; ``link`` is anchored at the hotspot."""
    _require_two_segments(model)
    pts = region_grid(link, spacing)
    g_b = _bs_gain(pts, link, model)
    total = np.zeros(len(pts))
    users = np.atleast_2d(np.asarray(users, float))
    for xu in users:
        g_u = averaged_user_gain(pts, xu, table, model, link.heights, distance)
        total += np.asarray(cost(g_u, g_b), float)
    vals = total / len(users)
    i = _finite_argmin(vals)
    return PlacementResult("probabilistic", Point2(*map(float, pts[i])), float(vals[i]))


@dataclass(frozen=True)
class DirectLink:
    segment: int
    gain: float
    rate: float  # log2(1 + P_b g0), single hop
    outage_ref: float  # f0 = 1 / (P_b g0)


def direct_link_eval(link: RelayLink, model: SegmentModel, cost: RelayCost, umap: Optional[UrbanMap]) -> DirectLink:
    """BS-user link through the segmented model, segment from the map's BS-user ray."""
    h = link.heights
    blocked = 0 if umap is None else bs_link_blocked(umap, link.x_u, link.x_b, h)
    k = min(model.K, 1 + blocked)
    d = math.sqrt(link.L**2 + (h.h_bs - h.h_user) ** 2)
    g0 = model.beta(k) * d ** (-model.alpha[k - 1])
    return DirectLink(k, g0, math.log2(1.0 + cost.p_b * g0), 1.0 / (cost.p_b * g0))


def classify_users(direct_rates, pct: float = 20.0) -> np.ndarray:
    """'edge' at or below the pct-th percentile, 'center' at or above 100 - pct, else 'middle'."""
    r = np.asarray(direct_rates, float)
    lo, hi = np.percentile(r, [pct, 100.0 - pct])
    out = np.full(len(r), "middle", dtype=object)
    out[r >= hi] = "center"
    out[r <= lo] = "edge"
    return out
