"""Shaded-contour exploration for the relay position.

The UAV scans the BS-user axis for per-partition critical points, then for
each virtual LOS/NLOS partition k runs a right and a left branch: radial
steps while inside segments 1..k, contour-following steps of F_k otherwise,
until the half-disk boundary or a non-negative radial derivative is hit.
The best true cost seen anywhere is kept as the track record.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq

from .cost import FictitiousCost, RelayProblem
from .geometry import Point2, RelayLink, from_polar_many

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2
BRANCH_LENGTH_FACTOR = 1.21
_ZERO_DTHETA = 1e-12


def length_bound(K: int, L: float) -> float:
    return (2.4 * K - 1.4) * L


def required_max_steps(K: int, L: float, delta: float) -> int:
    return int(math.ceil(4.0 * length_bound(K, L) / delta))


@dataclass(frozen=True)
class SearchParams:
    delta: float = 5.0
    max_steps: Optional[int] = None
    contour_rtol: float = 1e-6
    axis_tol: float = 1e-3

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("step size delta must be positive")

    def step_cap(self, K: int, L: float) -> int:
        need = required_max_steps(K, L, self.delta) + 16
        if self.max_steps is None:
            return need
        if self.max_steps < required_max_steps(K, L, self.delta):
            raise ValueError(
                f"max_steps={self.max_steps} below the trajectory-length cap "
                f"{required_max_steps(K, L, self.delta)} for L={L:.1f}"
            )
        return self.max_steps


class Waypoint(NamedTuple):
    x: float
    y: float
    rho: float
    theta: float
    segment: int
    cost: float
    f_min: float


@dataclass
class Trajectory:
    phase: str  # axis | right | left
    partition_k: int
    waypoints: list = field(default_factory=list)
    anchor: Optional[Point2] = None
    stop_reason: str = ""

    @property
    def length(self) -> float:
        pts = [(w.x, w.y) for w in self.waypoints]
        if self.anchor is not None:
            pts.insert(0, tuple(self.anchor))
        if len(pts) < 2:
            return 0.0
        a = np.asarray(pts)
        return float(np.hypot(*np.diff(a, axis=0).T).sum())

    def chords(self) -> np.ndarray:
        a = np.asarray([(w.x, w.y) for w in self.waypoints]).reshape(-1, 2)
        return np.hypot(*np.diff(a, axis=0).T) if len(a) > 1 else np.zeros(0)


@dataclass
class TrackRecord:
    f_min: float = math.inf
    x_hat: Optional[Point2] = None

    def offer(self, f: float, x) -> bool:
        # first-found wins on ties
        if f < self.f_min:
            self.f_min = f
            self.x_hat = Point2(float(x[0]), float(x[1]))
            return True
        return False


@dataclass
class PlacementResult:
    scheme: str
    x: Point2
    cost: float
    trajectory_length: float = 0.0
    meta: dict = field(default_factory=dict)


class SearchError(RuntimeError):
    """A branch hit its step cap; carries the partial trajectory for diagnosis."""

    def __init__(self, message: str, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


def golden_section_min(f, a: float, b: float, tol: float = 1e-3) -> tuple[float, float]:
    """Minimise a unimodal f on [a, b]; endpoints are compared too."""
    a, b = min(a, b), max(a, b)
    best = min(((f(a), a), (f(b), b)))
    if b - a > tol:
        c = b - INV_PHI * (b - a)
        d = a + INV_PHI * (b - a)
        fc, fd = f(c), f(d)
        while b - a > tol:
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - INV_PHI * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + INV_PHI * (b - a)
                fd = f(d)
        mid = 0.5 * (a + b)
        best = min(best, (fc, c), (fd, d), (f(mid), mid))
    return best[1], best[0]


@dataclass
class AxisScan:
    rho: np.ndarray
    segments: np.ndarray
    intervals: list  # (rho_lo, rho_hi, segment), closed, all points inside share the segment
    critical: list  # rho_k^0 for k = 1..K, None when the constraint set is empty


def _refine_boundary(oracle, link: RelayLink, lo: float, hi: float, seg_lo: int, tol: float):
    """Bisect [lo, hi] for the last rho still in seg_lo and the first past it."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if oracle.segment(link.point(mid, 0.0)) == seg_lo:
            lo = mid
        else:
            hi = mid
    return lo, hi


def axis_scan(problem: RelayProblem, delta: float, tol: float = 1e-3) -> AxisScan:
    link, oracle, F = problem.link, problem.oracle, problem.F
    L = link.L
    n = max(1, int(math.ceil(L / delta)))
    rho = np.minimum(np.arange(n + 1) * delta, L)
    segs = np.asarray(oracle.segments(from_polar_many(rho, np.zeros_like(rho), link.x_u, link.x_b)))
    intervals = []
    start = 0.0
    for i in range(len(rho) - 1):
        if segs[i + 1] != segs[i]:
            lo, hi = _refine_boundary(oracle, link, rho[i], rho[i + 1], segs[i], tol)
            intervals.append((start, lo, int(segs[i])))
            start = hi
    intervals.append((start, L, int(segs[-1])))

    K = problem.K
    critical = []
    for k in range(1, K + 1):
        allowed = [(a, b) for a, b, s in intervals if (s <= k if k < K else s == K)]
        best = None
        for a, b in allowed:
            r, v = golden_section_min(lambda t: F.value(k, t, 0.0), a, b, tol)
            if best is None or v < best[1]:
                best = (r, v)
        critical.append(None if best is None else float(best[0]))
    return AxisScan(rho, segs, intervals, critical)


def axis_critical_points(problem: RelayProblem, delta: float = 1.0, tol: float = 1e-3) -> list:
    return axis_scan(problem, delta, tol).critical


def contour_direction(link: RelayLink, rho: float, theta: float, d_rho: float, d_theta: float) -> Point2:
    """Unit step direction that keeps F_k constant to first order with d(rho) > 0."""
    w = -rho * d_rho / d_theta
    n = math.hypot(1.0, w)
    er = link.radial(theta)
    et = link.tangential(theta)
    a, b = 1.0 / n, w / n
    return Point2(a * er[0] + b * et[0], a * er[1] + b * et[1])


@dataclass
class ContourStep:
    x: Point2
    rho: float
    theta: float
    projected: bool
    level_error: float


def contour_step(
    F: FictitiousCost,
    k: int,
    rho: float,
    theta: float,
    grad: tuple[float, float],
    delta: float,
    level: float,
    rtol: float = 1e-6,
) -> Optional[ContourStep]:
    """One chord of length delta along the F_k = level contour, moving away from the user.

    The first-order direction is corrected by rotating the chord about the
    current point until it lands back on the level set. Returns None when the
    theta-derivative vanishes or no outward landing point exists; the caller
    then takes a radial step.
    """
    d_rho, d_theta = grad
    if abs(d_theta) < _ZERO_DTHETA:
        return None
    link = F.link
    x0 = link.point(rho, theta)
    d = contour_direction(link, rho, theta, d_rho, d_theta)
    scale = max(abs(level), 1e-300)

    def land(psi):
        c, s = math.cos(psi), math.sin(psi)
        return Point2(x0[0] + delta * (c * d[0] - s * d[1]), x0[1] + delta * (s * d[0] + c * d[1]))

    def g(psi):
        return F.at_point(k, land(psi)) - level

    def accept(psi):
        p = land(psi)
        pr, pt = link.polar(p)
        if pr > rho and abs(pt) >= abs(theta) * (1 - 1e-12) and pt * theta >= 0:
            return ContourStep(p, pr, pt, True, abs(F.value(k, pr, pt) - level) / scale)
        return None

    g0 = g(0.0)
    if abs(g0) <= rtol * scale:
        return accept(0.0)
    brackets = []
    for sign in (1.0, -1.0):
        prev_psi, prev_g = 0.0, g0
        psi = 1e-6
        while psi <= math.pi / 2:
            gv = g(sign * psi)
            if (gv > 0) != (prev_g > 0):
                brackets.append((prev_psi, sign * psi, abs(psi)))
                break
            prev_psi, prev_g = sign * psi, gv
            psi *= 2.0
    for lo, hi, _ in sorted(brackets, key=lambda b: b[2]):
        root = brentq(g, min(lo, hi), max(lo, hi), xtol=1e-15, rtol=1e-15, maxiter=200)
        step = accept(root)
        if step is not None and step.level_error <= rtol:
            return step
    return None


def branch_search(
    problem: RelayProblem,
    rho0: float,
    side: int,
    k: int,
    params: SearchParams,
    record: TrackRecord,
    stats: Optional[dict] = None,
) -> Trajectory:
    """Explore one side of the axis for virtual partition k, updating ``record``."""
    link, oracle, F = problem.link, problem.oracle, problem.F
    delta = params.delta
    L = link.L
    cap = params.step_cap(problem.K, L)
    stats = {} if stats is None else stats
    phase = "right" if side > 0 else "left"
    theta = side * (delta / rho0 if rho0 >= delta else math.pi / 64)
    rho = rho0
    anchor = link.point(rho0, 0.0)
    x = link.point(rho, theta)
    traj = Trajectory(phase, k, anchor=anchor)

    def visit(x, rho, theta):
        seg = oracle.segment(x)
        f = F.value(seg, rho, theta)
        record.offer(f, x)
        traj.waypoints.append(Waypoint(x[0], x[1], rho, theta, seg, f, record.f_min))
        return seg

    seg = visit(x, rho, theta)
    level = None
    steps = 0
    while True:
        if rho >= L * math.cos(theta):
            traj.stop_reason = "region"
            break
        grad = F.grad(k, rho, theta) if rho > 0 else None
        if grad is not None and grad[0] >= 0:
            traj.stop_reason = "derivative"
            break
        if steps >= cap:
            raise SearchError(f"{phase} branch k={k} exceeded {cap} steps", traj)
        step = None
        if seg > k:
            if level is None:
                level = F.value(k, rho, theta)
            if grad is not None:
                step = contour_step(F, k, rho, theta, grad, delta, level, params.contour_rtol)
            if step is None:
                stats["radial_fallbacks"] = stats.get("radial_fallbacks", 0) + 1
                log.debug("contour step unavailable at rho=%.3f theta=%.6f; radial step", rho, theta)
                level = None
        else:
            level = None
        if step is not None:
            x, rho, theta = step.x, step.rho, step.theta
            stats["contour_steps"] = stats.get("contour_steps", 0) + 1
            stats["max_level_error"] = max(stats.get("max_level_error", 0.0), step.level_error)
        else:
            rho = rho + delta
            x = link.point(rho, theta)
        steps += 1
        seg = visit(x, rho, theta)
    return traj


@dataclass
class LengthReport:
    total: float
    axis: float
    per_branch: list
    bound: float
    branch_bound: float
    within_bound: bool
    branches_within: bool


def trajectory_length_report(trajectories, K: int, L: float) -> LengthReport:
    axis = sum(t.length for t in trajectories if t.phase == "axis")
    branches = [t.length for t in trajectories if t.phase != "axis"]
    total = axis + sum(branches)
    bound = length_bound(K, L)
    bb = BRANCH_LENGTH_FACTOR * L
    return LengthReport(
        total, axis, branches, bound, bb,
        total <= bound * (1 + 1e-12), all(b <= bb for b in branches),
    )


@dataclass
class SearchOutcome:
    result: PlacementResult
    record: TrackRecord
    trajectories: list
    critical: list
    lengths: LengthReport
    stats: dict


def _axis_trajectory(problem: RelayProblem, scan: AxisScan) -> Trajectory:
    """UAV flies from the BS down to the user, sampling segments."""
    link = problem.link
    traj = Trajectory("axis", 0)
    for r, s in zip(scan.rho[::-1], scan.segments[::-1]):
        p = link.point(float(r), 0.0)
        f = problem.F.value(int(s), float(r), 0.0)
        traj.waypoints.append(Waypoint(p[0], p[1], float(r), 0.0, int(s), f, math.nan))
    return traj


def shaded_contour_search(problem: RelayProblem, params: SearchParams = SearchParams()) -> SearchOutcome:
    K = problem.K
    link = problem.link
    scan = axis_scan(problem, params.delta, params.axis_tol)
    crit = scan.critical
    record = TrackRecord()
    stats: dict = {}
    trajectories = [_axis_trajectory(problem, scan)]

    if crit[0] is not None:
        record.offer(problem.F.value(1, crit[0], 0.0), link.point(crit[0], 0.0))
    for k in range(1, K):
        rho0 = crit[k - 1]
        if rho0 is None:
            continue
        anchor = link.point(rho0, 0.0)
        # the UAV passes the anchor on its way into both branches
        record.offer(problem.true_cost(anchor), anchor)
        for side in (1, -1):
            trajectories.append(branch_search(problem, rho0, side, k, params, record, stats))
    if crit[K - 1] is not None:
        record.offer(problem.F.value(K, crit[K - 1], 0.0), link.point(crit[K - 1], 0.0))

    lengths = trajectory_length_report(trajectories, K, link.L)
    result = PlacementResult(
        "proposed", record.x_hat, record.f_min, lengths.total,
        {"within_bound": lengths.within_bound, "branches_within": lengths.branches_within},
    )
    return SearchOutcome(result, record, trajectories, crit, lengths, stats)
