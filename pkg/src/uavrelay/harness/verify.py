"""Property suites over synthetic nested worlds, run by ``uavrelay verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..baselines import region_grid
from ..channel import SegmentModel
from ..cost import AF_OUTAGE, COST_KINDS, DF_RATE, RelayCost, RelayProblem, check_condition1, check_condition2
from ..geometry import (
    Heights, Point2, RelayLink, dist_to_bs, dist_to_bs_polar, dist_to_user, dist_to_user_polar, to_polar_many,
)
from ..search import SearchOutcome, SearchParams, shaded_contour_search
from ..terrain import NestedBoundaryField, NestedOracle

DEFAULT_HEIGHTS = Heights(50.0, 45.0, 0.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def model_for(K: int) -> SegmentModel:
    return SegmentModel.two_segment_default() if K == 2 else SegmentModel.ladder(K)


def random_nested_problem(
    rng: np.random.Generator,
    K: int,
    kind: str,
    L_range: tuple = (150.0, 400.0),
    heights: Heights = DEFAULT_HEIGHTS,
    powers_dbm: tuple = (33.0, 33.0, -80.0),
) -> RelayProblem:
    """User at a random spot, BS at distance L in a random direction, random nested field."""
    L = rng.uniform(*L_range)
    psi = rng.uniform(0, 2 * math.pi)
    xu = Point2(*rng.uniform(-100, 100, 2))
    xb = Point2(xu[0] + L * math.cos(psi), xu[1] + L * math.sin(psi))
    fld = NestedBoundaryField.random(rng, K, 0.05 * L, 1.1 * L)
    link = RelayLink(xu, xb, heights)
    cost = RelayCost.from_dbm(kind, powers_dbm[0], powers_dbm[1], powers_dbm[2])
    return RelayProblem(link, model_for(K), cost, NestedOracle(fld, link.x_u))


def grid_reference(problem: RelayProblem, spacing: float = 1.0) -> tuple[float, float]:
    """(grid minimum of the true cost, largest F_k change between neighbouring grid points)."""
    pts = region_grid(problem.link, spacing)[:-2]
    fmin = float(problem.true_costs(pts).min())
    ij = np.round(pts / spacing).astype(np.int64)
    i0, j0 = ij.min(axis=0)
    shape = tuple(ij.max(axis=0) - ij.min(axis=0) + 1)
    eps = 0.0
    rh, th = to_polar_many(pts, problem.link.x_u, problem.link.x_b)
    for k in range(1, problem.K + 1):
        field = np.full(shape, np.nan)
        field[ij[:, 0] - i0, ij[:, 1] - j0] = problem.F.value_many(k, rh, th)
        for ax in (0, 1):
            d = np.abs(np.diff(field, axis=ax))
            if np.isfinite(d).any():
                eps = max(eps, float(np.nanmax(d)))
    return fmin, eps


def check_conditions() -> list:
    af = RelayCost(AF_OUTAGE, 1.0, 1.0)
    df = RelayCost(DF_RATE, 1.0, 1.0)

    def bumpy(x, y):
        return np.sin(np.log(x)) + np.sin(np.log(y))

    out = [
        CheckResult("condition1_af", check_condition1(af).passed, "AF outage cost on 1e-6..1e6 grid"),
        CheckResult("condition2_df", check_condition2(df).passed, "DF rate cost max-decomposition"),
        CheckResult("condition1_df_fails", not check_condition1(df).passed, "DF fails the curvature check"),
        CheckResult(
            "negative_control_fails",
            not check_condition1(bumpy).passed and not check_condition2(bumpy).passed,
            "non-monotone cost rejected by both checks",
        ),
    ]
    return out


def check_gradients(rng: np.random.Generator, n: int = 10_000, rtol: float = 1e-5) -> CheckResult:
    worst = 0.0
    done = 0
    while done < n:
        kind = COST_KINDS[done % 2]
        K = int(rng.integers(2, 5))
        pb = random_nested_problem(rng, K, kind)
        F = pb.F
        L = pb.link.L
        for _ in range(50):
            k = int(rng.integers(1, K + 1))
            rho = rng.uniform(1.0, L)
            theta = rng.uniform(-math.pi / 2, math.pi / 2)
            if kind == DF_RATE:
                du, db = F.distances(rho, theta)
                m, c = pb.model, pb.cost
                a = -math.log2(1 + c.p_b * m.beta0 * db ** (-m.alpha0))
                b = -math.log2(1 + c.p_u * m.beta(k) * du ** (-m.alpha[k - 1]))
                if abs(a - b) < 1e-3 * abs(a):
                    continue  # too close to the max kink for central differences
            h = 1e-4 * max(1.0, rho)
            ht = h / max(1.0, rho)
            fd_r = (F.value(k, rho + h, theta) - F.value(k, rho - h, theta)) / (2 * h)
            fd_t = (F.value(k, rho, theta + ht) - F.value(k, rho, theta - ht)) / (2 * ht)
            g_r, g_t = F.grad(k, rho, theta)
            scale = math.hypot(g_r, g_t / rho)
            err = max(abs(fd_r - g_r), abs(fd_t - g_t) / rho) / scale
            worst = max(worst, err)
            done += 1
            if done >= n:
                break
    return CheckResult("gradient_vs_finite_difference", worst <= rtol, f"worst relative error {worst:.2e} over {n} points")


def check_single_sign_change(rng: np.random.Generator, n: int = 1000) -> CheckResult:
    bad = 0
    pb = None
    for i in range(n):
        if i % 25 == 0:
            pb = random_nested_problem(rng, int(rng.integers(2, 5)), COST_KINDS[(i // 25) % 2])
        k = int(rng.integers(1, pb.K + 1))
        theta = rng.uniform(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3)
        rho_end = pb.link.L * math.cos(theta)
        rhos = np.arange(1.0, rho_end, 1.0)
        if len(rhos) < 2:
            continue
        vals = pb.F.value_many(k, rhos, np.full_like(rhos, theta))
        s = np.sign(np.diff(vals))
        s = s[s != 0]
        changes = int(np.sum(s[1:] != s[:-1]))
        if changes > 1 or (changes == 1 and s[0] > 0):
            bad += 1
    return CheckResult("unique_minimizer_scan", bad == 0, f"{bad} of {n} slices with more than one sign change")


def check_distance_identities(rng: np.random.Generator, n: int = 10_000) -> CheckResult:
    h = DEFAULT_HEIGHTS
    xu = Point2(12.5, -40.0)
    xb = Point2(380.0, 210.0)
    link = RelayLink(xu, xb, h)
    worst = 0.0
    rho = rng.uniform(0, 800, n)
    theta = rng.uniform(-math.pi, math.pi, n)
    db_p = dist_to_bs_polar(rho, theta, link.L, h)
    du_p = dist_to_user_polar(rho, h)
    for i in range(n):
        x = link.point(rho[i], theta[i])
        worst = max(worst, abs(db_p[i] - dist_to_bs(x, xb, h)), abs(du_p[i] - dist_to_user(x, xu, h)))
    return CheckResult("polar_distance_identities", worst <= 1e-9, f"worst abs error {worst:.1e} m")


def trajectory_checks(outcomes: list, delta: float) -> list:
    """Monotonicity, one-sided derivative, chord, region and length checks over search outcomes."""
    mono = deriv = chord = region = length = branch = level = 0
    n_steps = 0
    for pb, out in outcomes:
        L = pb.link.L
        for t in out.trajectories:
            if t.phase == "axis":
                continue
            w = t.waypoints
            for a, b in zip(w, w[1:]):
                n_steps += 1
                if not (b.rho > a.rho and abs(b.theta) >= abs(a.theta) * (1 - 1e-12)):
                    mono += 1
            k = t.partition_k
            for a in w[:-1]:
                if a.rho > 0 and pb.F.grad(k, a.rho, a.theta)[0] > 0:
                    deriv += 1
            if np.any(t.chords() > delta * (1 + 1e-6)):
                chord += 1
        r, th = pb.link.polar(out.result.x)
        if not (abs(th) <= math.pi / 2 and r <= L * math.cos(th) + delta + 1e-9):
            region += 1
        length += not out.lengths.within_bound
        branch += not out.lengths.branches_within
        level += out.stats.get("max_level_error", 0.0) > 1e-6
    n = len(outcomes)
    return [
        CheckResult("branch_monotonicity", mono == 0, f"{mono} violations over {n_steps} steps"),
        CheckResult("nonpositive_radial_derivative", deriv == 0, f"{deriv} waypoints with dF/drho > 0 before stopping"),
        CheckResult("chord_at_most_delta", chord == 0, f"{chord} branches with a chord above delta"),
        CheckResult("region_containment", region == 0, f"{region} of {n} results outside the half-disk"),
        CheckResult("total_length_bound", length == 0, f"{length} of {n} runs over (2.4K-1.4)L"),
        CheckResult("branch_length_bound", branch == 0, f"{branch} of {n} runs with a branch over 1.21L"),
        CheckResult("contour_level_drift", level == 0, f"{level} of {n} runs with contour drift above 1e-6"),
    ]


def nested_outcomes(rng: np.random.Generator, n_worlds: int, delta: float) -> list:
    out = []
    for i in range(n_worlds):
        K = (2, 3, 4)[i % 3]
        kind = COST_KINDS[(i // 3) % 2]
        pb = random_nested_problem(rng, K, kind)
        out.append((pb, shaded_contour_search(pb, SearchParams(delta))))
    return out


def run_verify(seed: int = 0, n_worlds: int = 30, delta: float = 1.0, quick: bool = False) -> list:
    rng = np.random.default_rng([seed, 0x7E])
    results = check_conditions()
    results.append(check_gradients(rng, 2000 if quick else 10_000))
    results.append(check_single_sign_change(rng, 200 if quick else 1000))
    results.append(check_distance_identities(rng, 2000 if quick else 10_000))
    results += trajectory_checks(nested_outcomes(rng, n_worlds, delta), delta)
    return results
