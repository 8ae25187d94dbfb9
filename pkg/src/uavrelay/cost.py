"""Relay cost functions, fictitious per-segment costs in the polar frame, and
the multiuser virtual-user construction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import SegmentModel
from .geometry import Heights, Point2, RelayLink, dist_to_bs, dist_to_user

AF_OUTAGE = "af_outage"
DF_RATE = "df_rate"
COST_KINDS = (AF_OUTAGE, DF_RATE)

_LN2 = math.log(2.0)
_TIE_RTOL = 1e-12


def dbm_to_snr_scale(p_dbm: float, noise_dbm: float) -> float:
    """Transmit power over noise power, linear."""
    return 10.0 ** ((p_dbm - noise_dbm) / 10.0)


@dataclass(frozen=True)
class RelayCost:
    """f(g_u, g_b) with the noise already folded into the power scales."""

    kind: str
    p_b: float
    p_u: float
    half_prelog: bool = True

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"cost kind must be one of {COST_KINDS}, got {self.kind!r}")
        if not (self.p_b > 0 and self.p_u > 0):
            raise ValueError("transmit power scales must be positive")

    @classmethod
    def from_dbm(cls, kind, p_b_dbm, p_u_dbm, noise_dbm, half_prelog=True) -> "RelayCost":
        return cls(
            kind,
            dbm_to_snr_scale(p_b_dbm, noise_dbm),
            dbm_to_snr_scale(p_u_dbm, noise_dbm),
            half_prelog,
        )

    def __call__(self, g_u, g_b):
        g_u = np.asarray(g_u, dtype=float)
        g_b = np.asarray(g_b, dtype=float)
        if np.any(g_u <= 0) or np.any(g_b <= 0):
            raise ValueError("channel gains must be positive")
        if self.kind == AF_OUTAGE:
            out = 1.0 / (self.p_u * g_u) + 1.0 / (self.p_b * g_b)
        else:
            out = np.maximum(-np.log2(1.0 + self.p_b * g_b), -np.log2(1.0 + self.p_u * g_u))
        return float(out) if out.ndim == 0 else out

    def components(self) -> Optional[tuple[Callable, Callable]]:
        """(f1(g_u), f2(g_b)) when the cost is their pointwise max, else None."""
        if self.kind != DF_RATE:
            return None
        p_u, p_b = self.p_u, self.p_b
        return (lambda x: -np.log2(1.0 + p_u * np.asarray(x)), lambda y: -np.log2(1.0 + p_b * np.asarray(y)))

    def throughput(self, g_u, g_b):
        """Reported DF rate in bps/Hz (two-slot pre-log applied when enabled)."""
        r = np.minimum(np.log2(1.0 + self.p_b * np.asarray(g_b)), np.log2(1.0 + self.p_u * np.asarray(g_u)))
        r = 0.5 * r if self.half_prelog else r
        return float(r) if np.ndim(r) == 0 else r

    def with_kind(self, kind: str) -> "RelayCost":
        return RelayCost(kind, self.p_b, self.p_u, self.half_prelog)


@dataclass(frozen=True)
class FictitiousCost:
    """F_k(rho, theta): the cost as if the UAV sat in segment k, wherever it is."""

    cost: RelayCost
    model: SegmentModel
    link: RelayLink

    def distances(self, rho, theta):
        h = self.link.heights
        du = np.sqrt(np.square(rho) + h.uav_user_gap**2)
        sq = np.square(rho) + self.link.L**2 - 2.0 * rho * self.link.L * np.cos(theta)
        db = np.sqrt(np.maximum(sq, 0.0) + h.uav_bs_gap**2)
        return du, db

    def value(self, k: int, rho: float, theta: float) -> float:
        h = self.link.heights
        L = self.link.L
        du = math.sqrt(rho * rho + h.uav_user_gap**2)
        db = math.sqrt(max(rho * rho + L * L - 2.0 * rho * L * math.cos(theta), 0.0) + h.uav_bs_gap**2)
        return self._f(k, du, db)

    def value_many(self, k: int, rho, theta) -> np.ndarray:
        du, db = self.distances(np.asarray(rho, float), np.asarray(theta, float))
        m = self.model
        g_u = m.beta(k) * du ** (-m.alpha[k - 1])
        g_b = m.beta0 * db ** (-m.alpha0)
        return self.cost(g_u, g_b)

    def at_point(self, k: int, x) -> float:
        """Same quantity through Euclidean distances instead of the polar identities."""
        h = self.link.heights
        return self._f(k, dist_to_user(x, self.link.x_u, h), dist_to_bs(x, self.link.x_b, h))

    def _f(self, k: int, du: float, db: float) -> float:
        m = self.model
        c = self.cost
        if c.kind == AF_OUTAGE:
            return du ** m.alpha[k - 1] / (c.p_u * m.beta(k)) + db**m.alpha0 / (c.p_b * m.beta0)
        g_u = m.beta(k) * du ** (-m.alpha[k - 1])
        g_b = m.beta0 * db ** (-m.alpha0)
        return max(-math.log2(1.0 + c.p_b * g_b), -math.log2(1.0 + c.p_u * g_u))

    def grad(self, k: int, rho: float, theta: float) -> tuple[float, float]:
        """(dF/drho, dF/dtheta); at DF kinks each partial is the left derivative."""
        if rho <= 0.0:
            raise ValueError("gradient of F_k is undefined at rho = 0")
        m = self.model
        c = self.cost
        h = self.link.heights
        L = self.link.L
        du = math.sqrt(rho * rho + h.uav_user_gap**2)
        db = math.sqrt(max(rho * rho + L * L - 2.0 * rho * L * math.cos(theta), 0.0) + h.uav_bs_gap**2)
        ddu_drho = rho / du
        ddb_drho = (rho - L * math.cos(theta)) / db
        ddb_dtheta = rho * L * math.sin(theta) / db
        ak = m.alpha[k - 1]
        if c.kind == AF_OUTAGE:
            fu = ak * du ** (ak - 1.0) / (c.p_u * m.beta(k))
            fb = m.alpha0 * db ** (m.alpha0 - 1.0) / (c.p_b * m.beta0)
            return fu * ddu_drho + fb * ddb_drho, fb * ddb_dtheta
        sb = c.p_b * m.beta0 * db ** (-m.alpha0)
        su = c.p_u * m.beta(k) * du ** (-ak)
        a_val = -math.log2(1.0 + sb)
        b_val = -math.log2(1.0 + su)
        # d/dd of -log2(1 + P beta d^-alpha)
        fb = m.alpha0 * sb / (db * (1.0 + sb) * _LN2)
        fu = ak * su / (du * (1.0 + su) * _LN2)
        bs_branch = (fb * ddb_drho, fb * ddb_dtheta)
        user_branch = (fu * ddu_drho, 0.0)
        if abs(a_val - b_val) <= _TIE_RTOL * max(1.0, abs(a_val)):
            return min(bs_branch[0], user_branch[0]), min(bs_branch[1], user_branch[1])
        return bs_branch if a_val > b_val else user_branch


@dataclass
class RelayProblem:
    """Everything a placement scheme needs for one (virtual) user."""

    link: RelayLink
    model: SegmentModel
    cost: RelayCost
    oracle: object

    def __post_init__(self):
        self.F = FictitiousCost(self.cost, self.model, self.link)

    @property
    def K(self) -> int:
        return self.model.K

    def true_cost(self, x) -> float:
        return self.F.at_point(self.oracle.segment(x), x)

    def true_costs(self, xs, segs=None) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        segs = np.asarray(self.oracle.segments(xs) if segs is None else segs)
        rho = np.hypot(xs[:, 0] - self.link.x_u[0], xs[:, 1] - self.link.x_u[1])
        h = self.link.heights
        du = np.sqrt(rho**2 + h.uav_user_gap**2)
        db = np.sqrt(
            (xs[:, 0] - self.link.x_b[0]) ** 2 + (xs[:, 1] - self.link.x_b[1]) ** 2 + h.uav_bs_gap**2
        )
        m = self.model
        alpha = np.asarray(m.alpha)[segs - 1]
        beta = 10.0 ** np.asarray(m.log10beta)[segs - 1]
        return self.cost(beta * du ** (-alpha), m.beta0 * db ** (-m.alpha0))


@dataclass(frozen=True)
class ConditionCheck:
    passed: bool
    grid: np.ndarray
    failures: list = field(default_factory=list)


def _log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def check_condition1(f, lo: float = 1e-6, hi: float = 1e6, n: int = 49, step: float = 1e-3, tol: float = 1e-5) -> ConditionCheck:
    """Numerically test x f_xx + 2 f_x >= 0 (same in y), f_xy = 0 and monotone decrease.

    Derivatives are central differences in log-coordinates, where
    x (x f_xx + 2 f_x) = f_ss + f_s with s = ln x.
    """
    grid = _log_grid(lo, hi, n)
    X, Y = np.meshgrid(grid, grid, indexing="ij")
    e = math.exp(step)

    def fv(a, b):
        return np.asarray(f(a, b), dtype=float)

    f0 = fv(X, Y)
    fxp, fxm = fv(X * e, Y), fv(X / e, Y)
    fyp, fym = fv(X, Y * e), fv(X, Y / e)
    fs = (fxp - fxm) / (2 * step)
    fss = (fxp - 2 * f0 + fxm) / step**2
    ft = (fyp - fym) / (2 * step)
    ftt = (fyp - 2 * f0 + fym) / step**2
    fst = (fv(X * e, Y * e) - fv(X * e, Y / e) - fv(X / e, Y * e) + fv(X / e, Y / e)) / (4 * step**2)
    # rounding floor of a second difference of values of size |f|
    noise = 64 * np.finfo(float).eps * np.abs(f0) / step**2
    scale_x = np.abs(fss) + np.abs(fs) + 1e-300
    scale_y = np.abs(ftt) + np.abs(ft) + 1e-300
    scale_f = np.abs(f0) + np.abs(fs) + np.abs(ft) + 1e-300
    bad = (
        (fss + fs < -tol * scale_x - noise)
        | (ftt + ft < -tol * scale_y - noise)
        | (np.abs(fst) > tol * scale_f + noise)
        | (fs > tol * scale_f)
        | (ft > tol * scale_f)
    )
    failures = [(float(X[i, j]), float(Y[i, j])) for i, j in zip(*np.nonzero(bad))]
    return ConditionCheck(not failures, grid, failures)


def check_condition2(f, lo: float = 1e-6, hi: float = 1e6, n: int = 49) -> ConditionCheck:
    """Structural max{f1(x), f2(y)} decomposition plus sampled strict decrease of f1, f2."""
    grid = _log_grid(lo, hi, n)
    comps = f.components() if hasattr(f, "components") else None
    if comps is None:
        return ConditionCheck(False, grid, ["no max-of-decreasing decomposition"])
    f1, f2 = comps
    failures = []
    v1, v2 = np.asarray(f1(grid), float), np.asarray(f2(grid), float)
    if np.any(np.diff(v1) >= 0):
        failures.append("f1 not decreasing")
    if np.any(np.diff(v2) >= 0):
        failures.append("f2 not decreasing")
    X, Y = np.meshgrid(grid, grid, indexing="ij")
    direct = np.asarray(f(X, Y), float)
    via = np.maximum(np.asarray(f1(X), float), np.asarray(f2(Y), float))
    if not np.allclose(direct, via, rtol=1e-12, atol=1e-12):
        failures.append("f differs from max(f1, f2)")
    return ConditionCheck(not failures, grid, failures)


@dataclass(frozen=True)
class UserCluster:
    center: Point2
    radius: float
    users: np.ndarray

    def __post_init__(self):
        users = np.atleast_2d(np.asarray(self.users, dtype=float)).reshape(-1, 2)
        if len(users) == 0:
            raise ValueError("a cluster needs at least one user")
        c = np.asarray(self.center, dtype=float)
        if np.any(np.hypot(*(users - c).T) > self.radius + 1e-9):
            raise ValueError("cluster users must lie within radius of the center")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "center", Point2(float(c[0]), float(c[1])))

    @property
    def n_users(self) -> int:
        return len(self.users)


def majority_segment(segs: np.ndarray, K: int) -> np.ndarray:
    """Column-wise mode of an (N_u, N) segment array; ties go to the smaller k."""
    segs = np.atleast_2d(segs)
    counts = np.stack([(segs == k).sum(axis=0) for k in range(1, K + 1)])
    return 1 + np.argmax(counts, axis=0)


class VirtualUserOracle:
    """Segment of the hotspot-center surrogate: majority vote over the real users."""

    def __init__(self, user_oracles: Sequence):
        if not user_oracles:
            raise ValueError("empty cluster")
        self.user_oracles = list(user_oracles)
        self.K = self.user_oracles[0].K

    def segment(self, x) -> int:
        return int(self.segments(np.asarray([x], dtype=float))[0])

    def segments(self, xs) -> np.ndarray:
        segs = np.stack([o.segments(xs) for o in self.user_oracles])
        return majority_segment(segs, self.K)


def virtual_user_cost(cluster: UserCluster, x, user_oracles, model, cost, heights, x_b) -> float:
    link = RelayLink(cluster.center, x_b, heights)
    k = VirtualUserOracle(user_oracles).segment(x)
    return FictitiousCost(cost, model, link).at_point(k, x)


def user_throughputs(users, x, user_oracles, model: SegmentModel, cost: RelayCost, heights: Heights, x_b) -> np.ndarray:
    """Per-user DF rate at UAV position x, each with its own true segment."""
    users = np.atleast_2d(np.asarray(users, float))
    g_b = model.beta0 * dist_to_bs(x, x_b, heights) ** (-model.alpha0)
    out = np.empty(len(users))
    for i, (xu, orc) in enumerate(zip(users, user_oracles)):
        k = orc.segment(x)
        g_u = model.beta(k) * dist_to_user(x, xu, heights) ** (-model.alpha[k - 1])
        out[i] = cost.throughput(g_u, g_b)
    return out


def sum_rate(cluster: UserCluster, x, user_oracles, model, cost, heights, x_b) -> float:
    return float(np.mean(user_throughputs(cluster.users, x, user_oracles, model, cost, heights, x_b)))
