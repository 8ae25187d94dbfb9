"""Planar and polar geometry of the BS / user / UAV triangle.

The polar frame is anchored at the user: ``rho`` is the ground distance from
the user and ``theta`` the signed deviation from the user-to-BS direction.
All angles are radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class DegenerateGeometryError(ValueError):
    """BS and user share a horizontal position, so no axis direction exists."""


class Point2(NamedTuple):
    x: float
    y: float


class PolarCoord(NamedTuple):
    rho: float
    theta: float


@dataclass(frozen=True)
class Heights:
    h_uav: float
    h_bs: float
    h_user: float = 0.0

    def __post_init__(self):
        if not (self.h_uav > self.h_bs > self.h_user >= 0.0):
            raise ValueError(
                f"heights must satisfy h_uav > h_bs > h_user >= 0, got "
                f"({self.h_uav}, {self.h_bs}, {self.h_user})"
            )

    @property
    def uav_user_gap(self) -> float:
        return self.h_uav - self.h_user

    @property
    def uav_bs_gap(self) -> float:
        return self.h_uav - self.h_bs


def unit_direction(x_u, x_b) -> Point2:
    dx, dy = x_b[0] - x_u[0], x_b[1] - x_u[1]
    n = math.hypot(dx, dy)
    if n == 0.0:
        raise DegenerateGeometryError("BS and user are horizontally coincident")
    return Point2(dx / n, dy / n)


def from_polar(p: PolarCoord, x_u, x_b) -> Point2:
    """x_u + rho * M(theta) u, with M the counter-clockwise rotation."""
    u1, u2 = unit_direction(x_u, x_b)
    c, s = math.cos(p[1]), math.sin(p[1])
    rho = p[0]
    return Point2(x_u[0] + rho * (c * u1 - s * u2), x_u[1] + rho * (s * u1 + c * u2))


def to_polar(x, x_u, x_b) -> PolarCoord:
    u1, u2 = unit_direction(x_u, x_b)
    z1, z2 = x[0] - x_u[0], x[1] - x_u[1]
    rho = math.hypot(z1, z2)
    if rho == 0.0:
        return PolarCoord(0.0, 0.0)
    cross = z2 * u1 - z1 * u2
    # atan2 keeps full precision near the axis where acos does not
    theta = math.atan2(abs(cross), z1 * u1 + z2 * u2)
    # sign(0) = -1 would map the exact axis point to -0.0 / -pi; keep those canonical
    if theta == 0.0 or theta == math.pi:
        return PolarCoord(rho, theta)
    return PolarCoord(rho, theta if cross > 0 else -theta)


def from_polar_many(rho, theta, x_u, x_b) -> np.ndarray:
    """Vectorised :func:`from_polar`; returns an (N, 2) array."""
    u1, u2 = unit_direction(x_u, x_b)
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack(
        [x_u[0] + rho * (c * u1 - s * u2), x_u[1] + rho * (s * u1 + c * u2)], axis=-1
    )


def to_polar_many(xs, x_u, x_b) -> tuple[np.ndarray, np.ndarray]:
    u1, u2 = unit_direction(x_u, x_b)
    xs = np.asarray(xs, dtype=float)
    z1 = xs[..., 0] - x_u[0]
    z2 = xs[..., 1] - x_u[1]
    rho = np.hypot(z1, z2)
    cross = z2 * u1 - z1 * u2
    theta = np.arctan2(np.abs(cross), z1 * u1 + z2 * u2)
    theta = np.where(cross > 0, theta, -theta)
    theta = np.where(theta == -math.pi, math.pi, theta)
    theta = np.where(rho == 0.0, 0.0, theta) + 0.0
    return rho, theta


def dist_to_user(x, x_u, h: Heights) -> float:
    return math.sqrt((x[0] - x_u[0]) ** 2 + (x[1] - x_u[1]) ** 2 + h.uav_user_gap**2)


def dist_to_bs(x, x_b, h: Heights) -> float:
    return math.sqrt((x[0] - x_b[0]) ** 2 + (x[1] - x_b[1]) ** 2 + h.uav_bs_gap**2)


def dist_to_user_polar(rho, h: Heights):
    return np.sqrt(np.square(rho) + h.uav_user_gap**2)


def dist_to_bs_polar(rho, theta, L: float, h: Heights):
    """Law-of-cosines BS distance; works on scalars or arrays."""
    sq = np.square(rho) + L * L - 2.0 * rho * L * np.cos(theta) + h.uav_bs_gap**2
    return np.sqrt(np.maximum(sq, 0.0))


def elevation_angle(x, x_u, h: Heights) -> float:
    """Elevation of the UAV seen from the user, in (0, pi/2]."""
    rho = math.hypot(x[0] - x_u[0], x[1] - x_u[1])
    return math.atan2(h.uav_user_gap, rho)


def elevation_angle_many(xs, x_u, h: Heights) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    rho = np.hypot(xs[..., 0] - x_u[0], xs[..., 1] - x_u[1])
    return np.arctan2(h.uav_user_gap, rho)


@dataclass(frozen=True)
class RelayLink:
    """Horizontal geometry of one BS-user pair plus the three heights."""

    x_u: Point2
    x_b: Point2
    heights: Heights

    def __post_init__(self):
        object.__setattr__(self, "x_u", Point2(float(self.x_u[0]), float(self.x_u[1])))
        object.__setattr__(self, "x_b", Point2(float(self.x_b[0]), float(self.x_b[1])))
        object.__setattr__(self, "u", unit_direction(self.x_u, self.x_b))
        object.__setattr__(
            self, "L", math.hypot(self.x_b[0] - self.x_u[0], self.x_b[1] - self.x_u[1])
        )

    def point(self, rho: float, theta: float) -> Point2:
        u1, u2 = self.u
        c, s = math.cos(theta), math.sin(theta)
        return Point2(
            self.x_u[0] + rho * (c * u1 - s * u2), self.x_u[1] + rho * (s * u1 + c * u2)
        )

    def polar(self, x) -> PolarCoord:
        return to_polar(x, self.x_u, self.x_b)

    def in_search_region(self, rho: float, theta: float, slack: float = 0.0) -> bool:
        """Membership of the half-disk rho <= L cos(theta), |theta| <= pi/2."""
        return abs(theta) <= math.pi / 2 and rho <= self.L * math.cos(theta) + slack

    def radial(self, theta: float) -> Point2:
        u1, u2 = self.u
        c, s = math.cos(theta), math.sin(theta)
        return Point2(c * u1 - s * u2, s * u1 + c * u2)

    def tangential(self, theta: float) -> Point2:
        """d/dtheta of M(theta) u."""
        u1, u2 = self.u
        c, s = math.cos(theta), math.sin(theta)
        return Point2(-s * u1 - c * u2, c * u1 - s * u2)
