"""Segmented log-distance channel: deterministic gains, shadowed measurements,
ML segment detection and small-scale fading draws."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .geometry import Heights, Point2, RelayLink, dist_to_bs, dist_to_user


class ChannelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SegmentModel:
    """Per-segment path-loss parameters, index 0 is segment k = 1.

    ``log10beta`` holds log10 of the linear offsets; the BS-UAV link has its
    own exponent and offset.
    """

    alpha: tuple[float, ...]
    log10beta: tuple[float, ...]
    sigma_db: tuple[float, ...]
    alpha0: float
    log10beta0: float

    def __post_init__(self):
        for name in ("alpha", "log10beta", "sigma_db"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not (len(self.alpha) == len(self.log10beta) == len(self.sigma_db) >= 1):
            raise ChannelConfigError("alpha, log10beta and sigma_db need one entry per segment")
        if self.alpha0 <= 1:
            raise ChannelConfigError("alpha0 must exceed 1")
        if any(s <= 0 for s in self.sigma_db):
            raise ChannelConfigError("sigma_db entries must be positive")

    @property
    def K(self) -> int:
        return len(self.alpha)

    def beta(self, k: int) -> float:
        return 10.0 ** self.log10beta[k - 1]

    @property
    def beta0(self) -> float:
        return 10.0**self.log10beta0

    def a(self, k: int) -> float:
        return 10.0 * self.alpha[k - 1]

    def b(self, k: int) -> float:
        return 10.0 * self.log10beta[k - 1]

    def mean_gain_db(self, k: int, d) -> float:
        return self.b(k) - self.a(k) * np.log10(d)

    def check_ordering(self, d_min: float, d_max: float, n: int = 512) -> None:
        """Raise unless deeper segments are strictly weaker over [d_min, d_max]."""
        d = np.geomspace(max(d_min, 1e-6), max(d_max, d_min * (1 + 1e-9)), n)
        for k in range(2, self.K + 1):
            gap = self.mean_gain_db(k - 1, d) - self.mean_gain_db(k, d)
            if np.any(gap <= 0):
                bad = float(d[np.argmax(gap <= 0)])
                raise ChannelConfigError(
                    f"segment {k} is not weaker than segment {k - 1} at d = {bad:.3f} m"
                )

    @classmethod
    def two_segment_default(cls, sigma_db: Sequence[float] = (2.0, 5.0)) -> "SegmentModel":
        return cls(
            alpha=(2.14, 3.03),
            log10beta=(-3.69, -3.84),
            sigma_db=tuple(sigma_db),
            alpha0=2.08,
            log10beta0=-3.85,
        )

    @classmethod
    def ladder(cls, K: int) -> "SegmentModel":
        """K-segment model extending the two-segment defaults with deeper obstruction."""
        alpha = [2.14, 3.03, 3.5, 3.9, 4.2, 4.5][:K]
        l10b = [-3.69, -3.84, -4.0, -4.2, -4.4, -4.6][:K]
        sigma = [2.0, 5.0, 6.0, 7.0, 8.0, 9.0][:K]
        if K > len(alpha):
            raise ChannelConfigError("ladder defaults cover K <= 6")
        return cls(tuple(alpha), tuple(l10b), tuple(sigma), 2.08, -3.85)


class Measurement(NamedTuple):
    position: Point2
    gain_db: float


def gain_bs(x, link: RelayLink, model: SegmentModel) -> float:
    return model.beta0 * dist_to_bs(x, link.x_b, link.heights) ** (-model.alpha0)


def gain_user(x, x_u, seg: int, model: SegmentModel, h: Heights) -> float:
    if not 1 <= seg <= model.K:
        raise ValueError(f"segment {seg} outside 1..{model.K}")
    return model.beta(seg) * dist_to_user(x, x_u, h) ** (-model.alpha[seg - 1])


def gain_db(g: float) -> float:
    return 10.0 * math.log10(g)


def sample_measurement(x, x_u, oracle, model: SegmentModel, h: Heights, rng) -> Measurement:
    k = oracle.segment(x)
    d = dist_to_user(x, x_u, h)
    y = model.b(k) - model.a(k) * math.log10(d) + rng.normal(0.0, model.sigma_db[k - 1])
    return Measurement(Point2(float(x[0]), float(x[1])), float(y))


def detect_segment(m: Measurement, x_u, model: SegmentModel, h: Heights) -> int:
    """Gaussian ML rule: smallest sigma-normalised residual, ties to the lower k."""
    d = dist_to_user(m.position, x_u, h)
    best_k, best = 1, math.inf
    for k in range(1, model.K + 1):
        score = abs(m.gain_db - model.b(k) + model.a(k) * math.log10(d)) / model.sigma_db[k - 1]
        if score < best:
            best_k, best = k, score
    return best_k


def detect_segment_ml(
    m: Measurement, x_u, model: SegmentModel, h: Heights, pdfs: Sequence[Callable[[float], float]]
) -> int:
    """General ML rule for arbitrary residual densities, one per segment."""
    d = dist_to_user(m.position, x_u, h)
    best_k, best = 1, -math.inf
    for k in range(1, model.K + 1):
        lik = pdfs[k - 1](m.gain_db - model.b(k) + model.a(k) * math.log10(d))
        if lik > best:
            best_k, best = k, lik
    return best_k


class DetectorOracle:
    """Segment oracle that sees only noisy measurements routed through the ML detector."""

    def __init__(self, true_oracle, model: SegmentModel, x_u, h: Heights, rng):
        self.true_oracle = true_oracle
        self.model = model
        self.x_u = x_u
        self.h = h
        self.rng = rng
        self.K = model.K

    def segment(self, x) -> int:
        m = sample_measurement(x, self.x_u, self.true_oracle, self.model, self.h, self.rng)
        return detect_segment(m, self.x_u, self.model, self.h)

    def segments(self, xs) -> np.ndarray:
        return np.array([self.segment(x) for x in np.atleast_2d(xs)], dtype=np.int64)


FADING_K_FACTOR_DB = {"bs_uav_rician20dB": 20.0, "los_rician9dB": 9.0, "nlos_rayleigh": None}


def sample_fading(link_kind: str, rng: np.random.Generator, size=None):
    """Unit-mean power gain |a|^2 for the named link type."""
    if link_kind not in FADING_K_FACTOR_DB:
        raise ValueError(f"unknown fading kind {link_kind!r}")
    k_db = FADING_K_FACTOR_DB[link_kind]
    if k_db is None:
        return rng.exponential(1.0, size)
    kf = 10.0 ** (k_db / 10.0)
    los = math.sqrt(kf / (kf + 1.0))
    s = math.sqrt(1.0 / (2.0 * (kf + 1.0)))
    re = los + s * rng.standard_normal(size)
    im = s * rng.standard_normal(size)
    return re * re + im * im
