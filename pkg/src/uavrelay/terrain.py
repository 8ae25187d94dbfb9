"""Manhattan-style urban maps, ray-cast obstruction counting, and segment oracles.

Two kinds of oracle answer "which propagation segment holds UAV position x
for this user":

* :class:`MapOracle` counts the buildings cut by the user-UAV ray (realistic,
  may break the nesting property).
* :class:`NestedOracle` reads a synthetic :class:`NestedBoundaryField` whose
  segments are nested along every ray from the user by construction.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .geometry import Heights, Point2

_CHUNK = 4096


@dataclass(frozen=True)
class Building:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    height: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"building footprint must have positive size: {self}")
        if not self.height > 0:
            raise ValueError(f"building height must be positive: {self}")


@dataclass(frozen=True)
class BlockSpec:
    """Street grid layout: square blocks separated by streets, split into lots."""

    block_size: float = 90.0
    street_width: float = 30.0
    max_lots: int = 2
    offset: float = 15.0

    @property
    def pitch(self) -> float:
        return self.block_size + self.street_width


@dataclass(frozen=True)
class UrbanMap:
    extent: tuple[float, float, float, float]
    buildings: tuple[Building, ...] = field(default_factory=tuple)

    def __post_init__(self):
        x0, y0, x1, y1 = self.extent
        if not (x1 > x0 and y1 > y0):
            raise ValueError("map extent must have positive size")
        for b in self.buildings:
            if b.x_min < x0 or b.y_min < y0 or b.x_max > x1 or b.y_max > y1:
                raise ValueError(f"building outside extent: {b}")
        arr = np.array(
            [[b.x_min, b.y_min, b.x_max, b.y_max, b.height] for b in self.buildings],
            dtype=float,
        ).reshape(-1, 5)
        object.__setattr__(self, "_boxes", arr)

    @property
    def boxes(self) -> np.ndarray:
        """(B, 5) array of x_min, y_min, x_max, y_max, height."""
        return self._boxes

    @property
    def max_height(self) -> float:
        return float(self._boxes[:, 4].max()) if len(self._boxes) else 0.0

    def is_outdoor(self, xs) -> np.ndarray:
        """True where a ground point lies outside every footprint (closed boxes count as indoor)."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        out = np.ones(len(xs), dtype=bool)
        b = self._boxes
        for start in range(0, len(xs), _CHUNK):
            p = xs[start : start + _CHUNK, None, :]
            inside = (
                (p[..., 0] >= b[:, 0]) & (p[..., 0] <= b[:, 2])
                & (p[..., 1] >= b[:, 1]) & (p[..., 1] <= b[:, 3])
            )
            out[start : start + _CHUNK] = ~inside.any(axis=1)
        return out

    def dumps(self) -> str:
        buf = io.StringIO()
        x0, y0, x1, y1 = self.extent
        buf.write(f"extent {x0:.3f} {y0:.3f} {x1:.3f} {y1:.3f}\n")
        buf.write("# x_min y_min x_max y_max height\n")
        for b in self.buildings:
            buf.write(
                f"building {b.x_min:.3f} {b.y_min:.3f} {b.x_max:.3f} {b.y_max:.3f} {b.height:.3f}\n"
            )
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "UrbanMap":
        extent = None
        buildings = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tag, *vals = line.split()
            try:
                nums = [float(v) for v in vals]
            except ValueError as exc:
                raise ValueError(f"line {lineno}: non-numeric field") from exc
            if tag == "extent" and len(nums) == 4:
                extent = tuple(nums)
            elif tag == "building" and len(nums) == 5:
                buildings.append(Building(*nums))
            else:
                raise ValueError(f"line {lineno}: malformed record {line!r}")
        if extent is None:
            raise ValueError("map file has no extent record")
        return cls(extent, tuple(buildings))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "UrbanMap":
        return cls.loads(Path(path).read_text())


def generate_map(
    seed: int,
    extent: tuple[float, float] = (1000.0, 1000.0),
    block: BlockSpec = BlockSpec(),
    height_range: tuple[float, float] = (5.0, 45.0),
) -> UrbanMap:
    """Regular street grid with each block cut into 1..max_lots^2 buildings.

    Heights are i.i.d. uniform over ``height_range``; all coordinates are
    rounded to millimetres so the text serialisation round-trips exactly.
    """
    h_lo, h_hi = height_range
    if h_lo < 0 or h_hi < h_lo:
        raise ValueError("height_range must satisfy 0 <= min <= max")
    if h_hi <= 0:
        raise ValueError("building heights must be positive")
    width, depth = extent
    if width < block.offset + block.block_size or depth < block.offset + block.block_size:
        raise ValueError("extent too small for one block")
    rng = np.random.default_rng(seed)
    buildings = []
    n_x = int((width - block.offset) // block.pitch)
    n_y = int((depth - block.offset) // block.pitch)
    for i in range(n_x):
        for j in range(n_y):
            bx = block.offset + i * block.pitch
            by = block.offset + j * block.pitch
            if bx + block.block_size > width or by + block.block_size > depth:
                continue
            nx = int(rng.integers(1, block.max_lots + 1))
            ny = int(rng.integers(1, block.max_lots + 1))
            xs = np.linspace(bx, bx + block.block_size, nx + 1)
            ys = np.linspace(by, by + block.block_size, ny + 1)
            for a in range(nx):
                for b in range(ny):
                    h = h_lo if h_hi == h_lo else float(rng.uniform(h_lo, h_hi))
                    buildings.append(
                        Building(
                            round(float(xs[a]), 3), round(float(ys[b]), 3),
                            round(float(xs[a + 1]), 3), round(float(ys[b + 1]), 3),
                            max(round(h, 3), 0.001),
                        )
                    )
    return UrbanMap((0.0, 0.0, float(width), float(depth)), tuple(buildings))


def random_street_points(umap: UrbanMap, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform outdoor points inside the extent, by rejection."""
    x0, y0, x1, y1 = umap.extent
    out = np.empty((0, 2))
    while len(out) < n:
        cand = np.column_stack([rng.uniform(x0, x1, 2 * n), rng.uniform(y0, y1, 2 * n)])
        out = np.vstack([out, cand[umap.is_outdoor(cand)]])
    return out[:n]


def los_blocked_many(umap: UrbanMap, a, b) -> np.ndarray:
    """Count distinct buildings whose solid meets each open segment (a_i, b_i).

    ``a`` and ``b`` broadcast to (N, 3). A slab test per box: the segment
    parameter intervals inside x-, y- and z-slabs must overlap on a set of
    positive length inside (0, 1). Grazing contact does not count.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(np.atleast_2d(a), np.atleast_2d(b))
    n = len(a)
    boxes = umap.boxes
    counts = np.zeros(n, dtype=np.int64)
    if n == 0 or len(boxes) == 0:
        return counts
    lo_box = np.stack([boxes[:, 0], boxes[:, 1], np.zeros(len(boxes))], axis=1)
    hi_box = np.stack([boxes[:, 2], boxes[:, 3], boxes[:, 4]], axis=1)
    for start in range(0, n, _CHUNK):
        sa = a[start : start + _CHUNK, None, :]
        d = b[start : start + _CHUNK, None, :] - sa
        t_lo = np.zeros((sa.shape[0], len(boxes)))
        t_hi = np.ones((sa.shape[0], len(boxes)))
        for ax in range(3):
            da = d[..., ax]
            pa = sa[..., ax]
            lo, hi = lo_box[:, ax], hi_box[:, ax]
            moving = da != 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo - pa) / da
                t2 = (hi - pa) / da
            tmin = np.where(moving, np.minimum(t1, t2), -np.inf)
            tmax = np.where(moving, np.maximum(t1, t2), np.inf)
            # a segment parallel to this slab is inside only if strictly between the planes
            parallel_out = ~moving & ~((pa > lo) & (pa < hi))
            tmin = np.where(parallel_out, np.inf, tmin)
            t_lo = np.maximum(t_lo, tmin)
            t_hi = np.minimum(t_hi, tmax)
        counts[start : start + _CHUNK] = ((t_hi - t_lo) > 1e-12).sum(axis=1)
    return counts


def los_blocked(umap: UrbanMap, a, b) -> int:
    return int(los_blocked_many(umap, a, b)[0])


def map_segment(umap: UrbanMap, x, x_u, h: Heights, K: int) -> int:
    if K < 1:
        raise ValueError("K must be >= 1")
    n = los_blocked(umap, (x_u[0], x_u[1], h.h_user), (x[0], x[1], h.h_uav))
    return min(K, 1 + n)


def bs_link_blocked(umap: UrbanMap, x_u, x_b, h: Heights) -> int:
    return los_blocked(umap, (x_u[0], x_u[1], h.h_user), (x_b[0], x_b[1], h.h_bs))


@dataclass(frozen=True)
class NestedBoundaryField:
    """Direction-dependent boundary radii around a user, nested by construction.

    ``radii`` has shape (K-1, n_bins); column j covers world-frame directions
    [2*pi*j/n_bins, 2*pi*(j+1)/n_bins) and is nondecreasing down the rows.
    """

    radii: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.ndim != 2 or r.shape[1] < 1:
            raise ValueError("radii must be a (K-1, n_bins) array")
        if r.size and (np.any(r < 0) or np.any(np.diff(r, axis=0) < 0)):
            raise ValueError("boundary radii must be nonnegative and nondecreasing in k")
        r.setflags(write=False)
        object.__setattr__(self, "radii", r)

    @property
    def num_segments(self) -> int:
        return self.radii.shape[0] + 1

    @property
    def n_bins(self) -> int:
        return self.radii.shape[1]

    def bin_of(self, phi) -> np.ndarray:
        phi = np.mod(phi, 2 * math.pi)
        return np.minimum((phi * self.n_bins / (2 * math.pi)).astype(np.int64), self.n_bins - 1)

    @classmethod
    def circular(cls, radii_k, n_bins: int = 360) -> "NestedBoundaryField":
        radii_k = np.asarray(radii_k, dtype=float).reshape(-1, 1)
        return cls(np.repeat(radii_k, n_bins, axis=1))

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        K: int,
        r_min: float,
        r_max: float,
        n_bins: int = 360,
        n_harmonics: int = 4,
        jitter: float = 0.1,
    ) -> "NestedBoundaryField":
        """Random smooth-ish nested field: low-order harmonics plus per-bin jitter."""
        if K < 1:
            raise ValueError("K must be >= 1")
        phi = (np.arange(n_bins) + 0.5) * 2 * math.pi / n_bins
        rows = []
        for _ in range(K - 1):
            s = np.zeros(n_bins)
            for m in range(1, n_harmonics + 1):
                amp = rng.uniform(0, 1) / m
                s += amp * np.cos(m * phi + rng.uniform(0, 2 * math.pi))
            s += jitter * rng.standard_normal(n_bins)
            s = (s - s.min()) / max(s.max() - s.min(), 1e-12)
            rows.append(s)
        span = r_max - r_min
        # positive increments stacked in k keep every column sorted
        incr = np.array(rows) * span / max(K - 1, 1) + span * 0.02
        radii = r_min + np.cumsum(incr, axis=0) if K > 1 else np.zeros((0, n_bins))
        return cls(radii)


def nested_segment(fld: NestedBoundaryField, x, x_u) -> int:
    return int(nested_segment_many(fld, np.asarray([x], dtype=float), x_u)[0])


def nested_segment_many(fld: NestedBoundaryField, xs, x_u) -> np.ndarray:
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    dx = xs[:, 0] - x_u[0]
    dy = xs[:, 1] - x_u[1]
    rho = np.hypot(dx, dy)
    if fld.num_segments == 1:
        return np.ones(len(xs), dtype=np.int64)
    col = fld.radii[:, fld.bin_of(np.arctan2(dy, dx))]
    # segment k holds r_{k-1} < rho <= r_k
    return 1 + (rho[None, :] > col).sum(axis=0)


class SegmentOracle(Protocol):
    K: int

    def segment(self, x) -> int: ...

    def segments(self, xs) -> np.ndarray: ...


@dataclass(frozen=True)
class MapOracle:
    umap: UrbanMap
    x_u: Point2
    heights: Heights
    K: int = 2

    def segment(self, x) -> int:
        return map_segment(self.umap, x, self.x_u, self.heights, self.K)

    def segments(self, xs) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        a = np.array([self.x_u[0], self.x_u[1], self.heights.h_user])
        b = np.column_stack([xs, np.full(len(xs), self.heights.h_uav)])
        return np.minimum(self.K, 1 + los_blocked_many(self.umap, a, b))


@dataclass(frozen=True)
class NestedOracle:
    fld: NestedBoundaryField
    x_u: Point2

    @property
    def K(self) -> int:
        return self.fld.num_segments

    def segment(self, x) -> int:
        return nested_segment(self.fld, x, self.x_u)

    def segments(self, xs) -> np.ndarray:
        return nested_segment_many(self.fld, xs, self.x_u)


def nesting_violation_rate(oracle, x_u, points, shrinks) -> float:
    """Fraction of (x, s) pairs where pulling x toward the user raises the segment."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    shrinks = np.asarray(shrinks, dtype=float)
    xu = np.asarray(x_u, dtype=float)
    pulled = xu + shrinks[:, None] * (points - xu)
    return float(np.mean(oracle.segments(pulled) > oracle.segments(points)))
