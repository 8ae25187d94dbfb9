"""CSV/JSON writers and minimal SVG rendering."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

TRAJECTORY_COLUMNS = ("step", "x", "y", "rho", "theta_rad", "segment", "phase", "partition_k", "cost", "f_min_so_far")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else f"{float(v):.6g}"
    return "" if v is None else str(v)


def csv_text(rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> str:
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def write_csv(path, rows, columns=None) -> None:
    Path(path).write_text(csv_text(rows, columns))


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        return None if math.isnan(o) else float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def trajectory_rows(trajectories: Iterable) -> list:
    rows = []
    step = 0
    for t in trajectories:
        for w in t.waypoints:
            rows.append({
                "step": step, "x": w.x, "y": w.y, "rho": w.rho, "theta_rad": w.theta,
                "segment": w.segment, "phase": t.phase, "partition_k": t.partition_k,
                "cost": w.cost, "f_min_so_far": w.f_min,
            })
            step += 1
    return rows


_ANCHORS = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=float)


def colour(t: float) -> str:
    t = min(max(t, 0.0), 1.0) * (len(_ANCHORS) - 1)
    i = min(int(t), len(_ANCHORS) - 2)
    c = _ANCHORS[i] + (t - i) * (_ANCHORS[i + 1] - _ANCHORS[i])
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def svg_heatmap(
    values: Optional[np.ndarray],
    xs: Optional[np.ndarray],
    ys: Optional[np.ndarray],
    cell: float,
    extent: tuple,
    buildings: Optional[np.ndarray] = None,
    paths: Sequence[np.ndarray] = (),
    markers: Sequence[tuple] = (),
    xlabel: str = "x (m)",
    ylabel: str = "y (m)",
    px: float = 1.0,
) -> str:
    """Rect heatmap in world coordinates; y grows upward. ``px`` is pixels per metre.

    ``values`` may be None to draw only buildings, paths and markers.
    """
    x0, y0, x1, y1 = extent
    pad = 30
    W, H = (x1 - x0) * px, (y1 - y0) * px
    if values is None:
        values, xs, ys = np.empty((0, 0)), np.empty(0), np.empty(0)
    finite = values[np.isfinite(values)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0

    def X(x):
        return pad + (x - x0) * px

    def Y(y):
        return pad + (y1 - y) * px

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W + 2 * pad:.0f}" height="{H + 2 * pad:.0f}">',
        '<g shape-rendering="crispEdges">',
    ]
    for j, yc in enumerate(ys):
        for i, xc in enumerate(xs):
            v = values[j, i]
            if not np.isfinite(v):
                continue
            out.append(
                f'<rect x="{X(xc - cell / 2):.1f}" y="{Y(yc + cell / 2):.1f}" width="{cell * px:.1f}" '
                f'height="{cell * px:.1f}" fill="{colour((v - lo) / span)}"/>'
            )
    out.append("</g>")
    if buildings is not None:
        for b in buildings:
            out.append(
                f'<rect x="{X(b[0]):.1f}" y="{Y(b[3]):.1f}" width="{(b[2] - b[0]) * px:.1f}" '
                f'height="{(b[3] - b[1]) * px:.1f}" fill="none" stroke="#ffffff" stroke-width="0.5"/>'
            )
    for p in paths:
        if len(p) > 1:
            pts = " ".join(f"{X(a):.1f},{Y(b):.1f}" for a, b in p)
            out.append(f'<polyline points="{pts}" fill="none" stroke="#00ff00" stroke-width="2"/>')
    for (mx, my, col) in markers:
        out.append(f'<circle cx="{X(mx):.1f}" cy="{Y(my):.1f}" r="5" fill="{col}" stroke="#000000"/>')
    out.append(f'<text x="{pad + W / 2:.0f}" y="{H + 2 * pad - 8:.0f}" font-size="12" text-anchor="middle">{xlabel}</text>')
    out.append(
        f'<text x="12" y="{pad + H / 2:.0f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 12 {pad + H / 2:.0f})">{ylabel}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
