"""Stroke plans for the characters the robot writes.

Each glyph is a list of polyline strokes in a unit square (y up) that gets
mapped into the glyph box on the board.  A plan compiles into per-sample
hand targets: desired tip position, pen pressure and a pen-down flag.  'A'
is the trained character; '4' reuses its diagonal stroke family; 'B' adds
bulges that leave the motion range 'A' covers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

# board active area and the glyph box inside it, meters
BOARD_RECT = (0.10, -0.05, 0.10, 0.10)  # x0, y0, width, height
GLYPH_BOX = (0.11, -0.04, 0.08, 0.08)

_UNIT_STROKES = {
    "A": [
        [(0.50, 1.00), (0.10, 0.00)],
        [(0.50, 1.00), (0.90, 0.00)],
        [(0.28, 0.40), (0.72, 0.40)],
    ],
    "4": [
        [(0.55, 1.00), (0.12, 0.42), (0.88, 0.42)],
        [(0.66, 0.95), (0.66, 0.00)],
    ],
    "B": [
        [(0.15, 1.00), (0.15, 0.00)],
        [(0.15, 1.00), (0.75, 0.92), (0.95, 0.75), (0.75, 0.55),
         (0.15, 0.52), (0.70, 0.45), (0.98, 0.25), (0.70, 0.02),
         (0.15, 0.00)],
    ],
}

GLYPH_NAMES = tuple(sorted(_UNIT_STROKES))


@dataclass
class Stroke:
    points: np.ndarray  # (n, 2) board coordinates
    press: float = 1.2  # N


@dataclass
class StrokePlan:
    name: str
    strokes: list
    draw_speed: float = 0.06    # m/s along the polyline
    travel_speed: float = 0.10  # m/s between strokes
    lift_height: float = 0.005  # m above the board while traveling
    settle_time: float = 0.5    # s at the entry point before writing
    lower_time: float = 0.15
    raise_time: float = 0.15
    press_ramp: float = 0.15    # s to ramp pen pressure in and out
    end_hold: float = 0.3


def glyph_plan(name: str, press: float = 1.2) -> StrokePlan:
    if name not in _UNIT_STROKES:
        raise KeyError(f"unknown glyph {name!r}; have {GLYPH_NAMES}")
    x0, y0, w, h = GLYPH_BOX
    strokes = []
    for poly in _UNIT_STROKES[name]:
        pts = np.array([[x0 + u * w, y0 + v * h] for u, v in poly])
        strokes.append(Stroke(pts, press))
    return StrokePlan(name, strokes)


def jitter_plan(plan: StrokePlan, rng, waypoint_mm: float = 2.0,
                press_frac: float = 0.10) -> StrokePlan:
    """Perturb waypoints and pressures; draw order is per stroke:
    waypoint offsets first, then one pressure factor."""
    j = waypoint_mm * 1e-3
    strokes = []
    for s in plan.strokes:
        pts = s.points + rng.uniform(-j, j, size=s.points.shape)
        factor = rng.uniform(1.0 - press_frac, 1.0 + press_frac)
        strokes.append(Stroke(pts, s.press * factor))
    return replace(plan, strokes=strokes)


# ---------------------------------------------------------------------------
# plan compilation


def _polyline_lengths(points):
    deltas = np.diff(points, axis=0)
    seg = np.sqrt((deltas ** 2).sum(axis=1))
    return seg, float(seg.sum())


def _point_at(points, seg, cum, s):
    """Position along a polyline at arclength s."""
    total = cum[-1]
    if total <= 0.0:
        return points[0]
    s = min(max(s, 0.0), total)
    i = int(np.searchsorted(cum[1:], s, side="right"))
    i = min(i, len(seg) - 1)
    local = s - cum[i]
    frac = local / seg[i] if seg[i] > 0 else 0.0
    return points[i] + frac * (points[i + 1] - points[i])


def compile_plan(plan: StrokePlan, dt: float):
    """Expand a plan to per-sample arrays (pdes (n,3), press (n,), pen_down).

    pdes carries the hand's in-plane target plus the pen-axis height target
    used while the pen is up; while pen_down is set the hand presses with
    press[k] newtons instead of tracking a height.
    """
    rows = []  # (x, y, z, press, down)

    def hold(x, y, z, duration, press=0.0, down=0):
        n = max(1, int(round(duration / dt)))
        for _ in range(n):
            rows.append((x, y, z, press, down))

    def ramp_press(x, y, p0, p1, duration):
        n = max(1, int(round(duration / dt)))
        for k in range(n):
            p = p0 + (p1 - p0) * (k + 1) / n
            rows.append((x, y, 0.0, p, 1))

    def move_z(x, y, z0, z1, duration):
        n = max(1, int(round(duration / dt)))
        for k in range(n):
            c = 0.5 - 0.5 * math.cos(math.pi * (k + 1) / n)
            rows.append((x, y, z0 + (z1 - z0) * c, 0.0, 0))

    def travel(p0, p1, z, speed):
        d = float(np.hypot(*(p1 - p0)))
        duration = max(d / speed, 0.1)
        n = max(1, int(round(duration / dt)))
        for k in range(n):
            c = (k + 1) / n
            p = p0 + (p1 - p0) * c
            rows.append((p[0], p[1], z, 0.0, 0))

    lift = plan.lift_height
    start = plan.strokes[0].points[0]
    hold(start[0], start[1], lift, plan.settle_time)
    for idx, stroke in enumerate(plan.strokes):
        pts = stroke.points
        seg, total = _polyline_lengths(pts)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        move_z(pts[0][0], pts[0][1], lift, 0.0, plan.lower_time)
        ramp_press(pts[0][0], pts[0][1], 0.0, stroke.press, plan.press_ramp)
        n_draw = max(1, int(round(total / plan.draw_speed / dt)))
        for k in range(n_draw):
            s = total * (k + 1) / n_draw
            p = _point_at(pts, seg, cum, s)
            rows.append((p[0], p[1], 0.0, stroke.press, 1))
        ramp_press(pts[-1][0], pts[-1][1], stroke.press, 0.0, plan.press_ramp)
        move_z(pts[-1][0], pts[-1][1], 0.0, lift, plan.raise_time)
        if idx + 1 < len(plan.strokes):
            travel(pts[-1], plan.strokes[idx + 1].points[0], lift,
                   plan.travel_speed)
    last = plan.strokes[-1].points[-1]
    hold(last[0], last[1], lift, plan.end_hold)

    arr = np.array(rows)
    pdes = np.ascontiguousarray(arr[:, :3])
    press = np.ascontiguousarray(arr[:, 3])
    pen_down = np.ascontiguousarray(arr[:, 4].astype(np.uint8))
    return pdes, press, pen_down
