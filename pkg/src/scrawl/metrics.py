"""Writing-quality metrics: ink rasters, IoU and joint-angle error.

Ink logs rasterize onto a binary grid over the board rectangle; stamped
discs joined by short line sweeps approximate the pen trace.  IoU compares
two rasters; the angle error compares the slow reference trajectory with
the follower's network-rate response, summed over steps and joints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .glyphs import BOARD_RECT

log = logging.getLogger(__name__)


@dataclass
class InkImage:
    grid: np.ndarray  # (h, w) uint8, 1 where inked; row 0 is the top edge
    rect: tuple       # (x0, y0, width, height) board coordinates

    @property
    def count(self):
        return int(self.grid.sum())


def _disc_offsets(radius_px: int):
    r = int(radius_px)
    offs = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dx * dx + dy * dy <= r * r:
                offs.append((dx, dy))
    return offs


def rasterize(points, flags, rect=BOARD_RECT, resolution: int = 256,
              radius_px: int = 2) -> InkImage:
    """Binary ink raster from per-sample tip points and ink flags.

    Runs of consecutive flagged samples form strokes; within a run each
    point stamps a disc and consecutive points are joined by sweeping the
    disc along the segment.  Points outside the rectangle are dropped (one
    warning per call).
    """
    points = np.asarray(points, dtype=float)
    flags = np.asarray(flags).astype(bool)
    if points.ndim != 2 or points.shape[1] < 2:
        raise ShapeError(f"points have shape {points.shape}, need (n, 2)")
    if points.shape[0] != flags.shape[0]:
        raise ShapeError("points and flags lengths differ")
    x0, y0, w, h = rect
    res = int(resolution)
    grid = np.zeros((res, res), dtype=np.uint8)
    offs = _disc_offsets(radius_px)

    def to_px(p):
        cx = int((p[0] - x0) / w * res)
        cy = int((y0 + h - p[1]) / h * res)  # flip: board +y is image up
        return min(max(cx, 0), res - 1), min(max(cy, 0), res - 1)

    def inside(p):
        return x0 <= p[0] <= x0 + w and y0 <= p[1] <= y0 + h

    def stamp(cx, cy):
        for dx, dy in offs:
            px, py = cx + dx, cy + dy
            if 0 <= px < res and 0 <= py < res:
                grid[py, px] = 1

    dropped = 0
    prev = None  # previous pixel within the current stroke
    for p, on in zip(points, flags):
        if not on:
            prev = None
            continue
        if not inside(p):
            dropped += 1
            prev = None
            continue
        cx, cy = to_px(p)
        if prev is not None and (cx, cy) != prev:
            dist = float(np.hypot(cx - prev[0], cy - prev[1]))
            n = int(np.ceil(dist * 2))
            for i in range(1, n + 1):
                t = i / n
                stamp(int(round(prev[0] + t * (cx - prev[0]))),
                      int(round(prev[1] + t * (cy - prev[1]))))
        else:
            stamp(cx, cy)
        prev = (cx, cy)
    if dropped:
        log.warning("rasterize: dropped %d ink points outside the board rect",
                    dropped)
    return InkImage(grid, tuple(rect))


def iou(a: InkImage, b: InkImage) -> float:
    """Intersection over union of two ink rasters; two blanks count as 1."""
    if a.grid.shape != b.grid.shape:
        raise ShapeError(f"raster shapes differ: {a.grid.shape} vs {b.grid.shape}")
    ga = a.grid.astype(bool)
    gb = b.grid.astype(bool)
    union = int(np.logical_or(ga, gb).sum())
    if union == 0:
        return 1.0
    return float(np.logical_and(ga, gb).sum() / union)


def angular_error(theta_ref, theta_res):
    """(sum of absolute differences, mean squared difference) over the
    network-step grid; mismatched lengths clamp to the overlap."""
    theta_ref = np.asarray(theta_ref, dtype=float)
    theta_res = np.asarray(theta_res, dtype=float)
    if theta_ref.ndim != 2 or theta_res.ndim != 2 \
            or theta_ref.shape[1] != theta_res.shape[1]:
        raise ShapeError(f"angle grids {theta_ref.shape} vs {theta_res.shape}")
    n = min(theta_ref.shape[0], theta_res.shape[0])
    if n == 0:
        raise ValueError("empty angle series")
    if theta_ref.shape[0] != theta_res.shape[0]:
        log.warning("angular_error: clamping %d vs %d steps to %d",
                    theta_ref.shape[0], theta_res.shape[0], n)
    d = theta_ref[:n] - theta_res[:n]
    return float(np.abs(d).sum()), float(np.mean(d * d))


def aggregate_runs(values):
    """(mean, population std) over per-run metric values."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.shape[0] == 0:
        raise ValueError(f"need a non-empty 1-d value list, got {values.shape}")
    mean = float(values.mean())
    std = float(np.sqrt(np.mean((values - mean) ** 2)))
    return mean, std
