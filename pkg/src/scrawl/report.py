"""Deterministic report artifacts: CSV tables, PGM rasters, SVG bar charts.

Everything here writes byte-stable output for identical inputs: floats use
repr (shortest round-trip), rows are emitted in the order given, and the
SVG is assembled from plain strings.
"""

from __future__ import annotations

import numpy as np

from .metrics import InkImage

METRIC_COLUMNS = ["condition", "model", "character", "feedback", "seed",
                  "iou", "angular_error_abs", "angular_error_mse"]
SUMMARY_COLUMNS = ["condition", "model", "character", "feedback", "runs",
                   "iou_mean", "iou_std", "angular_error_abs_mean",
                   "angular_error_abs_std", "angular_error_mse_mean",
                   "angular_error_mse_std"]


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, columns, rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# grayscale rasters (plain PGM, binary variant)


def write_pgm(path, gray: np.ndarray):
    gray = np.asarray(gray, dtype=np.uint8)
    header = f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode()
    with open(path, "wb") as fh:
        fh.write(header + gray.tobytes())


def ink_to_gray(img: InkImage) -> np.ndarray:
    """White board, black ink."""
    return np.where(img.grid > 0, 0, 255).astype(np.uint8)


def overlay_gray(reference: InkImage, result: InkImage) -> np.ndarray:
    """Reference-only mid gray, result-only dark gray, agreement black."""
    ref = reference.grid > 0
    res = result.grid > 0
    gray = np.full(ref.shape, 255, dtype=np.uint8)
    gray[ref & ~res] = 176
    gray[res & ~ref] = 96
    gray[ref & res] = 0
    return gray


# ---------------------------------------------------------------------------
# SVG bar chart with error bars


def write_bar_svg(path, title: str, labels, means, stds, unit: str = ""):
    n = len(labels)
    if not (n == len(means) == len(stds)):
        raise ValueError("labels/means/stds lengths differ")
    bar_w, gap, left, top = 56, 28, 70, 40
    plot_h = 260
    width = left + n * (bar_w + gap) + 30
    height = top + plot_h + 70
    peak = max((m + s) for m, s in zip(means, stds)) if n else 1.0
    peak = peak if peak > 0 else 1.0
    scale = plot_h / (1.1 * peak)

    def y_of(v):
        return top + plot_h - v * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="24" font-family="monospace" font-size="15">'
        f'{title}</text>',
        f'<line x1="{left - 8}" y1="{top + plot_h}" x2="{width - 16}" '
        f'y2="{top + plot_h}" stroke="black"/>',
    ]
    for i, (lab, m, s) in enumerate(zip(labels, means, stds)):
        x = left + i * (bar_w + gap)
        parts.append(
            f'<rect x="{x}" y="{y_of(m):.2f}" width="{bar_w}" '
            f'height="{(m * scale):.2f}" fill="#7a9bbd" stroke="black"/>')
        cx = x + bar_w / 2
        parts.append(
            f'<line x1="{cx}" y1="{y_of(m + s):.2f}" x2="{cx}" '
            f'y2="{y_of(max(m - s, 0.0)):.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{cx}" y="{top + plot_h + 18}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{lab}</text>')
        parts.append(
            f'<text x="{cx}" y="{y_of(m + s) - 6:.2f}" text-anchor="middle" '
            f'font-family="monospace" font-size="10">{m:.3g}</text>')
    if unit:
        parts.append(
            f'<text x="{left - 8}" y="{top - 6}" font-family="monospace" '
            f'font-size="11">{unit}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def write_loss_csv(path, train_loss, val_loss):
    lines = ["epoch,train_loss,val_loss"]
    for i, (tr, va) in enumerate(zip(train_loss, val_loss)):
        lines.append(f"{i},{tr!r},{va!r}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
