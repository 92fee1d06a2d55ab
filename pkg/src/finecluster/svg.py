"""Minimal static SVG plots with byte-stable output."""
import math

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#17becf", "#bcbd22", "#7f7f7f")
UNASSIGNED = "#c8c8c8"
W, H, PAD = 480, 480, 40


def _scale(vals, lo_px, hi_px):
    vals = np.asarray(vals, dtype=np.float64)
    lo, hi = float(np.min(vals)), float(np.max(vals))
    span = hi - lo if hi > lo else 1.0
    return lo_px + (vals - lo) / span * (hi_px - lo_px)


def _header(title):
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W // 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>']


def scatter(points, labels, title="", max_points=5000):
    """Scatter of the first two coordinates, coloured by label (-1 drawn grey)."""
    P = np.asarray(points, dtype=np.float64)[:, :2]
    labels = np.asarray(labels)
    if P.shape[0] > max_points:
        keep = np.linspace(0, P.shape[0] - 1, max_points).astype(np.int64)
        P, labels = P[keep], labels[keep]
    xs = _scale(P[:, 0], PAD, W - PAD)
    ys = _scale(P[:, 1], H - PAD, PAD)
    out = _header(title)
    for x, y, lab in zip(xs, ys, labels):
        color = UNASSIGNED if lab < 0 else PALETTE[int(lab) % len(PALETTE)]
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="1.5" fill="{color}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line(xs, series, title="", xlabel="", ylabel=""):
    """Line plot; ``series`` maps a name to y-values aligned with ``xs``."""
    xs = np.asarray(xs, dtype=np.float64)
    ys_all = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()])
    ys_all = ys_all[np.isfinite(ys_all)]
    lo, hi = (float(ys_all.min()), float(ys_all.max())) if ys_all.size else (0.0, 1.0)
    lo, hi = min(lo, 0.0), max(hi, 1.0)
    px = _scale(xs, PAD, W - PAD) if xs.size > 1 else np.array([W / 2.0])
    out = _header(title)
    out.append(f'<text x="{W // 2}" y="{H - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">{xlabel}</text>')
    out.append(f'<text x="12" y="{H // 2}" font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 12 {H // 2})" text-anchor="middle">{ylabel}</text>')
    for i, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=np.float64)
        py = H - PAD - (ys - lo) / (hi - lo) * (H - 2 * PAD)
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(px, py) if math.isfinite(y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - PAD}" y="{PAD + 14 * (i + 1)}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11" fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
