"""Dependency-free SVG output: stick-figure strips and error curves."""
from __future__ import annotations

from typing import Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from .motion import JOINT_ROWS, N_JOINTS, SKELETON, PoseClip, SkeletonSpec

KNOWN_COLOR = "#9a9a9a"
GAP_COLOR = "#2e9e44"
FIGURE_SPACING = 70.0  # cm between sampled figures
MARGIN = 20.0


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _header(width: float, height: float, title: str, stamp: Optional[str]) -> list:
    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    if stamp:
        lines.append(f"<!-- generated {escape(stamp)} -->")
    lines.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
                 f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">')
    lines.append(f"<title>{escape(title)}</title>")
    return lines


def skeleton_strip(clip: PoseClip, stride: int = 10, gaps: Sequence[Tuple[int, int]] = (),
                   skeleton: SkeletonSpec = SKELETON, stamp: Optional[str] = None) -> str:
    """Side view (forward x against up y) of every ``stride``-th frame, left to right.

    Frames inside ``gaps`` are drawn in the highlight color, the rest in gray.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    frames = list(range(0, clip.frames, stride))
    in_gap = np.zeros(clip.frames, dtype=bool)
    for s, n in gaps:
        in_gap[s:s + n] = True
    pos = clip.features[JOINT_ROWS].reshape(N_JOINTS, 3, -1)
    xs, ys = pos[:, 0, frames], pos[:, 1, frames]
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    width = 2 * MARGIN + (len(frames) - 1) * FIGURE_SPACING + (x_hi - x_lo)
    height = 2 * MARGIN + (y_hi - y_lo)
    out = _header(width, height, f"{clip.frames} frames, stride {stride}", stamp)
    for k, t in enumerate(frames):
        color = GAP_COLOR if in_gap[t] else KNOWN_COLOR
        ox = MARGIN + k * FIGURE_SPACING - x_lo
        out.append(f'<g data-frame="{t}" stroke="{color}" stroke-width="2" stroke-linecap="round">')
        for p, c in skeleton.edges:
            x1, y1 = ox + pos[p, 0, t], MARGIN + y_hi - pos[p, 1, t]
            x2, y2 = ox + pos[c, 0, t], MARGIN + y_hi - pos[c, 1, t]
            out.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def error_curve(xs: Sequence[float], ys: Sequence[float], x_label: str = "gap (frames)",
                y_label: str = "error (cm)", stamp: Optional[str] = None) -> str:
    """Polyline of ``ys`` over ``xs`` with point markers and axis labels."""
    if len(xs) != len(ys) or not len(xs):
        raise ValueError("error curve needs equally many x and y values (at least one)")
    w, h, pad = 480.0, 320.0, 48.0
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    x_span = float(x.max() - x.min()) or 1.0
    y_top = float(y.max()) or 1.0
    px = pad + (x - x.min()) / x_span * (w - 2 * pad)
    py = h - pad - y / y_top * (h - 2 * pad)
    out = _header(w, h, f"{y_label} vs {x_label}", stamp)
    out.append(f'<line x1="{_fmt(pad)}" y1="{_fmt(h - pad)}" x2="{_fmt(w - pad)}" y2="{_fmt(h - pad)}" '
               'stroke="black"/>')
    out.append(f'<line x1="{_fmt(pad)}" y1="{_fmt(pad)}" x2="{_fmt(pad)}" y2="{_fmt(h - pad)}" stroke="black"/>')
    pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
    out.append(f'<polyline points="{pts}" fill="none" stroke="{GAP_COLOR}" stroke-width="2"/>')
    for a, b, xv, yv in zip(px, py, x, y):
        out.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="3" fill="{GAP_COLOR}"/>')
        out.append(f'<text x="{_fmt(a)}" y="{_fmt(h - pad + 16)}" font-size="11" '
                   f'text-anchor="middle">{_fmt(xv)}</text>')
        out.append(f'<text x="{_fmt(a)}" y="{_fmt(b - 6)}" font-size="10" text-anchor="middle">{yv:.2f}</text>')
    out.append(f'<text x="{_fmt(w / 2)}" y="{_fmt(h - 8)}" font-size="12" text-anchor="middle">'
               f"{escape(x_label)}</text>")
    out.append(f'<text x="14" y="{_fmt(h / 2)}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 14 {_fmt(h / 2)})">{escape(y_label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
