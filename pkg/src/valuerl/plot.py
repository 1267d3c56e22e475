"""Reward curves as self-contained SVG line charts."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .dqn import moving_average

PALETTE = ("#e6862c", "#2c6fe6", "#d62728", "#2ca02c", "#9467bd", "#8c564b")
WIDTH, HEIGHT = 720, 420
MARGIN = dict(left=70, right=20, top=30, bottom=55)


def read_curve(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"no rows in {path}")
    episodes = np.array([float(r["episode"]) for r in rows])
    rewards = np.array([float(r["total_reward"]) for r in rows])
    return episodes, rewards


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + step * 1e-9, step)]


def render_svg(series: Sequence[tuple[str, np.ndarray, np.ndarray]], window: int = 50,
               title: str = "Reward curve") -> str:
    """``series`` is (label, episodes, rewards) per curve. Each curve draws a
    faint raw polyline and a solid moving-average polyline."""
    if not series:
        raise ValueError("nothing to plot")
    x_all = np.concatenate([s[1] for s in series])
    y_all = np.concatenate([s[2] for s in series])
    x0, x1 = float(x_all.min()), float(x_all.max())
    y0, y1 = float(y_all.min()), float(y_all.max())
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (1 - (y - y0) / (y1 - y0)) * ph

    def points(xs, ys):
        return " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>']
    bx, by = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<line x1="{bx}" y1="{by}" x2="{bx + pw}" y2="{by}" stroke="black"/>')
    out.append(f'<line x1="{bx}" y1="{MARGIN["top"]}" x2="{bx}" y2="{by}" stroke="black"/>')
    for t in _nice_ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{by}" x2="{sx(t):.2f}" y2="{by + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{by + 18}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y0, y1):
        out.append(f'<line x1="{bx - 5}" y1="{sy(t):.2f}" x2="{bx}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{bx - 8}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{bx + pw / 2}" y="{HEIGHT - 12}" text-anchor="middle">Episode</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2})">Reward</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<g class="series" data-label="{escape(label)}">')
        out.append(f'<polyline class="raw" fill="none" stroke="{color}" stroke-opacity="0.3" '
                   f'stroke-width="1" points="{points(xs, ys)}"/>')
        out.append(f'<polyline class="moving-average" fill="none" stroke="{color}" '
                   f'stroke-width="2" points="{points(xs, moving_average(ys, window))}"/>')
        out.append("</g>")
    out.append('<g class="legend">')
    for i, (label, _, _) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        ly = MARGIN["top"] + 12 + 18 * i
        lx = bx + pw - 190
        out.append(f'<g class="legend-entry"><line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>'
                   f'<text x="{lx + 30}" y="{ly + 4}">{escape(label)}</text></g>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_curves(paths: Sequence, out_svg, window: int = 50) -> None:
    series = []
    for p in paths:
        xs, ys = read_curve(p)
        label = Path(p).parent.name + "/" + Path(p).stem if Path(p).parent.name else Path(p).stem
        series.append((label, xs, ys))
    Path(out_svg).write_text(render_svg(series, window), encoding="utf-8")
