"""Minimal, dependency-free SVG rendering of ALE panels and Shapley bars.

Output is a pure function of the plotted numbers (fixed float formatting,
no timestamps), so identical reports render to identical bytes.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

W, H = 480, 320
LEFT, RIGHT, TOP, BOTTOM = 64, 16, 36, 48


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    a = abs(v)
    if a != 0 and (a >= 1e5 or a < 1e-3):
        return f"{v:.1e}"
    if a >= 100:
        return f"{v:.0f}"
    return f"{v:.3g}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not np.isfinite(lo) or not np.isfinite(hi):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _frame(title: str, xlabel: str, ylabel: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-family="sans-serif" font-size="11">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-family="sans-serif" font-size="11" '
        f'transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
    ]


def ale_svg(curve: dict, title: str, antilog: bool = False) -> str:
    """One ALE panel: centered effect line over a shaded 5-95% band.

    ``curve`` is an ``ALECurve.to_dict()`` document. With ``antilog`` the
    x axis stays on the log scale but ticks are labelled ``exp(v) - 1``.
    """
    pts = curve["points"]
    x = np.array([p["x"] for p in pts])
    e = np.array([p["effect"] for p in pts])
    lo = np.array([p["lo"] for p in pts])
    hi = np.array([p["hi"] for p in pts])
    x0, x1 = float(x.min()), float(x.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    y0, y1 = float(min(lo.min(), 0.0)), float(max(hi.max(), 0.0))
    if y1 == y0:
        y0, y1 = y0 - 0.01, y1 + 0.01
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * (W - LEFT - RIGHT)

    def sy(v):
        return TOP + (y1 - v) / (y1 - y0) * (H - TOP - BOTTOM)

    out = _frame(title, curve["feature"] + (" (log scale, antilog labels)" if antilog else ""), "centered ALE")
    out.append(
        f'<line x1="{LEFT}" y1="{_fmt(sy(0))}" x2="{W - RIGHT}" y2="{_fmt(sy(0))}" stroke="#999" stroke-dasharray="3,3"/>'
    )
    band = [f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, hi)]
    band += [f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x[::-1], lo[::-1])]
    out.append(f'<polygon points="{" ".join(band)}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>')
    line = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, e))
    out.append(f'<polyline points="{line}" fill="none" stroke="#08519c" stroke-width="1.5"/>')
    for t in _nice_ticks(x0, x1):
        label = _tick_label(math.expm1(t)) if antilog else _tick_label(t)
        out.append(
            f'<text x="{_fmt(sx(t))}" y="{H - BOTTOM + 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{escape(label)}</text>'
        )
    for t in _nice_ticks(y0, y1):
        out.append(
            f'<text x="{LEFT - 4}" y="{_fmt(sy(t) + 3)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{escape(_tick_label(t))}</text>'
        )
    out.append(
        f'<rect x="{LEFT}" y="{TOP}" width="{W - LEFT - RIGHT}" height="{H - TOP - BOTTOM}" fill="none" stroke="black"/>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def shapley_svg(summary: dict, title: str) -> str:
    """Horizontal bars of mean |Shapley value|, largest on top."""
    rows = summary["importance"]
    top = max((r["importance"] for r in rows), default=0.0) or 1.0
    left = 130
    bar_h = (H - TOP - BOTTOM) / max(len(rows), 1)
    out = _frame(title, "mean |Shapley value|", "")
    for i, r in enumerate(rows):
        y = TOP + i * bar_h
        w = r["importance"] / top * (W - left - RIGHT - 50)
        out.append(
            f'<rect x="{left}" y="{_fmt(y + 2)}" width="{_fmt(w)}" height="{_fmt(bar_h - 4)}" fill="#3182bd"/>'
        )
        out.append(
            f'<text x="{left - 4}" y="{_fmt(y + bar_h / 2 + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{escape(r["feature"])}</text>'
        )
        out.append(
            f'<text x="{_fmt(left + w + 4)}" y="{_fmt(y + bar_h / 2 + 4)}" '
            f'font-family="sans-serif" font-size="10">{r["importance"]:.4f}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
