"""Deterministic SVG scatter plots of predicted vs true difficulty.

Hand-emitted SVG with a fixed canvas and a fixed element order so that
identical inputs always produce byte-identical files.
"""

from __future__ import annotations

import math
import os
from typing import Optional, Sequence

from .evaluation import safe_pearson

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 20, 40, 52
N_TICKS = 5

_POINT = "#4477aa"
_FIT = "#cc6677"
_IDENTITY = "#999999"


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _axis_range(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def scatter_plot(
    pred: Sequence[float],
    truth: Sequence[float],
    out_path: str | os.PathLike,
    *,
    title: str = "",
) -> None:
    """Write an SVG of predictions against true values.

    Shows the identity line, the least-squares fit (when defined), and an
    ``r = ...`` annotation ("n/a" for degenerate facets).
    """
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(truth)}")
    if len(pred) == 0:
        raise ValueError("nothing to plot")

    xlo, xhi = _axis_range(truth)
    ylo, yhi = _axis_range(pred)
    # One shared square-ish range keeps the identity line meaningful.
    lo, hi = min(xlo, ylo), max(xhi, yhi)

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(v: float) -> float:
        return MARGIN_L + (v - lo) / (hi - lo) * plot_w

    def sy(v: float) -> float:
        return HEIGHT - MARGIN_B - (v - lo) / (hi - lo) * plot_h

    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    parts.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    parts.append(
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="black" stroke-width="1"/>'
    )

    ticks = [lo + (hi - lo) * i / (N_TICKS - 1) for i in range(N_TICKS)]
    for t in ticks:
        x = sx(t)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{HEIGHT - MARGIN_B}" x2="{_fmt(x)}" '
            f'y2="{HEIGHT - MARGIN_B + 5}" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x)}" y="{HEIGHT - MARGIN_B + 18}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">{_fmt(t)}</text>'
        )
        y = sy(t)
        parts.append(
            f'<line x1="{MARGIN_L - 5}" y1="{_fmt(y)}" x2="{MARGIN_L}" '
            f'y2="{_fmt(y)}" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{MARGIN_L - 8}" y="{_fmt(y + 4)}" font-family="sans-serif" '
            f'font-size="11" text-anchor="end">{_fmt(t)}</text>'
        )

    parts.append(
        f'<line x1="{_fmt(sx(lo))}" y1="{_fmt(sy(lo))}" x2="{_fmt(sx(hi))}" '
        f'y2="{_fmt(sy(hi))}" stroke="{_IDENTITY}" stroke-width="1" '
        f'stroke-dasharray="4,3"/>'
    )

    fit = _fit_line(truth, pred)
    if fit is not None:
        b0, b1 = fit
        parts.append(
            f'<line x1="{_fmt(sx(lo))}" y1="{_fmt(sy(b0 + b1 * lo))}" '
            f'x2="{_fmt(sx(hi))}" y2="{_fmt(sy(b0 + b1 * hi))}" '
            f'stroke="{_FIT}" stroke-width="1.5"/>'
        )

    for xv, yv in zip(truth, pred):
        parts.append(
            f'<circle cx="{_fmt(sx(xv))}" cy="{_fmt(sy(yv))}" r="3" '
            f'fill="{_POINT}" fill-opacity="0.6"/>'
        )

    r = safe_pearson(pred, truth)
    r_text = "n/a" if r is None else f"{r:.2f}"
    parts.append(
        f'<text x="{MARGIN_L + 10}" y="{MARGIN_T + 18}" font-family="sans-serif" '
        f'font-size="13">r = {r_text}</text>'
    )
    if title:
        parts.append(
            f'<text x="{WIDTH // 2}" y="24" font-family="sans-serif" font-size="14" '
            f'text-anchor="middle">{_escape(title)}</text>'
        )
    parts.append(
        f'<text x="{MARGIN_L + plot_w // 2}" y="{HEIGHT - 14}" '
        f'font-family="sans-serif" font-size="12" text-anchor="middle">'
        f'True difficulty (logits)</text>'
    )
    parts.append(
        f'<text x="16" y="{MARGIN_T + plot_h // 2}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN_T + plot_h // 2})">'
        f'Predicted difficulty (logits)</text>'
    )
    parts.append("</svg>")

    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def _fit_line(x: Sequence[float], y: Sequence[float]) -> Optional[tuple[float, float]]:
    n = len(x)
    if n < 2:
        return None
    xbar = sum(x) / n
    ybar = sum(y) / n
    sxx = sum((v - xbar) ** 2 for v in x)
    if sxx == 0:
        return None
    b1 = sum((a - xbar) * (b - ybar) for a, b in zip(x, y)) / sxx
    if not (math.isfinite(b1)):
        return None
    return ybar - b1 * xbar, b1


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
