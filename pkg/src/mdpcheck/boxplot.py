"""Deterministic SVG box plots for per-feature statistic populations.

Renders one panel per population: a box per feature (median, quartiles,
whiskers at 1.5 * IQR, outlier dots), a horizontal zero line, and a marker
at the significance level actually tested by the percentile rule (the value
that must exceed 0 for the feature to count as significant).  The output is
plain SVG text built from sorted, fixed-precision primitives so identical
inputs produce identical bytes.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .analysis import StatPopulation, significance_levels
from .envs import ExpectedPattern
from .errors import ConfigurationError

PANEL_WIDTH = 720
PANEL_HEIGHT = 240
MARGIN_LEFT = 64
MARGIN_RIGHT = 16
MARGIN_TOP = 34
MARGIN_BOTTOM = 30

_TITLES = {
    "reward_contribution": "Reward contribution",
    "action_sensitivity": "Action sensitivity",
    "offset_action_sensitivity": "Offset action sensitivity",
}


def _fmt(value: float) -> str:
    """Fixed-precision coordinate formatting (deterministic bytes)."""
    return f"{value:.2f}"


def _box_stats(values: np.ndarray) -> dict[str, object]:
    """Quartiles, 1.5*IQR whisker ends, and outliers of one feature row."""
    q1, med, q3 = (float(v) for v in np.percentile(values, [25.0, 50.0, 75.0]))
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = values[(values >= lo_fence) & (values <= hi_fence)]
    # a box always has at least its own quartiles inside the fences
    whisker_lo = float(inside.min())
    whisker_hi = float(inside.max())
    outliers = values[(values < lo_fence) | (values > hi_fence)]
    return {
        "q1": q1,
        "median": med,
        "q3": q3,
        "whisker_lo": whisker_lo,
        "whisker_hi": whisker_hi,
        "outliers": [float(v) for v in np.sort(outliers)],
    }


def _ticks(lo: float, hi: float) -> list[float]:
    return [lo + (hi - lo) * k / 4.0 for k in range(5)]


def _expected_set(kind: str, expected: ExpectedPattern | None) -> frozenset[int]:
    if expected is None:
        return frozenset()
    if kind == "reward_contribution":
        return expected.reward_features or frozenset()
    return expected.action_features


def _render_panel(
    parts: list[str],
    pop: StatPopulation,
    levels: np.ndarray,
    expected: ExpectedPattern | None,
    y_offset: int,
) -> None:
    d = pop.values.shape[0]
    stats = [_box_stats(pop.values[i]) for i in range(d)]
    lo = min(min(s["whisker_lo"], *(s["outliers"] or [s["whisker_lo"]])) for s in stats)
    hi = max(max(s["whisker_hi"], *(s["outliers"] or [s["whisker_hi"]])) for s in stats)
    lo = min(lo, 0.0, float(levels.min()))
    hi = max(hi, 0.0, float(levels.max()))
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    lo -= pad
    hi += pad

    plot_w = PANEL_WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    x0, y0 = MARGIN_LEFT, y_offset + MARGIN_TOP

    def ypix(v: float) -> float:
        return y0 + plot_h * (hi - v) / (hi - lo)

    slot = plot_w / d
    box_w = 0.5 * slot

    title = _TITLES.get(pop.kind, pop.kind)
    parts.append(
        f'<text x="{_fmt(x0)}" y="{_fmt(y_offset + 20)}" '
        f'font-size="14" font-weight="bold">{title}</text>'
    )
    parts.append(
        f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(plot_w)}" '
        f'height="{_fmt(plot_h)}" fill="none" stroke="#888888" stroke-width="1"/>'
    )

    exp_set = _expected_set(pop.kind, expected)
    for i in sorted(exp_set):
        parts.append(
            f'<rect x="{_fmt(x0 + i * slot)}" y="{_fmt(y0)}" width="{_fmt(slot)}" '
            f'height="{_fmt(plot_h)}" fill="#fdf0d5" stroke="none"/>'
        )

    for tick in _ticks(lo, hi):
        ty = ypix(tick)
        parts.append(
            f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(ty)}" x2="{_fmt(x0)}" '
            f'y2="{_fmt(ty)}" stroke="#888888" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x0 - 8)}" y="{_fmt(ty + 4)}" font-size="10" '
            f'text-anchor="end">{tick:.4g}</text>'
        )

    zy = ypix(0.0)
    parts.append(
        f'<line x1="{_fmt(x0)}" y1="{_fmt(zy)}" x2="{_fmt(x0 + plot_w)}" '
        f'y2="{_fmt(zy)}" stroke="#555555" stroke-width="1" stroke-dasharray="4 3"/>'
    )

    for i, s in enumerate(stats):
        cx = x0 + (i + 0.5) * slot
        bx = cx - box_w / 2.0
        # whisker stem and caps
        parts.append(
            f'<line x1="{_fmt(cx)}" y1="{_fmt(ypix(s["whisker_lo"]))}" '
            f'x2="{_fmt(cx)}" y2="{_fmt(ypix(s["whisker_hi"]))}" '
            f'stroke="#1f4e79" stroke-width="1"/>'
        )
        for w in ("whisker_lo", "whisker_hi"):
            wy = ypix(s[w])
            parts.append(
                f'<line x1="{_fmt(cx - box_w / 4)}" y1="{_fmt(wy)}" '
                f'x2="{_fmt(cx + box_w / 4)}" y2="{_fmt(wy)}" '
                f'stroke="#1f4e79" stroke-width="1"/>'
            )
        # interquartile box and median
        top, bot = ypix(s["q3"]), ypix(s["q1"])
        parts.append(
            f'<rect x="{_fmt(bx)}" y="{_fmt(top)}" width="{_fmt(box_w)}" '
            f'height="{_fmt(max(bot - top, 0.0))}" fill="#cfe2f3" '
            f'stroke="#1f4e79" stroke-width="1"/>'
        )
        my = ypix(s["median"])
        parts.append(
            f'<line x1="{_fmt(bx)}" y1="{_fmt(my)}" x2="{_fmt(bx + box_w)}" '
            f'y2="{_fmt(my)}" stroke="#1f4e79" stroke-width="1.5"/>'
        )
        for v in s["outliers"]:
            parts.append(
                f'<circle cx="{_fmt(cx)}" cy="{_fmt(ypix(v))}" r="1.5" '
                f'fill="none" stroke="#1f4e79" stroke-width="0.8"/>'
            )
        # significance level: must exceed the zero line for significance
        ly = ypix(float(levels[i]))
        parts.append(
            f'<line x1="{_fmt(bx - 2)}" y1="{_fmt(ly)}" x2="{_fmt(bx + box_w + 2)}" '
            f'y2="{_fmt(ly)}" stroke="#c1121f" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{_fmt(cx)}" y="{_fmt(y0 + plot_h + 14)}" font-size="10" '
            f'text-anchor="middle">f{i}</text>'
        )


def render_boxplots(
    populations: Sequence[StatPopulation],
    X: float | Sequence[float] = 75.0,
    expected: ExpectedPattern | None = None,
) -> str:
    """Render one SVG document with one box-plot panel per population.

    ``X`` is the significance percentile (global or per-feature) whose level
    is marked in red on every box; ``expected`` optionally tints the features
    an oracle pattern marks as significant for the panel's statistic.
    """
    if not populations:
        raise ConfigurationError("render_boxplots needs at least one population")
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_WIDTH}" '
        f'height="{PANEL_HEIGHT * len(populations)}" '
        f'font-family="Helvetica, Arial, sans-serif">',
        f'<rect width="{PANEL_WIDTH}" height="{PANEL_HEIGHT * len(populations)}" '
        f'fill="#ffffff"/>',
    ]
    for p, pop in enumerate(populations):
        levels = significance_levels(pop, X)
        _render_panel(parts, pop, levels, expected, p * PANEL_HEIGHT)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
