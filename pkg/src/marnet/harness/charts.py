"""Self-contained SVG bar charts for sweep aggregates.

Hand-assembled SVG elements with fixed formatting, so identical input
produces byte-identical output and charts diff cleanly in CI.
"""

from __future__ import annotations

from ..errors import UndefinedInputError

_PARADIGM_ORDER = ("classical", "semantic", "agentic")
_COLORS = {"classical": "#a6bddb", "semantic": "#2b8cbe", "agentic": "#0868ac"}

_WIDTH = 640
_HEIGHT = 360
_MARGIN_LEFT = 60
_MARGIN_BOTTOM = 50
_MARGIN_TOP = 30
_PLOT_W = _WIDTH - _MARGIN_LEFT - 20
_PLOT_H = _HEIGHT - _MARGIN_TOP - _MARGIN_BOTTOM


def _fmt(x: float) -> str:
    return f"{x:.4f}".rstrip("0").rstrip(".")


def _require_paradigms(aggregate: dict) -> None:
    missing = [p for p in _PARADIGM_ORDER if p not in aggregate]
    if missing:
        raise UndefinedInputError(f"chart needs all three paradigms; missing {missing}")


def _bars_svg(title: str, groups: list[tuple[str, dict]], unit: str) -> str:
    """groups: [(group label, {paradigm: value})]"""
    peak = 0.0
    for _, values in groups:
        for v in values.values():
            peak = max(peak, v)
    if peak <= 0.0:
        peak = 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<text x="{_WIDTH // 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{_MARGIN_LEFT}" y1="{_MARGIN_TOP}" x2="{_MARGIN_LEFT}" '
        f'y2="{_MARGIN_TOP + _PLOT_H}" stroke="#333"/>',
        f'<line x1="{_MARGIN_LEFT}" y1="{_MARGIN_TOP + _PLOT_H}" '
        f'x2="{_MARGIN_LEFT + _PLOT_W}" y2="{_MARGIN_TOP + _PLOT_H}" stroke="#333"/>',
    ]
    group_w = _PLOT_W / len(groups)
    bar_w = group_w / (len(_PARADIGM_ORDER) + 1)
    for gi, (label, values) in enumerate(groups):
        gx = _MARGIN_LEFT + gi * group_w
        for pi, paradigm in enumerate(_PARADIGM_ORDER):
            v = values[paradigm]
            h = _PLOT_H * v / peak
            x = gx + bar_w * (pi + 0.5)
            y = _MARGIN_TOP + _PLOT_H - h
            parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar_w * 0.9)}" '
                f'height="{_fmt(h)}" fill="{_COLORS[paradigm]}"/>'
            )
            parts.append(
                f'<text x="{_fmt(x + bar_w * 0.45)}" y="{_fmt(y - 4)}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10">{_fmt(v)}</text>'
            )
        parts.append(
            f'<text x="{_fmt(gx + group_w / 2)}" y="{_MARGIN_TOP + _PLOT_H + 18}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="12">{label}</text>'
        )
    for pi, paradigm in enumerate(_PARADIGM_ORDER):
        lx = _MARGIN_LEFT + 10 + pi * 150
        ly = _HEIGHT - 12
        parts.append(f'<rect x="{lx}" y="{ly - 10}" width="12" height="12" fill="{_COLORS[paradigm]}"/>')
        parts.append(
            f'<text x="{lx + 16}" y="{ly}" font-family="sans-serif" font-size="12">{paradigm}</text>'
        )
    parts.append(
        f'<text x="14" y="{_MARGIN_TOP + _PLOT_H // 2}" font-family="sans-serif" '
        f'font-size="11" transform="rotate(-90 14 {_MARGIN_TOP + _PLOT_H // 2})" '
        f'text-anchor="middle">{unit}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_chart(aggregate: dict, kind: str) -> str:
    """aggregate: paradigm -> {ras, dib, mbs, success_rate, overhead_pct}."""
    _require_paradigms(aggregate)
    kind = kind.lower()
    if kind == "kpi_bars":
        semantic_dib = aggregate["semantic"]["dib"]
        dib_norm = {}
        for p in _PARADIGM_ORDER:
            dib_norm[p] = aggregate[p]["dib"] / semantic_dib if semantic_dib else 0.0
        groups = [
            ("RAS", {p: aggregate[p]["ras"] for p in _PARADIGM_ORDER}),
            ("DIB (semantic=1)", dib_norm),
            ("MBS", {p: aggregate[p]["mbs"] for p in _PARADIGM_ORDER}),
        ]
        return _bars_svg("Coordination KPIs by paradigm", groups, "score")
    if kind == "overhead_success":
        groups = [
            ("Overhead % of semantic", {p: aggregate[p]["overhead_pct"] for p in _PARADIGM_ORDER}),
            ("Success %", {p: 100.0 * aggregate[p]["success_rate"] for p in _PARADIGM_ORDER}),
        ]
        return _bars_svg("Signaling overhead vs task success", groups, "percent")
    raise UndefinedInputError(f"unknown chart kind {kind!r}")
