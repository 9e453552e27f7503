"""Minimal native SVG line/scatter plots (no plotting dependency)."""

from __future__ import annotations

import math

WIDTH, HEIGHT = 640, 440
MARGIN = 60


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * span:
        ticks.append(round(t, 12))
        t += step
    return ticks


class SvgPlot:
    """Collect series, then render one SVG 1.1 document."""

    def __init__(self, title: str, xlabel: str, ylabel: str):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.series: list[tuple[str, list, list, str, bool]] = []

    def add_line(self, x, y, label: str = "", color: str = "#1f6fb2"):
        self.series.append((label, list(x), list(y), color, True))

    def add_points(self, x, y, label: str = "", color: str = "#c0392b"):
        self.series.append((label, list(x), list(y), color, False))

    def _bounds(self):
        xs = [v for s in self.series for v in s[1]]
        ys = [v for s in self.series for v in s[2] if math.isfinite(v)]
        if not xs or not ys:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y1 = y0 + 1.0
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        x0, x1, y0, y1 = self._bounds()
        iw, ih = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

        def px(x):
            return MARGIN + (x - x0) / (x1 - x0) * iw

        def py(y):
            return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ih

        parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" '
            f'font-size="15" font-family="sans-serif">{self.title}</text>',
        ]
        for t in _ticks(x0, x1):
            parts.append(
                f'<line x1="{px(t):.1f}" y1="{HEIGHT - MARGIN}" x2="{px(t):.1f}" '
                f'y2="{HEIGHT - MARGIN + 5}" stroke="black"/>'
            )
            parts.append(
                f'<text x="{px(t):.1f}" y="{HEIGHT - MARGIN + 20}" text-anchor="middle" '
                f'font-size="11" font-family="sans-serif">{t:g}</text>'
            )
        for t in _ticks(y0, y1):
            parts.append(
                f'<line x1="{MARGIN - 5}" y1="{py(t):.1f}" x2="{MARGIN}" '
                f'y2="{py(t):.1f}" stroke="black"/>'
            )
            parts.append(
                f'<text x="{MARGIN - 8}" y="{py(t):.1f}" text-anchor="end" '
                f'font-size="11" font-family="sans-serif" dy="4">{t:g}</text>'
            )
        parts.append(
            f'<rect x="{MARGIN}" y="{MARGIN}" width="{iw}" height="{ih}" '
            f'fill="none" stroke="black"/>'
        )
        parts.append(
            f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" '
            f'font-size="13" font-family="sans-serif">{self.xlabel}</text>'
        )
        parts.append(
            f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" font-size="13" '
            f'font-family="sans-serif" transform="rotate(-90 16 {HEIGHT / 2})">'
            f"{self.ylabel}</text>"
        )
        legend_y = MARGIN + 14
        for label, xs, ys, color, is_line in self.series:
            pts = [
                (px(x), py(y))
                for x, y in zip(xs, ys)
                if math.isfinite(x) and math.isfinite(y)
            ]
            if is_line and len(pts) > 1:
                d = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
                parts.append(
                    f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>'
                )
            else:
                for x, y in pts:
                    parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="2.5" fill="{color}"/>')
            if label:
                parts.append(
                    f'<text x="{WIDTH - MARGIN - 6}" y="{legend_y}" text-anchor="end" '
                    f'font-size="11" font-family="sans-serif" fill="{color}">{label}</text>'
                )
                legend_y += 14
        parts.append("</svg>")
        return "\n".join(parts)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())
