"""Minimal self-contained SVG line charts (no plotting dependency)."""

from __future__ import annotations

import math

_WIDTH, _HEIGHT = 640, 440
_MARGIN = 60
_COLORS = ("#1f6fb2", "#c24f30", "#3a8f4d", "#8355a8", "#b0892b", "#4f5d75")


def _ticks(lo: float, hi: float, log: bool):
    if log:
        a = math.floor(math.log10(lo))
        b = math.ceil(math.log10(hi))
        return [10.0 ** k for k in range(a, b + 1)]
    span = hi - lo or 1.0
    step = 10.0 ** math.floor(math.log10(span / 4))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * abs(span):
        out.append(t)
        t += step
    return out


def line_chart(path, series, title="", xlabel="", ylabel="",
               loglog=False, comment="") -> None:
    """Write a polyline chart; ``series`` is a list of (xs, ys, label)."""
    xs_all = [x for xs, _, _ in series for x in xs]
    ys_all = [y for _, ys, _ in series for y in ys]
    if loglog:
        xs_all = [x for x in xs_all if x > 0]
        ys_all = [y for y in ys_all if y > 0]
    if not xs_all or not ys_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    xlo, xhi = min(xs_all), max(xs_all)
    ylo, yhi = min(ys_all), max(ys_all)
    if xlo == xhi:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    if ylo == yhi:
        ylo, yhi = ylo - 0.5, yhi + 0.5

    def tx(v):
        if loglog:
            v = math.log10(v)
            a, b = math.log10(xlo), math.log10(xhi)
        else:
            a, b = xlo, xhi
        return _MARGIN + (v - a) / (b - a) * (_WIDTH - 2 * _MARGIN)

    def ty(v):
        if loglog:
            v = math.log10(v)
            a, b = math.log10(ylo), math.log10(yhi)
        else:
            a, b = ylo, yhi
        return _HEIGHT - _MARGIN - (v - a) / (b - a) * (_HEIGHT - 2 * _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
    ]
    if comment:
        parts.append(f"<!-- {comment} -->")
    parts += [
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]
    axis = (f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_WIDTH - 2 * _MARGIN}" '
            f'height="{_HEIGHT - 2 * _MARGIN}" fill="none" stroke="#555"/>')
    parts.append(axis)
    for t in _ticks(xlo, xhi, loglog):
        if not (xlo <= t <= xhi):
            continue
        px = tx(t)
        parts.append(f'<line x1="{px:.1f}" y1="{_HEIGHT - _MARGIN}" '
                     f'x2="{px:.1f}" y2="{_HEIGHT - _MARGIN + 5}" stroke="#555"/>')
        parts.append(f'<text x="{px:.1f}" y="{_HEIGHT - _MARGIN + 18}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{t:.4g}</text>')
    for t in _ticks(ylo, yhi, loglog):
        if not (ylo <= t <= yhi):
            continue
        py = ty(t)
        parts.append(f'<line x1="{_MARGIN - 5}" y1="{py:.1f}" '
                     f'x2="{_MARGIN}" y2="{py:.1f}" stroke="#555"/>')
        parts.append(f'<text x="{_MARGIN - 8}" y="{py + 4:.1f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11">{t:.4g}</text>')
    parts.append(f'<text x="{_WIDTH / 2:.1f}" y="{_HEIGHT - 12}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13">{xlabel}</text>')
    parts.append(f'<text x="16" y="{_HEIGHT / 2:.1f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 16 {_HEIGHT / 2:.1f})">{ylabel}</text>')

    for i, (xs, ys, label) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{tx(x):.2f},{ty(y):.2f}" for x, y in zip(xs, ys)
                       if not loglog or (x > 0 and y > 0))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.6"/>')
        if label:
            ly = _MARGIN + 16 + 16 * i
            parts.append(f'<line x1="{_WIDTH - _MARGIN - 90}" y1="{ly - 4}" '
                         f'x2="{_WIDTH - _MARGIN - 70}" y2="{ly - 4}" '
                         f'stroke="{color}" stroke-width="1.6"/>')
            parts.append(f'<text x="{_WIDTH - _MARGIN - 64}" y="{ly}" '
                         f'font-family="sans-serif" font-size="11">{label}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def step_series(breakpoints, values):
    """Duplicate points so a step function plots with vertical jumps."""
    xs, ys = [], []
    for k, v in enumerate(values):
        xs.extend([breakpoints[k], breakpoints[k + 1]])
        ys.extend([v, v])
    return xs, ys
