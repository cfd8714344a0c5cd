"""A very small deterministic SVG line/scatter plotter.

Only what the experiment presets need: several named series on linear or
log10 axes, drawn as polylines or markers, with tick labels at the ends.
"""

import math

from .errors import OutputError

_COLOURS = ["#1f4e9c", "#c0392b", "#27864a", "#8e44ad", "#d68910", "#2c3e50", "#7f8c8d"]
W, H = 640, 420
ML, MR, MT, MB = 70, 150, 30, 50


def _fmt(v):
    return f"{v:.2f}"


def _finite(xs, ys, logy):
    out = []
    for x, y in zip(xs, ys):
        if logy:
            if not y > 0:
                continue
            y = math.log10(y)
        if math.isfinite(x) and math.isfinite(y):
            out.append((float(x), float(y)))
    return out


def line_plot(series, path, title="", xlabel="", ylabel="", logy=False, markers=False):
    """Write an SVG with one polyline (or marker set) per ``(label, xs, ys)``."""
    pts = [(label, _finite(xs, ys, logy)) for label, xs, ys in series]
    allp = [p for _, ps in pts for p in ps]
    if not allp:
        allp = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = W - ML - MR, H - MT - MB

    def sx(x):
        return ML + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MT + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
           f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
           f'<text x="{ML + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">{xlabel}</text>',
           f'<text x="16" y="{MT + ph / 2:.1f}" text-anchor="middle" '
           f'transform="rotate(-90 16 {MT + ph / 2:.1f})">'
           f'{("log10 " if logy else "") + ylabel}</text>']
    for v, anchor, x in ((x0, "start", ML), (x1, "end", ML + pw)):
        out.append(f'<text x="{x}" y="{MT + ph + 16}" text-anchor="{anchor}">{v:.4g}</text>')
    for v, y in ((y0, MT + ph), (y1, MT + 10)):
        out.append(f'<text x="{ML - 6}" y="{y}" text-anchor="end">{v:.4g}</text>')
    for k, (label, ps) in enumerate(pts):
        colour = _COLOURS[k % len(_COLOURS)]
        if markers:
            for x, y in ps:
                out.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="2.5" fill="{colour}"/>')
        elif ps:
            coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in ps)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{colour}" '
                       f'stroke-width="1.5"/>')
        ly = MT + 14 + 16 * k
        out.append(f'<rect x="{W - MR + 12}" y="{ly - 8}" width="10" height="10" fill="{colour}"/>')
        out.append(f'<text x="{W - MR + 28}" y="{ly + 1}">{label}</text>')
    out.append("</svg>")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(out) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path
