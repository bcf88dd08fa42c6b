"""Report output: JSON documents, CSV tables and a small log-log SVG plot."""

from __future__ import annotations

import csv
import json
import math
from xml.sax.saxutils import escape

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _clean(obj):
    """Replace non-finite floats by ``None`` so the JSON stays standard."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _clean(obj.tolist())
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True)


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def write_csv(path, rows):
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def loglog_svg(rows, xkey, ykeys, title="", width=480, height=360):
    """Log-log line plot of ``ykeys`` against ``xkey`` as an SVG string.

    Nonpositive or non-finite values are skipped.
    """
    pad_l, pad_r, pad_t, pad_b = 70, 150, 30, 50
    series = {}
    for key in ykeys:
        pts = [(r[xkey], r[key]) for r in rows
               if r.get(key) is not None and math.isfinite(r[key]) and r[key] > 0 and r[xkey] > 0]
        if pts:
            series[key] = [(math.log10(x), math.log10(y)) for x, y in pts]
    allp = [p for pts in series.values() for p in pts]
    if not allp:
        raise ValueError("nothing positive to plot")
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return pad_t + (y1 - v) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    if title:
        out.append(f'<text x="{pad_l}" y="{pad_t - 10}" font-size="13">{escape(title)}</text>')
    for e in range(math.floor(x0), math.ceil(x1) + 1):
        if x0 <= e <= x1:
            out.append(f'<text x="{sx(e):.1f}" y="{height - pad_b + 16}" text-anchor="middle">1e{e}</text>')
    for e in range(math.floor(y0), math.ceil(y1) + 1):
        if y0 <= e <= y1:
            out.append(f'<text x="{pad_l - 6}" y="{sy(e) + 4:.1f}" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{pad_l + pw / 2}" y="{height - 12}" text-anchor="middle">{escape(xkey)}</text>')
    for i, (key, pts) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}"/>')
        ly = pad_t + 14 + 16 * i
        out.append(f'<line x1="{width - pad_r + 10}" y1="{ly}" x2="{width - pad_r + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - pad_r + 34}" y="{ly + 4}">{escape(key)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, rows, xkey, ykeys, title=""):
    with open(path, "w") as fh:
        fh.write(loglog_svg(rows, xkey, ykeys, title))
