"""Static SVG charts rendered from their backing CSV files.

Every renderer is a pure function of the CSV text, so deleting a chart and
rendering it again reproduces the file byte for byte.
"""
from __future__ import annotations

import csv
import io
import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
W, H = 760, 380
ML, MR, MT, MB = 64, 150, 36, 48


def read_rows(text: str) -> list[dict]:
    """CSV records as dicts, skipping ``#`` comment lines."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def _f(v: float) -> str:
    return f"{v:.2f}"


def _num(v: float) -> str:
    if v == 0:
        return "0"
    return f"{v:.3g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


class _Panel:
    """One plotting area with linear axes."""

    def __init__(self, x0, y0, w, h, xr, yr):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlo, self.xhi = xr if xr[1] > xr[0] else (xr[0] - 1, xr[0] + 1)
        lo, hi = yr
        if not hi > lo:
            lo, hi = lo - 1, hi + 1
        pad = 0.05 * (hi - lo)
        self.ylo, self.yhi = lo - pad, hi + pad

    def px(self, x):
        return self.x0 + (x - self.xlo) / (self.xhi - self.xlo) * self.w

    def py(self, y):
        return self.y0 + self.h - (y - self.ylo) / (self.yhi - self.ylo) * self.h

    def frame(self, out, xlabels=None):
        out.append(f'<rect x="{_f(self.x0)}" y="{_f(self.y0)}" width="{_f(self.w)}" height="{_f(self.h)}" '
                   'fill="none" stroke="#444" stroke-width="1"/>')
        for t in _ticks(self.ylo, self.yhi):
            y = self.py(t)
            out.append(f'<line x1="{_f(self.x0 - 4)}" y1="{_f(y)}" x2="{_f(self.x0)}" y2="{_f(y)}" stroke="#444"/>')
            out.append(f'<text x="{_f(self.x0 - 6)}" y="{_f(y + 4)}" text-anchor="end">{_num(t)}</text>')
        if xlabels:
            k = max(1, len(xlabels) // 6)
            for i in range(0, len(xlabels), k):
                x = self.px(i)
                out.append(f'<line x1="{_f(x)}" y1="{_f(self.y0 + self.h)}" x2="{_f(x)}" '
                           f'y2="{_f(self.y0 + self.h + 4)}" stroke="#444"/>')
                out.append(f'<text x="{_f(x)}" y="{_f(self.y0 + self.h + 16)}" text-anchor="middle">'
                           f'{escape(xlabels[i])}</text>')
        else:
            for t in _ticks(self.xlo, self.xhi):
                x = self.px(t)
                out.append(f'<line x1="{_f(x)}" y1="{_f(self.y0 + self.h)}" x2="{_f(x)}" '
                           f'y2="{_f(self.y0 + self.h + 4)}" stroke="#444"/>')
                out.append(f'<text x="{_f(x)}" y="{_f(self.y0 + self.h + 16)}" text-anchor="middle">'
                           f'{_num(t)}</text>')

    def line(self, out, xs, ys, color, dash=None, width=1.5):
        pts = " ".join(f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in zip(xs, ys) if math.isfinite(y))
        if not pts:
            return
        d = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{d}/>')

    def vline(self, out, x, color="#888"):
        out.append(f'<line x1="{_f(self.px(x))}" y1="{_f(self.y0)}" x2="{_f(self.px(x))}" '
                   f'y2="{_f(self.y0 + self.h)}" stroke="{color}" stroke-dasharray="4,3"/>')

    def band(self, out, x1, x2, color="#f4d03f"):
        a, b = self.px(x1), self.px(x2)
        out.append(f'<rect x="{_f(a)}" y="{_f(self.y0)}" width="{_f(max(b - a, 1.0))}" height="{_f(self.h)}" '
                   f'fill="{color}" fill-opacity="0.3" stroke="none"/>')


def _doc(body: list[str], title: str, width=W, height=H) -> str:
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>']
    return "\n".join(head + body + ["</svg>", ""])


def _legend(out, items, x, y):
    for k, (label, color, dash) in enumerate(items):
        yy = y + 16 * k
        d = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{_f(x)}" y1="{_f(yy)}" x2="{_f(x + 18)}" y2="{_f(yy)}" stroke="{color}" '
                   f'stroke-width="2"{d}/>')
        out.append(f'<text x="{_f(x + 24)}" y="{_f(yy + 4)}">{escape(label)}</text>')


def _finite(vals):
    v = [x for x in vals if math.isfinite(x)]
    return (min(v), max(v)) if v else (0.0, 1.0)


def render_bands(text: str, title: str = "BSADF statistic with critical values") -> str:
    """Columns ``r2, month, bsadf, cv, flag``; exuberant months shaded."""
    rows = read_rows(text)
    xs = list(range(len(rows)))
    stat = [float(r["bsadf"]) for r in rows]
    cv = [float(r["cv"]) for r in rows]
    p = _Panel(ML, MT, W - ML - MR, H - MT - MB, (0, max(len(rows) - 1, 1)), _finite(stat + cv))
    out: list[str] = []
    i = 0
    while i < len(rows):
        if rows[i]["flag"] == "1":
            j = i
            while j + 1 < len(rows) and rows[j + 1]["flag"] == "1":
                j += 1
            p.band(out, i, j)
            i = j + 1
        else:
            i += 1
    p.frame(out, [r["month"] for r in rows])
    p.line(out, xs, stat, PALETTE[0])
    p.line(out, xs, cv, PALETTE[1], dash="6,3")
    _legend(out, [("BSADF", PALETTE[0], None), ("critical value", PALETTE[1], "6,3")], W - MR + 12, MT + 10)
    return _doc(out, title)


def render_segments(text: str, title: str = "Price with estimated phase boundaries") -> str:
    """Columns ``month, price, phase``; a dashed line at every phase change."""
    rows = read_rows(text)
    xs = list(range(len(rows)))
    price = [float(r["price"]) for r in rows]
    p = _Panel(ML, MT, W - ML - MR, H - MT - MB, (0, max(len(rows) - 1, 1)), _finite(price))
    out: list[str] = []
    p.frame(out, [r["month"] for r in rows])
    for i in range(1, len(rows)):
        if rows[i]["phase"] != rows[i - 1]["phase"]:
            p.vline(out, i)
    p.line(out, xs, price, PALETTE[0])
    phases = list(dict.fromkeys(r["phase"] for r in rows))
    _legend(out, [("price", PALETTE[0], None)] + [(ph, "#888", "4,3") for ph in phases[:1]], W - MR + 12, MT + 10)
    for k, ph in enumerate(phases):
        first = next(i for i, r in enumerate(rows) if r["phase"] == ph)
        out.append(f'<text x="{_f(p.px(first) + 3)}" y="{_f(MT + 12)}" fill="#555">{escape(ph)}</text>')
    return _doc(out, title)


def render_density(text: str, title: str = "Phase-conditional densities") -> str:
    """Columns ``variable, phase, x, density``; one panel per variable."""
    rows = read_rows(text)
    variables = list(dict.fromkeys(r["variable"] for r in rows))
    phases = list(dict.fromkeys(r["phase"] for r in rows))
    ph_h, gap = 150, 40
    height = MT + len(variables) * (ph_h + gap) + 10
    out: list[str] = []
    for k, var in enumerate(variables):
        sub = [r for r in rows if r["variable"] == var]
        xr = _finite([float(r["x"]) for r in sub])
        yr = (0.0, _finite([float(r["density"]) for r in sub])[1])
        p = _Panel(ML, MT + k * (ph_h + gap), W - ML - MR, ph_h, xr, yr)
        p.frame(out)
        out.append(f'<text x="{_f(ML)}" y="{_f(p.y0 - 4)}">{escape(var)}</text>')
        for j, ph in enumerate(phases):
            pts = [r for r in sub if r["phase"] == ph]
            p.line(out, [float(r["x"]) for r in pts], [float(r["density"]) for r in pts],
                   PALETTE[j % len(PALETTE)])
    _legend(out, [(ph, PALETTE[j % len(PALETTE)], None) for j, ph in enumerate(phases)], W - MR + 12, MT + 10)
    return _doc(out, title, height=height)


def _heat(v: float) -> str:
    # diverging blue (-1) / white (0) / red (+1)
    v = max(-1.0, min(1.0, v))
    if v >= 0:
        g = int(round(255 * (1 - v)))
        return f"#ff{g:02x}{g:02x}"
    g = int(round(255 * (1 + v)))
    return f"#{g:02x}{g:02x}ff"


def render_heatmap(text: str, title: str = "Pearson correlation") -> str:
    """Columns ``row, column, rho``."""
    rows = read_rows(text)
    names = list(dict.fromkeys(r["row"] for r in rows))
    n = len(names)
    cell = max(14, min(40, 480 // max(n, 1)))
    left, top = 130, 40
    width = left + n * cell + 20
    height = top + n * cell + 110
    out: list[str] = []
    val = {(r["row"], r["column"]): float(r["rho"]) for r in rows}
    for i, a in enumerate(names):
        out.append(f'<text x="{left - 4}" y="{_f(top + i * cell + cell / 2 + 4)}" text-anchor="end">{escape(a)}</text>')
        for j, b in enumerate(names):
            v = val.get((a, b), float("nan"))
            fill = _heat(v) if math.isfinite(v) else "#ccc"
            out.append(f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" height="{cell}" '
                       f'fill="{fill}" stroke="#fff"><title>{escape(a)} / {escape(b)}: {v:.3f}</title></rect>')
    for j, b in enumerate(names):
        x = left + j * cell + cell / 2
        y = top + n * cell + 6
        out.append(f'<text x="{_f(x)}" y="{_f(y)}" transform="rotate(60 {_f(x)} {_f(y)})">{escape(b)}</text>')
    return _doc(out, title, width=max(width, 300), height=height)


def render_irf(text: str, title: str = "Orthogonalized impulse responses") -> str:
    """Columns ``horizon, <response variables...>``."""
    rows = read_rows(text)
    cols = [c for c in rows[0] if c != "horizon"] if rows else []
    hs = [float(r["horizon"]) for r in rows]
    allv = [float(r[c]) for r in rows for c in cols] + [0.0]
    p = _Panel(ML, MT, W - ML - MR, H - MT - MB, _finite(hs), _finite(allv))
    out: list[str] = []
    p.frame(out)
    p.line(out, [p.xlo, p.xhi], [0.0, 0.0], "#999", width=1)
    for j, c in enumerate(cols):
        p.line(out, hs, [float(r[c]) for r in rows], PALETTE[j % len(PALETTE)])
    _legend(out, [(c, PALETTE[j % len(PALETTE)], None) for j, c in enumerate(cols)], W - MR + 12, MT + 10)
    return _doc(out, title)


def render_paths(text: str, title: str = "One-step-ahead forecasts") -> str:
    """Columns ``month, actual, forecast, se, model``."""
    rows = read_rows(text)
    months = sorted(dict.fromkeys(r["month"] for r in rows))
    pos = {m: i for i, m in enumerate(months)}
    models = list(dict.fromkeys(r["model"] for r in rows))
    actual = {r["month"]: float(r["actual"]) for r in rows}
    vals = list(actual.values()) + [float(r["forecast"]) for r in rows]
    p = _Panel(ML, MT, W - ML - MR, H - MT - MB, (0, max(len(months) - 1, 1)), _finite(vals))
    out: list[str] = []
    p.frame(out, months)
    p.line(out, range(len(months)), [actual[m] for m in months], "#000", width=2)
    for j, m in enumerate(models):
        pts = [r for r in rows if r["model"] == m]
        p.line(out, [pos[r["month"]] for r in pts], [float(r["forecast"]) for r in pts],
               PALETTE[j % len(PALETTE)], dash="5,2")
    _legend(out, [("actual", "#000", None)] + [(m, PALETTE[j % len(PALETTE)], "5,2") for j, m in enumerate(models)],
            W - MR + 12, MT + 10)
    return _doc(out, title)


RENDERERS = {
    "bands": render_bands,
    "segments": render_segments,
    "density": render_density,
    "heatmap": render_heatmap,
    "irf": render_irf,
    "paths": render_paths,
}


def render(kind: str, csv_text: str) -> str:
    try:
        fn = RENDERERS[kind]
    except KeyError:
        raise ValueError(f"unknown chart kind {kind!r}") from None
    return fn(csv_text)
