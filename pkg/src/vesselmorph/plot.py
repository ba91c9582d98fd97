"""Grouped bar charts (SVG) of group means with SD error bars and significance brackets.

The SVG is written by hand so output is byte-stable: no timestamps, ids or
font metrics enter the file.
"""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .ingest import GROUP_ORDER

DEFAULT_PANELS = (("MA", "Artery"), ("MA", "Vein"), ("BA", "Artery"), ("BA", "Vein"),
                  ("BEC", "Artery"), ("BEC", "Vein"))
ALL_PARAMETERS = ("MA", "BA", "BC", "BEA", "BEC")
UNITS = {"MA": "degrees", "BA": "degrees", "BEA": "degrees", "BC": "ratio", "BEC": "ratio"}
COLORS = ("#4c72b0", "#55a868", "#dd8452", "#c44e52")
SIG_LEVEL = 0.05

W, H = 420, 340
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 40, 50


def _num(v):
    return f"{v:.2f}".rstrip("0").rstrip(".") if v != int(v) else str(int(v))


def nice_ticks(lo, hi, count=5):
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    k = 0
    while start + k * step <= hi + 1e-9 * step:
        ticks.append(round(start + k * step, 10))
        k += 1
    return ticks


def panel_data(tables, parameter, system):
    """(bars, significant pairs) for one parameter and system from a tables JSON dict."""
    bars = []
    for g in GROUP_ORDER:
        row = next((r for r in tables["table1"] if r["parameter"] == parameter and r["system"] == system
                    and r["group"] == g.value), None)
        mean = row["mean"] if row else None
        sd = row["sd"] if row else None
        bars.append((g, mean, sd or 0.0))
    pairs = []
    for r in tables["table2"] + tables["table3"]:
        if r["parameter"] == parameter and r["system"] == system and r["p_value"] is not None \
                and r["p_value"] < SIG_LEVEL:
            pairs.append((r["group_a"], r["group_b"], r["p_value"]))
    return bars, pairs


def render_panel(tables, parameter, system):
    bars, pairs = panel_data(tables, parameter, system)
    names = [g.value for g, _, _ in bars]
    present = [(m, s) for _, m, s in bars if m is not None]
    top_val = max((m + s for m, s in present), default=1.0)
    top_val = top_val if top_val > 0 else 1.0
    # headroom for the brackets
    ymax = top_val * (1.08 + 0.08 * len(pairs))
    ticks = nice_ticks(0.0, ymax)
    ymax = max(ymax, ticks[-1])
    ph = H - TOP - BOTTOM
    pw = W - LEFT - RIGHT

    def y(v):
        return TOP + ph * (1 - v / ymax)

    slot = pw / len(bars)
    bw = slot * 0.6
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="13">'
           f'{escape(system)} {escape(parameter)}</text>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{W - RIGHT}" y2="{TOP + ph}" stroke="black"/>']
    for t in ticks:
        out.append(f'<line x1="{LEFT - 4}" y1="{y(t):.2f}" x2="{LEFT}" y2="{y(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 6}" y="{y(t) + 4:.2f}" text-anchor="end">{_num(t)}</text>')
    out.append(f'<text x="14" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {TOP + ph / 2:.1f})">{UNITS.get(parameter, "")}</text>')
    centers = {}
    for i, (g, mean, sd) in enumerate(bars):
        cx = LEFT + slot * (i + 0.5)
        centers[g.value] = cx
        out.append(f'<text x="{cx:.2f}" y="{TOP + ph + 16}" text-anchor="middle">{escape(g.label)}</text>')
        if mean is None:
            out.append(f'<text x="{cx:.2f}" y="{TOP + ph - 6}" text-anchor="middle">n/a</text>')
            continue
        h = max(0.0, mean)
        out.append(f'<rect x="{cx - bw / 2:.2f}" y="{y(h):.2f}" width="{bw:.2f}" height="{y(0) - y(h):.2f}" '
                   f'fill="{COLORS[i % len(COLORS)]}"/>')
        if sd > 0:
            lo, hi = y(max(0.0, mean - sd)), y(mean + sd)
            out.append(f'<line x1="{cx:.2f}" y1="{lo:.2f}" x2="{cx:.2f}" y2="{hi:.2f}" stroke="black"/>')
            for yy in (lo, hi):
                out.append(f'<line x1="{cx - 6:.2f}" y1="{yy:.2f}" x2="{cx + 6:.2f}" y2="{yy:.2f}" stroke="black"/>')
    # brackets from narrowest to widest, stacked upward
    pairs.sort(key=lambda p: (abs(names.index(p[0]) - names.index(p[1])), names.index(p[0]), names.index(p[1])))
    level = top_val * 1.04
    step = top_val * 0.08
    for a, b, _p in pairs:
        x1, x2 = sorted((centers[a], centers[b]))
        yy = y(level)
        out.append(f'<path d="M{x1:.2f},{yy + 5:.2f} V{yy:.2f} H{x2:.2f} V{yy + 5:.2f}" fill="none" stroke="black"/>')
        out.append(f'<text x="{(x1 + x2) / 2:.2f}" y="{yy - 2:.2f}" text-anchor="middle" font-size="14">*</text>')
        level += step
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plots(tables, out_dir, all_parameters=False):
    """Write one SVG per panel; returns the list of paths in panel order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    panels = [(p, s) for p in ALL_PARAMETERS for s in ("Artery", "Vein")] if all_parameters else DEFAULT_PANELS
    paths = []
    for param, system in panels:
        path = out / f"{param.lower()}_{system.lower()}.svg"
        path.write_text(render_panel(tables, param, system), encoding="utf-8")
        paths.append(path)
    return paths
