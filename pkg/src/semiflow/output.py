"""CSV and SVG emission for time series.

Both writers are deterministic: the same series produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Series:
    """Time column plus one or more named value columns of equal length."""

    t: np.ndarray
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        cols = {str(k): np.asarray(v, dtype=float).ravel() for k, v in dict(self.columns).items()}
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "columns", cols)
        if t.size == 0 or not cols:
            raise ValueError("series is empty")
        for name, v in cols.items():
            if v.size != t.size:
                raise ValueError(f"column {name!r} has {v.size} values for {t.size} times")

    @classmethod
    def single(cls, t, values, name: str = "value") -> "Series":
        return cls(t, {name: values})


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def csv_text(series: Series) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", *series.columns])
    cols = list(series.columns.values())
    for i, t in enumerate(series.t):
        writer.writerow([_fmt(t), *(_fmt(c[i]) for c in cols)])
    return buf.getvalue()


def emit_csv(series: Series, path) -> Path:
    path = Path(path)
    path.write_text(csv_text(series), encoding="utf-8", newline="")
    return path


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def svg_text(series: Series, title: str = "", xlabel: str = "t", ylabel: str = "value",
             width: int = 640, height: int = 400) -> str:
    left, right, top, bottom = 70, 20, 36, 50
    pw, ph = width - left - right, height - top - bottom
    t = series.t
    allv = np.concatenate(list(series.columns.values()))
    finite = allv[np.isfinite(allv)]
    t0, t1 = float(t.min()), float(t.max())
    v0, v1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if t1 == t0:
        t0, t1 = t0 - 0.5, t1 + 0.5
    if v1 == v0:
        pad = 0.5 if v0 == 0 else 0.5 * abs(v0)
        v0, v1 = v0 - pad, v1 + pad

    def X(a):
        return left + (a - t0) / (t1 - t0) * pw

    def Y(a):
        return top + (v1 - a) / (v1 - v0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for val, anchor_x in ((t0, left), (t1, left + pw)):
        out.append(f'<text x="{anchor_x:.3f}" y="{top + ph + 16}" font-size="11" '
                   f'text-anchor="middle">{val:.4g}</text>')
    for val in (v0, v1):
        out.append(f'<text x="{left - 6}" y="{Y(val) + 4:.3f}" font-size="11" '
                   f'text-anchor="end">{val:.4g}</text>')
    out.append(f'<text x="{left + pw / 2:.3f}" y="{height - 12}" font-size="13" '
               f'text-anchor="middle">{_escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.3f}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.3f})">{_escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{width / 2:.3f}" y="22" font-size="14" '
                   f'text-anchor="middle">{_escape(title)}</text>')
    for k, (name, vals) in enumerate(series.columns.items()):
        mask = np.isfinite(vals)
        pts = " ".join(f"{X(a):.3f},{Y(b):.3f}" for a, b in zip(t[mask], vals[mask]))
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{left + pw - 4}" y="{top + 14 + 14 * k}" font-size="11" '
                   f'text-anchor="end" fill="{color}">{_escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(series: Series, path, **labels) -> Path:
    path = Path(path)
    path.write_text(svg_text(series, **labels), encoding="utf-8", newline="")
    return path


__all__ = ["Series", "csv_text", "emit_csv", "emit_svg", "svg_text"]
