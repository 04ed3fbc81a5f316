"""Deterministic CSV and SVG emitters."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLOAT_FORMAT = ".9g"


@dataclass
class Table:
    """A header plus rows of scalars, written with :func:`emit_csv`."""

    header: list[str]
    rows: list[tuple] = field(default_factory=list)

    @classmethod
    def from_columns(cls, columns: dict[str, Sequence]) -> "Table":
        names = list(columns)
        cols = [list(np.asarray(columns[n]).tolist()) for n in names]
        lengths = {len(c) for c in cols}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
        return cls(names, list(zip(*cols)) if cols else [])

    def column(self, name: str) -> list:
        i = self.header.index(name)
        return [row[i] for row in self.rows]


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            raise ValueError("NaN value")
        if v == 0.0:
            return "0"
        return format(v, FLOAT_FORMAT)
    return str(value)


def emit_csv(table: Table, path) -> Path:
    """Write ``table`` to ``path`` with RFC-4180 quoting and 9 significant digits.

    Raises
    ------
    ValueError
        If any cell is NaN; the message carries the offending row index.
    OSError
        On I/O failure, re-raised with the path attached.
    """
    path = Path(path)
    formatted = []
    for i, row in enumerate(table.rows):
        if len(row) != len(table.header):
            raise ValueError(f"row {i} has {len(row)} cells, header has {len(table.header)}")
        try:
            formatted.append([format_value(v) for v in row])
        except ValueError as exc:
            raise ValueError(f"row {i}: {exc} in table for {path}") from None
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(table.header)
            writer.writerows(formatted)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path) -> Table:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path} is empty") from None
        rows = [tuple(float(v) for v in row) for row in reader if row]
    return Table(header, rows)


@dataclass
class Curve:
    label: str
    x: np.ndarray
    y: np.ndarray


@dataclass
class SeriesBundle:
    """Curves sharing one pair of axes."""

    title: str
    xlabel: str
    ylabel: str
    curves: list[Curve] = field(default_factory=list)

    def add(self, label: str, x: Iterable[float], y: Iterable[float]) -> "SeriesBundle":
        self.curves.append(Curve(label, np.asarray(x, float), np.asarray(y, float)))
        return self


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-12 * abs(step):
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def emit_svg(bundle: SeriesBundle, path, width: int = 640, height: int = 400) -> Path:
    """Write a minimal SVG 1.1 line chart of ``bundle``."""
    path = Path(path)
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom
    finite = [c for c in bundle.curves if c.x.size]
    xs = np.concatenate([c.x[np.isfinite(c.x) & np.isfinite(c.y)] for c in finite]) if finite else np.zeros(1)
    ys = np.concatenate([c.y[np.isfinite(c.x) & np.isfinite(c.y)] for c in finite]) if finite else np.zeros(1)
    if xs.size == 0:
        xs = ys = np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.2f}" y="22" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{_escape(bundle.title)}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _nice_ticks(x0, x1):
        px = sx(t)
        out.append(f'<line x1="{px:.2f}" y1="{top + ph}" x2="{px:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(
            f'<text x="{px:.2f}" y="{top + ph + 18}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="11">{t:.4g}</text>'
        )
    for t in _nice_ticks(y0, y1):
        py = sy(t)
        out.append(f'<line x1="{left - 5}" y1="{py:.2f}" x2="{left}" y2="{py:.2f}" stroke="black"/>')
        out.append(
            f'<text x="{left - 8}" y="{py + 4:.2f}" text-anchor="end" font-family="sans-serif" '
            f'font-size="11">{t:.4g}</text>'
        )
    out.append(
        f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{_escape(bundle.xlabel)}</text>'
    )
    out.append(
        f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="12" transform="rotate(-90 16 {top + ph / 2:.2f})">{_escape(bundle.ylabel)}</text>'
    )
    for i, c in enumerate(bundle.curves):
        colour = _PALETTE[i % len(_PALETTE)]
        ok = np.isfinite(c.x) & np.isfinite(c.y)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(c.x[ok], c.y[ok]))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 18 * i
        out.append(
            f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 30}" y2="{ly}" '
            f'stroke="{colour}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{left + pw + 35}" y="{ly + 4}" font-family="sans-serif" '
            f'font-size="11">{_escape(c.label)}</text>'
        )
    out.append("</svg>")
    try:
        path.write_text("\n".join(out) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path
