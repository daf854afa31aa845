"""Schematic SVG renderings of the unfolded rectangle complex."""

from __future__ import annotations

import cmath
import math
from xml.sax.saxutils import escape

import numpy as np

from .curves import cycles
from .errors import UnknownKind
from .flatsurf import FlatSurface, layout

KINDS = ("surface", "foliation", "schwarzian-field")
SCALE = 200.0
MARGIN = 20.0
LEAVES_PER_CYLINDER = 10


def _fmt(x: float) -> str:
    return f"{x:.3f}"


class _Canvas:
    def __init__(self, f: FlatSurface):
        self.f = f
        self.pos = layout(f)
        self.width = max(x + w for (x, _), w in zip(self.pos, f.widths))
        self.height = max(y + h for (_, y), h in zip(self.pos, f.heights))
        self.items: list[str] = []

    def xy(self, r: int, x: float, y: float) -> tuple[str, str]:
        """Rectangle-chart point to SVG user units (y axis flipped)."""
        X = MARGIN + SCALE * (self.pos[r][0] + x)
        Y = MARGIN + SCALE * (self.height - self.pos[r][1] - y)
        return _fmt(X), _fmt(Y)

    def line(self, r, p, q, cls, extra=""):
        x1, y1 = self.xy(r, *p)
        x2, y2 = self.xy(r, *q)
        self.items.append(f'<line class="{cls}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}"{extra}/>')

    def render(self, title: str) -> str:
        w = _fmt(2 * MARGIN + SCALE * self.width)
        h = _fmt(2 * MARGIN + SCALE * self.height)
        head = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
            f"<title>{escape(title)}</title>",
            "<defs>",
            '<marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" orient="auto">',
            '<path d="M0,0 L10,5 L0,10 z"/>',
            "</marker>",
            "</defs>",
            "<style>",
            ".rect{fill:#f4f4f4;stroke:#222;stroke-width:1.5}",
            ".gluing{stroke:#c33;stroke-width:1;fill:none;marker-end:url(#arrow)}",
            ".leaf{stroke:#36c;stroke-width:0.8}",
            ".glyph{stroke:#393;stroke-width:0.8}",
            ".label{font:12px sans-serif}",
            "</style>",
        ]
        return "\n".join(head + self.items + ["</svg>"]) + "\n"


def _rectangles(c: _Canvas) -> None:
    f = c.f
    for r, (w, h) in enumerate(zip(f.widths, f.heights)):
        x, y = c.xy(r, 0.0, h)
        c.items.append(
            f'<rect class="rect" id="rect-{r + 1}" x="{x}" y="{y}" width="{_fmt(SCALE * w)}" height="{_fmt(SCALE * h)}"/>'
        )
        lx, ly = c.xy(r, 0.5 * w, 0.5 * h)
        c.items.append(f'<text class="label" x="{lx}" y="{ly}">{r + 1}</text>')


def _side_midpoint(f: FlatSurface, r: int, side: str) -> tuple[float, float]:
    w, h = f.widths[r], f.heights[r]
    return {"bottom": (0.5 * w, 0.0), "right": (w, 0.5 * h), "top": (0.5 * w, h), "left": (0.0, 0.5 * h)}[side]


def _gluings(c: _Canvas) -> None:
    f = c.f
    for k, g in enumerate(f.gluings):
        # a short arrow just inside each side, pointing across the gluing
        for r, side in ((g.a, g.side_a), (g.b, g.side_b)):
            mx, my = _side_midpoint(f, r, side)
            inset = 0.08 * min(f.widths[r], f.heights[r])
            dx, dy = {"bottom": (0, 1), "right": (-1, 0), "top": (0, -1), "left": (1, 0)}[side]
            c.line(r, (mx + dx * inset, my + dy * inset), (mx, my), "gluing", f' data-gluing="{k + 1}" data-tag="{g.tag}"')


def _leaves(c: _Canvas) -> None:
    f = c.f
    if f.source is None:
        rows = [(r,) for r in range(f.n_rects)]
    else:
        rows = cycles(f.source.perm_h)
    for cyl, members in enumerate(rows):
        for k in range(LEAVES_PER_CYLINDER):
            frac = (k + 0.5) / LEAVES_PER_CYLINDER
            for r in members:
                y = frac * f.heights[r]
                c.line(r, (0.0, y), (f.widths[r], y), "leaf", f' data-cylinder="{cyl + 1}"')


def _glyphs(c: _Canvas, mesh, sigma: np.ndarray) -> None:
    """Short segments along the horizontal direction of ``sigma``: ``sigma v^2 > 0``."""
    sel = np.flatnonzero(mesh.face_cell[:, 2] == 1)
    length = 0.4 * mesh.h_target
    for fi in sel:
        r = int(mesh.face_rect[fi])
        cx, cy = mesh.face_xy[fi].mean(axis=0)
        val = complex(sigma[fi])
        if val == 0:
            continue
        theta = -0.5 * cmath.phase(val)
        dx, dy = 0.5 * length * math.cos(theta), 0.5 * length * math.sin(theta)
        c.line(r, (cx - dx, cy - dy), (cx + dx, cy + dy), "glyph")


def export_svg(f: FlatSurface, kind: str, *, mesh=None, sigma=None, title: str | None = None) -> str:
    """Render ``kind`` (surface, foliation or schwarzian-field) as SVG text."""
    if kind not in KINDS:
        raise UnknownKind(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    c = _Canvas(f)
    _rectangles(c)
    if kind == "surface":
        _gluings(c)
    elif kind == "foliation":
        _leaves(c)
    else:
        if mesh is None or sigma is None:
            raise ValueError("schwarzian-field needs a mesh and a per-face sigma")
        _glyphs(c, mesh, sigma)
    return c.render(title or kind)


def write_svg(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
