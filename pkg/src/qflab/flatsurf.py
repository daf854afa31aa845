"""Flat geometry of the pair ([c], q) realised by a weighted origami.

Every square becomes a rectangle whose width is the weight of its vertical
cylinder and whose height is the weight of its horizontal cylinder.  In each
rectangle chart ``q = dz^2``; the horizontal foliation has transverse measure
``|dy|`` and the vertical one ``|dx|``.

All integrals use the measure ``dx dy``.  With that convention the L1 norm of
``q`` equals the flat area, and so do the extremal lengths of both
foliations at the base point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import optimize

from . import curves
from .curves import CombinatorialSurface, CoreCurve
from .errors import FormatError, NonPositiveScale, UnsupportedCurve

SIDES = ("bottom", "right", "top", "left")
_OPPOSITE = {"right": "left", "left": "right", "top": "bottom", "bottom": "top"}
S_MAX = 10.0


@dataclass(frozen=True)
class Gluing:
    """Side ``side_a`` of rectangle ``a`` glued to ``side_b`` of ``b``.

    ``rotation`` is 0 for a translation and pi for a half-turn.  Points glue by
    reversing the counter-clockwise boundary parameter: tau <-> 1 - tau.
    """

    a: int
    side_a: str
    b: int
    side_b: str
    rotation: float = 0.0

    @property
    def tag(self) -> str:
        return "T" if self.rotation == 0.0 else "H"


@dataclass(frozen=True)
class FlatSurface:
    widths: tuple[float, ...]
    heights: tuple[float, ...]
    gluings: tuple[Gluing, ...]
    cones: tuple[tuple[tuple[int, ...], float], ...]
    source: CombinatorialSurface | None = None
    flow_time: float = 0.0

    @property
    def n_rects(self) -> int:
        return len(self.widths)

    @property
    def area(self) -> float:
        return area_l1(self)

    @property
    def genus(self) -> int:
        # Gauss-Bonnet over the vertex classes
        excess = math.fsum(angle - 2 * math.pi for _, angle in self.cones)
        return int(round(excess / (4 * math.pi))) + 1

    def side_length(self, rect: int, side: str) -> float:
        return self.widths[rect] if side in ("bottom", "top") else self.heights[rect]

    def is_translation(self) -> bool:
        return all(g.rotation == 0.0 for g in self.gluings)


@dataclass(frozen=True)
class FlowParameter:
    """Teichmueller-flow time; the stretch is (x, y) -> (e^s x, e^-s y)."""

    s: float
    numeric_s: float | None = field(default=None, compare=False)

    @property
    def stretch(self) -> tuple[float, float]:
        return math.exp(self.s), math.exp(-self.s)

    def compose(self, other: "FlowParameter") -> "FlowParameter":
        return FlowParameter(self.s + other.s)

    def apply(self, f: FlatSurface) -> FlatSurface:
        return teich_flow(f, self.s)


def _vertex_classes(n, gluings, widths, heights):
    """Group rectangle corners into surface vertices; return (classes, angles).

    A corner is (rect, k) with k indexing bottom-left, bottom-right, top-right,
    top-left counter-clockwise; each contributes angle pi/2.
    """
    parent = {(r, k): (r, k) for r in range(n) for k in range(4)}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        rx, ry = find(x), find(y)
        if rx != ry:
            lo, hi = min(rx, ry), max(rx, ry)
            parent[hi] = lo

    # side i (ccw) runs from corner i to corner i+1
    for g in gluings:
        ia, ib = SIDES.index(g.side_a), SIDES.index(g.side_b)
        a0, a1 = (g.a, ia), (g.a, (ia + 1) % 4)
        b0, b1 = (g.b, ib), (g.b, (ib + 1) % 4)
        union(a0, b1)
        union(a1, b0)
    classes: dict = {}
    for c in parent:
        classes.setdefault(find(c), []).append(c)
    out = []
    for root in sorted(classes):
        members = sorted(classes[root])
        out.append((tuple(members), len(members) * math.pi / 2))
    return out


def realize(s: CombinatorialSurface) -> FlatSurface:
    """The rectangle surface with ``hor = F`` and ``ver = G``.

    Translation gluings only: right side of ``i`` to left side of
    ``perm_h[i]`` and top of ``i`` to bottom of ``perm_v[i]``.
    """
    ok, witness = curves.filling_check(s)
    if not ok:
        raise witness[0]
    widths = tuple(s.square_widths())
    heights = tuple(s.square_heights())
    gluings = []
    for i in range(s.n_squares):
        gluings.append(Gluing(i, "right", s.perm_h[i], "left"))
        gluings.append(Gluing(i, "top", s.perm_v[i], "bottom"))
    return _assemble(widths, heights, tuple(gluings), s)


def _assemble(widths, heights, gluings, source=None, flow_time=0.0) -> FlatSurface:
    n = len(widths)
    used = set()
    for g in gluings:
        keys = {(g.a, g.side_a), (g.b, g.side_b)}
        for key in keys:
            if key in used:
                raise FormatError(f"side {key} glued twice")
            used.add(key)
        la = widths[g.a] if g.side_a in ("bottom", "top") else heights[g.a]
        lb = widths[g.b] if g.side_b in ("bottom", "top") else heights[g.b]
        if la != lb:
            raise FormatError(f"gluing {g} joins sides of lengths {la} and {lb}")
    if len(used) != 4 * n:
        raise FormatError("not every side is glued")
    classes = _vertex_classes(n, gluings, widths, heights)
    cones = []
    for members, angle in classes:
        rep = tuple(sorted({r for r, k in members if k == 0}))
        cones.append((rep if rep else tuple(sorted({r for r, _ in members})), angle))
    return FlatSurface(
        tuple(float(w) for w in widths),
        tuple(float(h) for h in heights),
        tuple(gluings),
        tuple(cones),
        source,
        flow_time,
    )


def rectangle_surface(widths, heights, gluings) -> FlatSurface:
    """Assemble a flat surface from explicit data (half-turn gluings allowed)."""
    return _assemble(tuple(widths), tuple(heights), tuple(gluings))


def cone_points(f: FlatSurface, tol: float = 1e-9) -> list[tuple[tuple[int, ...], float]]:
    """Vertex classes whose total angle differs from 2 pi."""
    return [(m, a) for m, a in f.cones if abs(a - 2 * math.pi) > tol]


def area_l1(f: FlatSurface) -> float:
    return math.fsum(w * h for w, h in zip(f.widths, f.heights))


def intersection_number(f: FlatSurface, gamma: CoreCurve, which: str) -> float:
    """``i(gamma, hor)`` or ``i(gamma, ver)`` for a cylinder core.

    The straight core realises the infimum: a horizontal core is a leaf of
    ``hor`` and crosses ``ver`` with measure equal to its length.
    """
    if which not in ("horizontal", "vertical"):
        raise ValueError(f"which must be 'horizontal' or 'vertical', not {which!r}")
    if not isinstance(gamma, CoreCurve) or f.source is None:
        raise UnsupportedCurve("only cylinder cores of a realised surface are supported")
    cyc = curves.cycles(f.source.perm_h if gamma.kind == "horizontal" else f.source.perm_v)
    if gamma.kind not in ("horizontal", "vertical") or gamma.squares not in cyc:
        raise UnsupportedCurve(f"{gamma} is not a cylinder core of this surface")
    if gamma.kind == "horizontal":
        return 0.0 if which == "horizontal" else math.fsum(f.widths[i] for i in gamma.squares)
    return math.fsum(f.heights[i] for i in gamma.squares) if which == "horizontal" else 0.0


def teich_flow(f: FlatSurface, s: float) -> FlatSurface:
    if abs(s) > S_MAX:
        raise ValueError(f"|s| = {abs(s)} exceeds the flow range {S_MAX}")
    if s == 0.0:
        return f
    ex, ey = math.exp(s), math.exp(-s)
    return replace(
        f,
        widths=tuple(w * ex for w in f.widths),
        heights=tuple(h * ey for h in f.heights),
        flow_time=f.flow_time + s,
    )


def extremal_length_on_disk(f: FlatSurface, s: float, which: str, t: float = 1.0) -> float:
    """Extremal length of ``tF`` (horizontal) or ``tG`` (vertical) at flow time ``s``.

    After the stretch the fixed foliation ``F`` is ``e^s hor(q_s)``, realised by
    ``(t e^s)^2 q_s`` whose L1 norm is ``t^2 e^{2s}`` times the area.
    """
    a = area_l1(f)
    if which == "horizontal":
        return t * t * math.exp(2 * s) * a
    if which == "vertical":
        return t * t * math.exp(-2 * s) * a
    raise ValueError(f"which must be 'horizontal' or 'vertical', not {which!r}")


def disk_energy(f: FlatSurface, s: float, t: float, scale_h: float = 1.0, scale_v: float = 1.0) -> float:
    """``ext(sqrt(t) a F) + ext(b G / sqrt(t))`` at flow time ``s``."""
    return (
        extremal_length_on_disk(f, s, "horizontal", math.sqrt(t) * scale_h)
        + extremal_length_on_disk(f, s, "vertical", scale_v / math.sqrt(t))
    )


def minimize_disk_energy(f: FlatSurface, t: float, scale_h: float = 1.0, scale_v: float = 1.0) -> float:
    """Numeric minimiser of :func:`disk_energy` over the flow line.

    Golden-section search locates the basin; the derivative (central
    differences of the energy would lose half the digits, so the slope of
    each extremal length is used) is then bracketed and solved with Brent.
    """

    def g(s):
        return disk_energy(f, s, t, scale_h, scale_v)

    def dg(s):
        return 2 * extremal_length_on_disk(f, s, "horizontal", math.sqrt(t) * scale_h) - 2 * extremal_length_on_disk(
            f, s, "vertical", scale_v / math.sqrt(t)
        )

    res = optimize.minimize_scalar(g, bracket=(-1.0, 1.0), method="golden", tol=1e-10)
    s0 = float(res.x)
    width = 1e-3
    lo, hi = s0 - width, s0 + width
    while dg(lo) > 0:
        lo -= width
        width *= 2
    while dg(hi) < 0:
        hi += width
        width *= 2
    return optimize.brentq(dg, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def critical_point_on_disk(
    f: FlatSurface, t: float, *, scale_h: float = 1.0, scale_v: float = 1.0, tol: float = 1e-8
) -> FlowParameter:
    """Flow time of ``p(sqrt(t) F, G / sqrt(t))`` on the Teichmueller disk of ``q``.

    ``scale_h`` / ``scale_v`` multiply ``F`` / ``G`` first, so
    ``scale_h = scale_v`` checks ``p(tF, tG) = p(F, G)``.
    """
    if not t > 0 or not scale_h > 0 or not scale_v > 0:
        raise NonPositiveScale(f"scales must be positive (t={t}, scale_h={scale_h}, scale_v={scale_v})")
    closed = -0.5 * math.log(t) + 0.5 * math.log(scale_v / scale_h)
    numeric = minimize_disk_energy(f, t, scale_h, scale_v)
    if abs(numeric - closed) > tol:
        raise ArithmeticError(f"minimiser {numeric} disagrees with closed form {closed}")
    return FlowParameter(closed, numeric)


@dataclass(frozen=True)
class GardinerReport:
    slope: float
    pairing: float
    area: float

    @property
    def ratio(self) -> float:
        return self.slope / self.pairing


def gardiner_derivative_check(f: FlatSurface, step: float = 1e-4) -> GardinerReport:
    """Compare ``d/ds ext_h`` at ``s = 0`` with ``Re <q, mu>`` for ``mu = conj(q)/|q|``.

    The pairing is integrated rectangle by rectangle with ``q mu = |f| = 1``
    in flat charts.  The ratio is reported, not asserted.
    """
    slope = (extremal_length_on_disk(f, step, "horizontal") - extremal_length_on_disk(f, -step, "horizontal")) / (
        2 * step
    )
    pairing = 0.0
    for w, h in zip(f.widths, f.heights):
        q = 1.0 + 0.0j
        mu = np.conj(q) / abs(q)
        pairing += float(np.real(q * mu)) * w * h
    return GardinerReport(slope, pairing, area_l1(f))


# ---------------------------------------------------------------- text format


def format_flat_surface(f: FlatSurface) -> str:
    lines = ["# flat surface: rect id width height; glue rect side rect side tag; cone corners angle"]
    for i, (w, h) in enumerate(zip(f.widths, f.heights)):
        lines.append(f"rect {i + 1} {w!r} {h!r}")
    for g in f.gluings:
        lines.append(f"glue {g.a + 1} {g.side_a} {g.b + 1} {g.side_b} {g.tag}")
    for members, angle in f.cones:
        lines.append(f"cone {','.join(str(r + 1) for r in members)} {angle!r}")
    return "\n".join(lines) + "\n"


def parse_flat_surface(text: str) -> FlatSurface:
    """Parse :func:`format_flat_surface` output; ``cone`` lines are recomputed."""
    rects: dict[int, tuple[float, float]] = {}
    gluings = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        try:
            if line[0] == "rect":
                idx = int(line[1]) - 1
                if idx in rects:
                    raise FormatError(f"line {lineno}: duplicate rect {idx + 1}")
                rects[idx] = (float(line[2]), float(line[3]))
            elif line[0] == "glue":
                tag = line[5] if len(line) > 5 else "T"
                if tag not in ("T", "H"):
                    raise FormatError(f"line {lineno}: unknown isometry tag {tag!r}")
                a, sa, b, sb = int(line[1]) - 1, line[2], int(line[3]) - 1, line[4]
                if sa not in SIDES or sb not in SIDES:
                    raise FormatError(f"line {lineno}: unknown side")
                rot = 0.0 if tag == "T" else math.pi
                if (tag == "T") != (sb == _OPPOSITE[sa]):
                    raise FormatError(f"line {lineno}: tag {tag} incompatible with sides {sa}/{sb}")
                gluings.append(Gluing(a, sa, b, sb, rot))
            elif line[0] == "cone":
                pass
            else:
                raise FormatError(f"line {lineno}: unknown record {line[0]!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"line {lineno}: malformed record") from exc
    n = len(rects)
    if sorted(rects) != list(range(n)):
        raise FormatError("rectangle ids must be 1..n")
    widths = [rects[i][0] for i in range(n)]
    heights = [rects[i][1] for i in range(n)]
    return _assemble(tuple(widths), tuple(heights), tuple(gluings))


def layout(f: FlatSurface) -> list[tuple[float, float]]:
    """Lower-left corners for drawing the unfolded rectangle complex.

    Breadth-first development along right/top gluings; a rectangle whose
    developed position overlaps an earlier one is parked on a new row.
    """
    n = f.n_rects
    pos: list[tuple[float, float] | None] = [None] * n
    neighbours: dict[int, list[tuple[str, int]]] = {i: [] for i in range(n)}
    for g in f.gluings:
        if g.rotation == 0.0:
            neighbours[g.a].append((g.side_a, g.b))
            neighbours[g.b].append((g.side_b, g.a))
    boxes = []
    spare_y = 0.0

    def overlaps(x, y, w, h):
        eps = 1e-12
        return any(x < bx + bw - eps and bx < x + w - eps and y < by + bh - eps and by < y + h - eps for bx, by, bw, bh in boxes)

    for root in range(n):
        if pos[root] is not None:
            continue
        top = max((by + bh for _, by, _, bh in boxes), default=0.0)
        spare_y = max(spare_y, top + (0.5 if boxes else 0.0))
        pos[root] = (0.0, spare_y)
        boxes.append((0.0, spare_y, f.widths[root], f.heights[root]))
        queue = [root]
        while queue:
            i = queue.pop(0)
            x, y = pos[i]
            for side, j in sorted(neighbours[i]):
                if pos[j] is not None:
                    continue
                if side == "right":
                    cand = (x + f.widths[i], y)
                elif side == "left":
                    cand = (x - f.widths[j], y)
                elif side == "top":
                    cand = (x, y + f.heights[i])
                else:
                    cand = (x, y - f.heights[j])
                if overlaps(cand[0], cand[1], f.widths[j], f.heights[j]):
                    continue
                pos[j] = cand
                boxes.append((cand[0], cand[1], f.widths[j], f.heights[j]))
                queue.append(j)
    return [p for p in pos]  # type: ignore[misc]
