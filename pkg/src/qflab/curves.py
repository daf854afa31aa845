"""Square-tiled (origami) encoding of filling pairs of weighted multicurves.

An origami with ``n`` unit squares is given by two permutations of the
squares: ``perm_h`` sends a square to its right neighbour and ``perm_v`` to
its top neighbour.  Orbits of ``perm_h`` are the horizontal cylinders, whose
core curves carry the weighted multicurve ``F = sum a_i alpha_i``; orbits of
``perm_v`` are the vertical cylinders carrying ``G = sum b_j beta_j``.

Squares are 0-based internally.  The text format and the cycle notation use
1-based labels.  Cylinders are ordered by their smallest square label, and
that order fixes which weight belongs to which cylinder.

Vertex convention: the corner-walk permutation is the commutator
``perm_h . perm_v . perm_h^-1 . perm_v^-1`` composed left to right (apply
``perm_h`` first).  Each of its cycles is one vertex of the square complex;
a cycle of length ``k`` collects ``k`` lower-left corners, i.e. a total angle
of ``2 pi k``.
"""

from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import (
    FormatError,
    GenusTooSmall,
    NonPositiveWeight,
    NotConnected,
    WeightCountMismatch,
)

Perm = tuple[int, ...]


def _check_perm(p: Sequence[int], n: int, name: str) -> Perm:
    p = tuple(int(x) for x in p)
    if len(p) != n or sorted(p) != list(range(n)):
        raise FormatError(f"{name} is not a permutation of {n} squares")
    return p


def inverse(p: Perm) -> Perm:
    inv = [0] * len(p)
    for i, j in enumerate(p):
        inv[j] = i
    return tuple(inv)


def cycles(p: Perm) -> list[tuple[int, ...]]:
    """Cycles of ``p``, each starting at its smallest element, sorted."""
    seen = [False] * len(p)
    out = []
    for start in range(len(p)):
        if seen[start]:
            continue
        cyc = []
        i = start
        while not seen[i]:
            seen[i] = True
            cyc.append(i)
            i = p[i]
        out.append(tuple(cyc))
    return out


def vertex_permutation(perm_h: Perm, perm_v: Perm) -> Perm:
    h_inv, v_inv = inverse(perm_h), inverse(perm_v)
    return tuple(v_inv[h_inv[perm_v[perm_h[i]]]] for i in range(len(perm_h)))


def orbits(perm_h: Perm, perm_v: Perm) -> list[list[int]]:
    """Orbits of the group generated by both permutations (BFS)."""
    n = len(perm_h)
    h_inv, v_inv = inverse(perm_h), inverse(perm_v)
    seen = [False] * n
    result = []
    for start in range(n):
        if seen[start]:
            continue
        seen[start] = True
        orbit = [start]
        queue = deque([start])
        while queue:
            i = queue.popleft()
            for j in (perm_h[i], perm_v[i], h_inv[i], v_inv[i]):
                if not seen[j]:
                    seen[j] = True
                    orbit.append(j)
                    queue.append(j)
        result.append(sorted(orbit))
    return result


@dataclass(frozen=True)
class CombinatorialSurface:
    """Origami plus positive cylinder weights.

    The dataclass itself does not validate; use :func:`build_surface`.
    """

    n_squares: int
    perm_h: Perm
    perm_v: Perm
    weights_h: tuple[float, ...]
    weights_v: tuple[float, ...]

    @property
    def horizontal_cycles(self) -> list[tuple[int, ...]]:
        return cycles(self.perm_h)

    @property
    def vertical_cycles(self) -> list[tuple[int, ...]]:
        return cycles(self.perm_v)

    def square_heights(self) -> list[float]:
        """Height of every square = weight of its horizontal cylinder."""
        out = [0.0] * self.n_squares
        for k, cyc in enumerate(self.horizontal_cycles):
            for i in cyc:
                out[i] = self.weights_h[k]
        return out

    def square_widths(self) -> list[float]:
        out = [0.0] * self.n_squares
        for k, cyc in enumerate(self.vertical_cycles):
            for i in cyc:
                out[i] = self.weights_v[k]
        return out


def build_surface(
    perm_h: Sequence[int],
    perm_v: Sequence[int],
    weights_h: Iterable[float] | None = None,
    weights_v: Iterable[float] | None = None,
    *,
    min_genus: int = 2,
) -> CombinatorialSurface:
    """Validate an origami with weights and return the surface.

    Omitted weights default to 1 for every cylinder.  Raises
    :class:`NotConnected`, :class:`NonPositiveWeight`,
    :class:`WeightCountMismatch` or :class:`GenusTooSmall`.
    """
    n = len(perm_h)
    if n == 0:
        raise FormatError("empty origami")
    ph = _check_perm(perm_h, n, "perm_h")
    pv = _check_perm(perm_v, n, "perm_v")
    if len(orbits(ph, pv)) != 1:
        raise NotConnected("<perm_h, perm_v> does not act transitively on the squares")
    nh, nv = len(cycles(ph)), len(cycles(pv))
    wh = tuple(float(w) for w in weights_h) if weights_h is not None else (1.0,) * nh
    wv = tuple(float(w) for w in weights_v) if weights_v is not None else (1.0,) * nv
    for w in wh + wv:
        if not (w > 0 and math.isfinite(w)):
            raise NonPositiveWeight(f"cylinder weight {w!r} is not positive")
    if len(wh) != nh:
        raise WeightCountMismatch(f"{len(wh)} horizontal weights for {nh} cylinders")
    if len(wv) != nv:
        raise WeightCountMismatch(f"{len(wv)} vertical weights for {nv} cylinders")
    surface = CombinatorialSurface(n, ph, pv, wh, wv)
    genus, _ = genus_and_cones(surface)
    if genus < min_genus:
        raise GenusTooSmall(f"derived genus {genus} < {min_genus}")
    return surface


def vertex_cycles(s: CombinatorialSurface) -> list[tuple[int, ...]]:
    """Vertices as cycles of the corner-walk permutation (lower-left corners)."""
    return cycles(vertex_permutation(s.perm_h, s.perm_v))


def euler_characteristic(s: CombinatorialSurface) -> int:
    return len(vertex_cycles(s)) - 2 * s.n_squares + s.n_squares


def genus_and_cones(s: CombinatorialSurface) -> tuple[int, tuple[float, ...]]:
    """Genus and the multiset of cone angles (angles > 2 pi only, sorted).

    A vertex of total angle ``2 pi k`` is a zero of order ``2k - 2`` of the
    quadratic differential ``q = dz^2``, i.e. angle ``(order + 2) pi``; it is
    also a zero of order ``k - 1`` of the abelian differential ``dz``.
    """
    chi = euler_characteristic(s)
    genus = (2 - chi) // 2
    angles = sorted(2.0 * math.pi * len(c) for c in vertex_cycles(s) if len(c) > 1)
    return genus, tuple(angles)


def zero_orders(s: CombinatorialSurface) -> tuple[int, ...]:
    """Orders of the zeros of ``q`` (stratum data); they sum to ``4g - 4``."""
    return tuple(sorted(2 * len(c) - 2 for c in vertex_cycles(s) if len(c) > 1))


@dataclass(frozen=True)
class CoreCurve:
    """Core of a cylinder, as the cyclic list of squares it crosses."""

    kind: str  # "horizontal" | "vertical"
    index: int
    squares: tuple[int, ...]


@dataclass(frozen=True)
class Cylinder:
    core: CoreCurve
    circumference: float
    weight: float


@dataclass(frozen=True)
class CylinderDecomposition:
    horizontal: tuple[Cylinder, ...]
    vertical: tuple[Cylinder, ...]

    def cores(self) -> list[CoreCurve]:
        return [c.core for c in self.horizontal + self.vertical]


def core_curves(s: CombinatorialSurface) -> CylinderDecomposition:
    widths, heights = s.square_widths(), s.square_heights()
    hor = []
    for k, cyc in enumerate(s.horizontal_cycles):
        core = CoreCurve("horizontal", k, cyc)
        hor.append(Cylinder(core, math.fsum(widths[i] for i in cyc), s.weights_h[k]))
    ver = []
    for k, cyc in enumerate(s.vertical_cycles):
        core = CoreCurve("vertical", k, cyc)
        ver.append(Cylinder(core, math.fsum(heights[i] for i in cyc), s.weights_v[k]))
    return CylinderDecomposition(tuple(hor), tuple(ver))


@dataclass(frozen=True)
class FillingWitness:
    curve: CoreCurve
    i_F: float
    i_G: float

    @property
    def total(self) -> float:
        return self.i_F + self.i_G


def filling_check(s: CombinatorialSurface) -> tuple[bool, list]:
    """Whether the weighted cores fill the surface, with a witness.

    For a connected square complex the complementary regions of the two core
    multicurves are the open squares, hence disks; filling then reduces to
    transitivity.  The witness lists every cylinder core with its
    intersection numbers ``i(gamma, F)`` and ``i(gamma, G)``; all totals are
    strictly positive.  For disconnected input the witness is the list of
    orbits and the answer is ``False``.
    """
    comps = orbits(s.perm_h, s.perm_v)
    if len(comps) != 1:
        return False, [NotConnected(f"{len(comps)} orbits"), comps]
    widths, heights = s.square_widths(), s.square_heights()
    witness = []
    for cyl in core_curves(s).horizontal:
        # a horizontal core is a leaf of F and crosses G once per square
        witness.append(FillingWitness(cyl.core, 0.0, math.fsum(widths[i] for i in cyl.core.squares)))
    for cyl in core_curves(s).vertical:
        witness.append(FillingWitness(cyl.core, math.fsum(heights[i] for i in cyl.core.squares), 0.0))
    return all(w.total > 0 for w in witness), witness


def relabel(s: CombinatorialSurface, sigma: Sequence[int]) -> CombinatorialSurface:
    """Surface with square ``i`` renamed ``sigma[i]``; weights follow their cylinders."""
    n = s.n_squares
    sigma = _check_perm(sigma, n, "relabelling")
    ph = [0] * n
    pv = [0] * n
    for i in range(n):
        ph[sigma[i]] = sigma[s.perm_h[i]]
        pv[sigma[i]] = sigma[s.perm_v[i]]
    hmap = {}
    for k, cyc in enumerate(s.horizontal_cycles):
        hmap[min(sigma[i] for i in cyc)] = s.weights_h[k]
    vmap = {}
    for k, cyc in enumerate(s.vertical_cycles):
        vmap[min(sigma[i] for i in cyc)] = s.weights_v[k]
    ph, pv = tuple(ph), tuple(pv)
    wh = tuple(hmap[c[0]] for c in cycles(ph))
    wv = tuple(vmap[c[0]] for c in cycles(pv))
    return CombinatorialSurface(n, ph, pv, wh, wv)


def quarter_turn(s: CombinatorialSurface) -> CombinatorialSurface:
    """Rotate the picture by +90 degrees.

    The old right neighbour becomes the top neighbour and the old bottom
    neighbour becomes the right one, so horizontal and vertical roles swap
    (``q`` becomes ``-q``).
    """
    ph = inverse(s.perm_v)
    pv = s.perm_h
    # horizontal cylinders of the rotated surface are the old vertical ones
    vmap = {min(c): w for c, w in zip(s.vertical_cycles, s.weights_v)}
    hmap = {min(c): w for c, w in zip(s.horizontal_cycles, s.weights_h)}
    wh = tuple(vmap[c[0]] for c in cycles(ph))
    wv = tuple(hmap[c[0]] for c in cycles(pv))
    return CombinatorialSurface(s.n_squares, ph, pv, wh, wv)


def scale_weights(s: CombinatorialSurface, t_h: float, t_v: float | None = None) -> CombinatorialSurface:
    t_v = t_h if t_v is None else t_v
    return build_surface(
        s.perm_h,
        s.perm_v,
        [t_h * w for w in s.weights_h],
        [t_v * w for w in s.weights_v],
        min_genus=0,
    )


# ---------------------------------------------------------------- text format

_CYCLE_RE = re.compile(r"\(([^()]*)\)")


def parse_cycles(text: str, n: int) -> Perm:
    """Parse 1-based cycle notation such as ``(1 2)(3)`` or ``(1,2)``."""
    text = text.strip()
    perm = list(range(n))
    seen: set[int] = set()
    if text in ("", "()", "id"):
        return tuple(perm)
    rest = _CYCLE_RE.sub("", text).strip()
    if rest:
        raise FormatError(f"unparseable cycle notation: {text!r}")
    for body in _CYCLE_RE.findall(text):
        labels = [int(tok) for tok in re.split(r"[\s,]+", body.strip()) if tok]
        for a in labels:
            if not 1 <= a <= n:
                raise FormatError(f"label {a} outside 1..{n}")
            if a in seen:
                raise FormatError(f"label {a} appears twice")
            seen.add(a)
        for a, b in zip(labels, labels[1:] + labels[:1]):
            perm[a - 1] = b - 1
    return tuple(perm)


def format_cycles(p: Perm) -> str:
    return "".join("(" + " ".join(str(i + 1) for i in c) + ")" for c in cycles(p))


def _parse_decimals(text: str) -> list[float]:
    try:
        return [float(tok) for tok in re.split(r"[\s,]+", text.strip()) if tok]
    except ValueError as exc:
        raise FormatError(f"bad decimal list {text!r}") from exc


def parse_key_values(text: str) -> dict[str, str]:
    """``key = value`` (or ``key: value``) lines; ``#`` comments; no duplicate keys."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*)\s*[=:]\s*(.*)$", line)
        if not m:
            raise FormatError(f"line {lineno}: expected 'key = value'")
        key, value = m.group(1), m.group(2)
        if key in out:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_surface(text: str, *, min_genus: int = 2) -> CombinatorialSurface:
    fields = parse_key_values(text)
    unknown = set(fields) - {"n", "perm_h", "perm_v", "weights_h", "weights_v"}
    if unknown:
        raise FormatError(f"unknown keys: {sorted(unknown)}")
    for key in ("n", "perm_h", "perm_v"):
        if key not in fields:
            raise FormatError(f"missing key {key!r}")
    try:
        n = int(fields["n"])
    except ValueError as exc:
        raise FormatError("n must be an integer") from exc
    if n < 1:
        raise FormatError("n must be positive")
    ph = parse_cycles(fields["perm_h"], n)
    pv = parse_cycles(fields["perm_v"], n)
    wh = _parse_decimals(fields["weights_h"]) if "weights_h" in fields else None
    wv = _parse_decimals(fields["weights_v"]) if "weights_v" in fields else None
    return build_surface(ph, pv, wh, wv, min_genus=min_genus)


def load_surface(path, *, min_genus: int = 2) -> CombinatorialSurface:
    with open(path, encoding="utf-8") as fh:
        return parse_surface(fh.read(), min_genus=min_genus)


def format_surface(s: CombinatorialSurface) -> str:
    return (
        f"n = {s.n_squares}\n"
        f"perm_h = {format_cycles(s.perm_h)}\n"
        f"perm_v = {format_cycles(s.perm_v)}\n"
        f"weights_h = {', '.join(repr(w) for w in s.weights_h)}\n"
        f"weights_v = {', '.join(repr(w) for w in s.weights_v)}\n"
    )


def l_shape(weights_h=None, weights_v=None) -> CombinatorialSurface:
    """The 3-square L: genus 2, one cone of angle 6 pi."""
    return build_surface((1, 0, 2), (2, 1, 0), weights_h, weights_v)
