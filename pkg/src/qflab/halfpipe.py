"""Half-pipe algebra and the half-pipe limits of the almost-Fuchsian path.

Elements of the half-pipe group are 4x4 matrices ``[[A, 0], [v, +-1]]`` with
``A`` in ``O(2,1)`` for ``eta = diag(-1, 1, 1)``.  Vectors ``v`` are rows.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import curves, flatsurf
from .almostfuchsian import AlmostFuchsianPath, ENDS, det2, inv2, qd_l1, real_part_matrix
from .errors import FormatError, NotLorentz, NotThroughFuchsian

ETA = np.diag([-1.0, 1.0, 1.0])
LORENTZ_TOL = 1e-9


def gram_residual(A: np.ndarray) -> float:
    """``max |A^T eta A - eta|`` relative to the size of ``A``."""
    A = np.asarray(A, dtype=float)
    return float(np.max(np.abs(A.T @ ETA @ A - ETA)) / max(1.0, float(np.max(np.abs(A))) ** 2))


def check_lorentz(A: np.ndarray, tol: float = LORENTZ_TOL) -> None:
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3) or not np.all(np.isfinite(A)):
        raise NotLorentz(f"expected a finite 3x3 matrix, got shape {A.shape}")
    r = gram_residual(A)
    if r > tol:
        raise NotLorentz(f"eta-Gram residual {r:.3e} exceeds {tol:g}")


@dataclass(frozen=True)
class HPElement:
    A: np.ndarray
    v: np.ndarray
    sign: int = 1

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        v = np.array(self.v, dtype=float).reshape(3)
        check_lorentz(A)
        if self.sign not in (1, -1):
            raise NotLorentz(f"sign must be +1 or -1, got {self.sign}")
        A.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "v", v)

    @classmethod
    def identity(cls) -> "HPElement":
        return cls(np.eye(3), np.zeros(3), 1)

    @property
    def matrix(self) -> np.ndarray:
        M = np.zeros((4, 4))
        M[:3, :3] = self.A
        M[3, :3] = self.v
        M[3, 3] = self.sign
        return M

    @property
    def gram_residual(self) -> float:
        return gram_residual(self.A)

    def __matmul__(self, other: "HPElement") -> "HPElement":
        return hp_compose(self, other)

    def inverse(self) -> "HPElement":
        return hp_inverse(self)


def hp_compose(a: HPElement, b: HPElement) -> HPElement:
    return HPElement(a.A @ b.A, a.v @ b.A + a.sign * b.v, a.sign * b.sign)


def hp_inverse(a: HPElement) -> HPElement:
    A_inv = ETA @ a.A.T @ ETA
    return HPElement(A_inv, -a.sign * (a.v @ A_inv), a.sign)


def format_element(g: HPElement, fmt: str = ".12g") -> str:
    """4x4 block; the upper-right block is structurally zero and printed as ``0``."""
    rows = []
    for i in range(3):
        rows.append(" ".join([format(x, fmt) for x in g.A[i]] + ["0"]))
    rows.append(" ".join([format(x, fmt) for x in g.v] + [str(g.sign)]))
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------- jets


@dataclass(frozen=True)
class HPJet:
    """First-order jet of ``rho_t = [[A(t), w(t)], [v(t), a(t)]]`` with ``v(0) = 0``."""

    A0: np.ndarray
    A1: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    v1: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w0: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w1: np.ndarray = field(default_factory=lambda: np.zeros(3))
    a0: float = 1.0
    a1: float = 0.0
    v0: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name, shape in (("A0", (3, 3)), ("A1", (3, 3)), ("v1", (3,)), ("w0", (3,)), ("w1", (3,)), ("v0", (3,))):
            arr = np.array(getattr(self, name), dtype=float).reshape(shape)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "a0", float(self.a0))
        object.__setattr__(self, "a1", float(self.a1))
        if np.any(self.v0 != 0):
            raise NotThroughFuchsian(f"v(0) = {self.v0.tolist()} is not zero")
        check_lorentz(self.A0)
        if abs(abs(self.a0) - 1.0) > LORENTZ_TOL:
            raise NotLorentz(f"a(0) = {self.a0} is not +-1")

    def rho(self, t: float) -> np.ndarray:
        """First-order representative of ``rho_t``."""
        M = np.zeros((4, 4))
        M[:3, :3] = self.A0 + t * self.A1
        M[:3, 3] = self.w0 + t * self.w1
        M[3, :3] = self.v0 + t * self.v1
        M[3, 3] = self.a0 + t * self.a1
        return M

    @property
    def discarded(self) -> dict[str, np.ndarray | float]:
        """Jet entries that do not survive the limit."""
        return {"A1": self.A1, "w0": self.w0, "w1": self.w1, "a1": self.a1}


def g_t(t) -> np.ndarray:
    return np.diag([1.0, 1.0, 1.0, 1.0 / t])


def rescale_limit(j: HPJet) -> HPElement:
    """``lim g_t rho_t g_t^-1`` with ``g_t = diag(1, 1, 1, 1/t)``: ``[[A0, 0], [v1, a0]]``."""
    return HPElement(j.A0, j.v1, int(round(j.a0)))


def conjugated(j: HPJet, t: float) -> np.ndarray:
    return g_t(t) @ j.rho(t) @ np.diag([1.0, 1.0, 1.0, t])


def conjugation_error(j: HPJet, t: float) -> float:
    """Largest entry of ``g_t rho_t g_t^-1 - rescale_limit(j)``."""
    return float(np.max(np.abs(conjugated(j, t) - rescale_limit(j).matrix)))


@dataclass
class RescaleReport:
    element: HPElement
    errors: dict[float, float]
    discarded: dict

    @property
    def passed(self) -> bool:
        return all(e <= 10.0 * t for t, e in self.errors.items())


def rescale_report(j: HPJet, ts=(1e-2, 1e-3)) -> RescaleReport:
    return RescaleReport(rescale_limit(j), {t: conjugation_error(j, t) for t in ts}, j.discarded)


# ---------------------------------------------------------------- random samples


def boost(r: float) -> np.ndarray:
    c, s = math.cosh(r), math.sinh(r)
    return np.array([[c, s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def random_lorentz(rng: np.random.Generator, max_rapidity: float = 1.0) -> np.ndarray:
    """``R(a) B(r) R(b)``, an element of ``SO+(2,1)``."""
    a, b = rng.uniform(0.0, 2.0 * math.pi, 2)
    return rotation(a) @ boost(rng.uniform(-max_rapidity, max_rapidity)) @ rotation(b)


def random_element(rng: np.random.Generator, max_rapidity: float = 1.0) -> HPElement:
    return HPElement(random_lorentz(rng, max_rapidity), rng.uniform(-1.0, 1.0, 3), int(rng.choice([-1, 1])))


def random_jet(rng: np.random.Generator) -> HPJet:
    return HPJet(
        random_lorentz(rng),
        rng.uniform(-1.0, 1.0, (3, 3)),
        rng.uniform(-1.0, 1.0, 3),
        rng.uniform(-1.0, 1.0, 3),
        rng.uniform(-1.0, 1.0, 3),
        float(rng.choice([-1.0, 1.0])),
        float(rng.uniform(-1.0, 1.0)),
    )


# ---------------------------------------------------------------- X_t


def eta_t(t) -> list:
    """``diag(-1, 1, 1, t^2)``: hyperbolic at ``t = 1``, half-pipe at ``t = 0``."""
    return [-1, 1, 1, t * t]


def quadratic_form(x, t) -> Fraction:
    return sum(Fraction(e) * Fraction(xi) * Fraction(xi) for e, xi in zip(eta_t(Fraction(t)), x))


def in_X(x, t) -> bool:
    return quadratic_form(x, t) < 0


def apply_g_t(x, t) -> list[Fraction]:
    t = Fraction(t)
    return [Fraction(x[0]), Fraction(x[1]), Fraction(x[2]), Fraction(x[3]) / t]


# ---------------------------------------------------------------- jet file format

_BLOCKS = {"A0": 9, "A1": 9, "v1": 3, "w0": 3, "w1": 3, "a0": 1, "a1": 1, "v0": 3}


def parse_jet(text: str) -> HPJet:
    """Blocks introduced by a name line (A0, A1, v1, w0, w1, a0, a1), then
    row-major decimals.  Missing blocks default to zero, ``a0`` to 1."""
    values: dict[str, list[float]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if re.fullmatch(r"[A-Za-z]\w*", line):
            if line not in _BLOCKS:
                raise FormatError(f"line {lineno}: unknown block {line!r}")
            if line in values:
                raise FormatError(f"line {lineno}: block {line!r} repeated")
            current = line
            values[current] = []
            continue
        if current is None:
            raise FormatError(f"line {lineno}: numbers before any block name")
        try:
            values[current].extend(float(tok) for tok in line.split())
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    for name, vals in values.items():
        if len(vals) != _BLOCKS[name]:
            raise FormatError(f"block {name} needs {_BLOCKS[name]} numbers, got {len(vals)}")
    if "A0" not in values:
        raise FormatError("block A0 is required")
    kw = {}
    for name, vals in values.items():
        if name in ("a0", "a1"):
            kw[name] = vals[0]
        else:
            kw[name] = np.array(vals).reshape((3, 3) if name.startswith("A") else (3,))
    return HPJet(**kw)


def format_jet(j: HPJet, fmt: str = ".17g") -> str:
    out = []
    for name in ("A0", "A1", "v1", "w0", "w1"):
        out.append(name)
        arr = getattr(j, name)
        for row in np.atleast_2d(arr):
            out.append(" ".join(format(x, fmt) for x in row))
    out += ["a0", format(j.a0, fmt), "a1", format(j.a1, fmt)]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- half-pipe limits of the path


@dataclass
class HPSchwarzian:
    sigma_plus: np.ndarray
    sigma_minus: np.ndarray
    error_plus: float  # ||sigma_hp+ - q||_1 / ||q||_1
    error_minus: float  # ||sigma_hp- + q||_1 / ||q||_1
    antisymmetry: float  # ||sigma_hp+ + sigma_hp-||_1 / ||q||_1
    cores_match: bool
    tol: float

    @property
    def consistent(self) -> bool:
        return self.error_plus <= self.tol and self.error_minus <= self.tol and self.cores_match


def core_intersections_match(f: flatsurf.FlatSurface) -> bool:
    """Cores of ``q`` and ``-q`` reproduce the input weighted multicurves.

    ``hor(q)`` must have the intersection data of the horizontal multicurve
    and ``hor(-q) = ver(q)`` that of the vertical one, exactly.
    """
    if f.source is None:
        return False
    ok, witness = curves.filling_check(f.source)
    if not ok:
        return False
    for w in witness:
        if flatsurf.intersection_number(f, w.curve, "horizontal") != w.i_F:
            return False
        if flatsurf.intersection_number(f, w.curve, "vertical") != w.i_G:
            return False
    return True


def _fd_limit(path: AlmostFuchsianPath, s_grid, end: int) -> np.ndarray:
    """Richardson extrapolation of ``sigma_s / s`` from the two finest ``s``."""
    s_grid = sorted(float(s) for s in s_grid)
    if len(s_grid) == 1:
        return path.sigma(s_grid[0], end) / s_grid[0]
    s1, s2 = s_grid[0], s_grid[1]
    d1 = path.sigma(s1, end) / s1
    d2 = path.sigma(s2, end) / s2
    return (s2 * d1 - s1 * d2) / (s2 - s1)


def hp_schwarzian(path: AlmostFuchsianPath, s_grid, *, tol: float = 0.05) -> HPSchwarzian:
    area, mask = path.mesh.face_area, path.face_mask
    q = path.q
    qn = qd_l1(q, area, mask)
    plus = _fd_limit(path, s_grid, 1)
    minus = _fd_limit(path, s_grid, -1)
    return HPSchwarzian(
        plus,
        minus,
        qd_l1(plus - q, area, mask) / qn,
        qd_l1(minus + q, area, mask) / qn,
        qd_l1(plus + minus, area, mask) / qn,
        core_intersections_match(path.mesh.flat),
        tol,
    )


@dataclass
class HPMinimalSurface:
    I: np.ndarray
    II_hp: np.ndarray
    metric_deviation: dict[float, float]  # ||I_s - I_0||_inf / ||I_0||_inf
    metric_slope: float
    shape_rate_error: float  # max |lambda_s / s - |f| / rho| relative


def hp_minimal_surface(path: AlmostFuchsianPath, s_grid) -> HPMinimalSurface:
    from .almostfuchsian import loglog_slope

    s_grid = tuple(sorted((float(s) for s in s_grid), reverse=True))
    d0 = path.immersion(0.0)
    I0 = d0.I
    scale = float(np.max(np.abs(I0)))
    dev = {s: float(np.max(np.abs(path.immersion(s).I - I0))) / scale for s in s_grid}
    slope = loglog_slope(list(dev), list(dev.values()))
    s_min = s_grid[-1]
    d = path.immersion(s_min)
    # eigenvalues of B_s / s against those of I0^-1 Re q
    B_rate = inv2(I0) @ real_part_matrix(path.q)
    expected = np.sqrt(np.maximum(-det2(B_rate), 0.0))
    measured = np.sqrt(np.maximum(-det2(d.B), 0.0)) / s_min
    rate_err = float(np.max(np.abs(measured - expected) / np.maximum(expected, 1e-300)))
    return HPMinimalSurface(I0, d.second_form_rate, dev, slope, rate_err)


__all__ = [
    "ENDS",
    "ETA",
    "HPElement",
    "HPJet",
    "HPMinimalSurface",
    "HPSchwarzian",
    "RescaleReport",
    "apply_g_t",
    "conjugation_error",
    "eta_t",
    "format_element",
    "format_jet",
    "hp_compose",
    "hp_inverse",
    "hp_minimal_surface",
    "hp_schwarzian",
    "in_X",
    "parse_jet",
    "random_element",
    "random_jet",
    "rescale_limit",
    "rescale_report",
]
