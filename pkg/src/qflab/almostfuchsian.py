"""Minimal-surface data along the path ``s -> ([c], s Re q)`` and the
fundamental forms and Schwarzians at infinity of both ends.

Conventions, per face in its flat chart ``z = x + iy``:

* the hyperbolic metric is ``c = rho |dz|^2`` with ``rho = e^{2 u_hyp}``;
* ``Re(f dz^2)`` is the matrix ``[[Re f, -Im f], [-Im f, -Re f]]``, so
  ``det_c(Re q) = -|f|^2 / rho^2``;
* ``I_s = e^{2 u_s} c``, ``II_s = s Re q``, ``B = I^-1 II`` and
  ``III = I(B., B.) = II I^-1 II``;
* at infinity ``I* = (I + 2 end II + III) / 2`` and ``II* = (I - III) / 2``.

Vertex fields are lumped over barycentric dual cells; face values of vertex
fields use the mean of the three vertex values.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .curves import CoreCurve
from .errors import DegenerateEplusB, PrincipalCurvatureExceedsOne, QuadratureFailure, UnsupportedChart, UnsupportedCurve
from .mesh import MetricField, TriangleMesh, assemble_stiffness, cotan_stiffness, newton_solve

log = logging.getLogger(__name__)

ENDS = (1, -1)


# ---------------------------------------------------------------- 2x2 helpers


def sym(a, b, d):
    """Stack symmetric 2x2 matrices [[a, b], [b, d]] along the first axis."""
    out = np.empty(np.broadcast(a, b, d).shape + (2, 2))
    out[..., 0, 0] = a
    out[..., 0, 1] = b
    out[..., 1, 0] = b
    out[..., 1, 1] = d
    return out


def det2(m):
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def inv2(m):
    d = det2(m)
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1] / d
    out[..., 1, 1] = m[..., 0, 0] / d
    out[..., 0, 1] = -m[..., 0, 1] / d
    out[..., 1, 0] = -m[..., 1, 0] / d
    return out


def half_trace_rel(g, t):
    """``tr(g^-1 t) / 2`` for symmetric 2x2 stacks, without forming ``g^-1``."""
    num = g[..., 0, 0] * t[..., 1, 1] + g[..., 1, 1] * t[..., 0, 0] - 2.0 * g[..., 0, 1] * t[..., 0, 1]
    return num / (2.0 * det2(g))


def real_part_matrix(f):
    """Matrix of ``Re(f dz^2)`` in chart coordinates."""
    f = np.asarray(f, dtype=complex)
    return sym(f.real, -f.imag, -f.real)


def det_c_real_q(f, rho):
    """``det_c(Re q)`` for ``c = rho |dz|^2``: ``-|f|^2 / rho^2``."""
    return -(np.abs(f) ** 2) / rho**2


def traceless_to_qd(t):
    """Coefficient ``phi`` with ``Re(phi dz^2)`` the chart-traceless part of ``t``."""
    return 0.5 * (t[..., 0, 0] - t[..., 1, 1]) - 1j * t[..., 0, 1]


def tensor_l1(t, area, mask=None):
    """``integral |T|_c dA_c`` for a symmetric 2-tensor field and conformal ``c``.

    The pointwise norm and the area form carry inverse powers of the
    conformal factor, so the integrand is the chart Frobenius norm times the
    flat face area.
    """
    vals = np.sqrt(np.sum(t * t, axis=(-2, -1))) * area
    return float(np.sum(vals if mask is None else vals[mask]))


def qd_l1(phi, area, mask=None):
    """``integral |phi| dx dy``: the L1 norm of a quadratic differential."""
    vals = np.abs(phi) * area
    return float(np.sum(vals if mask is None else vals[mask]))


# ---------------------------------------------------------------- Gauss equation


def face_mean(m: TriangleMesh, v: np.ndarray) -> np.ndarray:
    return v[m.faces].mean(axis=1)


@dataclass
class Background:
    """Uniformised mesh shared by every solve along the path."""

    mesh: TriangleMesh
    hyp: MetricField
    q: np.ndarray
    stiffness: sp.csr_matrix = field(repr=False)
    mass: np.ndarray = field(repr=False)  # flat lumped areas
    rho: np.ndarray = field(repr=False)  # vertex e^{2 u_hyp}
    rho_face: np.ndarray = field(repr=False)
    q_mass: np.ndarray = field(repr=False)  # lumped |f|^2

    @classmethod
    def build(cls, mesh: TriangleMesh, hyp: MetricField, q: np.ndarray) -> "Background":
        q = np.asarray(q, dtype=complex)
        mass = mesh.vertex_mass
        q_mass = np.bincount(mesh.faces.ravel(), np.repeat(mesh.face_area * np.abs(q) ** 2 / 3.0, 3), mesh.n_vertices)
        return cls(
            mesh,
            hyp,
            q,
            cotan_stiffness(mesh),
            mass,
            np.exp(2.0 * hyp.total),
            np.exp(2.0 * face_mean(mesh, hyp.total)),
            q_mass,
        )


def gauss_residual(bg: Background, u: np.ndarray, s: float) -> np.ndarray:
    """Dual-cell integral of ``-Delta u - 1 + e^{2u} - e^{-2u} s^2 det_c(Re q)``."""
    return (
        bg.stiffness @ u
        + bg.mass * bg.rho * (np.exp(2.0 * u) - 1.0)
        + (s * s) * bg.q_mass * np.exp(-2.0 * u) / bg.rho
    )


def gauss_solve(bg: Background, s: float, *, tol: float = 1e-10, max_iter: int = 30, u0=None) -> MetricField:
    """Conformal factor ``u_s`` of the minimal surface with ``II = s Re q``.

    Starts from ``u0`` (default ``u = 0``, exact at ``s = 0``); pass a nearby
    solution to continue in ``s`` past where the cold start converges.  Issues
    :class:`PrincipalCurvatureExceedsOne` as a warning when the solution
    leaves the almost-Fuchsian range.
    """

    def residual(u):
        return gauss_residual(bg, u, s)

    def jacobian(u):
        diag = 2.0 * bg.mass * bg.rho * np.exp(2.0 * u) - 2.0 * (s * s) * bg.q_mass * np.exp(-2.0 * u) / bg.rho
        return bg.stiffness + sp.diags(diag)

    u, info = newton_solve(residual, jacobian, np.zeros(bg.mesh.n_vertices) if u0 is None else np.asarray(u0, float), tol=tol, max_iter=max_iter, stage="gauss_solve")
    metric = MetricField(u, "hyperbolic", bg.hyp.total, info)
    lam = principal_curvature(bg, u, s)
    if lam.size and lam.max() >= 1.0:
        warnings.warn(PrincipalCurvatureExceedsOne(f"max principal curvature {lam.max():.3f} at s={s}"), stacklevel=2)
    return metric


def principal_curvature(bg: Background, u: np.ndarray, s: float) -> np.ndarray:
    """Per-face ``|s| e^{-2u} |f| / rho`` (eigenvalues of ``B`` are plus/minus this)."""
    mu = bg.rho_face * np.exp(2.0 * face_mean(bg.mesh, u))
    return abs(s) * np.abs(bg.q) / mu


@dataclass
class ImmersionData:
    s: float
    u: MetricField
    mu: np.ndarray  # conformal factor of I in the flat chart
    I: np.ndarray
    II: np.ndarray
    III: np.ndarray
    B: np.ndarray
    second_form_rate: np.ndarray  # Re q, so II = s * second_form_rate
    lam: np.ndarray
    gauss_residual: float
    codazzi_residual: float
    background: Background = field(repr=False)

    @property
    def lam_range(self) -> tuple[float, float]:
        return float(-self.lam.max()), float(self.lam.max())

    @property
    def almost_fuchsian(self) -> bool:
        return bool(self.lam.max() < 1.0)

    @property
    def trace_II(self) -> np.ndarray:
        return 2.0 * half_trace_rel(self.I, self.II)

    @property
    def det_B(self) -> np.ndarray:
        return det2(self.B)


def codazzi_jump(bg: Background, s: float) -> float:
    """Largest jump of ``s Re q`` across an edge, after chart transport."""
    m = bg.mesh
    a, b = m.edge_faces[:, 0], m.edge_faces[:, 1]
    jump = np.abs(bg.q[a] - bg.q[b] * np.exp(2j * m.edge_rotation))
    return float(abs(s) * jump.max()) if len(jump) else 0.0


def immersion_data(bg: Background, s: float, u_s: MetricField) -> ImmersionData:
    m = bg.mesh
    mu = bg.rho_face * np.exp(2.0 * face_mean(m, u_s.u))
    zero = np.zeros_like(mu)
    I = sym(mu, zero, mu)
    R = real_part_matrix(bg.q)
    II = s * R
    Iinv = inv2(I)
    B = Iinv @ II
    III = II @ Iinv @ II
    lam = abs(s) * np.abs(bg.q) / mu
    res = float(np.max(np.abs(gauss_residual(bg, u_s.u, s))))
    return ImmersionData(s, u_s, mu, I, II, III, B, R, lam, res, codazzi_jump(bg, s), bg)


# ---------------------------------------------------------------- at infinity


@dataclass
class InfinityData:
    end: int
    immersion: ImmersionData = field(repr=False)
    Istar: np.ndarray
    IIstar: np.ndarray
    Kstar: np.ndarray  # 2K / det(E + B): the curvature of I*
    Kstar_alt: np.ndarray  # (-1 + det B) / (1 + det B)
    Hstar: np.ndarray  # tr(I*^-1 II*) / 2, computed discretely
    IIstar0: np.ndarray
    det_EB: np.ndarray
    sigma: np.ndarray | None = None
    conformal_shift: float | None = None
    conformal_factor: np.ndarray | None = None

    @property
    def Hstar_formula(self) -> np.ndarray:
        """Mean curvature predicted from the immersion, ``-Kstar_alt``."""
        return -self.Kstar_alt

    def reconstruction_error(self) -> float:
        rebuilt = self.IIstar0 + self.Hstar[:, None, None] * self.Istar
        return float(np.max(np.abs(rebuilt - self.IIstar)))


def forms_at_infinity(d: ImmersionData, end: int = 1) -> InfinityData:
    if end not in ENDS:
        raise ValueError("end must be +1 or -1")
    Istar = 0.5 * (d.I + 2.0 * end * d.II + d.III)
    IIstar = 0.5 * (d.I - d.III)
    eye = np.broadcast_to(np.eye(2), d.B.shape)
    det_EB = det2(eye + end * d.B)
    if np.any(det_EB <= 0):
        raise DegenerateEplusB(f"det(E {'+' if end > 0 else '-'} B) <= 0 on {int(np.sum(det_EB <= 0))} faces")
    detB = det2(d.B)
    K = -1.0 + detB
    Kstar = 2.0 * K / det_EB
    Kstar_alt = (-1.0 + detB) / (1.0 + detB)
    Hstar = half_trace_rel(Istar, IIstar)
    IIstar0 = IIstar - Hstar[:, None, None] * Istar
    return InfinityData(end, d, Istar, IIstar, Kstar, Kstar_alt, Hstar, IIstar0, det_EB)


def equidistant_forms(d: ImmersionData, r: float):
    """``(I_r, II_r, B_r)`` of the surface at oriented distance ``r``."""
    if d.lam.size and d.lam.max() >= 1.0:
        raise PrincipalCurvatureExceedsOne(f"max principal curvature {d.lam.max():.3f} >= 1")
    eye = np.broadcast_to(np.eye(2), d.B.shape)
    P = math.cosh(r) * eye + math.sinh(r) * d.B
    dP = math.sinh(r) * eye + math.cosh(r) * d.B
    PT = np.swapaxes(P, -1, -2)
    I_r = PT @ d.I @ P
    II_r = 0.5 * (np.swapaxes(dP, -1, -2) @ d.I @ P + PT @ d.I @ dP)
    B_r = np.linalg.solve(P, dP)
    return I_r, II_r, B_r


# ---------------------------------------------------------------- Schwarzian


def _p1_gradients(m: TriangleMesh) -> np.ndarray:
    """Chart gradients of the three barycentric hat functions, (F, 3, 2)."""
    grads = np.empty((m.n_faces, 3, 2))
    twice_area = 2.0 * m.face_area
    for k in range(3):
        e = m.face_xy[:, (k + 2) % 3] - m.face_xy[:, (k + 1) % 3]
        grads[:, k, 0] = -e[:, 1] / twice_area
        grads[:, k, 1] = e[:, 0] / twice_area
    return grads


def metric_stiffness(m: TriangleMesh, g: np.ndarray) -> sp.csr_matrix:
    """P1 stiffness of ``-Delta_g`` for a metric constant on each face.

    Only the conformally invariant tensor ``sqrt(det g) g^-1`` enters.
    """
    a, b, d = g[:, 0, 0], g[:, 0, 1], g[:, 1, 1]
    root = np.sqrt(a * d - b * b)
    T = sym(d / root, -b / root, a / root)
    grads = _p1_gradients(m)
    weights = np.empty((m.n_faces, 3))
    for k in range(3):
        gi, gj = grads[:, (k + 1) % 3], grads[:, (k + 2) % 3]
        weights[:, k] = -m.face_area * np.einsum("fa,fab,fb->f", gi, T, gj)
    return assemble_stiffness(m, weights)


def face_gradient(m: TriangleMesh, v: np.ndarray, grads=None) -> np.ndarray:
    grads = _p1_gradients(m) if grads is None else grads
    return np.einsum("fk,fka->fa", v[m.faces], grads)


def recovered_hessian(m: TriangleMesh, v: np.ndarray, grads=None) -> np.ndarray:
    """Symmetrised chart Hessian: gradient of the area-averaged vertex gradient."""
    grads = _p1_gradients(m) if grads is None else grads
    gf = face_gradient(m, v, grads)
    weight = np.repeat(m.face_area, 3)
    denom = np.bincount(m.faces.ravel(), weight, m.n_vertices)
    gv = np.stack(
        [np.bincount(m.faces.ravel(), weight * np.repeat(gf[:, a], 3), m.n_vertices) / denom for a in range(2)],
        axis=1,
    )
    H = np.einsum("fka,fkb->fab", grads, gv[m.faces])
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def conformal_correction(m: TriangleMesh, Istar: np.ndarray, phi: np.ndarray, log_scale: np.ndarray) -> np.ndarray:
    """Traceless part of ``Hess(phi) - dphi (x) dphi + |dphi|^2 I* / 2``.

    The Christoffel symbols are those of the conformal part of ``I*``,
    ``e^{2 w} |dz|^2`` with ``w`` given per vertex by ``log_scale``.
    """
    grads = _p1_gradients(m)
    gp = face_gradient(m, phi, grads)
    gw = face_gradient(m, log_scale, grads)
    H = recovered_hessian(m, phi, grads)
    dot = np.sum(gw * gp, axis=1)
    chris = np.einsum("fa,fb->fab", gw, gp)
    chris = chris + np.swapaxes(chris, -1, -2) - dot[:, None, None] * np.eye(2)
    Hcov = H - chris
    Iinv = inv2(Istar)
    norm2 = np.einsum("fa,fab,fb->f", gp, Iinv, gp)
    C = Hcov - np.einsum("fa,fb->fab", gp, gp) + 0.5 * norm2[:, None, None] * Istar
    return C - half_trace_rel(Istar, C)[:, None, None] * Istar


def schwarzian_at_infinity(inf: InfinityData, *, tol: float = 1e-10, max_iter: int = 30) -> np.ndarray:
    """Schwarzian ``sigma`` of one end, as a per-face coefficient of ``dz^2``.

    The conformal factor ``e^{2f}`` taking ``I*`` to constant curvature -1 is
    split as a constant ``f0`` (from the area-weighted mean of ``K*``) plus a
    correction ``phi`` found by damped Newton on
    ``W* phi + K* a* + e^{2 f0} a* e^{2 phi} = 0``.  Only ``phi`` enters the
    Hessian correction of ``(II*)_0``; then ``Re(sigma) = -(II*_hyp)_0``.
    """
    d = inf.immersion
    bg = d.background
    m = bg.mesh
    if not m.flat.is_translation():
        raise UnsupportedChart("Schwarzian extraction needs translation charts")
    G = inf.Istar
    w = np.sqrt(det2(G)) * m.face_area / 3.0
    idx = m.faces.ravel()
    a_star = np.bincount(idx, np.repeat(w, 3), m.n_vertices)
    k_term = np.bincount(idx, np.repeat(inf.Kstar * w, 3), m.n_vertices)
    scale = -np.sum(inf.Kstar * w) / np.sum(w)  # e^{2 f0}
    W = metric_stiffness(m, G)

    def residual(phi):
        return W @ phi + k_term + scale * a_star * np.exp(2.0 * phi)

    def jacobian(phi):
        return W + sp.diags(2.0 * scale * a_star * np.exp(2.0 * phi))

    phi, _ = newton_solve(residual, jacobian, np.zeros(m.n_vertices), tol=tol, max_iter=max_iter, stage="schwarzian")
    log_scale = d.u.u + bg.hyp.total
    T = inf.IIstar0 + conformal_correction(m, G, phi, log_scale)
    sigma = -traceless_to_qd(T)
    inf.sigma = sigma
    inf.conformal_shift = 0.5 * math.log(scale)
    inf.conformal_factor = phi
    return sigma


# ---------------------------------------------------------------- the path


class AlmostFuchsianPath:
    """Cached solves along ``s -> ([c], s Re q)`` for one uniformised mesh."""

    def __init__(self, mesh: TriangleMesh, hyp: MetricField, q: np.ndarray, *, exclusion: float = 3.0):
        self.bg = Background.build(mesh, hyp, q)
        self.mesh = mesh
        self.face_mask = ~mesh.faces_near_cone(exclusion)
        self._imm: dict[float, ImmersionData] = {}
        self._inf: dict[tuple[float, int], InfinityData] = {}

    @property
    def q(self) -> np.ndarray:
        return self.bg.q

    def immersion(self, s: float) -> ImmersionData:
        s = float(s)
        if s not in self._imm:
            u_s = gauss_solve(self.bg, s)
            self._imm[s] = immersion_data(self.bg, s, u_s)
        return self._imm[s]

    def infinity(self, s: float, end: int) -> InfinityData:
        key = (float(s), int(end))
        if key not in self._inf:
            inf = forms_at_infinity(self.immersion(s), end)
            schwarzian_at_infinity(inf)
            self._inf[key] = inf
        return self._inf[key]

    def sigma(self, s: float, end: int) -> np.ndarray:
        return self.infinity(s, end).sigma

    def schwarzian_error(self, s: float, end: int) -> float:
        """``||sigma_s - end s q||_1 / (s ||q||_1)`` with cone disks excluded."""
        area, mask = self.mesh.face_area, self.face_mask
        return qd_l1(self.sigma(s, end) - end * s * self.q, area, mask) / (abs(s) * qd_l1(self.q, area, mask))


# ---------------------------------------------------------------- reports


@dataclass
class ReportRow:
    quantity: str
    end: int
    s: float | str
    error: float
    slope: float | None
    status: str


@dataclass
class FirstOrderReport:
    rows: list[ReportRow]
    s_grid: tuple[float, ...]

    def rows_for(self, quantity: str, end: int) -> list[ReportRow]:
        return [r for r in self.rows if r.quantity == quantity and r.end == end and r.s != "fit"]

    def fit(self, quantity: str, end: int) -> ReportRow:
        return next(r for r in self.rows if r.quantity == quantity and r.end == end and r.s == "fit")

    @property
    def passed(self) -> bool:
        return all(r.status == "pass" for r in self.rows)

    def to_table(self, sep: str = "\t") -> str:
        lines = [sep.join(("quantity", "s", "error_L1", "slope", "status"))]
        for r in self.rows:
            s = r.s if isinstance(r.s, str) else f"{r.s:.6g}"
            slope = "" if r.slope is None else f"{r.slope:.6f}"
            name = f"{r.quantity}[{'+' if r.end > 0 else '-'}]"
            lines.append(sep.join((name, s, f"{r.error:.6e}", slope, r.status)))
        return "\n".join(lines) + "\n"


def loglog_slope(s, err) -> float:
    s, err = np.asarray(s, dtype=float), np.asarray(err, dtype=float)
    if np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log(s), np.log(err), 1)[0])


def first_order_report(
    path: AlmostFuchsianPath,
    s_grid,
    ends=ENDS,
    *,
    tol: float = 0.05,
    kstar_scale: float = 0.05,
    kstar_slope=(1.8, 2.2),
) -> FirstOrderReport:
    """Finite-difference checks of the first-order laws at ``s = 0``.

    ``dI*/ds = end Re q``, ``d(II*)_0/ds = -end Re q``, ``dK*/ds = 0`` and
    ``d sigma/ds = end q``; relative L1 errors exclude the cone disks.
    """
    s_grid = tuple(sorted((float(s) for s in s_grid), reverse=True))
    if len(s_grid) < 2 or s_grid[-1] <= 0:
        raise ValueError("s_grid needs at least two positive values")
    m = path.mesh
    area, mask = m.face_area, path.face_mask
    R = real_part_matrix(path.q)
    r_norm = tensor_l1(R, area, mask)
    q_norm = qd_l1(path.q, area, mask)
    q_sup = float(np.max(np.abs(path.q) / path.bg.rho_face))
    rows = []
    for end in ends:
        base = path.infinity(0.0, end)
        series: dict[str, list[float]] = {"dIstar/ds": [], "dIIstar0/ds": [], "dKstar/ds": [], "Kstar_increment": [], "dsigma/ds": []}
        for s in s_grid:
            inf = path.infinity(s, end)
            series["dIstar/ds"].append(tensor_l1((inf.Istar - base.Istar) / s - end * R, area, mask) / r_norm)
            series["dIIstar0/ds"].append(tensor_l1(inf.IIstar0 / s + end * R, area, mask) / r_norm)
            dk = np.abs(inf.Kstar - base.Kstar)
            mean_dk = float(np.sum((dk * area)[mask]) / np.sum(area[mask]))
            series["Kstar_increment"].append(mean_dk)
            series["dKstar/ds"].append(mean_dk / s)
            series["dsigma/ds"].append(path.schwarzian_error(s, end))
        for name, errs in series.items():
            slope = loglog_slope(s_grid, errs)
            monotone = all(b < a for a, b in zip(errs, errs[1:]))
            for s, e in zip(s_grid, errs):
                if name == "Kstar_increment":
                    ok = True
                elif name == "dKstar/ds":
                    ok = e <= kstar_scale * q_sup
                else:
                    ok = e <= tol
                rows.append(ReportRow(name, end, s, e, None, "pass" if ok else "fail"))
            fit_ok = monotone and np.isfinite(slope)
            if name == "Kstar_increment":
                fit_ok = fit_ok and kstar_slope[0] <= slope <= kstar_slope[1]
            rows.append(ReportRow(name, end, "fit", errs[-1], slope, "pass" if fit_ok else "fail"))
    return FirstOrderReport(rows, s_grid)


# ---------------------------------------------------------------- foliations


def _path_segments(m: TriangleMesh, core: CoreCurve, eps: float):
    """Faces crossed by the straight representative of ``core`` and the
    length spent in each, plus the representative's distance to the cones.

    Horizontal cores run at the middle of the central cell row of their
    cylinder; the two triangles of a cell split the crossing at the diagonal.
    """
    f = m.flat
    segments = []
    clearance = np.inf
    for r in core.squares:
        nx, ny = m.grid[r]
        sx, sy = f.widths[r] / nx, f.heights[r] / ny
        if core.kind == "horizontal":
            j = ny // 2
            y0 = (j + 0.5) * sy
            clearance = min(clearance, y0, f.heights[r] - y0)
            for i in range(nx):
                segments.append((m.cell_face[(r, i, j, 1)], 0.5 * sx))
                segments.append((m.cell_face[(r, i, j, 0)], 0.5 * sx))
        else:
            i = nx // 2
            x0 = (i + 0.5) * sx
            clearance = min(clearance, x0, f.widths[r] - x0)
            for j in range(ny):
                segments.append((m.cell_face[(r, i, j, 0)], 0.5 * sy))
                segments.append((m.cell_face[(r, i, j, 1)], 0.5 * sy))
    if clearance < eps:
        raise QuadratureFailure(f"core {core.kind}[{core.index}] passes within {clearance:.3g} < {eps:.3g} of a cone")
    return segments


def transverse_measure(m: TriangleMesh, phi: np.ndarray, core: CoreCurve, eps: float | None = None) -> float:
    """``integral over the core of |Im sqrt(phi dz^2)|``: the horizontal measure of ``phi``."""
    if not isinstance(core, CoreCurve) or core.kind not in ("horizontal", "vertical"):
        raise UnsupportedCurve("only cylinder cores are supported")
    eps = 3.0 * m.h_target if eps is None else eps
    root = np.sqrt(np.asarray(phi, dtype=complex))
    # dz = dx along horizontal cores, i dy along vertical ones
    density = np.abs(root.imag) if core.kind == "horizontal" else np.abs(root.real)
    return math.fsum(density[fi] * length for fi, length in _path_segments(m, core, eps))


@dataclass
class FoliationRow:
    core: CoreCurve
    t: float
    measured_plus: float
    measured_minus: float
    expected_plus: float
    expected_minus: float

    @property
    def residual_plus(self) -> float:
        return abs(self.measured_plus - self.expected_plus)

    @property
    def residual_minus(self) -> float:
        return abs(self.measured_minus - self.expected_minus)


@dataclass
class FoliationReport:
    rows: list[FoliationRow]
    t_grid: tuple[float, ...]

    def series(self, core: CoreCurve, end: int = 1) -> list[float]:
        """``residual / t`` for ``core`` in decreasing ``t`` order."""
        out = []
        for t in self.t_grid:
            row = next(r for r in self.rows if r.core == core and r.t == t)
            out.append((row.residual_plus if end > 0 else row.residual_minus) / t)
        return out

    def cores(self) -> list[CoreCurve]:
        seen = []
        for r in self.rows:
            if r.core not in seen:
                seen.append(r.core)
        return seen

    def decreasing(self, core: CoreCurve, end: int = 1) -> bool:
        ser = self.series(core, end)
        return all(b < a for a, b in zip(ser, ser[1:]))

    def filling_echo(self) -> dict[float, float]:
        """``min over cores of i(gamma, F+_t) + i(gamma, F-_t)`` for each ``t``."""
        return {t: min(r.measured_plus + r.measured_minus for r in self.rows if r.t == t) for t in self.t_grid}

    @property
    def passed(self) -> bool:
        return all(self.decreasing(c, e) for c in self.cores() for e in ENDS) and all(
            v > 0 for v in self.filling_echo().values()
        )


def foliation_first_order_check(path: AlmostFuchsianPath, t_grid, cores) -> FoliationReport:
    """Compare ``i(gamma, F^t_pm)`` with ``t i(gamma, hor(pm q))`` for each core.

    ``F^t_pm`` is the horizontal foliation of ``sigma_pm`` at ``s = t^2``.
    """
    from . import flatsurf

    t_grid = tuple(sorted((float(t) for t in t_grid), reverse=True))
    m = path.mesh
    rows = []
    for core in cores:
        expected_plus = flatsurf.intersection_number(m.flat, core, "horizontal")
        expected_minus = flatsurf.intersection_number(m.flat, core, "vertical")
        for t in t_grid:
            s = t * t
            rows.append(
                FoliationRow(
                    core,
                    t,
                    transverse_measure(m, path.sigma(s, 1), core),
                    transverse_measure(m, path.sigma(s, -1), core),
                    t * expected_plus,
                    t * expected_minus,
                )
            )
    return FoliationReport(rows, t_grid)
