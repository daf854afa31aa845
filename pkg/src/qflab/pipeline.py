"""Pipeline orchestration and the named verification suite."""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from . import curves, flatsurf, halfpipe, mesh, svg
from .almostfuchsian import ENDS, AlmostFuchsianPath, det2, first_order_report, foliation_first_order_check, loglog_slope
from .errors import ConfigError, QFLabError

GROUPS = ("curves", "flatsurf", "mesh", "almostfuchsian", "halfpipe")


@dataclass(frozen=True)
class Tolerances:
    uniformize_residual: float = 1e-10
    gauss_residual: float = 1e-10
    gauss_slope: tuple[float, float] = (1.9, 2.1)
    area_rel: float = 0.01
    curvature_band: tuple[float, float] = (-1.05, -0.95)
    curvature_fraction: float = 0.95
    refinement_ratio: float = 1.7
    first_order_l1: float = 0.05
    kstar_scale: float = 0.05
    kstar_slope: tuple[float, float] = (1.8, 2.2)
    schwarzian_s: float = 1e-2
    schwarzian_l1: float = 0.05
    extremal_length: float = 1e-10
    critical_point: float = 1e-8
    trace_free: float = 1e-10
    det_identity: float = 1e-12
    odd_lambda: float = 1e-10
    reconstruction: float = 1e-10
    hstar_consistency: float = 1e-8
    rescale: float = 1e-2
    closure: float = 1e-8
    hp_l1: float = 0.05
    hp_metric_slope: tuple[float, float] = (1.9, 2.1)


@dataclass(frozen=True)
class PipelineConfig:
    surface: Path | None = None  # None: the built-in 3-square L
    h_target: float = 0.05
    s0: float = 8e-3
    s_ratio: float = 0.5
    s_count: int = 4
    s_values: tuple[float, ...] | None = None  # explicit grid, overrides s0/ratio/count
    ends: tuple[int, ...] = ENDS
    out: Path = Path("qflab-out")
    seed: int = 0
    checks: tuple[str, ...] = GROUPS
    t_grid: tuple[float, ...] = (0.2, 0.1, 0.05)
    n_jets: int = 20
    n_products: int = 100
    tol: Tolerances = field(default_factory=Tolerances)

    @property
    def s_grid(self) -> tuple[float, ...]:
        if self.s_values is not None:
            return tuple(float(s) for s in self.s_values)
        return tuple(self.s0 * self.s_ratio**k for k in range(self.s_count))

    def validate(self) -> "PipelineConfig":
        grid = self.s_grid
        if len(grid) < 2:
            raise ConfigError("s_grid needs at least two values")
        if any(not (s > 0 and math.isfinite(s)) for s in grid):
            raise ConfigError("s_grid values must be positive and finite")
        if any(b >= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("s_grid must be strictly decreasing toward 0")
        if not self.h_target > 0:
            raise ConfigError("h_target must be positive")
        if not self.ends or any(e not in ENDS for e in self.ends) or len(set(self.ends)) != len(self.ends):
            raise ConfigError("ends must be a non-empty subset of {+1, -1}")
        unknown = set(self.checks) - set(GROUPS)
        if unknown:
            raise ConfigError(f"unknown check groups: {sorted(unknown)}")
        if any(not t > 0 for t in self.t_grid):
            raise ConfigError("t_grid values must be positive")
        return self


# ---------------------------------------------------------------- lazy context


class Context:
    """Every pipeline object, computed once on first use."""

    def __init__(self, cfg: PipelineConfig, flat: flatsurf.FlatSurface | None = None):
        self.cfg = cfg
        self._flat = flat

    @cached_property
    def source(self) -> curves.CombinatorialSurface:
        if self._flat is not None and self._flat.source is not None:
            return self._flat.source
        return curves.l_shape() if self.cfg.surface is None else curves.load_surface(self.cfg.surface)

    @cached_property
    def flat(self) -> flatsurf.FlatSurface:
        return self._flat if self._flat is not None else flatsurf.realize(self.source)

    @cached_property
    def mesh(self) -> mesh.TriangleMesh:
        return mesh.triangulate(self.flat, self.cfg.h_target)

    @cached_property
    def hyp(self) -> mesh.MetricField:
        return mesh.uniformize(self.mesh)

    @cached_property
    def curvature(self) -> mesh.DiscreteCurvature:
        return mesh.discrete_curvature(self.mesh, self.hyp)

    @cached_property
    def fine_mesh(self) -> mesh.TriangleMesh:
        return mesh.triangulate(self.flat, self.cfg.h_target / 2)

    @cached_property
    def fine_curvature(self) -> mesh.DiscreteCurvature:
        return mesh.discrete_curvature(self.fine_mesh, mesh.uniformize(self.fine_mesh))

    @cached_property
    def path(self) -> AlmostFuchsianPath:
        return AlmostFuchsianPath(self.mesh, self.hyp, mesh.qd_field(self.flat, self.mesh))

    @cached_property
    def report(self):
        return first_order_report(
            self.path,
            self.cfg.s_grid,
            self.cfg.ends,
            tol=self.cfg.tol.first_order_l1,
            kstar_scale=self.cfg.tol.kstar_scale,
            kstar_slope=self.cfg.tol.kstar_slope,
        )

    @cached_property
    def foliation(self):
        return foliation_first_order_check(self.path, self.cfg.t_grid, curves.core_curves(self.source).cores())

    @cached_property
    def hp_schwarzian(self):
        return halfpipe.hp_schwarzian(self.path, self.cfg.s_grid, tol=self.cfg.tol.hp_l1)

    @cached_property
    def hp_surface(self):
        return halfpipe.hp_minimal_surface(self.path, self.cfg.s_grid)


# ---------------------------------------------------------------- check rows


@dataclass(frozen=True)
class CheckRow:
    name: str
    stage: str
    value: str
    bound: str
    status: str  # pass | fail | recorded | error

    @property
    def ok(self) -> bool:
        return self.status in ("pass", "recorded")


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6e}"


def _row(name, stage, value, bound, ok) -> CheckRow:
    return CheckRow(name, stage, _num(value), bound, "pass" if ok else "fail")


def _le(name, stage, value, bound) -> CheckRow:
    return _row(name, stage, value, f"<= {bound:g}", value <= bound)


def _ge(name, stage, value, bound) -> CheckRow:
    return _row(name, stage, value, f">= {bound:g}", value >= bound)


def _within(name, stage, value, band) -> CheckRow:
    lo, hi = band
    return _row(name, stage, value, f"in [{lo:g}, {hi:g}]", lo <= value <= hi)


def _curves_rows(ctx: Context) -> list[CheckRow]:
    src = ctx.source
    g, cones = curves.genus_and_cones(src)
    orders = curves.zero_orders(src)
    ok, witness = curves.filling_check(src)
    min_total = min(w.total for w in witness) if ok else 0.0
    return [
        _ge("Genus", "curves", g, 2),
        _row("ZeroOrderSum", "curves", sum(orders), f"== {4 * g - 4}", sum(orders) == 4 * g - 4),
        _row("FillingPair", "curves", min_total, "> 0", ok and min_total > 0),
    ]


def _flatsurf_rows(ctx: Context) -> list[CheckRow]:
    f = ctx.flat
    tol = ctx.cfg.tol
    rows = []
    ext_err = 0.0
    area = f.area
    for s in (-1.0, -0.25, 0.0, 0.5, 2.0):
        for t in (0.5, 1.0, 2.0):
            h = flatsurf.extremal_length_on_disk(f, s, "horizontal", t)
            v = flatsurf.extremal_length_on_disk(f, s, "vertical", t)
            ext_err = max(ext_err, abs(h - t * t * math.exp(2 * s) * area), abs(v - t * t * math.exp(-2 * s) * area))
    rows.append(_le("ExtremalLengthClosedForm", "flatsurf", ext_err, tol.extremal_length))
    crit = 0.0
    for t in (0.25, 0.5, 1.0, 2.0, 4.0):
        p = flatsurf.critical_point_on_disk(f, t, tol=1.0)
        crit = max(crit, abs(p.numeric_s - p.s), abs(p.s + 0.5 * math.log(t)))
    rows.append(_le("CriticalPoint", "flatsurf", crit, tol.critical_point))
    echo = 0.0
    for t in (0.25, 2.0, 4.0):
        p = flatsurf.critical_point_on_disk(f, 1.0, scale_h=t, scale_v=t, tol=1.0)
        echo = max(echo, abs(p.s), abs(p.numeric_s))
    rows.append(_le("ScalingEcho", "flatsurf", echo, tol.critical_point))
    gm = flatsurf.gardiner_derivative_check(f)
    rows.append(CheckRow("GardinerRatio", "flatsurf", _num(gm.ratio), "recorded", "recorded"))
    return rows


def _mesh_rows(ctx: Context) -> list[CheckRow]:
    m = ctx.mesh
    tol = ctx.cfg.tol
    declared = 2 - 2 * ctx.flat.genus
    rows = [
        _row("EulerCharacteristic", "mesh", m.euler_characteristic, f"== {declared}", m.euler_characteristic == declared),
        _le("GaussBonnet", "mesh", abs(math.fsum(m.kappa) - 2 * math.pi * declared), 1e-9),
    ]
    # topology rows survive a later stage error
    try:
        return rows + _metric_rows(ctx)
    except (QFLabError, ArithmeticError, ValueError) as exc:
        return rows + [_error_row("mesh", exc)]


def _metric_rows(ctx: Context) -> list[CheckRow]:
    m, tol, rows = ctx.mesh, ctx.cfg.tol, []
    declared = 2 - 2 * ctx.flat.genus
    hyp = ctx.hyp
    rows.append(_le("UniformizeResidual", "mesh", hyp.info.residual, tol.uniformize_residual))
    target = -2 * math.pi * declared
    area = mesh.hyperbolic_area(m, hyp)
    rows.append(_le("HyperbolicArea", "mesh", abs(area - target) / target, tol.area_rel))
    lo, hi = tol.curvature_band
    keep = ~m.near_cone()
    k = ctx.curvature.curvature[keep]
    frac = float(np.mean((k >= lo) & (k <= hi)))
    rows.append(_ge("CurvatureBand", "mesh", frac, tol.curvature_fraction))
    coarse = float(np.median(np.abs(k + 1.0)))
    fine_c = ctx.fine_curvature
    fine_k = fine_c.curvature[~ctx.fine_mesh.near_cone()]
    ratio = coarse / float(np.median(np.abs(fine_k + 1.0)))
    rows.append(_ge("CurvatureRefinement", "mesh", ratio, tol.refinement_ratio))
    return rows


def _af_rows(ctx: Context) -> list[CheckRow]:
    cfg, tol, p = ctx.cfg, ctx.cfg.tol, ctx.path
    grid = cfg.s_grid
    rows = []
    imms = [p.immersion(s) for s in grid]
    rows.append(_le("GaussResidual", "almostfuchsian", max(d.gauss_residual for d in imms), tol.gauss_residual))
    sup = [float(np.max(np.abs(d.u.u))) for d in imms]
    rows.append(_within("GaussSlope", "almostfuchsian", loglog_slope(grid, sup), tol.gauss_slope))
    rows.append(_le("ConformalFactorSign", "almostfuchsian", max(float(d.u.u.max()) for d in imms), 0.0))
    rows.append(_le("TraceFree", "almostfuchsian", max(float(np.abs(d.trace_II).max()) for d in imms), tol.trace_free))
    rows.append(_row("AlmostFuchsian", "almostfuchsian", max(d.lam.max() for d in imms), "< 1", all(d.almost_fuchsian for d in imms)))
    odd = 0.0
    for s in grid[:2]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            odd = max(odd, abs(p.immersion(s).lam.max() - p.immersion(-s).lam.max()))
    rows.append(_le("PrincipalCurvatureOdd", "almostfuchsian", odd, tol.odd_lambda))
    det_err = recon = hcons = 0.0
    for s in grid:
        d = p.immersion(s)
        for end in cfg.ends:
            inf = p.infinity(s, end)
            eye = np.broadcast_to(np.eye(2), d.B.shape)
            det_err = max(det_err, float(np.abs(det2(eye + end * d.B) - (1 + d.det_B)).max()))
            recon = max(recon, inf.reconstruction_error())
            hcons = max(hcons, float(np.abs(inf.Hstar - inf.Hstar_formula).max()))
    rows.append(_le("DetEplusBIdentity", "almostfuchsian", det_err, tol.det_identity))
    rows.append(_le("Reconstruction", "almostfuchsian", recon, tol.reconstruction))
    rows.append(_le("HstarConsistency", "almostfuchsian", hcons, tol.hstar_consistency))
    zero = max(float(np.abs(p.sigma(0.0, end)).max()) for end in cfg.ends)
    rows.append(_row("FuchsianTriviality", "almostfuchsian", zero, "== 0", zero == 0.0))

    rep = ctx.report
    for name in ("dIstar/ds", "dIIstar0/ds", "dsigma/ds"):
        for end in cfg.ends:
            fit = rep.fit(name, end)
            tag = f"{name}[{'+' if end > 0 else '-'}]"
            rows.append(_row(tag, "almostfuchsian", fit.error, f"<= {tol.first_order_l1:g}, decreasing", fit.status == "pass" and fit.error <= tol.first_order_l1))
    for end in cfg.ends:
        sign = "+" if end > 0 else "-"
        fd = rep.rows_for("dKstar/ds", end)[-1]
        rows.append(_row(f"dKstar/ds[{sign}]", "almostfuchsian", fd.error, "<= scale * sup|q|", fd.status == "pass"))
        fit = rep.fit("Kstar_increment", end)
        rows.append(_within(f"KstarSlope[{sign}]", "almostfuchsian", fit.slope, tol.kstar_slope))
        s = tol.schwarzian_s
        rows.append(_le(f"Schwarzian[{sign}]@{s:g}", "almostfuchsian", p.schwarzian_error(s, end), tol.schwarzian_l1))
    fol = ctx.foliation
    worst = max(fol.series(c, e)[-1] for c in fol.cores() for e in ENDS)
    rows.append(_row("FoliationFirstOrder", "almostfuchsian", worst, "residual/t decreasing", all(fol.decreasing(c, e) for c in fol.cores() for e in ENDS)))
    echo = min(fol.filling_echo().values())
    rows.append(_row("FillingEcho", "almostfuchsian", echo, "> 0", echo > 0))
    return rows


def _hp_rows(ctx: Context) -> list[CheckRow]:
    cfg, tol = ctx.cfg, ctx.cfg.tol
    rng = np.random.default_rng(cfg.seed)
    rows = []
    worst = max(halfpipe.conjugation_error(halfpipe.random_jet(rng), 1e-3) for _ in range(cfg.n_jets))
    rows.append(_le("RescaleLimit@1e-3", "halfpipe", worst, tol.rescale))
    g = halfpipe.HPElement.identity()
    closure = 0.0
    for _ in range(cfg.n_products):
        g = g @ halfpipe.random_element(rng, 0.3)
        closure = max(closure, g.gram_residual, float(np.abs(g.matrix[:3, 3]).max()))
    rows.append(_le("GroupClosure", "halfpipe", closure, tol.closure))
    hp = ctx.hp_schwarzian
    rows.append(_le("HPSchwarzian[+]", "halfpipe", hp.error_plus, tol.hp_l1))
    rows.append(_le("HPSchwarzian[-]", "halfpipe", hp.error_minus, tol.hp_l1))
    rows.append(_le("HPAntisymmetry", "halfpipe", hp.antisymmetry, tol.hp_l1))
    rows.append(_row("HPCoreIntersections", "halfpipe", hp.cores_match, "exact", hp.cores_match))
    ms = ctx.hp_surface
    from .almostfuchsian import real_part_matrix

    exact = bool(np.array_equal(ms.II_hp, real_part_matrix(ctx.path.q)))
    rows.append(_row("HPSecondForm", "halfpipe", exact, "bitwise", exact))
    rows.append(_within("HPMetricSlope", "halfpipe", ms.metric_slope, tol.hp_metric_slope))
    return rows


_GROUP_ROWS: dict[str, Callable[[Context], list[CheckRow]]] = {
    "curves": _curves_rows,
    "flatsurf": _flatsurf_rows,
    "mesh": _mesh_rows,
    "almostfuchsian": _af_rows,
    "halfpipe": _hp_rows,
}


def _run_group(group: str, ctx: Context) -> list[CheckRow]:
    try:
        return _GROUP_ROWS[group](ctx)
    except (QFLabError, ArithmeticError, ValueError) as exc:
        return [_error_row(group, exc)]


def _error_row(group: str, exc: Exception) -> CheckRow:
    stage = getattr(exc, "stage", None) or group
    msg = f"{type(exc).__name__}: {exc}".replace("\t", " ").replace("\n", " ")
    return CheckRow(f"{group}:stage-error", stage, msg, "no error", "error")


def verify_suite(cfg: PipelineConfig, flat: flatsurf.FlatSurface | None = None, *, context: Context | None = None) -> list[CheckRow]:
    """One row per invariant; failures are rows, never exceptions.

    ``flat`` substitutes the realised surface, for fault injection.
    """
    cfg.validate()
    ctx = context or Context(cfg, flat)
    rows = []
    for group in GROUPS:
        if group in cfg.checks:
            rows.extend(_run_group(group, ctx))
    return rows


def format_table(rows: list[CheckRow], sep: str = "\t") -> str:
    lines = [sep.join(("check", "stage", "value", "bound", "status"))]
    lines += [sep.join((r.name, r.stage, r.value, r.bound, r.status)) for r in rows]
    return "\n".join(lines) + "\n"


def exit_code(rows: list[CheckRow]) -> int:
    return 0 if all(r.ok for r in rows) else 1


# ---------------------------------------------------------------- bundle


@dataclass
class Bundle:
    out: Path
    files: dict[str, str]
    rows: list[CheckRow]

    @property
    def exit_code(self) -> int:
        return exit_code(self.rows)


def _uniformization_stats(ctx: Context) -> str:
    m, hyp = ctx.mesh, ctx.hyp
    k = ctx.curvature.curvature[~m.near_cone()]
    lines = [
        f"vertices = {m.n_vertices}",
        f"edges = {m.n_edges}",
        f"faces = {m.n_faces}",
        f"genus = {m.genus}",
        f"h_target = {m.h_target!r}",
        f"mesh_size = {m.mesh_size!r}",
        f"newton_iterations = {hyp.info.iterations}",
        f"newton_residual = {hyp.info.residual:.6e}",
        f"hyperbolic_area = {mesh.hyperbolic_area(m, hyp):.12f}",
        f"target_area = {4 * math.pi * (m.genus - 1):.12f}",
        f"median_curvature_deviation = {float(np.median(np.abs(k + 1.0))):.6e}",
    ]
    return "\n".join(lines) + "\n"


def _foliation_table(ctx: Context) -> str:
    lines = ["core\tt\tmeasured_plus\texpected_plus\tmeasured_minus\texpected_minus\tresidual_plus_over_t\tresidual_minus_over_t"]
    for r in ctx.foliation.rows:
        core = f"{r.core.kind}[{r.core.index + 1}]"
        lines.append(
            f"{core}\t{r.t:g}\t{r.measured_plus:.9e}\t{r.expected_plus:.9e}\t{r.measured_minus:.9e}\t"
            f"{r.expected_minus:.9e}\t{r.residual_plus / r.t:.6e}\t{r.residual_minus / r.t:.6e}"
        )
    echo = ctx.foliation.filling_echo()
    lines += [f"filling_echo\t{t:g}\t{v:.9e}" for t, v in echo.items()]
    return "\n".join(lines) + "\n"


def _halfpipe_text(ctx: Context) -> str:
    hp = ctx.hp_schwarzian
    rng = np.random.default_rng(ctx.cfg.seed)
    jet = halfpipe.random_jet(rng)
    rep = halfpipe.rescale_report(jet)
    lines = [
        f"sigma_hp_plus_l1_error = {hp.error_plus:.6e}",
        f"sigma_hp_minus_l1_error = {hp.error_minus:.6e}",
        f"antisymmetry_l1 = {hp.antisymmetry:.6e}",
        f"core_intersections_match = {str(hp.cores_match).lower()}",
        f"verdict = {'consistent' if hp.consistent else 'inconsistent'}",
        "",
        "# sample jet (seeded) and its half-pipe limit",
        halfpipe.format_jet(jet).rstrip("\n"),
        "limit",
        halfpipe.format_element(rep.element).rstrip("\n"),
    ]
    lines += [f"conjugation_error[t={t:g}] = {e:.6e}" for t, e in rep.errors.items()]
    discarded = " ".join(sorted(rep.discarded))
    lines.append(f"discarded = {discarded}")
    return "\n".join(lines) + "\n"


def run_pipeline(cfg: PipelineConfig, flat: flatsurf.FlatSurface | None = None) -> Bundle:
    """Run every stage, write the report bundle under ``cfg.out`` and return it.

    Files are flushed as each stage finishes, so a stage error leaves the
    earlier outputs in place; the error itself becomes a check row.
    """
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, flat)
    files: dict[str, str] = {}

    def emit(name: str, producer: Callable[[], str]) -> None:
        try:
            text = producer()
        except (QFLabError, ArithmeticError, ValueError):
            return
        files[name] = text
        (out / name).write_text(text, encoding="utf-8", newline="\n")

    emit("config.txt", lambda: config_summary(cfg))
    emit("surface.txt", lambda: curves.format_surface(ctx.source))
    emit("flat_surface.txt", lambda: flatsurf.format_flat_surface(ctx.flat))
    emit("surface.svg", lambda: svg.export_svg(ctx.flat, "surface"))
    emit("uniformization.txt", lambda: _uniformization_stats(ctx))
    emit("metric.txt", lambda: mesh.format_metric(ctx.hyp))
    emit("first_order.tsv", lambda: ctx.report.to_table())
    emit("foliation.tsv", lambda: _foliation_table(ctx))
    emit("halfpipe.txt", lambda: _halfpipe_text(ctx))
    rows = verify_suite(cfg, context=ctx)
    emit("checks.tsv", lambda: format_table(rows))
    return Bundle(out, files, rows)


def config_summary(cfg: PipelineConfig) -> str:
    d = dataclasses.asdict(cfg)
    d["surface"] = "builtin:l_shape" if cfg.surface is None else str(cfg.surface)
    del d["out"]  # keeps bundles comparable across output directories
    d["s_grid"] = cfg.s_grid
    return "\n".join(f"{k} = {v}" for k, v in d.items()) + "\n"
