import math
import warnings

import numpy as np
import pytest

from conftest import S_GRID
from qflab import almostfuchsian as af
from qflab import curves, flatsurf, mesh
from qflab.errors import DegenerateEplusB, PrincipalCurvatureExceedsOne, QuadratureFailure, UnsupportedChart, UnsupportedCurve


def test_real_part_matrix_and_det():
    f = np.array([1.0, 2 - 1j, 0.5j])
    R = af.real_part_matrix(f)
    assert np.all(R[:, 0, 0] + R[:, 1, 1] == 0)
    rho = np.array([1.0, 2.0, 0.25])
    c = af.sym(rho, 0 * rho, rho)
    # det of c^-1 Re q equals -|f|^2 / rho^2
    assert af.det2(af.inv2(c) @ R) == pytest.approx(af.det_c_real_q(f, rho), rel=1e-14)
    # the dictionary between traceless tensors and quadratic differentials
    assert np.allclose(af.traceless_to_qd(R), f)


def test_gauss_solve_at_zero(l_path):
    d = l_path.immersion(0.0)
    assert np.all(d.u.u == 0.0)
    assert np.all(d.B == 0) and np.all(d.III == 0)
    assert d.lam_range == (0.0, 0.0)


def test_gauss_solve_grid(l_path):
    sup = []
    for s in S_GRID:
        d = l_path.immersion(s)
        assert d.gauss_residual <= 1e-10
        assert d.u.u.max() <= 0.0
        sup.append(np.abs(d.u.u).max())
    assert 1.9 <= af.loglog_slope(S_GRID, sup) <= 2.1


def test_immersion_identities(l_path):
    s = S_GRID[0]
    d = l_path.immersion(s)
    assert np.abs(d.trace_II).max() <= 1e-12
    expected = -(s**2) * np.abs(l_path.q) ** 2 / d.mu**2
    assert d.det_B == pytest.approx(expected, rel=1e-12)
    assert np.all(d.det_B <= 0)
    lam = np.sqrt(-d.det_B)
    assert lam == pytest.approx(d.lam, rel=1e-12)
    # III = I(B., B.)
    assert np.allclose(d.III, np.swapaxes(d.B, -1, -2) @ d.I @ d.B, rtol=0, atol=1e-18)
    assert d.almost_fuchsian
    assert d.codazzi_residual == 0.0


def test_eigenvalues_odd_in_s(l_path):
    s = S_GRID[1]
    assert abs(l_path.immersion(s).lam.max() - l_path.immersion(-s).lam.max()) <= 1e-10
    assert np.array_equal(l_path.immersion(s).u.u, l_path.immersion(-s).u.u)


def _continued(bg, s_end):
    u = None
    for s in np.linspace(1.0, s_end, 8):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", PrincipalCurvatureExceedsOne)
            u = af.gauss_solve(bg, s, u0=None if u is None else u.u)
    return u


def test_principal_curvature_warning(l_path):
    u = _continued(l_path.bg, 1.6)
    with pytest.warns(PrincipalCurvatureExceedsOne):
        u = af.gauss_solve(l_path.bg, 1.7, u0=u.u)
    assert af.principal_curvature(l_path.bg, u.u, 1.7).max() > 1


def test_forms_at_infinity_at_zero(l_path):
    d = l_path.immersion(0.0)
    for end in af.ENDS:
        inf = af.forms_at_infinity(d, end)
        assert np.array_equal(inf.Istar, d.I / 2)
        assert np.array_equal(inf.IIstar, d.I / 2)
        assert np.all(inf.IIstar0 == 0)
        assert np.all(inf.Kstar == -2.0)
        assert np.all(inf.Kstar_alt == -1.0)


@pytest.mark.parametrize("end", af.ENDS)
def test_forms_at_infinity_invariants(l_path, end):
    for s in S_GRID:
        d = l_path.immersion(s)
        inf = l_path.infinity(s, end)
        eye = np.broadcast_to(np.eye(2), d.B.shape)
        assert np.abs(af.det2(eye + end * d.B) - (1 + d.det_B)).max() <= 1e-12
        assert inf.reconstruction_error() <= 1e-10
        assert np.abs(inf.Hstar - inf.Hstar_formula).max() <= 1e-8
        assert inf.Kstar == pytest.approx(2 * (-1 + d.det_B) / (1 + d.det_B), rel=1e-14)


def test_kstar_quadratic(l_path):
    k0 = l_path.infinity(0.0, 1).Kstar
    dev = [np.abs(l_path.infinity(s, 1).Kstar - k0).max() for s in S_GRID]
    assert 1.9 <= af.loglog_slope(S_GRID, dev) <= 2.1


def test_degenerate_e_plus_b(l_path):
    d = l_path.immersion(S_GRID[0])
    bad = af.ImmersionData(**{**d.__dict__, "B": np.broadcast_to(np.diag([-2.0, 0.0]), d.B.shape)})
    with pytest.raises(DegenerateEplusB):
        af.forms_at_infinity(bad, 1)
    with pytest.raises(ValueError):
        af.forms_at_infinity(d, 0)


def test_equidistant_forms(l_path):
    d = l_path.immersion(S_GRID[0])
    I0, II0, B0 = af.equidistant_forms(d, 0.0)
    assert np.array_equal(I0, d.I)
    assert np.allclose(II0, d.II, rtol=1e-14, atol=0)
    assert np.allclose(B0, d.B, rtol=0, atol=1e-18)
    # II_r = dI_r/dr / 2 by central differences
    r, h = 0.7, 1e-5
    _, IIr, _ = af.equidistant_forms(d, r)
    dI = (af.equidistant_forms(d, r + h)[0] - af.equidistant_forms(d, r - h)[0]) / (2 * h)
    assert np.max(np.abs(0.5 * dI - IIr)) <= 1e-6 * np.max(np.abs(IIr))
    # 2 e^{-2r} I_r -> I*
    inf = af.forms_at_infinity(d, 1)
    I5 = 2 * math.exp(-10) * af.equidistant_forms(d, 5.0)[0]
    assert np.max(np.abs(I5 - inf.Istar) / np.abs(inf.Istar).max()) <= math.exp(-10) * 10


def test_equidistant_eigenvalues_flatten(l_path):
    d = l_path.immersion(S_GRID[0])
    lam = d.lam.max()
    face = int(np.argmax(d.lam))
    prev = 0.0
    for r in (0.5, 1.0, 2.0, 4.0, 8.0):
        B = af.equidistant_forms(d, r)[2][face]
        top = np.linalg.eigvals(B).real.max()
        oracle = (math.sinh(r) + lam * math.cosh(r)) / (math.cosh(r) + lam * math.sinh(r))
        assert top == pytest.approx(oracle, rel=1e-9)
        assert prev < top < 1
        prev = top


def test_equidistant_guard(l_path):
    d = af.immersion_data(l_path.bg, 1.7, _continued(l_path.bg, 1.7))
    with pytest.raises(PrincipalCurvatureExceedsOne):
        af.equidistant_forms(d, 1.0)


def test_sigma_vanishes_at_zero(l_path):
    for end in af.ENDS:
        assert np.all(l_path.sigma(0.0, end) == 0)


@pytest.mark.parametrize("end", af.ENDS)
def test_schwarzian_first_order(l_path, end):
    assert l_path.schwarzian_error(1e-2, end) <= 0.05
    errs = [l_path.schwarzian_error(s, end) for s in S_GRID]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_schwarzian_needs_translation_charts():
    from test_flatsurf import pillowcase

    p = pillowcase()
    m = mesh.triangulate(p, 0.25)
    # the pillowcase is a sphere; a flat background stands in for the hyperbolic one
    bg = af.Background.build(m, mesh.MetricField(np.zeros(m.n_vertices)), mesh.qd_field(p, m))
    d = af.immersion_data(bg, 0.0, mesh.MetricField(np.zeros(m.n_vertices), "hyperbolic", np.zeros(m.n_vertices)))
    with pytest.raises(UnsupportedChart):
        af.schwarzian_at_infinity(af.forms_at_infinity(d, 1))


def test_first_order_report(l_path):
    rep = af.first_order_report(l_path, S_GRID)
    assert rep.passed
    for end in af.ENDS:
        for name in ("dIstar/ds", "dIIstar0/ds", "dsigma/ds"):
            assert rep.rows_for(name, end)[-1].error <= 0.05
        assert 1.8 <= rep.fit("Kstar_increment", end).slope <= 2.2
    table = rep.to_table()
    header, *body = table.splitlines()
    assert header.split("\t") == ["quantity", "s", "error_L1", "slope", "status"]
    assert len(body) == len(rep.rows)


def test_first_order_report_needs_grid(l_path):
    with pytest.raises(ValueError):
        af.first_order_report(l_path, [1e-3])


def test_foliation_check(l_surface, l_path):
    cores = curves.core_curves(l_surface).cores()
    rep = af.foliation_first_order_check(l_path, (0.05, 0.2, 0.1), cores)
    assert rep.t_grid == (0.2, 0.1, 0.05)
    for core in cores:
        for end in af.ENDS:
            assert rep.decreasing(core, end)
    assert all(v > 0 for v in rep.filling_echo().values())
    assert rep.passed
    qn = math.sqrt(af.qd_l1(l_path.q, l_path.mesh.face_area))
    for row in rep.rows:
        if row.core.kind == "horizontal":
            assert row.expected_plus == 0
            assert row.measured_plus <= 0.1 * row.t * qn


def test_transverse_measure_of_q_is_exact(l_surface, l_flat, l_path):
    for core in curves.core_curves(l_surface).cores():
        for which, phi in (("horizontal", l_path.q), ("vertical", -l_path.q)):
            assert af.transverse_measure(l_path.mesh, phi, core) == pytest.approx(
                flatsurf.intersection_number(l_flat, core, which), rel=1e-14
            )


def test_transverse_measure_errors(l_path):
    with pytest.raises(UnsupportedCurve):
        af.transverse_measure(l_path.mesh, l_path.q, curves.CoreCurve("diagonal", 0, (0,)))
    core = curves.core_curves(curves.l_shape()).cores()[0]
    with pytest.raises(QuadratureFailure):
        af.transverse_measure(l_path.mesh, l_path.q, core, eps=0.6)


def test_codazzi_jump_on_rotated_charts():
    from test_flatsurf import pillowcase

    p = pillowcase()
    m = mesh.triangulate(p, 0.25)
    bg = af.Background.build(m, mesh.MetricField(np.zeros(m.n_vertices)), mesh.qd_field(p, m))
    assert af.codazzi_jump(bg, 0.3) <= 1e-12
