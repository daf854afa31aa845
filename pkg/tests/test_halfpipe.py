import itertools
from pathlib import Path
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import H_TARGET, S_GRID
from qflab import curves, flatsurf, halfpipe as hp, mesh
from qflab.almostfuchsian import AlmostFuchsianPath, qd_l1, real_part_matrix
from qflab.errors import FormatError, NotLorentz, NotThroughFuchsian

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _rng(seed):
    return np.random.default_rng(seed)


def test_identity_jet_limit():
    g = hp.rescale_limit(hp.HPJet(np.eye(3)))
    assert np.array_equal(g.matrix, np.eye(4))


def test_translation_example():
    j = hp.HPJet(np.eye(3), v1=[1.0, 0.0, 0.0])
    expected = np.eye(4)
    expected[3, 0] = 1.0
    assert np.array_equal(hp.rescale_limit(j).matrix, expected)
    assert hp.conjugation_error(j, 1e-3) == 0.0


def test_random_jets_converge(rng):
    for _ in range(20):
        j = hp.random_jet(rng)
        rep = hp.rescale_report(j)
        assert rep.errors[1e-3] <= 1e-2
        assert rep.passed
        assert set(rep.discarded) == {"A1", "w0", "w1", "a1"}


def test_limit_ignores_discarded_entries(rng):
    j = hp.random_jet(rng)
    k = hp.HPJet(j.A0, -j.A1 * 3, j.v1, w0=[5, 5, 5], w1=[1, 2, 3], a0=j.a0, a1=7.0)
    assert np.array_equal(hp.rescale_limit(j).matrix, hp.rescale_limit(k).matrix)


@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_limit_linear_in_v1(seed, a, b):
    rng = _rng(seed)
    A0 = hp.random_lorentz(rng)
    x, y = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    lim = lambda v: hp.rescale_limit(hp.HPJet(A0, v1=v)).v
    np.testing.assert_allclose(lim(a * x + b * y), a * lim(x) + b * lim(y), rtol=0, atol=1e-12)


@given(seeds)
def test_inverse(seed):
    a = hp.random_element(_rng(seed))
    for prod in (a @ a.inverse(), a.inverse() @ a):
        assert np.max(np.abs(prod.matrix - np.eye(4))) <= 1e-12


@given(seeds)
def test_translations_add(seed):
    rng = _rng(seed)
    va, vb = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3)
    ab = hp.HPElement(np.eye(3), va) @ hp.HPElement(np.eye(3), vb)
    assert np.array_equal(ab.v, va + vb)


@given(seeds)
@settings(max_examples=50)
def test_associative(seed):
    rng = _rng(seed)
    a, b, c = (hp.random_element(rng) for _ in range(3))
    assert np.max(np.abs(((a @ b) @ c).matrix - (a @ (b @ c)).matrix)) <= 1e-12


@given(seeds)
def test_compose_matches_matrix_product(seed):
    rng = _rng(seed)
    a, b = hp.random_element(rng), hp.random_element(rng)
    np.testing.assert_allclose((a @ b).matrix, a.matrix @ b.matrix, rtol=0, atol=1e-12)


def test_group_closure(rng):
    elems = [hp.random_element(rng) for _ in range(20)]
    worst = 0.0
    for a, b in itertools.islice(itertools.product(elems, repeat=2), 100):
        worst = max(worst, (a @ b).gram_residual, a.inverse().gram_residual)
    assert worst <= 1e-8


def test_not_lorentz():
    with pytest.raises(NotLorentz):
        hp.HPElement(np.diag([1.0, 2.0, 1.0]), np.zeros(3))
    with pytest.raises(NotLorentz):
        hp.HPJet(np.eye(3), a0=0.5)
    with pytest.raises(NotLorentz):
        hp.HPElement(np.eye(3), np.zeros(3), 0)


def test_not_through_fuchsian():
    with pytest.raises(NotThroughFuchsian):
        hp.HPJet(np.eye(3), v0=[0.0, 1e-9, 0.0])


def test_x_t_membership():
    x = [Fraction(2), Fraction(1), Fraction(1), Fraction(1, 3)]
    for t in (Fraction(1), Fraction(1, 2), Fraction(1, 10), Fraction(1, 1000)):
        # g_t x lies in X_t iff the half-pipe part is timelike: -4 + 1 + 1 < 0
        y = hp.apply_g_t([xi * t for xi in x[:3]] + [x[3] * t], t)
        assert hp.quadratic_form(y, t) == t * t * (-4 + 1 + 1) + t * t * x[3] ** 2
        assert hp.in_X(y, t)
    assert hp.quadratic_form(x, 0) == -2
    assert not hp.in_X([0, 1, 0, 0], Fraction(1, 2))


def test_jet_round_trip(rng):
    j = hp.random_jet(rng)
    k = hp.parse_jet(hp.format_jet(j))
    for name in ("A0", "A1", "v1", "w0", "w1"):
        assert np.array_equal(getattr(j, name), getattr(k, name))
    assert (j.a0, j.a1) == (k.a0, k.a1)


def test_jet_file():
    text = (Path(__file__).parents[1] / "surfaces" / "l_shape.jet").read_text()
    assert hp.rescale_report(hp.parse_jet(text)).passed


@pytest.mark.parametrize(
    "text",
    ["v1\n1 0 0\n", "A0\n1 0 0\n0 1 0\n", "A0\n1 0 0 0 1 0 0 0 1\nA0\n1 0 0 0 1 0 0 0 1\n", "B7\n1\n", "1 2 3\n", "A0\n1 0 x 0 1 0 0 0 1\n"],
)
def test_jet_format_errors(text):
    with pytest.raises(FormatError):
        hp.parse_jet(text)


def test_format_element_zero_block():
    j = hp.HPJet(np.eye(3), v1=[1.0, 0.0, 0.0])
    lines = hp.format_element(hp.rescale_limit(j)).splitlines()
    assert [ln.split()[-1] for ln in lines] == ["0", "0", "0", "1"]
    assert lines[-1].split()[:3] == ["1", "0", "0"]


# ---------------------------------------------------------------- limits of the path


def test_hp_schwarzian(l_path):
    res = hp.hp_schwarzian(l_path, S_GRID)
    assert res.consistent
    assert res.error_plus <= 0.05 and res.error_minus <= 0.05
    assert res.antisymmetry <= 0.05
    assert res.cores_match


def test_core_intersections_fail_without_source(l_flat):
    bare = flatsurf.rectangle_surface(l_flat.widths, l_flat.heights, l_flat.gluings)
    assert not hp.core_intersections_match(bare)


def _path(surface, h):
    f = flatsurf.realize(surface)
    m = mesh.triangulate(f, h)
    return AlmostFuchsianPath(m, mesh.uniformize(m), mesh.qd_field(f, m))


def test_hp_schwarzian_scales_with_weights(l_path):
    big = _path(curves.scale_weights(curves.l_shape(), 2.0), 2 * H_TARGET)
    a = hp.hp_schwarzian(l_path, S_GRID)
    b = hp.hp_schwarzian(big, S_GRID)
    ratio = qd_l1(b.sigma_plus, big.mesh.face_area, big.face_mask) / qd_l1(a.sigma_plus, l_path.mesh.face_area, l_path.face_mask)
    assert ratio == pytest.approx(4.0, rel=0.05)
    assert b.consistent


def test_hp_schwarzian_relabel_invariant(l_path):
    other = _path(curves.relabel(curves.l_shape(), [2, 0, 1]), H_TARGET)
    a, b = hp.hp_schwarzian(l_path, S_GRID), hp.hp_schwarzian(other, S_GRID)
    assert abs(a.error_plus - b.error_plus) <= 1e-9
    assert abs(a.error_minus - b.error_minus) <= 1e-9


def test_hp_minimal_surface(l_path):
    res = hp.hp_minimal_surface(l_path, S_GRID)
    assert np.array_equal(res.II_hp, real_part_matrix(l_path.q))
    assert np.array_equal(l_path.immersion(S_GRID[-1]).II, S_GRID[-1] * res.II_hp)
    assert 1.9 <= res.metric_slope <= 2.1
    assert res.shape_rate_error <= 1e-2
