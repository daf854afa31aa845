import dataclasses
import math

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from qflab import curves, flatsurf, mesh
from qflab.errors import DegenerateTriangle, TargetTooCoarse


def torus(w=1.0, h=1.0):
    return flatsurf.realize(curves.build_surface((0,), (0,), [h], [w], min_genus=1))


def test_unit_square_split():
    m = mesh.triangulate(torus(), 0.5)
    assert m.n_faces == 8
    assert m.euler_characteristic == 0


def test_target_too_coarse(l_flat):
    with pytest.raises(TargetTooCoarse):
        mesh.triangulate(l_flat, 0.6)
    with pytest.raises(TargetTooCoarse):
        mesh.triangulate(l_flat, 0.0)


@pytest.mark.parametrize(
    "surface",
    [curves.l_shape(), curves.build_surface((1, 0, 3, 2), (2, 1, 0, 3)), curves.l_shape([0.5, 1.5], [1.0, 0.75])],
)
def test_topology_and_angles(surface):
    f = flatsurf.realize(surface)
    m = mesh.triangulate(f, 0.125)
    g, cones = curves.genus_and_cones(surface)
    assert m.euler_characteristic == 2 - 2 * g
    # closed: every edge has two faces, each face three distinct edges
    counts = np.bincount(m.face_edges.ravel(), minlength=m.n_edges)
    assert np.all(counts == 2)
    assert np.all(m.face_area > 0)
    assert sorted(m.vertex_angle[m.cone]) == pytest.approx(cones, abs=1e-9)
    assert math.fsum(m.kappa) == pytest.approx(2 * math.pi * (2 - 2 * g), abs=1e-12)


def test_refinement_quadruples_faces(l_flat):
    a = mesh.triangulate(l_flat, 0.1).n_faces
    b = mesh.triangulate(l_flat, 0.05).n_faces
    assert 3.5 <= b / a <= 4.5


def test_laplacian_properties(l_mesh, l_hyp):
    lap = mesh.laplacian(l_mesh, l_hyp)
    W = lap.stiffness
    assert abs(W - W.T).max() == 0
    assert np.max(np.abs(W @ np.ones(l_mesh.n_vertices))) <= 1e-12
    assert np.max(np.abs(lap.apply(np.full(l_mesh.n_vertices, 3.25)))) <= 1e-12
    # positive semidefinite: the smallest eigenvalue is the constant mode
    lo = sla.eigsh(W, k=2, sigma=-1e-2, which="LM")[0]
    assert lo.min() > -1e-10


def test_degenerate_triangle(l_mesh):
    xy = l_mesh.face_xy.copy()
    xy[0, 2] = xy[0, 1]
    with pytest.raises(DegenerateTriangle):
        mesh.cotan_stiffness(dataclasses.replace(l_mesh, face_xy=xy))


def test_torus_spectrum():
    """Lowest modes of the unit flat torus: 4 pi^2 (k^2 + l^2)."""
    m = mesh.triangulate(torus(), 1 / 32)
    W = mesh.cotan_stiffness(m)
    vals = np.sort(sla.eigsh(W, k=14, M=sp.diags(m.vertex_mass), sigma=-1e-3, which="LM")[0])
    assert abs(vals[0]) < 1e-8
    levels = [vals[1:5], vals[5:9], vals[9:13]]  # multiplicities 4, 4, 4
    for level, n in zip(levels, (1, 2, 4)):
        exact = 4 * math.pi**2 * n
        assert np.max(np.abs(level - exact)) / exact <= 0.02


def test_uniformize_l_shape(l_mesh, l_hyp):
    assert l_hyp.info.residual <= 1e-10
    assert l_hyp.info.iterations <= 30
    assert mesh.hyperbolic_area(l_mesh, l_hyp) == pytest.approx(4 * math.pi, rel=0.01)
    k = mesh.discrete_curvature(l_mesh, l_hyp).curvature[~l_mesh.near_cone()]
    assert np.mean((k >= -1.05) & (k <= -0.95)) >= 0.95


@pytest.mark.parametrize("s", [-1.0, 0.0, 1.0])
def test_uniformize_after_flow(l_flat, s):
    m = mesh.triangulate(flatsurf.teich_flow(l_flat, s), 0.05)
    hyp = mesh.uniformize(m)
    assert mesh.hyperbolic_area(m, hyp) == pytest.approx(4 * math.pi, rel=0.01)


def test_uniformize_rejects_torus():
    with pytest.raises(ValueError):
        mesh.uniformize(mesh.triangulate(torus(), 0.25))


def test_gauss_bonnet_under_conformal_change(l_mesh, rng):
    chi = l_mesh.euler_characteristic
    for u in (np.zeros(l_mesh.n_vertices), 0.2 * rng.standard_normal(l_mesh.n_vertices)):
        total = mesh.discrete_curvature(l_mesh, u).total_defect
        assert total == pytest.approx(2 * math.pi * chi, abs=1e-9)


def test_relabel_invariance(l_surface, l_mesh, l_hyp):
    sigma = (2, 0, 1)
    m2 = mesh.triangulate(flatsurf.realize(curves.relabel(l_surface, sigma)), 0.05)
    u2 = mesh.uniformize(m2)
    # match faces through their (rectangle, cell) address
    faces = {(sigma[r], i, j, up): fi for (r, i, j, up), fi in l_mesh.cell_face.items()}
    for key, fi in m2.cell_face.items():
        a = np.sort(l_hyp.total[l_mesh.faces[faces[key]]])
        b = np.sort(u2.total[m2.faces[fi]])
        assert np.max(np.abs(a - b)) <= 1e-12


def test_curvature_converges(l_flat):
    medians = []
    for h in (0.1, 0.05):
        m = mesh.triangulate(l_flat, h)
        k = mesh.discrete_curvature(m, mesh.uniformize(m)).curvature[~m.near_cone()]
        medians.append(float(np.median(np.abs(k + 1.0))))
    assert medians[0] / medians[1] >= 1.7


def test_qd_field(l_flat, l_mesh):
    q = mesh.qd_field(l_flat, l_mesh)
    assert np.all(q == 1.0)
    same = l_mesh.face_rect[l_mesh.edge_faces[:, 0]] == l_mesh.face_rect[l_mesh.edge_faces[:, 1]]
    a, b = l_mesh.edge_faces[same].T
    assert np.all(q[a] == q[b])
    cone = int(np.flatnonzero(l_mesh.cone)[0])
    hol = mesh.phase_holonomy(l_mesh, q, cone)
    assert abs(hol / (2 * math.pi) - round(hol / (2 * math.pi))) < 1e-12


def test_qd_field_on_half_turn_surface():
    from test_flatsurf import pillowcase

    p = pillowcase()
    m = mesh.triangulate(p, 0.25)
    q = mesh.qd_field(p, m)
    a, b = m.edge_faces.T
    # dz^2 is invariant under the half-turn, so the transported phases agree
    assert np.max(np.abs(q[a] - q[b] * np.exp(2j * m.edge_rotation))) <= 1e-12
    for v in np.flatnonzero(m.cone):
        hol = mesh.phase_holonomy(m, q, int(v))
        assert abs(hol / (2 * math.pi) - round(hol / (2 * math.pi))) < 1e-12


def test_metric_round_trip(l_hyp):
    text = mesh.format_metric(l_hyp)
    back = mesh.parse_metric(text)
    assert np.array_equal(back.u, l_hyp.u)


def test_mesh_export_lists_charts(l_mesh):
    text = mesh.format_mesh(l_mesh)
    lines = text.splitlines()
    assert sum(line.startswith("v ") for line in lines) == l_mesh.n_vertices
    assert sum(line.startswith("f ") for line in lines) == l_mesh.n_faces


def test_metric_field_validation():
    with pytest.raises(ValueError):
        mesh.MetricField(np.array([0.0, np.inf]))
    with pytest.raises(ValueError):
        mesh.MetricField(np.zeros(2), "hyperbolic")
