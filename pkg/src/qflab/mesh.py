"""Triangle meshes of flat surfaces, the cotangent Laplacian, and discrete
uniformisation to the hyperbolic metric of the conformal class.

Each rectangle is cut into an ``nx x ny`` grid of cells, each cell split by
its lower-left to upper-right diagonal.  Glued sides carry the same number of
cells, so the mesh is conforming across gluings.  Nodes are identified on a
doubled grid, which also identifies edge midpoints: that gives every edge a
unique id even when two distinct edges join the same pair of vertices.

The conformal factor ``u`` lives on vertices.  Curvature of the flat metric is
a Dirac load ``2 pi - theta`` at each cone; the hyperbolic metric
``e^{2u} |dz|^2`` solves the lumped equation ``W u + kappa + m e^{2u} = 0``,
with ``W`` the cotangent stiffness matrix and ``m`` the barycentric areas.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from .errors import DegenerateTriangle, FormatError, NewtonDiverged, NonConvergedTolerance, TargetTooCoarse
from .flatsurf import SIDES, FlatSurface

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


@dataclass(eq=False)
class TriangleMesh:
    flat: FlatSurface
    h_target: float
    grid: tuple[tuple[int, int], ...]
    n_vertices: int
    faces: np.ndarray  # (F, 3) vertex ids, counter-clockwise
    face_rect: np.ndarray  # (F,)
    face_cell: np.ndarray  # (F, 3): ix, iy, upper (0 = below the diagonal)
    face_xy: np.ndarray  # (F, 3, 2) corner coordinates in the rectangle chart
    frame: np.ndarray  # (F,) chart rotation carried for q transport
    face_edges: np.ndarray  # (F, 3) edge id opposite each corner
    edge_faces: np.ndarray  # (E, 2)
    edge_rotation: np.ndarray  # (E,) 0 or pi across the edge
    edge_vertices: np.ndarray  # (E, 2)
    vertex_rect: np.ndarray
    vertex_xy: np.ndarray
    vertex_angle: np.ndarray  # total flat angle
    kappa: np.ndarray  # flat angle defect 2 pi - theta, exact multiples of pi/2
    lengths: np.ndarray = field(repr=False)  # (F, 3) length of the edge opposite corner k
    face_area: np.ndarray = field(repr=False)
    cell_face: dict = field(repr=False, default_factory=dict)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edge_faces)

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    @property
    def genus(self) -> int:
        return (2 - self.euler_characteristic) // 2

    @property
    def cone(self) -> np.ndarray:
        return np.abs(self.vertex_angle - TWO_PI) > 1e-9

    @property
    def vertex_mass(self) -> np.ndarray:
        return np.bincount(self.faces.ravel(), np.repeat(self.face_area / 3.0, 3), self.n_vertices)

    @property
    def mesh_size(self) -> float:
        return float(self.lengths.max())

    def cone_distance(self) -> np.ndarray:
        """Flat graph distance from each vertex to the nearest cone vertex."""
        cones = np.flatnonzero(self.cone)
        if len(cones) == 0:
            return np.full(self.n_vertices, np.inf)
        best: dict[tuple[int, int], float] = {}
        for f in range(self.n_faces):
            for k in range(3):
                a, b = self.faces[f, (k + 1) % 3], self.faces[f, (k + 2) % 3]
                key = (min(a, b), max(a, b))
                length = self.lengths[f, k]
                if a != b and length < best.get(key, np.inf):
                    best[key] = length
        keys = np.array(sorted(best), dtype=int).reshape(-1, 2)
        vals = np.array([best[tuple(k)] for k in keys])
        g = sp.coo_matrix((vals, (keys[:, 0], keys[:, 1])), shape=(self.n_vertices,) * 2).tocsr()
        dist = csgraph.dijkstra(g, directed=False, indices=cones, min_only=True)
        return np.asarray(dist)

    def near_cone(self, radius_factor: float = 3.0) -> np.ndarray:
        """Vertices inside the singular layer: distance <= radius_factor * h_target."""
        return self.cone_distance() <= radius_factor * self.h_target + 1e-12

    def faces_near_cone(self, radius_factor: float = 3.0) -> np.ndarray:
        return self.near_cone(radius_factor)[self.faces].any(axis=1)


def _side_nodes(side: str, nx: int, ny: int) -> list[tuple[int, int]]:
    """Doubled-grid nodes along a side in counter-clockwise order."""
    X, Y = 2 * nx, 2 * ny
    if side == "bottom":
        return [(i, 0) for i in range(X + 1)]
    if side == "right":
        return [(X, j) for j in range(Y + 1)]
    if side == "top":
        return [(i, Y) for i in range(X, -1, -1)]
    return [(0, j) for j in range(Y, -1, -1)]


def triangulate(f: FlatSurface, h_target: float) -> TriangleMesh:
    """Structured conforming triangulation with cells of side at most ``h_target``."""
    min_side = min(min(f.widths), min(f.heights))
    if not h_target > 0 or h_target > min_side / 2 * (1 + 1e-12):
        raise TargetTooCoarse(f"h_target={h_target} must lie in (0, {min_side / 2}]")
    grid = []
    for w, h in zip(f.widths, f.heights):
        grid.append((max(1, math.ceil(w / h_target - 1e-9)), max(1, math.ceil(h / h_target - 1e-9))))
    offsets = [0]
    for nx, ny in grid:
        offsets.append(offsets[-1] + (2 * nx + 1) * (2 * ny + 1))
    total = offsets[-1]

    def node(r, X, Y):
        nx, ny = grid[r]
        return offsets[r] + Y * (2 * nx + 1) + X

    parent = np.arange(total)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    mid_rotation: dict[int, float] = {}
    for g in f.gluings:
        na = _side_nodes(g.side_a, *grid[g.a])
        nb = _side_nodes(g.side_b, *grid[g.b])
        if len(na) != len(nb):
            raise FormatError(f"glued sides subdivided differently: {g}")
        m = len(na) - 1
        for k, (X, Y) in enumerate(na):
            a = node(g.a, X, Y)
            b = node(g.b, *nb[m - k])
            if k % 2 == 1:
                mid_rotation[a] = mid_rotation[b] = g.rotation
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(total)])

    # vertices = classes of even/even nodes, ordered by representative
    vert_id: dict[int, int] = {}
    vertex_rect, vertex_xy = [], []
    corner_count: dict[int, int] = {}
    for r, (nx, ny) in enumerate(grid):
        sx, sy = f.widths[r] / nx, f.heights[r] / ny
        for j in range(ny + 1):
            for i in range(nx + 1):
                root = roots[node(r, 2 * i, 2 * j)]
                if root not in vert_id:
                    vert_id[root] = len(vert_id)
                    vertex_rect.append(r)
                    vertex_xy.append((i * sx, j * sy))
                if i in (0, nx) and j in (0, ny):
                    corner_count[vert_id[root]] = corner_count.get(vert_id[root], 0) + 1
    n_vertices = len(vert_id)

    faces, face_rect, face_cell, face_xy, face_mid = [], [], [], [], []
    cell_face = {}
    for r, (nx, ny) in enumerate(grid):
        sx, sy = f.widths[r] / nx, f.heights[r] / ny
        for j in range(ny):
            for i in range(nx):
                v = {
                    (a, b): vert_id[roots[node(r, 2 * (i + a), 2 * (j + b))]]
                    for a in (0, 1)
                    for b in (0, 1)
                }
                p = {(a, b): ((i + a) * sx, (j + b) * sy) for a in (0, 1) for b in (0, 1)}
                # midpoints of the edges opposite each corner, on the doubled grid
                X, Y = 2 * i, 2 * j
                diag = roots[node(r, X + 1, Y + 1)]
                bottom, right = roots[node(r, X + 1, Y)], roots[node(r, X + 2, Y + 1)]
                top, left = roots[node(r, X + 1, Y + 2)], roots[node(r, X, Y + 1)]
                # lower-right triangle: (0,0) (1,0) (1,1)
                cell_face[(r, i, j, 0)] = len(faces)
                faces.append((v[0, 0], v[1, 0], v[1, 1]))
                face_xy.append((p[0, 0], p[1, 0], p[1, 1]))
                face_mid.append((right, diag, bottom))
                face_rect.append(r)
                face_cell.append((i, j, 0))
                # upper-left triangle: (0,0) (1,1) (0,1)
                cell_face[(r, i, j, 1)] = len(faces)
                faces.append((v[0, 0], v[1, 1], v[0, 1]))
                face_xy.append((p[0, 0], p[1, 1], p[0, 1]))
                face_mid.append((top, left, diag))
                face_rect.append(r)
                face_cell.append((i, j, 1))
    faces = np.array(faces, dtype=np.int64)
    face_xy = np.array(face_xy, dtype=float)
    face_mid = np.array(face_mid, dtype=np.int64)

    edge_id: dict[int, int] = {}
    face_edges = np.empty_like(face_mid)
    incident: list[list[int]] = []
    for fi in range(len(faces)):
        for k in range(3):
            key = int(face_mid[fi, k])
            if key not in edge_id:
                edge_id[key] = len(edge_id)
                incident.append([])
            face_edges[fi, k] = edge_id[key]
            incident[edge_id[key]].append(fi)
    if any(len(x) != 2 for x in incident):
        raise FormatError("mesh is not closed: an edge is not shared by exactly two faces")
    edge_faces = np.array(incident, dtype=np.int64)
    edge_rotation = np.zeros(len(edge_id))
    for key, e in edge_id.items():
        edge_rotation[e] = mid_rotation.get(key, 0.0)
    edge_vertices = np.empty((len(edge_id), 2), dtype=np.int64)
    for fi in range(len(faces)):
        for k in range(3):
            edge_vertices[face_edges[fi, k]] = sorted((faces[fi, (k + 1) % 3], faces[fi, (k + 2) % 3]))

    lengths = np.stack(
        [np.linalg.norm(face_xy[:, (k + 2) % 3] - face_xy[:, (k + 1) % 3], axis=1) for k in range(3)], axis=1
    )
    e1 = face_xy[:, 1] - face_xy[:, 0]
    e2 = face_xy[:, 2] - face_xy[:, 0]
    face_area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    angles = corner_angles(lengths)
    vertex_angle = np.bincount(faces.ravel(), angles.ravel(), n_vertices)
    kappa = np.zeros(n_vertices)
    for v, count in corner_count.items():
        kappa[v] = TWO_PI - count * math.pi / 2
    # side points of a half-turn self-gluing sit at a pi cone
    for v in range(n_vertices):
        if v not in corner_count and abs(vertex_angle[v] - TWO_PI) > 1e-9:
            kappa[v] = TWO_PI - math.pi * round(vertex_angle[v] / math.pi)
    return TriangleMesh(
        flat=f,
        h_target=float(h_target),
        grid=tuple(grid),
        n_vertices=n_vertices,
        faces=faces,
        face_rect=np.array(face_rect, dtype=np.int64),
        face_cell=np.array(face_cell, dtype=np.int64),
        face_xy=face_xy,
        frame=np.zeros(len(faces)),
        face_edges=face_edges,
        edge_faces=edge_faces,
        edge_rotation=edge_rotation,
        edge_vertices=edge_vertices,
        vertex_rect=np.array(vertex_rect, dtype=np.int64),
        vertex_xy=np.array(vertex_xy, dtype=float),
        vertex_angle=vertex_angle,
        kappa=kappa,
        lengths=lengths,
        face_area=face_area,
        cell_face=cell_face,
    )


def corner_angles(lengths: np.ndarray) -> np.ndarray:
    """Interior angles from the three edge lengths (edge k opposite corner k)."""
    a, b, c = lengths[:, 0], lengths[:, 1], lengths[:, 2]
    cos = np.stack(
        [(b * b + c * c - a * a) / (2 * b * c), (a * a + c * c - b * b) / (2 * a * c), (a * a + b * b - c * c) / (2 * a * b)],
        axis=1,
    )
    return np.arccos(np.clip(cos, -1.0, 1.0))


def heron(lengths: np.ndarray) -> np.ndarray:
    a, b, c = np.sort(lengths, axis=1)[:, ::-1].T
    # Kahan's stable form, a >= b >= c
    prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(np.clip(prod, 0.0, None))


# ---------------------------------------------------------------- metric fields


@dataclass
class NewtonInfo:
    iterations: int
    residual: float
    trace: list = field(default_factory=list)


@dataclass
class MetricField:
    """Log conformal factor per vertex.

    ``background='flat'``: the metric is ``e^{2u} |dz|^2`` in rectangle charts.
    ``background='hyperbolic'``: the metric is ``e^{2u} c`` where ``c`` is the
    hyperbolic metric ``e^{2 base} |dz|^2``.
    """

    u: np.ndarray
    background: str = "flat"
    base: np.ndarray | None = None
    info: NewtonInfo | None = None

    def __post_init__(self):
        if self.background not in ("flat", "hyperbolic"):
            raise ValueError(f"unknown background {self.background!r}")
        if self.background == "hyperbolic" and self.base is None:
            raise ValueError("hyperbolic background needs the base conformal factor")
        if not np.all(np.isfinite(self.u)):
            raise ValueError("conformal factor is not finite")

    @property
    def total(self) -> np.ndarray:
        """Log factor relative to the flat chart metric."""
        return self.u if self.base is None else self.u + self.base


@dataclass
class DiscreteLaplacian:
    """``stiffness`` approximates ``-integral Delta`` over dual cells; it is
    conformally invariant, so only ``mass`` depends on the metric."""

    stiffness: sp.csr_matrix
    mass: np.ndarray

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Pointwise ``-Delta u`` (stiffness divided by the lumped mass)."""
        return (self.stiffness @ u) / self.mass


def cotan_stiffness(m: TriangleMesh) -> sp.csr_matrix:
    cots = []
    for k in range(3):
        u = m.face_xy[:, (k + 1) % 3] - m.face_xy[:, k]
        v = m.face_xy[:, (k + 2) % 3] - m.face_xy[:, k]
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            cots.append((u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1]) / cross)
    cots = np.stack(cots, axis=1)
    if not np.all(np.isfinite(cots)):
        raise DegenerateTriangle("non-finite cotangent weight")
    return assemble_stiffness(m, 0.5 * cots)


def assemble_stiffness(m: TriangleMesh, weights: np.ndarray) -> sp.csr_matrix:
    """Symmetric stiffness from per-face edge weights ``weights[f, k]`` on the
    edge opposite corner ``k``; summation order is fixed by face order."""
    i = m.faces[:, [1, 2, 0]].ravel()
    j = m.faces[:, [2, 0, 1]].ravel()
    w = weights.ravel()
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([j, i, i, j])
    vals = np.concatenate([-w, -w, w, w])
    n = m.n_vertices
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def laplacian(m: TriangleMesh, metric: MetricField | None = None) -> DiscreteLaplacian:
    W = cotan_stiffness(m)
    mass = m.vertex_mass
    if metric is not None:
        mass = mass * np.exp(2.0 * metric.total)
    return DiscreteLaplacian(W, mass)


def newton_solve(residual, jacobian, u0, *, tol=1e-10, max_iter=30, max_halvings=60, stage="newton"):
    """Damped Newton: halve the step until the residual sup-norm decreases."""
    u = np.array(u0, dtype=float)
    r = residual(u)
    norm = float(np.max(np.abs(r)))
    trace = [(0, norm, 1.0)]
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise NonConvergedTolerance(f"{stage}: residual {norm:.3e} after {it} iterations", trace)
        it += 1
        step = -spsolve(jacobian(u).tocsc(), r)
        t = 1.0
        for _ in range(max_halvings + 1):
            trial = u + t * step
            r_trial = residual(trial)
            n_trial = float(np.max(np.abs(r_trial)))
            if np.isfinite(n_trial) and n_trial < norm:
                break
            t *= 0.5
        else:
            raise NewtonDiverged(f"{stage}: no decrease after {max_halvings} halvings", trace)
        u, r, norm = trial, r_trial, n_trial
        trace.append((it, norm, t))
        log.debug("%s iteration %d: residual %.3e (step %.3g)", stage, it, norm, t)
    return u, NewtonInfo(it, norm, trace)


def uniformize(m: TriangleMesh, *, tol: float = 1e-10, max_iter: int = 30) -> MetricField:
    """Hyperbolic metric ``e^{2u} |dz|^2`` in the conformal class of the mesh.

    Solves ``W u + kappa + m e^{2u} = 0``.  The equation is the gradient of a
    strictly convex energy, so the solution is unique and damped Newton from
    the Gauss-Bonnet constant converges.
    """
    if m.genus < 2:
        raise ValueError(f"uniformisation to K = -1 needs genus >= 2, got {m.genus}")
    W = cotan_stiffness(m)
    mass = m.vertex_mass
    kappa = m.kappa

    def residual(u):
        return W @ u + kappa + mass * np.exp(2.0 * u)

    def jacobian(u):
        return W + sp.diags(2.0 * mass * np.exp(2.0 * u))

    u0 = np.full(m.n_vertices, 0.5 * math.log(-kappa.sum() / mass.sum()))
    u, info = newton_solve(residual, jacobian, u0, tol=tol, max_iter=max_iter, stage="uniformize")
    return MetricField(u, "flat", None, info)


def hyperbolic_area(m: TriangleMesh, metric: MetricField) -> float:
    return float(np.sum(m.vertex_mass * np.exp(2.0 * metric.total)))


@dataclass
class DiscreteCurvature:
    curvature: np.ndarray  # angle defect / dual area
    defect: np.ndarray
    dual_area: np.ndarray

    @property
    def total_defect(self) -> float:
        return math.fsum(self.defect)


def discrete_curvature(m: TriangleMesh, metric: MetricField | np.ndarray | None = None) -> DiscreteCurvature:
    """Curvature of the piecewise-flat metric with edge lengths
    ``l_ij exp((u_i + u_j) / 2)``: angle defect over barycentric dual area.

    This is independent of the stiffness/mass discretisation used by the
    solvers, so it serves as an oracle for them.
    """
    if metric is None:
        u = np.zeros(m.n_vertices)
    elif isinstance(metric, MetricField):
        u = metric.total
    else:
        u = np.asarray(metric, dtype=float)
    uf = u[m.faces]
    scale = np.exp(0.5 * (uf[:, [1, 2, 0]] + uf[:, [2, 0, 1]]))
    lengths = m.lengths * scale
    angles = corner_angles(lengths)
    theta = np.bincount(m.faces.ravel(), angles.ravel(), m.n_vertices)
    defect = TWO_PI - theta
    area = np.bincount(m.faces.ravel(), np.repeat(heron(lengths) / 3.0, 3), m.n_vertices)
    return DiscreteCurvature(defect / area, defect, area)


def qd_field(f: FlatSurface, m: TriangleMesh) -> np.ndarray:
    """Coefficient of ``q`` in each face chart: ``dz^2`` rotated by the frame."""
    if m.flat is not f and m.flat != f:
        raise ValueError("mesh was not built from this flat surface")
    return np.exp(-2j * m.frame).astype(complex)


def phase_holonomy(m: TriangleMesh, q: np.ndarray, vertex: int) -> float:
    """Total phase change of ``q``'s coefficient along the face loop around ``vertex``.

    Crossing an edge whose gluing rotates the chart by ``a`` changes the
    coefficient's phase by ``2 a`` on top of the difference between the two
    face coefficients.  Single-valuedness means the sum is a multiple of 2 pi.
    """
    star = [fi for fi in range(m.n_faces) if vertex in m.faces[fi]]
    if not star:
        raise ValueError(f"vertex {vertex} has no faces")
    # edges incident to vertex, per face
    total = 0.0
    start = star[0]
    current, came_from = start, -1
    visited = 0
    while True:
        k = int(np.flatnonzero(m.faces[current] == vertex)[0])
        candidates = [m.face_edges[current, (k + 1) % 3], m.face_edges[current, (k + 2) % 3]]
        e = candidates[0] if candidates[0] != came_from else candidates[1]
        a, b = m.edge_faces[e]
        nxt = b if a == current else a
        phase = np.angle(q[nxt] / q[current]) + 2.0 * m.edge_rotation[e]
        total += phase
        visited += 1
        current, came_from = nxt, e
        if current == start or visited > 4 * len(star):
            break
    return float(total)


# ---------------------------------------------------------------- text formats


def format_mesh(m: TriangleMesh) -> str:
    lines = [f"# mesh vertices {m.n_vertices} faces {m.n_faces}", "# v id rect x y cone", "# f id v1 v2 v3 rect frame"]
    for v in range(m.n_vertices):
        x, y = m.vertex_xy[v]
        lines.append(f"v {v} {m.vertex_rect[v] + 1} {x:.17g} {y:.17g} {int(m.cone[v])}")
    for fi in range(m.n_faces):
        a, b, c = m.faces[fi]
        lines.append(f"f {fi} {a} {b} {c} {m.face_rect[fi] + 1} {m.frame[fi]:.17g}")
    return "\n".join(lines) + "\n"


def format_metric(metric: MetricField) -> str:
    lines = [f"# metric background {metric.background}; vertex id -> u"]
    lines += [f"{i} {x:.17g}" for i, x in enumerate(metric.u)]
    return "\n".join(lines) + "\n"


def parse_metric(text: str, background: str = "flat", base=None) -> MetricField:
    values = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        idx = int(line[0])
        if idx in values:
            raise FormatError(f"duplicate vertex {idx}")
        values[idx] = float(line[1])
    if sorted(values) != list(range(len(values))):
        raise FormatError("vertex ids must be 0..V-1")
    return MetricField(np.array([values[i] for i in range(len(values))]), background, base)
