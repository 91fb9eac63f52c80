"""Triangulation of convex polygons and mesh morphing.

Meshes are built from boundary nodes placed along each facet and a
hexagonal lattice inside, joined by a Delaunay triangulation.  A mesh can be
*morphed* onto another polygon with the same facet structure by a
piecewise-affine map over the fan ``(centroid, v_k, v_k+1)``; the topology
is kept, so quantities computed on morphed meshes vary smoothly with the
polygon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .errors import MeshFailure, PreconditionError
from .geometry import ConvexPolygon

# lattice spacing relative to target_h, and keep-out band next to the boundary
_SPACING = 0.8
_BAND = 0.55


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Conforming triangulation of ``polygon``.

    ``boundary_edges`` lists node pairs in counterclockwise order around the
    boundary and ``boundary_facets`` the polygon facet each edge lies on.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_facets: np.ndarray
    polygon: ConvexPolygon | None = None

    def __post_init__(self):
        for name in ("nodes", "triangles", "boundary_edges", "boundary_facets"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return self.boundary_edges[:, 0]

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    @property
    def h_mesh(self) -> float:
        """Longest edge."""
        p = self.nodes[self.triangles]
        e = p - np.roll(p, 1, axis=1)
        return float(np.sqrt((e**2).sum(-1)).max())

    @property
    def min_quality(self) -> float:
        """Smallest ``4 sqrt(3) |T| / sum of squared edges`` (1 for equilateral)."""
        p = self.nodes[self.triangles]
        e2 = ((p - np.roll(p, 1, axis=1)) ** 2).sum(axis=(1, 2))
        return float((4 * np.sqrt(3) * self.areas / e2).min())

    @property
    def boundary_lengths(self) -> np.ndarray:
        e = self.nodes[self.boundary_edges[:, 1]] - self.nodes[self.boundary_edges[:, 0]]
        return np.hypot(e[:, 0], e[:, 1])

    def boundary_adjacent_triangles(self) -> np.ndarray:
        """Index of the triangle owning each boundary edge."""
        lookup = {}
        for t, tri in enumerate(self.triangles):
            for a in range(3):
                lookup[(int(tri[a]), int(tri[(a + 1) % 3]))] = t
        return np.array([lookup[(int(i), int(j))] for i, j in self.boundary_edges])

    def scaled(self, s: float) -> "TriangleMesh":
        poly = self.polygon.scale(s) if self.polygon is not None else None
        return TriangleMesh(self.nodes * s, self.triangles, self.boundary_edges, self.boundary_facets, poly)

    def translated(self, x) -> "TriangleMesh":
        x = np.asarray(x, dtype=float)
        poly = self.polygon.translate(x) if self.polygon is not None else None
        return TriangleMesh(self.nodes + x, self.triangles, self.boundary_edges, self.boundary_facets, poly)

    def to_json(self) -> dict:
        return {
            "nodes": self.nodes.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary": [[[int(i), int(j)], int(f)] for (i, j), f in zip(self.boundary_edges, self.boundary_facets)],
        }

    @classmethod
    def from_json(cls, data: dict, polygon: ConvexPolygon | None = None) -> "TriangleMesh":
        bnd = data["boundary"]
        edges = np.array([e for e, _ in bnd], dtype=int).reshape(-1, 2)
        facets = np.array([f for _, f in bnd], dtype=int)
        return cls(
            np.asarray(data["nodes"], dtype=float).reshape(-1, 2),
            np.asarray(data["triangles"], dtype=int).reshape(-1, 3),
            edges,
            facets,
            polygon,
        )


def _boundary_points(K: ConvexPolygon, spacing: float):
    pts, facet_of = [], []
    for k, (v, e, L) in enumerate(zip(K.vertices, K.edges, K.lengths)):
        m = max(1, math.ceil(L / spacing - 1e-9))
        for j in range(m):
            pts.append(v + (j / m) * e)
            facet_of.append(k)
    return np.array(pts), np.array(facet_of)


def _lattice(K: ConvexPolygon, spacing: float, band: float) -> np.ndarray:
    lo = K.vertices.min(axis=0)
    hi = K.vertices.max(axis=0)
    c = K.centroid
    dy = spacing * math.sqrt(3) / 2
    j0 = math.floor((lo[1] - c[1]) / dy) - 1
    j1 = math.ceil((hi[1] - c[1]) / dy) + 1
    i0 = math.floor((lo[0] - c[0]) / spacing) - 2
    i1 = math.ceil((hi[0] - c[0]) / spacing) + 2
    J, I = np.mgrid[j0 : j1 + 1, i0 : i1 + 1]
    x = c[0] + (I + 0.5 * (J % 2)) * spacing
    y = c[1] + J * dy
    P = np.column_stack([x.ravel(), y.ravel()])
    slack = (K.support_values[None, :] - P @ K.normals.T).min(axis=1)
    return P[slack >= band * spacing]


def _delaunay(points: np.ndarray, n_boundary: int, area_tol: float) -> np.ndarray:
    tri = Delaunay(points)
    if len(tri.coplanar):
        raise MeshFailure("Delaunay dropped input points", count=int(len(tri.coplanar)))
    simp = tri.simplices
    p = points[simp]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    cr = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    # slivers made only of collinear boundary nodes
    flat = np.abs(cr) <= area_tol
    simp = simp[~flat]
    cr = cr[~flat]
    neg = cr < 0
    simp[neg] = simp[neg][:, [0, 2, 1]]
    return simp


def _edge_list(triangles: np.ndarray) -> np.ndarray:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    return e


def triangulate(K: ConvexPolygon, target_h: float, max_rounds: int = 12) -> TriangleMesh:
    """Conforming triangulation of ``K`` with longest edge at most ``target_h``."""
    if not target_h > 0:
        raise PreconditionError("target_h must be positive")
    spacing = _SPACING * target_h
    bpts, bfacet = _boundary_points(K, spacing)
    nb = len(bpts)
    inner = _lattice(K, spacing, _BAND)
    if len(inner) == 0:
        inner = K.centroid[None, :]
    points = np.vstack([bpts, inner])
    area_tol = 1e-12 * target_h**2

    for _ in range(max_rounds):
        tris = _delaunay(points, nb, area_tol)
        edges = _edge_list(tris)
        d = points[edges[:, 1]] - points[edges[:, 0]]
        length = np.hypot(d[:, 0], d[:, 1])
        long = length > target_h * (1 + 1e-12)
        if not long.any():
            break
        und = np.sort(edges[long], axis=1)
        und = np.unique(und, axis=0)
        mids = 0.5 * (points[und[:, 0]] + points[und[:, 1]])
        # boundary segments never exceed the spacing, so midpoints are interior
        points = np.vstack([points, mids])
    else:
        raise MeshFailure("edge refinement stalled", target_h=target_h)

    mesh = _assemble(points, tris, nb, bfacet, K)
    _check_mesh(mesh, K)
    return mesh


def _assemble(points, tris, nb, bfacet, K) -> TriangleMesh:
    # boundary nodes are 0..nb-1 in counterclockwise order
    edges = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
    return TriangleMesh(points, tris.astype(np.int64), edges, bfacet.copy(), K)


def _check_mesh(mesh: TriangleMesh, K: ConvexPolygon) -> None:
    areas = mesh.areas
    if np.any(areas <= 1e-14 * max(1.0, K.area)):
        raise MeshFailure("non-positive triangle area", min_area=float(areas.min()))
    if abs(areas.sum() - K.area) > 1e-9 * K.area:
        raise MeshFailure("triangles do not tile the polygon", gap=float(areas.sum() - K.area))
    e = _edge_list(mesh.triangles)
    directed = set(map(tuple, e.tolist()))
    for i, j in mesh.boundary_edges.tolist():
        if (i, j) not in directed or (j, i) in directed:
            raise MeshFailure("boundary edge is not on the mesh boundary", edge=(i, j))
    # every edge without a twin must be a declared boundary edge
    orphans = sum(1 for i, j in directed if (j, i) not in directed)
    if orphans != len(mesh.boundary_edges):
        raise MeshFailure("mesh has untagged boundary edges", count=orphans - len(mesh.boundary_edges))


def _vertex_alignment(old: ConvexPolygon, new: ConvexPolygon) -> int:
    """Roll ``r`` such that facet ``k`` of ``old`` matches facet ``k + r`` of ``new``."""
    if len(old) != len(new):
        raise MeshFailure("facet count changed", old=len(old), new=len(new))
    if old.labels is None or new.labels is None:
        return 0
    m = len(old)
    first = old.labels[0]
    if first not in new.labels:
        raise MeshFailure("facet structure changed")
    r = new.labels.index(first)
    if any(old.labels[k] != new.labels[(k + r) % m] for k in range(m)):
        raise MeshFailure("facet structure changed")
    return r


def morph(mesh: TriangleMesh, new: ConvexPolygon) -> TriangleMesh:
    """Carry ``mesh`` onto ``new`` with the fan-wise affine map.

    ``new`` must have the facet structure of ``mesh.polygon`` (same count,
    and the same labels when both carry them).  Raises :class:`MeshFailure`
    when the map folds a triangle.
    """
    old = mesh.polygon
    if old is None:
        raise PreconditionError("mesh has no reference polygon")
    r = _vertex_alignment(old, new)
    m = len(old)
    new_v = np.roll(new.vertices, -r, axis=0)
    c_old, c_new = old.centroid, new.centroid
    w_fan, k_fan = _fan_coordinates(old, mesh.nodes)
    pts = (
        w_fan[:, 0:1] * c_new
        + w_fan[:, 1:2] * new_v[k_fan]
        + w_fan[:, 2:3] * new_v[(k_fan + 1) % m]
    )
    # boundary nodes sit exactly on their facet
    bn = mesh.boundary_nodes
    bf = mesh.boundary_facets
    pts[bn] = _project_to_facets(pts[bn], new_v, bf, m)
    labels = None
    if new.labels is not None:
        labels = tuple(new.labels[(k + r) % m] for k in range(m))
    poly = ConvexPolygon(new_v, labels)
    out = TriangleMesh(pts, mesh.triangles, mesh.boundary_edges, mesh.boundary_facets, poly)
    if np.any(out.areas <= 0):
        raise MeshFailure("morph folded the mesh")
    return out


def _fan_coordinates(K: ConvexPolygon, x: np.ndarray):
    """Fan triangle index and barycentric weights ``(c, v_k, v_k+1)`` for each point."""
    c = K.centroid
    v = K.vertices
    m = len(v)
    rel_v = v - c
    ang_v = np.arctan2(rel_v[:, 1], rel_v[:, 0])
    rel = x - c
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    # fan k spans angles [ang_v[k], ang_v[k+1]) counterclockwise
    start = ang_v[0]
    off_v = np.mod(ang_v - start, 2 * np.pi)
    off = np.mod(ang - start, 2 * np.pi)
    k = np.searchsorted(off_v, off, side="right") - 1
    k = np.clip(k, 0, m - 1)
    a = v[k] - c
    b = v[(k + 1) % m] - c
    det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    wa = (rel[:, 0] * b[:, 1] - rel[:, 1] * b[:, 0]) / det
    wb = (a[:, 0] * rel[:, 1] - a[:, 1] * rel[:, 0]) / det
    w = np.column_stack([1 - wa - wb, wa, wb])
    return w, k


def _project_to_facets(pts, verts, facets, m):
    a = verts[facets]
    b = verts[(facets + 1) % m]
    e = b - a
    t = np.einsum("ij,ij->i", pts - a, e) / np.einsum("ij,ij->i", e, e)
    return a + np.clip(t, 0.0, 1.0)[:, None] * e



def _centroid_jacobian(K: ConvexPolygon) -> np.ndarray:
    """``d centroid / d vertex`` as an ``(m, 2, 2)`` array (central differences)."""
    v = K.vertices
    step = 1e-7 * K.diameter

    def centroid(w):
        x = np.roll(w, -1, axis=0)
        c = w[:, 0] * x[:, 1] - w[:, 1] * x[:, 0]
        return ((w + x) * c[:, None]).sum(axis=0) / (3.0 * c.sum())

    J = np.empty((len(v), 2, 2))
    for j in range(len(v)):
        for i in range(2):
            d = np.zeros_like(v)
            d[j, i] = step
            J[j, :, i] = (centroid(v + d) - centroid(v - d)) / (2 * step)
    return J


def vertex_pullback(mesh: TriangleMesh, node_gradient: np.ndarray) -> np.ndarray:
    """Chain a per-node gradient through :func:`morph` to the polygon vertices.

    If a quantity changes by ``sum_a G_a . dx_a`` when nodes move, the result
    ``R`` satisfies ``sum_j R_j . dv_j`` for a vertex motion ``dv`` carried to
    the nodes by the fan-wise affine map.
    """
    K = mesh.polygon
    if K is None:
        raise PreconditionError("mesh has no reference polygon")
    G = np.asarray(node_gradient, dtype=float)
    w, k = _fan_coordinates(K, mesh.nodes)
    m = len(K)
    R = np.zeros((m, 2))
    np.add.at(R, k, w[:, 1:2] * G)
    np.add.at(R, (k + 1) % m, w[:, 2:3] * G)
    gc = (w[:, 0:1] * G).sum(axis=0)
    R += np.einsum("i,jik->jk", gc, _centroid_jacobian(K))
    return R
