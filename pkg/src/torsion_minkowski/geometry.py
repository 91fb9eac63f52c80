"""Planar convex-body primitives.

Polygons are stored by their counterclockwise vertex list only; facet
normals, lengths and support values are derived on demand.  Facet ``k`` is
the edge from ``vertices[k]`` to ``vertices[k + 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidPolygon, OriginNotInterior, PreconditionError, Unbounded, VertexRay

DIM = 2

# facets shorter than this (relative to the body scale) count as inactive
INACTIVE_FACET_LENGTH = 1e-10


def direction(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def as_direction(v, tol: float = 1e-12) -> np.ndarray:
    """Return ``v`` as a float array after checking it has unit length."""
    u = np.asarray(v, dtype=float).reshape(DIM)
    if abs(np.hypot(u[0], u[1]) - 1.0) > tol:
        raise PreconditionError(f"direction {u.tolist()} is not a unit vector")
    return u


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """Strictly convex polygon with counterclockwise vertices.

    ``labels`` optionally records, for every facet, the index of the
    direction it came from (set by :func:`wulff_shape`).
    """

    vertices: np.ndarray
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != DIM or v.shape[0] < 3:
            raise InvalidPolygon("polygon needs at least three planar vertices")
        if not np.all(np.isfinite(v)):
            raise InvalidPolygon("polygon vertices must be finite")
        e = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(e[:, 0], e[:, 1])
        if np.any(lengths <= 0.0):
            raise InvalidPolygon("repeated vertex")
        turn = _cross(e, np.roll(e, -1, axis=0)) / (lengths * np.roll(lengths, -1))
        if np.any(turn <= 1e-13):
            raise InvalidPolygon("vertices are not in strictly convex counterclockwise order")
        # winding number one: total turning equals 2*pi
        angles = np.arctan2(e[:, 1], e[:, 0])
        turning = np.mod(np.diff(np.append(angles, angles[0])), 2 * np.pi).sum()
        if abs(turning - 2 * np.pi) > 1e-6:
            raise InvalidPolygon("polygon winds more than once")
        if self.labels is not None and len(self.labels) != len(v):
            raise InvalidPolygon("one label per facet required")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def from_points(cls, points) -> "ConvexPolygon":
        """Convex hull of ``points``."""
        return cls(convex_hull(np.asarray(points, dtype=float)))

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def edges(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @property
    def lengths(self) -> np.ndarray:
        e = self.edges
        return np.hypot(e[:, 0], e[:, 1])

    @property
    def normals(self) -> np.ndarray:
        e = self.edges
        n = np.column_stack([e[:, 1], -e[:, 0]])
        return n / np.hypot(n[:, 0], n[:, 1])[:, None]

    @property
    def support_values(self) -> np.ndarray:
        """``h_K`` at each facet normal."""
        return np.einsum("ij,ij->i", self.normals, self.vertices)

    @property
    def area(self) -> float:
        v = self.vertices
        return 0.5 * float(_cross(v, np.roll(v, -1, axis=0)).sum())

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = _cross(v, w)
        return ((v + w) * c[:, None]).sum(axis=0) / (3.0 * c.sum())

    @property
    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    def origin_interior(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.support_values > tol))

    def require_origin_interior(self) -> None:
        h = self.support_values
        if not np.all(h > 1e-12 * max(1.0, self.diameter)):
            raise OriginNotInterior(
                "origin is not strictly inside the polygon", min_support=float(h.min())
            )

    def contains(self, x, tol: float = 1e-12) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.all(x @ self.normals.T <= self.support_values + tol, axis=1)

    def translate(self, x) -> "ConvexPolygon":
        return ConvexPolygon(self.vertices + np.asarray(x, dtype=float), self.labels)

    def scale(self, s: float) -> "ConvexPolygon":
        if s <= 0:
            raise PreconditionError("scale factor must be positive")
        return ConvexPolygon(self.vertices * s, self.labels)

    def to_json(self) -> dict:
        return {"vertices": self.vertices.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "ConvexPolygon":
        try:
            verts = data["vertices"]
        except (KeyError, TypeError) as exc:
            raise InvalidPolygon("polygon JSON needs a 'vertices' list") from exc
        return cls(np.asarray(verts, dtype=float))


@dataclass(frozen=True, eq=False)
class SupportVector:
    """Positive values attached to a finite set of unit directions."""

    directions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        d = np.array(self.directions, dtype=float).reshape(-1, DIM)
        f = np.array(self.values, dtype=float).reshape(-1)
        if len(d) != len(f):
            raise PreconditionError("directions and values differ in length")
        if np.any(np.abs(np.hypot(d[:, 0], d[:, 1]) - 1.0) > 1e-12):
            raise PreconditionError("directions must be unit vectors")
        if not np.all(np.isfinite(f)) or np.any(f <= 0):
            raise PreconditionError("support values must be positive")
        d.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "values", f)

    def __len__(self) -> int:
        return len(self.values)

    def with_values(self, values) -> "SupportVector":
        return SupportVector(self.directions, values)

    def to_json(self) -> dict:
        return {"directions": self.directions.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "SupportVector":
        return cls(np.asarray(data["directions"], dtype=float), np.asarray(data["values"], dtype=float))


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; counterclockwise, collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        raise InvalidPolygon("need three non-collinear points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-1] - out[-2], p - out[-1]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise InvalidPolygon("points are collinear")
    return hull


def angular_gap(directions: np.ndarray) -> float:
    """Largest angle between angularly consecutive directions."""
    ang = np.sort(np.arctan2(directions[:, 1], directions[:, 0]))
    gaps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
    return float(gaps.max())


def positively_spanning(directions: np.ndarray, tol: float = 1e-12) -> bool:
    """True when no closed half-plane through the origin contains all directions."""
    d = np.asarray(directions, dtype=float).reshape(-1, DIM)
    if len(d) < 3:
        return False
    return angular_gap(d) < np.pi - tol


def support_function(K: ConvexPolygon, x) -> np.ndarray | float:
    """``h_K(x) = max_v <x, v>`` over vertices; vectorised over rows of ``x``."""
    x = np.asarray(x, dtype=float)
    vals = (x.reshape(-1, DIM) @ K.vertices.T).max(axis=1)
    return float(vals[0]) if x.ndim == 1 else vals


def radial_function(K: ConvexPolygon, x) -> np.ndarray | float:
    """``rho_K(x) = max{c >= 0 : c x in K}`` for nonzero ``x``."""
    K.require_origin_interior()
    x = np.asarray(x, dtype=float)
    X = x.reshape(-1, DIM)
    if np.any(np.hypot(X[:, 0], X[:, 1]) == 0):
        raise PreconditionError("radial function undefined at the origin")
    dots = X @ K.normals.T
    with np.errstate(divide="ignore"):
        t = np.where(dots > 0, K.support_values / np.where(dots > 0, dots, 1.0), np.inf)
    rho = t.min(axis=1)
    return float(rho[0]) if x.ndim == 1 else rho


def _hit_facet(K: ConvexPolygon, v: np.ndarray) -> tuple[int, float]:
    normals, h = K.normals, K.support_values
    dots = normals @ v
    with np.errstate(divide="ignore"):
        t = np.where(dots > 0, h / np.where(dots > 0, dots, 1.0), np.inf)
    k = int(np.argmin(t))
    rho = float(t[k])
    point = rho * v
    scale = max(1.0, K.diameter)
    a, b = K.vertices[k], K.vertices[(k + 1) % len(K)]
    if min(np.linalg.norm(point - a), np.linalg.norm(point - b)) <= 1e-12 * scale:
        raise VertexRay("ray passes through a vertex", facet=k)
    return k, rho


def gauss_map_facets(K: ConvexPolygon) -> list[tuple[int, np.ndarray]]:
    """Facet ids paired with their outward unit normals."""
    return [(k, n.copy()) for k, n in enumerate(K.normals)]


def radial_map_jacobian(K: ConvexPolygon, v) -> float:
    """Jacobian ``rho_K(v)^n / h_K(g_K(r_K(v)))`` of the radial map."""
    K.require_origin_interior()
    v = as_direction(v, tol=1e-9)
    k, rho = _hit_facet(K, v)
    return rho**DIM / float(K.support_values[k])


def wulff_shape(f: SupportVector, *, return_active: bool = False):
    """Intersection of the half-planes ``{x : x.u_k <= f_k}``.

    Facet ``j`` of the result carries ``labels[j]``, the index of the
    generating direction.  Constraints whose facet would be shorter than the
    inactive threshold are dropped and reported through ``return_active``.
    """
    U = f.directions
    vals = f.values
    if not positively_spanning(U):
        raise Unbounded("directions lie in a closed half-plane; the Wulff shape is unbounded")

    # polar dual: constraint k is active iff u_k / f_k is a hull vertex
    dual = U / vals[:, None]
    ang = np.arctan2(U[:, 1], U[:, 0])
    order = np.argsort(ang, kind="stable")
    # duplicate directions: keep the tightest value
    keep: list[int] = []
    for k in order:
        if keep and abs(ang[k] - ang[keep[-1]]) < 1e-14:
            if vals[k] < vals[keep[-1]]:
                keep[-1] = k
            continue
        keep.append(int(k))
    if len(keep) > 1 and abs(ang[keep[0]] + 2 * np.pi - ang[keep[-1]]) < 1e-14:
        if vals[keep[-1]] < vals[keep[0]]:
            keep[0] = keep[-1]
        keep.pop()

    # cyclic Graham scan around the origin, which lies inside the dual hull
    active = _cyclic_hull(dual, keep)
    scale = max(1.0, float(vals.max()))
    while True:
        verts = _intersect_consecutive(U, vals, active)
        e = np.roll(verts, -1, axis=0) - verts
        lengths = np.hypot(e[:, 0], e[:, 1])
        short = lengths < INACTIVE_FACET_LENGTH * scale
        if not short.any() or len(active) <= 3:
            break
        drop = int(np.argmin(lengths))
        active.pop(drop)
    poly = ConvexPolygon(verts, labels=tuple(active))
    if return_active:
        mask = np.zeros(len(vals), dtype=bool)
        mask[active] = True
        return poly, mask
    return poly


def _cyclic_hull(dual: np.ndarray, order: list[int]) -> list[int]:
    """Indices (angular order) of the strict vertices of the dual hull.

    Graham scan around the origin, started at the dual point farthest from
    it, which is always a hull vertex.
    """
    norms = np.hypot(dual[order, 0], dual[order, 1])
    s = int(np.argmax(norms))
    seq = order[s:] + order[:s]

    def left_turn(a, b, c) -> bool:
        pa, pb, pc = dual[a], dual[b], dual[c]
        mag = np.linalg.norm(pb - pa) * np.linalg.norm(pc - pb)
        return bool(_cross(pb - pa, pc - pb) > 1e-14 * mag)

    stack: list[int] = []
    for k in seq:
        while len(stack) >= 2 and not left_turn(stack[-2], stack[-1], k):
            stack.pop()
        stack.append(k)
    while len(stack) >= 3 and not left_turn(stack[-2], stack[-1], stack[0]):
        stack.pop()
    if len(stack) < 3:
        raise Unbounded("degenerate constraint set")
    return stack


def _intersect_consecutive(U: np.ndarray, vals: np.ndarray, active: list[int]) -> np.ndarray:
    a = np.array(active)
    prev = np.roll(a, 1)
    A = np.stack([U[prev], U[a]], axis=1)  # (m, 2, 2)
    b = np.stack([vals[prev], vals[a]], axis=1)
    return np.linalg.solve(A, b[..., None])[..., 0]


def facet_support_vector(K: ConvexPolygon) -> SupportVector:
    """Support values of ``K`` at its own facet normals."""
    return SupportVector(K.normals, K.support_values)


def lq_combination(
    K: ConvexPolygon,
    L: ConvexPolygon,
    a: float,
    b: float,
    q: float,
    E: np.ndarray,
) -> ConvexPolygon:
    """Wulff shape over ``E`` of ``(a h_K^q + b h_L^q)^(1/q)``."""
    if a < 0 or b < 0 or (a == 0 and b == 0):
        raise PreconditionError("coefficients must be nonnegative and not both zero")
    if q == 0:
        raise PreconditionError("q must be nonzero")
    E = np.asarray(E, dtype=float).reshape(-1, DIM)
    hk = np.asarray(support_function(K, E))
    hl = np.asarray(support_function(L, E))
    if q < 1:
        K.require_origin_interior()
        L.require_origin_interior()
    if np.any(hk <= 0) or np.any(hl <= 0):
        raise OriginNotInterior("support values must be positive on the direction set")
    vals = (a * hk**q + b * hl**q) ** (1.0 / q)
    return wulff_shape(SupportVector(E, vals))


def regular_polygon(
    n: int,
    circumradius: float = 1.0,
    *,
    rotation: float = 0.0,
    center: Sequence[float] = (0.0, 0.0),
) -> ConvexPolygon:
    """Regular ``n``-gon with a vertex at angle ``rotation``."""
    t = rotation + 2 * np.pi * np.arange(n) / n
    v = circumradius * np.column_stack([np.cos(t), np.sin(t)])
    return ConvexPolygon(v + np.asarray(center, dtype=float))


def disk_polygon(n: int = 512, radius: float = 1.0) -> ConvexPolygon:
    """Inscribed regular polygon approximating the disk."""
    return regular_polygon(n, radius)


def unit_square(half_side: float = 1.0) -> ConvexPolygon:
    s = half_side
    return ConvexPolygon([[-s, -s], [s, -s], [s, s], [-s, s]])


def hausdorff_distance(K: ConvexPolygon, L: ConvexPolygon, resolution: int = 4096) -> float:
    """``sup_u |h_K(u) - h_L(u)|`` on a dense direction grid plus both normal sets."""
    t = 2 * np.pi * np.arange(resolution) / resolution
    U = np.vstack([np.column_stack([np.cos(t), np.sin(t)]), K.normals, L.normals])
    return float(np.abs(support_function(K, U) - support_function(L, U)).max())


def aligned_hausdorff_distance(K: ConvexPolygon, L: ConvexPolygon, resolution: int = 2048):
    """Hausdorff distance minimised over translations of ``K``.

    Returns ``(distance, shift)`` with ``K + shift`` the best-aligned copy.
    """
    from scipy.optimize import minimize

    t = 2 * np.pi * np.arange(resolution) / resolution
    U = np.vstack([np.column_stack([np.cos(t), np.sin(t)]), K.normals, L.normals])
    diff = support_function(L, U) - support_function(K, U)

    def gap(x):
        return float(np.abs(diff - U @ x).max())

    x0 = L.centroid - K.centroid
    res = minimize(gap, x0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000})
    x = res.x if res.fun <= gap(x0) else x0
    return hausdorff_distance(K.translate(x), L), x
