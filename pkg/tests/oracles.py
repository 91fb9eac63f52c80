"""Independent reference computations.

Nothing here imports the package: these are separate derivations used to
produce the frozen constants in the tests.  Run the module to print them.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve


def disk_torsion_profile(r, p: float, R: float = 1.0, n: int = 2):
    """Radial torsion function of the Euclidean ball."""
    e = p / (p - 1)
    return (p - 1) / p * n ** (-1 / (p - 1)) * (R**e - np.asarray(r) ** e)


def disk_boundary_gradient(p: float, R: float = 1.0, n: int = 2) -> float:
    """``|grad u|`` on the boundary of the ball: ``(R/n)^(1/(p-1))``."""
    return (R / n) ** (1 / (p - 1))


def disk_tau(p: float, R: float = 1.0, n: int = 2) -> float:
    """``int u`` over the ball, by integrating the profile in polar coordinates."""
    e = p / (p - 1)
    sphere = 2 * math.pi if n == 2 else None
    return sphere * n ** (-1 / (p - 1)) * R ** (n + e) / (n * (n + e))


def disk_tau_quadrature(p: float, R: float = 1.0) -> float:
    """Same quantity by numerical quadrature of the profile (cross-check)."""
    from scipy.integrate import quad

    val, _ = quad(lambda r: 2 * math.pi * r * disk_torsion_profile(r, p, R), 0, R, epsabs=1e-14)
    return val


def p1_poisson(nodes, triangles, boundary_nodes) -> np.ndarray:
    """Linear P1 solve of ``-Lap u = 1``, ``u = 0`` on the boundary.

    Assembles the stiffness matrix triangle by triangle in plain Python.
    """
    n = len(nodes)
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    for tri in triangles:
        P = nodes[tri]
        M = np.array([[1, *P[0]], [1, *P[1]], [1, *P[2]]])
        area = 0.5 * abs(np.linalg.det(M))
        C = np.linalg.inv(M)[1:]  # rows: d/dx, d/dy of the three barycentrics
        K = area * C.T @ C
        for i in range(3):
            b[tri[i]] += area / 3
            for j in range(3):
                rows.append(tri[i])
                cols.append(tri[j])
                vals.append(K[i, j])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    free = np.setdiff1d(np.arange(n), boundary_nodes)
    u = np.zeros(n)
    u[free] = spsolve(A[free][:, free].tocsc(), b[free])
    return u


def halfplane_polygon(directions, values, box: float = 1e3):
    """Intersection of ``{x : x.u <= f}`` computed with shapely."""
    from shapely.geometry import Polygon, box as sbox

    region = sbox(-box, -box, box, box)
    for u, f in zip(np.asarray(directions, float), np.asarray(values, float)):
        # large square whose left edge is the line x.u = f
        t = np.array([-u[1], u[0]])
        c = f * u
        pts = [c + box * t, c + box * t - 4 * box * u, c - box * t - 4 * box * u, c - box * t]
        region = region.intersection(Polygon(pts))
    return region


def ray_hit(vertices, v) -> float:
    """Distance along the unit ray ``v`` to the polygon boundary (edge by edge)."""
    V = np.asarray(vertices, float)
    v = np.asarray(v, float)
    best = None
    for a, b in zip(V, np.roll(V, -1, axis=0)):
        M = np.column_stack([v, a - b])
        if abs(np.linalg.det(M)) < 1e-15:
            continue
        s, t = np.linalg.solve(M, a)
        if s > 0 and -1e-12 <= t <= 1 + 1e-12:
            best = s if best is None else min(best, s)
    return best


def monte_carlo_dual_ball_area(A, samples: int = 10_000_000, seed: int = 1) -> float:
    """Area of ``{xi : max_v <xi, v>/F(v) < 1}`` for ``F(v) = sqrt(v^T A v)``.

    The dual gauge is evaluated by maximising over 720 directions, so the
    estimate does not rely on a closed form for the dual of an ellipse norm.
    """
    rng = np.random.default_rng(seed)
    t = 2 * np.pi * np.arange(720) / 720
    V = np.column_stack([np.cos(t), np.sin(t)])
    Fv = np.sqrt(np.einsum("ki,ij,kj->k", V, A, V))
    half = 1.05 * float(np.sqrt(np.linalg.eigvalsh(A).max()))
    inside = 0
    chunk = 200_000
    for start in range(0, samples, chunk):
        X = rng.uniform(-half, half, size=(min(chunk, samples - start), 2))
        inside += int(((X @ V.T / Fv).max(axis=1) < 1).sum())
    return (2 * half) ** 2 * inside / samples


def rectangle_tau(a: float, b: float, terms: int = 2001) -> float:
    """``int u`` for ``-Lap u = 1`` on an ``a x b`` rectangle (double sine series)."""
    k = np.arange(1, terms + 1, 2, dtype=float)
    m, n = np.meshgrid(k, k, indexing="ij")
    return float((64 * a * b / (math.pi**6 * m**2 * n**2 * (m**2 / a**2 + n**2 / b**2))).sum())


def regular_polygon_area(N: int) -> float:
    """Area of the polygon circumscribed about the unit circle."""
    return N * math.tan(math.pi / N)


if __name__ == "__main__":
    for p in (1.5, 2, 3):
        print(f"disk tau p={p}: {disk_tau(p)!r}  quadrature {disk_tau_quadrature(p)!r}")
    print("dual ball area, A = diag(4, 1):", monte_carlo_dual_ball_area(np.diag([4.0, 1.0])))
    sq2 = halfplane_polygon([[1, 0], [0, 1], [-1, 0], [0, -1]], [math.sqrt(2)] * 4)
    print("q=2 combination of squares, area:", sq2.area)
    print("tau of the 2x2 square, p=2:", rectangle_tau(2.0, 2.0))
    print("square ray at pi/6:", ray_hit([[-1, -1], [1, -1], [1, 1], [-1, 1]], [math.cos(math.pi / 6), math.sin(math.pi / 6)]))
