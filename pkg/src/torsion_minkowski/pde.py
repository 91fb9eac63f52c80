"""Anisotropic p-torsion problem by P1 energy minimisation.

The discrete torsion function minimises

    J_eps(u) = sum_T |T| (1/p) (eps^2 + F^2(grad u_T))^(p/2) - sum_i m_i u_i

over piecewise-linear ``u`` vanishing on the boundary, where
``m_i = int phi_i``.  ``J_eps`` is smooth and strictly convex, so damped
Newton with an Armijo line search converges to the unique minimiser.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .anisotropy import AnisotropicNorm
from .errors import IllConditioned, NonConvergence, PreconditionError
from .geometry import ConvexPolygon
from .mesh import TriangleMesh, triangulate

log = logging.getLogger(__name__)

# default mesh resolution: this many edges across the diameter
DEFAULT_CELLS_PER_DIAMETER = 60
DEFAULT_EPSILON_REL = 1e-6


def default_target_h(K: ConvexPolygon, cells: int = DEFAULT_CELLS_PER_DIAMETER) -> float:
    return K.diameter / cells


def check_p(p: float) -> float:
    p = float(p)
    if not (p > 1 and np.isfinite(p)):
        raise PreconditionError("p must lie in (1, inf)", p=p)
    return p


class _P1Operator:
    """Per-mesh geometric data shared by energy, gradient and Hessian."""

    def __init__(self, mesh: TriangleMesh):
        self.mesh = mesh
        tri = mesh.triangles
        P = mesh.nodes[tri]  # (nT, 3, 2)
        self.area = mesh.areas
        # gradients of the three hat functions, constant per triangle
        e0 = P[:, 2] - P[:, 1]
        e1 = P[:, 0] - P[:, 2]
        e2 = P[:, 1] - P[:, 0]
        E = np.stack([e0, e1, e2], axis=1)
        self.B = np.stack([-E[..., 1], E[..., 0]], axis=-1) / (2.0 * self.area[:, None, None])
        n = mesh.n_nodes
        self.load = np.bincount(tri.ravel(), weights=np.repeat(self.area / 3.0, 3), minlength=n)
        self.free = mesh.interior_nodes
        self._rows = np.repeat(tri, 3, axis=1).ravel()
        self._cols = np.tile(tri, (1, 3)).ravel()

    def gradients(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("tai,ta->ti", self.B, u[self.mesh.triangles])

    def vector(self, per_tri: np.ndarray) -> np.ndarray:
        """Assemble ``sum_T |T| B_T^T v_T`` for a per-triangle vector ``v``."""
        local = np.einsum("tai,ti->ta", self.B, per_tri) * self.area[:, None]
        return np.bincount(self.mesh.triangles.ravel(), weights=local.ravel(), minlength=self.mesh.n_nodes)

    def matrix(self, per_tri: np.ndarray) -> sp.csr_matrix:
        """Assemble ``sum_T |T| B_T^T M_T B_T`` for per-triangle 2x2 ``M``."""
        local = np.einsum("tai,tij,tbj->tab", self.B, per_tri, self.B) * self.area[:, None, None]
        n = self.mesh.n_nodes
        return sp.coo_matrix((local.ravel(), (self._rows, self._cols)), shape=(n, n)).tocsr()


class _Energy:
    def __init__(self, op: _P1Operator, F: AnisotropicNorm, p: float, eps: float):
        self.op, self.F, self.p, self.eps = op, F, p, eps

    def density(self, g):
        G = self.F.square(g)[0]
        return (self.eps**2 + G) ** (self.p / 2) / self.p

    def value(self, u):
        return float(self.op.area @ self.density(self.op.gradients(u)) - self.op.load @ u)

    def flux(self, g):
        """``dW/dxi``: the regularised ``F^(p-1) grad F``."""
        G, dG, _ = self.F.square(g)
        s = self.eps**2 + G
        return 0.5 * (s ** (self.p / 2 - 1))[:, None] * dG

    def full_gradient(self, u):
        g = self.op.gradients(u)
        return self.op.vector(self.flux(g)) - self.op.load

    def hessian(self, u):
        g = self.op.gradients(u)
        G, dG, d2G = self.F.square(g)
        s = self.eps**2 + G
        p = self.p
        H = 0.5 * (s ** (p / 2 - 1))[:, None, None] * d2G + 0.25 * (p - 2) * (s ** (p / 2 - 2))[
            :, None, None
        ] * np.einsum("ti,tj->tij", dG, dG)
        return self.op.matrix(H)


@dataclass(frozen=True, eq=False)
class TorsionSolution:
    mesh: TriangleMesh
    norm: AnisotropicNorm
    p: float
    epsilon: float
    nodal_values: np.ndarray
    element_gradients: np.ndarray
    energy: float
    iterations: int
    residual: float

    @property
    def tau_volume(self) -> float:
        """``int_K u dx`` (exact for P1)."""
        return float(_load(self.mesh) @ self.nodal_values)

    @property
    def tau_energy(self) -> float:
        """``int_K F^p(grad u) dx``."""
        G = self.norm.square(self.element_gradients)[0]
        return float(self.mesh.areas @ G ** (self.p / 2))


def _load(mesh: TriangleMesh) -> np.ndarray:
    return np.bincount(
        mesh.triangles.ravel(), weights=np.repeat(mesh.areas / 3.0, 3), minlength=mesh.n_nodes
    )


def _laplace_guess(op: _P1Operator) -> np.ndarray:
    eye = np.broadcast_to(np.eye(2), (len(op.area), 2, 2))
    A = op.matrix(eye)
    free = op.free
    u = np.zeros(op.mesh.n_nodes)
    u[free] = spsolve(A[free][:, free].tocsc(), op.load[free])
    return u


def solve_torsion(
    K: ConvexPolygon,
    F: AnisotropicNorm,
    p: float,
    mesh: TriangleMesh | None = None,
    epsilon: float | None = None,
    tol: float = 1e-10,
    *,
    max_iters: int = 100,
    initial: np.ndarray | None = None,
) -> TorsionSolution:
    """Minimise the regularised p-Dirichlet energy on ``mesh``.

    ``tol`` bounds the interior residual ``|dJ| / |m|``.  ``epsilon``
    defaults to ``1e-6 * diameter``.
    """
    p = check_p(p)
    if not tol > 0:
        raise PreconditionError("tol must be positive")
    if mesh is None:
        mesh = triangulate(K, default_target_h(K))
    if epsilon is None:
        epsilon = DEFAULT_EPSILON_REL * K.diameter
    if epsilon < 0:
        raise PreconditionError("epsilon must be nonnegative")
    op = _P1Operator(mesh)
    energy = _Energy(op, F, p, float(epsilon))
    free = op.free
    if len(free) == 0:
        raise PreconditionError("mesh has no interior nodes")
    scale = float(np.linalg.norm(op.load[free]))

    if initial is not None:
        u = np.array(initial, dtype=float)
        u[mesh.boundary_nodes] = 0.0
    else:
        u = _laplace_guess(op)
        # best multiple of the Laplace solution: minimise s^p A / p - s B
        A = float(op.area @ F.square(op.gradients(u))[0] ** (p / 2))
        B = float(op.load @ u)
        if A > 0 and B > 0:
            u *= (B / A) ** (1.0 / (p - 1))

    # continuation in eps for the degenerate (p != 2) energies
    eps_target = float(epsilon)
    schedule = [eps_target]
    if p != 2:
        e = 0.1 * K.diameter
        stages = []
        while e > 10 * eps_target:
            stages.append(e)
            e *= 0.1
        schedule = stages + [eps_target]
    total = 0
    for stage, eps in enumerate(schedule):
        last = stage == len(schedule) - 1
        energy = _Energy(op, F, p, eps)
        u, it, residual = _newton(
            energy, u, free, scale, tol if last else max(tol, 1e-6), max_iters - total
        )
        total += it
    J = energy.value(u)
    it = total

    return TorsionSolution(
        mesh=mesh,
        norm=F,
        p=p,
        epsilon=float(epsilon),
        nodal_values=u,
        element_gradients=op.gradients(u),
        energy=J,
        iterations=it,
        residual=residual,
    )


@dataclass(frozen=True, eq=False)
class BoundaryFlux:
    """Samples of ``F^p(grad u)`` on the boundary with quadrature weights.

    ``facet`` gives the polygon facet of every sample; summing
    ``weights * values`` over a facet integrates ``F^p(grad u)`` along it.
    """

    facet: np.ndarray
    points: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    n_facets: int
    method: str

    def facet_samples(self, k: int):
        sel = self.facet == k
        return self.points[sel], self.values[sel], self.weights[sel]

    def per_facet(self) -> list[tuple[int, np.ndarray]]:
        return [(k, self.values[self.facet == k]) for k in range(self.n_facets)]

    def integrate(self, density: np.ndarray | None = None) -> np.ndarray:
        """Per-facet integral of ``density * F^p(grad u)`` (density per sample)."""
        w = self.weights * self.values
        if density is not None:
            w = w * density
        return np.bincount(self.facet, weights=w, minlength=self.n_facets)


_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(3)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W

_STALL_TOL = 1e-5
_DECREMENT_TOL = 1e-15

FLUX_METHODS = ("residual", "element")


def boundary_flux(
    K: ConvexPolygon,
    F: AnisotropicNorm,
    p: float,
    sol: TorsionSolution,
    method: str = "residual",
) -> BoundaryFlux:
    """Boundary trace of ``F^p(grad u)`` grouped by facet of ``K``.

    ``method="element"`` takes the constant gradient of the triangle
    adjacent to each boundary edge, sampled at the edge midpoint.
    ``method="residual"`` recovers the normal flux from the discrete
    equation residual at boundary nodes (consistent flux), then uses
    ``u = 0`` on the boundary to convert flux to ``F^p(grad u)``.
    """
    mesh = sol.mesh
    if len(mesh.polygon or K) != len(K):
        raise PreconditionError("solution mesh does not match the polygon")
    p = check_p(p)
    a = mesh.nodes[mesh.boundary_edges[:, 0]]
    b = mesh.nodes[mesh.boundary_edges[:, 1]]
    L = mesh.boundary_lengths
    fac = mesh.boundary_facets
    if method == "element":
        tri = mesh.boundary_adjacent_triangles()
        g = sol.element_gradients[tri]
        G = F.square(g)[0]
        vals = G ** (p / 2)
        return BoundaryFlux(fac.copy(), 0.5 * (a + b), vals, L.copy(), len(K), method)
    if method != "residual":
        raise PreconditionError(f"unknown flux method {method!r}")

    op = _P1Operator(mesh)
    energy = _Energy(op, F, p, sol.epsilon)
    r = energy.full_gradient(sol.nodal_values)[mesh.boundary_nodes]
    # boundary mass matrix on the closed boundary loop
    nb = len(L)
    nxt = (np.arange(nb) + 1) % nb
    prv = (np.arange(nb) - 1) % nb
    diag = (L + L[prv]) / 3.0
    M = sp.diags([diag], [0], shape=(nb, nb)).tolil()
    M[np.arange(nb), nxt] = L / 6.0
    M[nxt, np.arange(nb)] = L / 6.0
    s = spsolve(M.tocsc(), r)  # nodal values of the normal flux (<= 0)
    normals = K.normals[fac]
    Fneg = F.value(-normals)
    s0, s1 = s, s[nxt]
    pts, vals, wts, facs = [], [], [], []
    for x, w in zip(_GAUSS_X, _GAUSS_W):
        sn = (1 - x) * s0 + x * s1
        pts.append((1 - x)[None] * a + x * b)
        vals.append((np.abs(sn) / Fneg) ** (p / (p - 1)))
        wts.append(w * L)
        facs.append(fac)
    order = np.argsort(np.tile(np.arange(nb), 3), kind="stable")
    return BoundaryFlux(
        np.concatenate(facs)[order],
        np.concatenate(pts)[order],
        np.concatenate(vals)[order],
        np.concatenate(wts)[order],
        len(K),
        method,
    )


def _newton(energy: _Energy, u: np.ndarray, free: np.ndarray, scale: float, tol: float, max_iters: int):
    J = energy.value(u)
    failures = 0
    stalls = 0
    residual = np.inf
    step = np.zeros_like(u)
    for it in range(max_iters + 1):
        r = energy.full_gradient(u)[free]
        residual = float(np.linalg.norm(r)) / scale
        if residual <= tol:
            return u, it, residual
        if it == max_iters:
            break
        H = energy.hessian(u)[free][:, free].tocsc()
        d = spsolve(H, -r)
        slope = float(r @ d)
        if not np.isfinite(slope) or slope >= 0:
            d, slope = -r, -float(r @ r)
        elif -slope <= _DECREMENT_TOL * max(abs(J), 1e-300) and residual <= _STALL_TOL:
            # Newton decrement at roundoff: the energy cannot be improved further
            return u, it, residual
        t = 1.0
        while True:
            step[free] = t * d
            J_new = energy.value(u + step)
            if J_new <= J + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-14:
                break
        if t < 1e-14:
            # no representable decrease left: accept when at roundoff level
            if abs(slope) <= 1e-13 * max(1.0, abs(J)):
                return u, it, residual
            failures += 1
            if failures >= 3:
                raise IllConditioned("line search failed repeatedly", iterations=it, residual=residual)
            continue
        failures = 0
        if J - J_new <= 1e-15 * max(1.0, abs(J)):
            stalls += 1
            # the energy no longer resolves progress: roundoff floor
            if stalls >= 3 and residual <= max(tol, _STALL_TOL):
                return u, it, residual
        else:
            stalls = 0
        u = u + step
        J = J_new
        log.debug("newton it=%d J=%.16e res=%.3e t=%.3g dec=%.3e", it, J, residual, t, -slope)
    raise NonConvergence("Newton iteration cap reached", iterations=it, residual=residual)


def shape_gradient(sol: TorsionSolution) -> np.ndarray:
    """Derivative of the minimal energy with respect to node positions.

    Returns ``Q`` of shape ``(n_nodes, 2)`` such that moving the nodes by a
    piecewise-linear velocity ``V`` changes ``J_eps(u_h)`` by
    ``sum_a Q_a . V_a`` to first order.  Nodal values are held fixed, which is
    exact at the minimiser (envelope theorem).
    """
    mesh = sol.mesh
    op = _P1Operator(mesh)
    energy = _Energy(op, sol.norm, sol.p, sol.epsilon)
    g = sol.element_gradients
    W = energy.density(g)
    dW = energy.flux(g)
    ubar = sol.nodal_values[mesh.triangles].mean(axis=1)
    # per triangle and local vertex: |T| [(W - ubar) B_a - (dW . B_a) g]
    coef = (W - ubar)[:, None, None] * op.B
    coef -= np.einsum("ti,tai->ta", dW, op.B)[:, :, None] * g[:, None, :]
    coef *= op.area[:, None, None]
    tri = mesh.triangles.ravel()
    n = mesh.n_nodes
    return np.column_stack(
        [np.bincount(tri, weights=coef[..., i].ravel(), minlength=n) for i in range(2)]
    )


def discrete_tau(sol: TorsionSolution) -> float:
    """``tau`` recovered from the minimal energy, ``-p/(p-1) J``.

    Agrees with :attr:`TorsionSolution.tau_volume` up to the regularisation
    and the solver tolerance, and is the quantity whose node derivative
    :func:`shape_gradient` returns (times ``-p/(p-1)``).
    """
    return -sol.p / (sol.p - 1.0) * sol.energy
