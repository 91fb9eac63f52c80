"""Torsional rigidity by two formulas, and the facet measures ``S_p``, ``S_pq``.

On a polygon the outward normal is constant on each facet and
``<x, nu> = h_k`` there, so the ``L_q`` measure of facet ``k`` is
``h_k^(1-q) S_p(k)``.  The default convention carries no prefactor;
``prefactor=True`` multiplies by ``(p-1)/(n(p-1)+p)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anisotropy import AnisotropicNorm
from .errors import PreconditionError
from .geometry import DIM, ConvexPolygon, SupportVector, wulff_shape
from .mesh import morph, triangulate
from .pde import (
    TorsionSolution,
    boundary_flux,
    check_p,
    default_target_h,
    solve_torsion,
)


def torsion_constant(p: float, n: int = DIM) -> float:
    """``(p-1) / (n(p-1) + p)``."""
    return (p - 1.0) / (n * (p - 1.0) + p)


def homogeneity_degree(p: float, n: int = DIM) -> float:
    """Degree of ``tau`` under dilation: ``p/(p-1) + n``."""
    return p / (p - 1.0) + n


def solve(K: ConvexPolygon, F: AnisotropicNorm, p: float, target_h: float | None = None, **kw) -> TorsionSolution:
    """Mesh ``K`` and solve the torsion problem on it."""
    h = default_target_h(K) if target_h is None else target_h
    return solve_torsion(K, F, p, triangulate(K, h), **kw)


@dataclass(frozen=True)
class TorsionReport:
    tau_volume: float
    tau_boundary: float
    relative_gap: float
    p: float
    constant: float

    def to_json(self) -> dict:
        return {
            "tau_volume": self.tau_volume,
            "tau_boundary": self.tau_boundary,
            "relative_gap": self.relative_gap,
            "p": self.p,
            "constant": self.constant,
        }


def torsional_rigidity(
    K: ConvexPolygon, F: AnisotropicNorm, p: float, sol: TorsionSolution, *, flux_method: str = "residual"
) -> TorsionReport:
    p = check_p(p)
    c = torsion_constant(p)
    Sp = boundary_flux(K, F, p, sol, flux_method).integrate()
    tb = c * float(K.support_values @ Sp)
    tv = sol.tau_volume
    return TorsionReport(tv, tb, abs(tb - tv) / tv, p, c)


@dataclass(frozen=True, eq=False)
class FacetMeasure:
    """Per-facet values of the torsional measure and its ``L_q`` version."""

    normals: np.ndarray
    h: np.ndarray
    S_p: np.ndarray
    S_pq: np.ndarray
    p: float
    q: float
    prefactor: bool = False

    def __len__(self) -> int:
        return len(self.S_p)

    @property
    def total(self) -> float:
        return float(self.S_p.sum())

    def to_json(self, report: TorsionReport | None = None) -> dict:
        out = {
            "facets": [
                {"normal": n.tolist(), "h": float(h), "S_p": float(a), "S_pq": float(b)}
                for n, h, a, b in zip(self.normals, self.h, self.S_p, self.S_pq)
            ],
            "p": self.p,
            "q": self.q,
            "prefactor": self.prefactor,
        }
        if report is not None:
            out["tau_volume"] = report.tau_volume
            out["tau_boundary"] = report.tau_boundary
        return out


def torsional_measure(
    K: ConvexPolygon, F: AnisotropicNorm, p: float, sol: TorsionSolution, *, flux_method: str = "residual"
) -> FacetMeasure:
    p = check_p(p)
    Sp = boundary_flux(K, F, p, sol, flux_method).integrate()
    return FacetMeasure(K.normals, K.support_values, Sp, Sp.copy(), p, 1.0)


def lq_torsional_measure(
    K: ConvexPolygon,
    F: AnisotropicNorm,
    p: float,
    q: float,
    sol: TorsionSolution,
    *,
    prefactor: bool = False,
    flux_method: str = "residual",
) -> FacetMeasure:
    if q == 0:
        raise PreconditionError("q must be nonzero")
    K.require_origin_interior()
    base = torsional_measure(K, F, p, sol, flux_method=flux_method)
    Spq = base.h ** (1.0 - q) * base.S_p
    if prefactor:
        Spq = torsion_constant(base.p) * Spq
    return FacetMeasure(base.normals, base.h, base.S_p, Spq, base.p, float(q), prefactor)


def lq_measure_direct(
    K: ConvexPolygon, F: AnisotropicNorm, p: float, q: float, sol: TorsionSolution, *, flux_method: str = "residual"
) -> np.ndarray:
    """``S_pq`` per facet by integrating ``<x, nu>^(1-q) F^p(grad u)`` over boundary samples.

    Independent of :func:`lq_torsional_measure`: the weight is evaluated at
    each quadrature point rather than taken from the facet's support value.
    """
    K.require_origin_interior()
    bf = boundary_flux(K, F, check_p(p), sol, flux_method)
    support = np.einsum("ij,ij->i", bf.points, K.normals[bf.facet])
    return bf.integrate(support ** (1.0 - q))


@dataclass(frozen=True)
class PolyaSzego:
    lhs: float
    rhs: float
    satisfied: bool
    slack: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs


def polya_szego_rhs(volume: float, p: float, kappa: float, n: int = DIM) -> float:
    """Upper bound on ``tau`` in terms of the volume and ``kappa = |W|``."""
    if kappa <= 0 or volume <= 0:
        raise PreconditionError("kappa and the volume must be positive")
    a = n * (p - 1.0)
    return torsion_constant(p, n) * n ** (-1.0 / (p - 1.0)) * kappa ** (-p / a) * volume ** ((a + p) / a)


def polya_szego_bound(
    K: ConvexPolygon,
    F: AnisotropicNorm,
    p: float,
    kappa: float,
    tau: float | None = None,
    *,
    slack: float = 5e-2,
) -> PolyaSzego:
    """Compare ``tau(K)`` with the symmetrisation bound.

    ``tau`` is computed at the default resolution when not supplied.
    """
    p = check_p(p)
    if tau is None:
        tau = solve(K, F, p).tau_volume
    rhs = polya_szego_rhs(K.area, p, kappa)
    return PolyaSzego(float(tau), rhs, bool(tau <= rhs * (1.0 + slack)), slack)


@dataclass(frozen=True)
class DerivativeCheck:
    slope: float
    predicted: float
    gap: float
    t: float


def variational_derivative_check(
    K: ConvexPolygon,
    F: AnisotropicNorm,
    p: float,
    q: float,
    f,
    t: float | None = None,
    *,
    target_h: float | None = None,
) -> DerivativeCheck:
    """Finite-difference slope of ``tau`` along ``h_t = (h_K^q + t f^q)^(1/q)``.

    ``f`` holds values at the facet normals of ``K`` (a
    :class:`SupportVector` or a plain array, zeros allowed).  The
    perturbed bodies are solved on morphs of one mesh, and the slope uses
    symmetric quotients at ``t`` and ``t/2`` with one Richardson step.  The
    prediction is ``(1/q) sum_k f_k^q S_pq(k)``.
    """
    p = check_p(p)
    if q == 0:
        raise PreconditionError("q must be nonzero")
    K.require_origin_interior()
    U = K.normals
    h = K.support_values
    fv = np.asarray(f.values if isinstance(f, SupportVector) else f, dtype=float)
    if fv.shape != h.shape or np.any(fv < 0):
        raise PreconditionError("f needs one nonnegative value per facet")
    if t is None:
        t = 1e-3 * float(h.min())
    with np.errstate(divide="ignore"):
        fq = fv**q
    if not np.all(np.isfinite(fq)):
        raise PreconditionError("f must be positive when q < 0")

    base = wulff_shape(SupportVector(U, h))
    mesh = triangulate(base, default_target_h(base) if target_h is None else target_h)
    sol = solve_torsion(base, F, p, mesh)
    meas = lq_torsional_measure(base, F, p, q, sol)
    # base facets come in label order; map back to the facets of K
    order = np.array(base.labels)
    Spq = np.empty_like(h)
    Spq[order] = meas.S_pq
    predicted = float(fq @ Spq) / q

    def tau_at(s: float) -> float:
        ht = h**q + s * fq
        if np.any(ht <= 0):
            raise PreconditionError("h^q + t f^q must stay positive")
        body = wulff_shape(SupportVector(U, ht ** (1.0 / q)))
        return solve_torsion(body, F, p, morph(mesh, body), initial=sol.nodal_values).tau_volume

    d1 = (tau_at(t) - tau_at(-t)) / (2 * t)
    d2 = (tau_at(t / 2) - tau_at(-t / 2)) / t
    slope = (4 * d2 - d1) / 3
    scale = abs(predicted) if predicted != 0 else 1.0
    return DerivativeCheck(slope, predicted, abs(slope - predicted) / scale, t)
