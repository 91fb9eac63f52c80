"""Discrete L_q Minkowski problem for the anisotropic p-torsional measure.

Given atoms ``(u_k, alpha_k)`` the solvers look for a polygon ``K`` with
facet normals ``u_k`` and

* ``S_pq(K, u_k) = alpha_k`` when ``q > 1``;
* ``alpha_k = lambda S_pq(K, u_k)`` when ``0 < q < 1``.

Both minimise a scale-invariant objective over the support numbers
``h_k`` (parameterised by ``log h``) with BFGS and an Armijo line search.
The gradient of ``tau`` in ``h_k`` is the exact derivative of the discrete
energy: every iterate is solved on a morph of one stage mesh, and
:func:`~torsion_minkowski.pde.shape_gradient` is pulled back to the
support numbers.  A stage ends, and a fresh mesh is built, when the facet
structure changes or the morphed mesh degrades.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .anisotropy import AnisotropicNorm, dual_and_wulff
from .errors import (
    DegenerateFacet,
    EmptyInterior,
    ExcludedExponent,
    MeshFailure,
    NonConcentration,
    NonConcentrationDiagnostic,
    NonConvergence,
    PreconditionError,
)
from .geometry import (
    ConvexPolygon,
    SupportVector,
    as_direction,
    positively_spanning,
    wulff_shape,
)
from .measures import (
    homogeneity_degree,
    lq_torsional_measure,
    polya_szego_rhs,
    torsion_constant,
    torsional_rigidity,
)
from .mesh import TriangleMesh, morph, triangulate, vertex_pullback
from .pde import check_p, discrete_tau, shape_gradient, solve_torsion

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite sum of weighted point masses on the unit circle."""

    directions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.array(self.directions, dtype=float).reshape(-1, 2)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if len(d) != len(w):
            raise PreconditionError("one weight per direction required")
        if len(w) < 3:
            raise PreconditionError("a measure needs at least three atoms")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise PreconditionError("weights must be positive")
        d = np.array([as_direction(x) for x in d])
        if not positively_spanning(d):
            raise NonConcentration("atoms lie in a closed half-circle")
        d.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def concentration_margin(self, resolution: int = 4096) -> float:
        """``min_v sum_k alpha_k max(v . u_k, 0)`` over a grid plus the kinks."""
        t = 2 * np.pi * np.arange(resolution) / resolution
        V = np.column_stack([np.cos(t), np.sin(t)])
        U = self.directions
        kinks = np.vstack([U @ [[0, -1], [1, 0]], U @ [[0, 1], [-1, 0]]])
        V = np.vstack([V, kinks])
        return float((np.maximum(V @ U.T, 0.0) @ self.weights).min())

    def to_json(self) -> dict:
        return {
            "atoms": [
                {"direction": u.tolist(), "weight": float(a)} for u, a in zip(self.directions, self.weights)
            ]
        }

    @classmethod
    def from_json(cls, data: dict) -> "DiscreteMeasure":
        try:
            atoms = data["atoms"]
            U = [a["direction"] for a in atoms]
            w = [a["weight"] for a in atoms]
        except (KeyError, TypeError) as exc:
            raise PreconditionError("measure JSON needs 'atoms' with 'direction' and 'weight'") from exc
        return cls(np.asarray(U, dtype=float), np.asarray(w, dtype=float))


def excluded_exponent(p: float) -> float:
    return homogeneity_degree(p)


def check_q(q: float, p: float, regime: str) -> float:
    q = float(q)
    if regime == "q>1":
        if not q > 1:
            raise PreconditionError("this solver needs q > 1", q=q)
        if abs(q - excluded_exponent(p)) < 1e-9:
            raise ExcludedExponent("q equals p/(p-1)+n, where the rescaling breaks down", q=q, p=p)
    elif not 0 < q < 1:
        raise PreconditionError("this solver needs 0 < q < 1", q=q)
    return q


@dataclass(frozen=True)
class SolverConfig:
    cells_per_diameter: int = 60
    target_h: float | None = None
    tol: float = 1e-3
    max_iters: int = 200
    pde_tol: float = 1e-10
    max_log_step: float = 0.5
    diameter_guard: float = 1e3
    volume_check_every: int = 10
    remesh_quality: float = 0.5

    def mesh_size(self, K: ConvexPolygon) -> float:
        return self.target_h if self.target_h is not None else K.diameter / self.cells_per_diameter


@dataclass(frozen=True, eq=False)
class SolveOutcome:
    body: ConvexPolygon
    lam: float
    residuals: np.ndarray
    iterations: int
    objective_trace: list[float]
    support: np.ndarray
    p: float
    q: float
    first_order: np.ndarray
    stage_starts: tuple[int, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals))

    def to_json(self) -> dict:
        return {
            "vertices": self.body.vertices.tolist(),
            "lambda": self.lam,
            "residuals": self.residuals.tolist(),
            "iterations": self.iterations,
            "objective_trace": list(self.objective_trace),
            "support": self.support.tolist(),
            "p": self.p,
            "q": self.q,
            "first_order_residual": float(np.max(self.first_order)),
            "stage_starts": list(self.stage_starts),
        }


@dataclass(eq=False)
class _State:
    h: np.ndarray
    body: ConvexPolygon
    active: np.ndarray
    mesh: TriangleMesh
    u: np.ndarray
    tau: float
    dtau: np.ndarray
    new_stage: bool


class _Evaluator:
    """Body, torsion and ``d tau / d h`` for support numbers on the atoms."""

    def __init__(self, mu: DiscreteMeasure, F: AnisotropicNorm, p: float, cfg: SolverConfig):
        self.mu, self.F, self.p, self.cfg = mu, F, p, cfg
        self.mesh: TriangleMesh | None = None
        self.u: np.ndarray | None = None
        self.quality0 = 0.0
        self.solves = 0

    def __call__(self, h: np.ndarray) -> _State:
        body, active = wulff_shape(SupportVector(self.mu.directions, h), return_active=True)
        mesh = self._morphed(body)
        new_stage = mesh is None
        if new_stage:
            mesh = triangulate(body, self.cfg.mesh_size(body))
        sol = solve_torsion(
            mesh.polygon, self.F, self.p, mesh, tol=self.cfg.pde_tol, initial=None if new_stage else self.u
        )
        self.solves += 1
        tau = discrete_tau(sol)
        return _State(h, body, active, mesh, sol.nodal_values, tau, self._dtau(sol), new_stage)

    def _morphed(self, body: ConvexPolygon) -> TriangleMesh | None:
        if self.mesh is None or body.labels is None:
            return None
        if sorted(body.labels) != sorted(self.mesh.polygon.labels):
            return None
        try:
            mesh = morph(self.mesh, body)
        except MeshFailure:
            return None
        if mesh.min_quality < self.cfg.remesh_quality * self.quality0:
            return None
        return mesh

    def _dtau(self, sol) -> np.ndarray:
        mesh = sol.mesh
        K = mesh.polygon
        U = self.mu.directions
        R = -self.p / (self.p - 1.0) * vertex_pullback(mesh, shape_gradient(sol))
        lab = np.array(K.labels)
        prev = np.roll(lab, 1)
        out = np.zeros(len(U))
        for j in range(len(K)):
            # vertex j solves u_prev . v = h_prev, u_cur . v = h_cur
            Jinv = np.linalg.inv(np.array([U[prev[j]], U[lab[j]]]))
            out[prev[j]] += R[j] @ Jinv[:, 0]
            out[lab[j]] += R[j] @ Jinv[:, 1]
        return out

    def commit(self, state: _State) -> None:
        self.mesh = state.mesh
        self.u = state.u
        if state.new_stage:
            self.quality0 = state.mesh.min_quality


def translate_maximize(f: SupportVector, mu: DiscreteMeasure, q: float, *, tol: float = 1e-13, max_iters: int = 100):
    """Maximise ``Phi(xi) = sum_k alpha_k (f_k - xi . u_k)^q`` over the body ``[f]``.

    Damped Newton on the strictly concave ``Phi``; steps are shortened to
    stay strictly inside.  Returns ``(xi, Phi(xi))``.  For ``q`` near 1 the
    maximiser can sit closer to a facet than double precision resolves; the
    last strictly feasible iterate is returned then.
    """
    if not 0 < q < 1:
        raise PreconditionError("translate maximisation needs 0 < q < 1")
    U = mu.directions
    a = mu.weights
    fv = np.asarray(f.values, dtype=float)
    if fv.shape != a.shape:
        raise PreconditionError("f must have one value per atom")
    body = wulff_shape(SupportVector(U, fv))
    xi = body.centroid
    s = fv - U @ xi
    if body.area <= 0 or np.any(s <= 0):
        raise EmptyInterior("the body of f has empty interior")

    def phi(s):
        return float(a @ s**q)

    val = phi(s)
    stalled = 0
    for _ in range(max_iters):
        w = a * s ** (q - 1)
        g = -q * (w @ U)
        if np.linalg.norm(g) <= tol * q * w.sum():
            return xi, val
        H = q * (q - 1) * np.einsum("k,ki,kj->ij", a * s ** (q - 2), U, U)
        d = -np.linalg.solve(H, g)
        if not np.all(np.isfinite(d)):
            # slacks at the underflow limit; nothing left to resolve
            return xi, val
        Ud = U @ d
        # largest step keeping every slack positive
        t = 1.0
        pos = Ud > 0
        if pos.any():
            t = min(1.0, 0.99 * float((s[pos] / Ud[pos]).min()))
        while t >= 1e-12:
            s_new = s - t * Ud
            if np.all(s_new > 0) and phi(s_new) >= val + 1e-4 * t * float(g @ d):
                break
            t *= 0.5
        else:
            # no ascent left within roundoff
            return xi, val
        xi_new = xi + t * d
        s_new = fv - U @ xi_new
        if not np.all(s_new > 0):
            # the maximiser is closer to a facet than roundoff resolves
            return xi, val
        step = float(np.linalg.norm(xi_new - xi))
        xi, s = xi_new, s_new
        val = phi(s)
        # maximiser hugging a facet: the gradient floor is set by roundoff in xi
        stalled = stalled + 1 if step <= 4 * np.finfo(float).eps * (1 + np.linalg.norm(xi)) else 0
        if stalled >= 2:
            return xi, val
    raise NonConvergence("translate maximisation did not converge", iterations=max_iters)


@dataclass
class _Eval:
    x: np.ndarray
    value: float
    grad: np.ndarray
    first_order: np.ndarray
    state: _State
    extra: dict


def _descend(objective, x0: np.ndarray, cfg: SolverConfig, evaluator: _Evaluator, checks):
    """BFGS in ``log h`` with Armijo backtracking.

    Returns the converged evaluation, iteration count, objective trace and
    the trace indices where a new mesh stage began.
    """
    cur = objective(x0)
    evaluator.commit(cur.state)
    trace = [cur.value]
    stages = [0]
    Hinv = None
    for it in range(cfg.max_iters + 1):
        worst = float(cur.first_order.max())
        log.debug("outer it=%d value=%.12e residual=%.3e", it, cur.value, worst)
        checks(it, cur)
        if worst < cfg.tol:
            return cur, it, trace, stages
        if it == cfg.max_iters:
            break
        g = cur.grad
        d = -(Hinv @ g) if Hinv is not None else -g / max(np.abs(g).max(), 1e-300) * 0.1
        slope = float(g @ d)
        if slope >= 0:
            Hinv = None
            d = -g / max(np.abs(g).max(), 1e-300) * 0.1
            slope = float(g @ d)
        big = np.abs(d).max()
        if big > cfg.max_log_step:
            d *= cfg.max_log_step / big
            slope = float(g @ d)
        t = 1.0
        trial = None
        for _ in range(40):
            try:
                cand = objective(cur.x + t * d)
            except (MeshFailure, NonConvergence, PreconditionError) as exc:
                log.debug("trial rejected: %s", exc)
                cand = None
            if cand is not None and cand.value <= cur.value + 1e-4 * t * slope:
                trial = cand
                break
            t *= 0.5
        if trial is None:
            raise NonConvergence("outer line search failed", iterations=it, residual=worst)
        s = trial.x - cur.x
        y = trial.grad - g
        sy = float(s @ y)
        if sy > 1e-14 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            if Hinv is None:
                Hinv = np.eye(len(s)) * sy / float(y @ y)
            rho = 1.0 / sy
            V = np.eye(len(s)) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        evaluator.commit(trial.state)
        if trial.state.new_stage:
            stages.append(len(trace))
            Hinv = None
        cur = trial
        if not cur.state.active.all():
            # shrink slack atoms onto the body; only lowers the objective
            hb = np.log((cur.state.body.vertices @ evaluator.mu.directions.T).max(axis=0))
            x = np.where(cur.state.active, cur.x, np.minimum(cur.x, hb))
            if np.any(x != cur.x):
                cur = objective(x)
                evaluator.commit(cur.state)
                Hinv = None
        trace.append(cur.value)
    raise NonConvergence(
        "outer iteration cap reached", iterations=cfg.max_iters, residual=float(cur.first_order.max())
    )


def _guards(mu, F, p, cfg, diag):
    """Diameter and volume diagnostics, evaluated on iterates scaled to ``tau = |mu|``."""
    kappa = dual_and_wulff(F).kappa
    d = homogeneity_degree(p)
    state0 = {}
    diag.setdefault("volume_checks", [])

    def check(it, cur):
        st = cur.state
        s = (mu.total / st.tau) ** (1.0 / d)
        diam = s * st.body.diameter
        if "diam" not in state0:
            state0["diam"] = diam
        if diam > cfg.diameter_guard * state0["diam"]:
            raise NonConcentrationDiagnostic("iterate diameter escaped the guard", iteration=it, diameter=diam)
        if it % cfg.volume_check_every == 0:
            vol = s**2 * st.body.area
            # invert the symmetrisation bound tau <= C V^e for the volume
            e = (2 * (p - 1) + p) / (2 * (p - 1))
            bound = (mu.total / polya_szego_rhs(1.0, p, kappa)) ** (1.0 / e)
            diag["volume_checks"].append({"iteration": it, "volume": vol, "bound": bound, "ok": vol >= bound * (1 - 5e-2)})

    return check


def _atom_facets(body: ConvexPolygon, n_atoms: int) -> np.ndarray:
    """Facet index of each atom, ``-1`` for atoms without a facet."""
    idx = -np.ones(n_atoms, dtype=int)
    for j, k in enumerate(body.labels):
        idx[k] = j
    return idx


def _require_full_facets(body: ConvexPolygon, n_atoms: int) -> None:
    idx = _atom_facets(body, n_atoms)
    missing = np.flatnonzero(idx < 0)
    if len(missing):
        raise DegenerateFacet("an atom has no facet at convergence", atom=int(missing[0]))
    short = body.lengths < 1e-8 * body.perimeter
    if short.any():
        raise DegenerateFacet("an atom's facet vanished", atom=int(body.labels[int(np.argmax(short))]))


def objective_q_gt_1(h, mu: DiscreteMeasure, F: AnisotropicNorm, p: float, q: float, cfg: SolverConfig | None = None) -> float:
    """``(1/q) log sum alpha h^q - c log tau([h])`` at the default resolution."""
    p = check_p(p)
    q = check_q(q, p, "q>1")
    cfg = cfg or SolverConfig()
    hv = np.asarray(h.values if isinstance(h, SupportVector) else h, dtype=float)
    st = _Evaluator(mu, F, p, cfg)(hv)
    return float(np.log(mu.weights @ hv**q) / q - torsion_constant(p) * np.log(st.tau))


def solve_q_gt_1(
    mu: DiscreteMeasure, F: AnisotropicNorm, p: float, q: float, cfg: SolverConfig | None = None
) -> SolveOutcome:
    p = check_p(p)
    q = check_q(q, p, "q>1")
    cfg = cfg or SolverConfig()
    a = mu.weights
    c = torsion_constant(p)
    ev = _Evaluator(mu, F, p, cfg)

    def objective(x):
        h = np.exp(x)
        st = ev(h)
        A = float(a @ h**q)
        hdt = h * st.dtau
        grad = a * h**q / A - c * hdt / st.tau
        fo = np.abs(c * hdt * A / (st.tau * a * h**q) - 1.0)
        return _Eval(x, float(np.log(A) / q - c * np.log(st.tau)), grad, fo, st, {"A": A})

    diag: dict = {}
    cur, it, trace, stages = _descend(objective, np.zeros(len(a)), cfg, ev, _guards(mu, F, p, cfg, diag))
    st = cur.state
    _require_full_facets(st.body, len(a))
    # dilate so that S_pq(K, .) has total mass matching mu
    s = (c * cur.extra["A"] / st.tau) ** (1.0 / (homogeneity_degree(p) - q))
    body = st.body.scale(s)
    residuals = _measure_residuals(body, mu, F, p, q, 1.0, cfg)
    diag["pde_solves"] = ev.solves
    return SolveOutcome(body, 1.0, residuals, it, trace, s * st.h, p, q, cur.first_order, tuple(stages), diag)


def solve_0_lt_q_lt_1(
    mu: DiscreteMeasure, F: AnisotropicNorm, p: float, q: float, cfg: SolverConfig | None = None
) -> SolveOutcome:
    p = check_p(p)
    q = check_q(q, p, "0<q<1")
    cfg = cfg or SolverConfig()
    a = mu.weights
    U = mu.directions
    c = torsion_constant(p)
    ev = _Evaluator(mu, F, p, cfg)

    def objective(x):
        h = np.exp(x)
        xi, phi = translate_maximize(SupportVector(U, h), mu, q)
        st = ev(h)
        s = h - U @ xi
        hdt = h * st.dtau
        grad = h * a * s ** (q - 1) / phi - c * hdt / st.tau
        fo = np.abs(c * st.dtau * phi / (st.tau * a * s ** (q - 1)) - 1.0)
        return _Eval(x, float(np.log(phi) / q - c * np.log(st.tau)), grad, fo, st, {"xi": xi})

    diag: dict = {}
    cur, it, trace, stages = _descend(objective, np.zeros(len(a)), cfg, ev, _guards(mu, F, p, cfg, diag))
    st = cur.state
    _require_full_facets(st.body, len(a))
    # recentre at the maximising translate, then normalise tau to one
    xi = cur.extra["xi"]
    h = st.h - U @ xi
    h = h * st.tau ** (-1.0 / homogeneity_degree(p))
    xi2, _ = translate_maximize(SupportVector(U, h), mu, q)
    h = h - U @ xi2
    body = wulff_shape(SupportVector(U, h))
    lam = c * float(a @ h**q)
    residuals = _measure_residuals(body, mu, F, p, q, lam, cfg)
    diag["pde_solves"] = ev.solves
    return SolveOutcome(body, lam, residuals, it, trace, h, p, q, cur.first_order, tuple(stages), diag)


def solve_minkowski(
    mu: DiscreteMeasure, F: AnisotropicNorm, p: float, q: float, cfg: SolverConfig | None = None
) -> SolveOutcome:
    """Dispatch on ``q``: ``q > 1`` or ``0 < q < 1``."""
    q = float(q)
    if q > 1:
        return solve_q_gt_1(mu, F, p, q, cfg)
    if 0 < q < 1:
        return solve_0_lt_q_lt_1(mu, F, p, q, cfg)
    raise PreconditionError("q must satisfy q > 1 or 0 < q < 1", q=q)


def _facet_measure(body, F, p, q, cells):
    mesh = triangulate(body, body.diameter / cells)
    sol = solve_torsion(body, F, p, mesh)
    return lq_torsional_measure(body, F, p, q, sol), sol


def _measure_residuals(body, mu, F, p, q, lam, cfg, cells=None):
    meas, _ = _facet_measure(body, F, p, q, cells or cfg.cells_per_diameter)
    idx = _atom_facets(body, len(mu))
    Spq = np.where(idx >= 0, meas.S_pq[idx], 0.0)
    return np.abs(mu.weights - lam * Spq) / mu.weights


@dataclass(frozen=True)
class VerifyReport:
    residuals: np.ndarray
    lam: float
    polya_szego: bool
    tau_gap: float
    first_order: float
    cells_per_diameter: int

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max())

    def to_json(self) -> dict:
        return {
            "residuals": self.residuals.tolist(),
            "max_residual": self.max_residual,
            "lambda": self.lam,
            "polya_szego": self.polya_szego,
            "tau_gap": self.tau_gap,
            "first_order": self.first_order,
            "cells_per_diameter": self.cells_per_diameter,
        }


def verify_solution(
    outcome: SolveOutcome,
    mu: DiscreteMeasure,
    F: AnisotropicNorm,
    p: float,
    q: float,
    resolution: int | None = None,
) -> VerifyReport:
    """Recompute the measure residuals of ``outcome`` on a finer mesh.

    ``resolution`` counts cells across the diameter (default: twice the
    solver default).
    """
    p = check_p(p)
    cells = resolution or 2 * SolverConfig().cells_per_diameter
    body = outcome.body
    meas, sol = _facet_measure(body, F, p, q, cells)
    idx = _atom_facets(body, len(mu))
    Spq = np.where(idx >= 0, meas.S_pq[idx], 0.0)
    res = np.abs(mu.weights - outcome.lam * Spq) / mu.weights
    rep = torsional_rigidity(body, F, p, sol)
    kappa = dual_and_wulff(F).kappa
    ps = rep.tau_volume <= polya_szego_rhs(body.area, p, kappa) * 1.05
    h = np.asarray(outcome.support, dtype=float)
    fo = float(np.linalg.norm((mu.weights * h ** (q - 1)) @ mu.directions)) / mu.total
    return VerifyReport(res, outcome.lam, bool(ps), rep.relative_gap, fo, cells)
