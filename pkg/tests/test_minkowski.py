import dataclasses
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from torsion_minkowski.anisotropy import EllipseNorm, EuclideanNorm
from torsion_minkowski.errors import ExcludedExponent, NonConcentration, PreconditionError
from torsion_minkowski.fixtures import random_polygon
from torsion_minkowski.geometry import (
    ConvexPolygon,
    SupportVector,
    aligned_hausdorff_distance,
    regular_polygon,
    support_function,
    wulff_shape,
)
from torsion_minkowski.measures import lq_torsional_measure, solve, torsion_constant
from torsion_minkowski.minkowski import (
    DiscreteMeasure,
    SolverConfig,
    check_q,
    excluded_exponent,
    objective_q_gt_1,
    solve_0_lt_q_lt_1,
    solve_minkowski,
    solve_q_gt_1,
    translate_maximize,
    verify_solution,
)

EUCLID = EuclideanNorm()
AXES = np.array([[1.0, 0], [0, 1], [-1, 0], [0, -1]])


def forward_measure(K, F, p, q, cells=60):
    """``S_pq(K, .)`` as a discrete measure on the facet normals of ``K``."""
    sol = solve(K, F, p, K.diameter / cells)
    return DiscreteMeasure(K.normals, lq_torsional_measure(K, F, p, q, sol).S_pq)


def regular_atoms(N, phase=0.0):
    t = phase + 2 * np.pi * np.arange(N) / N
    return np.column_stack([np.cos(t), np.sin(t)])


def test_measure_validation():
    with pytest.raises(PreconditionError):
        DiscreteMeasure(AXES[:2], [1, 1])
    with pytest.raises(PreconditionError):
        DiscreteMeasure(AXES, [1, 1, 0, 1])
    with pytest.raises(NonConcentration):
        DiscreteMeasure(regular_atoms(8)[:5], np.ones(5))  # closed half-circle
    with pytest.raises(NonConcentration):
        DiscreteMeasure([[1, 0], [0, 1], [math.sqrt(0.5), math.sqrt(0.5)]], np.ones(3))
    with pytest.raises(PreconditionError):
        DiscreteMeasure(AXES * 3, np.ones(4))
    mu = DiscreteMeasure(AXES, [1, 2, 3, 4])
    assert mu.total == 10
    assert mu.concentration_margin() > 0


def test_measure_json_roundtrip():
    mu = DiscreteMeasure(regular_atoms(7, 0.3), np.arange(1, 8) / 3)
    back = DiscreteMeasure.from_json(mu.to_json())
    np.testing.assert_array_equal(back.directions, mu.directions)
    np.testing.assert_array_equal(back.weights, mu.weights)
    with pytest.raises(PreconditionError):
        DiscreteMeasure.from_json({"atoms": [{"dir": [1, 0]}]})


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_excluded_exponent(p):
    q = excluded_exponent(p)
    assert q == pytest.approx(p / (p - 1) + 2)
    mu = DiscreteMeasure(AXES, np.ones(4))
    with pytest.raises(ExcludedExponent):
        solve_q_gt_1(mu, EUCLID, p, q)
    with pytest.raises(ExcludedExponent):
        check_q(q + 5e-10, p, "q>1")
    assert check_q(q + 1e-6, p, "q>1") == q + 1e-6


def test_regime_errors():
    mu = DiscreteMeasure(AXES, np.ones(4))
    for q in (1.0, 0.0, -1.0):
        with pytest.raises(PreconditionError):
            solve_minkowski(mu, EUCLID, 2.0, q)
    with pytest.raises(PreconditionError):
        solve_0_lt_q_lt_1(mu, EUCLID, 2.0, 2.0)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10**5), st.floats(0.3, 3.0))
def test_objective_scale_invariance(seed, t):
    rng = np.random.default_rng(seed)
    mu = DiscreteMeasure(regular_atoms(6, rng.uniform(0, 1)), rng.uniform(0.5, 2, 6))
    h = rng.uniform(0.8, 1.2, 6)
    a = objective_q_gt_1(h, mu, EUCLID, 2.0, 2.5)
    b = objective_q_gt_1(t * h, mu, EUCLID, 2.0, 2.5)
    assert abs(a - b) <= 1e-3


def test_objective_shrink_inequality():
    U = np.vstack([AXES, [[1 / math.sqrt(2), 1 / math.sqrt(2)]]])
    mu = DiscreteMeasure(U, np.ones(5))
    h = np.array([1, 1, 1, 1, 2.0])
    shrunk = support_function(wulff_shape(SupportVector(U, h)), U)
    assert shrunk[4] == pytest.approx(math.sqrt(2))
    assert objective_q_gt_1(h, mu, EUCLID, 2.0, 2.0) > objective_q_gt_1(shrunk, mu, EUCLID, 2.0, 2.0)


def test_objective_is_deterministic():
    mu = DiscreteMeasure(AXES, np.ones(4))
    vals = {objective_q_gt_1(np.ones(4), mu, EUCLID, 2.0, 2.0) for _ in range(3)}
    assert len(vals) == 1 and math.isfinite(vals.pop())


def test_translate_maximize_symmetric():
    for N in (3, 5, 8):
        mu = DiscreteMeasure(regular_atoms(N, 0.2), np.ones(N))
        xi, _ = translate_maximize(SupportVector(mu.directions, np.ones(N)), mu, 0.5)
        assert np.linalg.norm(xi) < 1e-8


def _random_translate_problem(seed):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(4, 10))
    t = np.sort(rng.uniform(0, 2 * np.pi, N))
    U = np.vstack([np.column_stack([np.cos(t), np.sin(t)]), regular_atoms(3, rng.uniform(0, 2))])
    mu = DiscreteMeasure(U, rng.uniform(0.3, 2, len(U)))
    return rng, U, mu, rng.uniform(0.8, 1.5, len(U))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**5), st.floats(0.1, 0.9))
def test_translate_maximize_equivariance(seed, q):
    rng, U, mu, f = _random_translate_problem(seed)
    xi, val = translate_maximize(SupportVector(U, f), mu, q)
    x0 = rng.normal(size=2) * 0.3
    assume(np.all(f + U @ x0 > 0))  # the shifted values must stay a support vector
    xi2, val2 = translate_maximize(SupportVector(U, f + U @ x0), mu, q)
    np.testing.assert_allclose(xi2, xi + x0, atol=1e-8)
    assert val2 == pytest.approx(val, rel=1e-10)
    # stationarity at the maximiser, up to what a few ulps in xi can resolve
    s = f - U @ xi
    grad = (mu.weights * s ** (q - 1)) @ U
    ulps = 4 * np.finfo(float).eps * (1 + np.linalg.norm(xi))
    floor = float(((1 - q) * mu.weights * s ** (q - 1) * ulps / s).max())
    assert np.linalg.norm(grad) < max(1e-8 * mu.total, floor)


# Second differences of Phi need the maximiser well inside the body; as q -> 1
# it can sit within 1e-9 of a facet, so the curvature check stops at q = 0.6.
@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**5), st.floats(0.1, 0.6))
def test_translate_maximize_hessian_negative_definite(seed, q):
    _, U, mu, f = _random_translate_problem(seed)
    xi, _ = translate_maximize(SupportVector(U, f), mu, q)

    def phi(x):
        return float(mu.weights @ (f - U @ x) ** q)

    d = 1e-2 * float((f - U @ xi).min())
    H = np.array([[(phi(xi + d * (ei + ej)) - phi(xi + d * (ei - ej)) - phi(xi - d * (ei - ej)) + phi(xi - d * (ei + ej)))
                   / (4 * d * d) for ej in np.eye(2)] for ei in np.eye(2)])
    assert np.all(np.linalg.eigvalsh(H) < 0)


def test_q_gt_1_symmetric_atoms_give_regular_polygon():
    N = 5
    mu = DiscreteMeasure(regular_atoms(N, 0.1), np.full(N, 0.4))
    out = solve_q_gt_1(mu, EUCLID, 2.0, 2.0)
    assert out.lam == 1.0
    r = np.linalg.norm(out.body.vertices - out.body.centroid, axis=1)
    assert r.max() / r.min() - 1 < 1e-2
    assert np.ptp(out.residuals) < 1e-2
    assert out.max_residual < 2e-2


@pytest.mark.parametrize("q", [2.0, 3.0, 6.0])
def test_q_gt_1_round_trip_rectangle(q):
    K = ConvexPolygon([[-1.5, -0.5], [1.5, -0.5], [1.5, 0.5], [-1.5, 0.5]])
    mu = forward_measure(K, EUCLID, 2.0, q)
    out = solve_q_gt_1(mu, EUCLID, 2.0, q)
    assert out.max_residual < 2e-2
    dist, _ = aligned_hausdorff_distance(out.body, K)
    assert dist < 2e-2 * K.diameter
    assert out.iterations <= SolverConfig().max_iters


def test_q_gt_1_anisotropic_round_trip():
    F = EllipseNorm(np.array([[2.0, 0.5], [0.5, 1.0]]))
    K = ConvexPolygon([[-1.0, -0.6], [1.2, -0.4], [0.1, 1.0]])
    mu = forward_measure(K, F, 3.0, 1.5)
    out = solve_q_gt_1(mu, F, 3.0, 1.5)
    assert out.max_residual < 2e-2
    assert aligned_hausdorff_distance(out.body, K)[0] < 2e-2 * K.diameter


def _monotone_within_stages(out):
    trace = np.asarray(out.objective_trace)
    bounds = list(out.stage_starts) + [len(trace)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        seg = trace[a:b]
        assert np.all(np.diff(seg) <= 1e-12 * np.abs(seg[:-1]).max())


def test_descent_traces_are_monotone():
    K = ConvexPolygon([[-2, -0.5], [2, -0.5], [2, 0.5], [-2, 0.5]])
    for q in (2.0, 0.5):
        out = solve_minkowski(forward_measure(K, EUCLID, 2.0, q), EUCLID, 2.0, q)
        assert len(out.objective_trace) == out.iterations + 1
        _monotone_within_stages(out)


def test_q_lt_1_hexagon_round_trip():
    H = regular_polygon(6)
    q = 0.5
    mu = forward_measure(H, EUCLID, 2.0, q)
    out = solve_0_lt_q_lt_1(mu, EUCLID, 2.0, q)
    assert out.max_residual < 3e-2
    # lambda from its closed form
    lam = torsion_constant(2.0) * float(mu.weights @ out.support**q)
    assert abs(out.lam - lam) <= 1e-12 * lam
    # recentred: the maximising translate sits at the origin
    xi, _ = translate_maximize(SupportVector(mu.directions, out.support), mu, q)
    assert np.linalg.norm(xi) < 1e-6
    fo = (mu.weights * out.support ** (q - 1)) @ mu.directions
    assert np.linalg.norm(fo) < 1e-3 * mu.total
    # tau normalised to one and the body a dilate of the hexagon
    assert solve(out.body, EUCLID, 2.0).tau_volume == pytest.approx(1.0, rel=2e-3)
    s = math.sqrt(out.body.area / H.area)
    assert aligned_hausdorff_distance(out.body, H.scale(s))[0] < 3e-2 * out.body.diameter


def test_q_lt_1_rectangle():
    K = ConvexPolygon([[-2, -0.5], [2, -0.5], [2, 0.5], [-2, 0.5]])
    mu = forward_measure(K, EUCLID, 2.0, 0.5)
    out = solve_0_lt_q_lt_1(mu, EUCLID, 2.0, 0.5)
    assert out.max_residual < 3e-2
    s = math.sqrt(out.body.area / K.area)
    assert aligned_hausdorff_distance(out.body, K.scale(s))[0] < 3e-2 * out.body.diameter


@pytest.mark.parametrize("q", [2.0, 0.8, 0.5])
def test_round_trip_asymmetric_off_centre(q):
    # no symmetry, origin away from any centre: the start is far from optimal
    K = random_polygon(9, 3).translate([0.2, -0.1])
    mu = forward_measure(K, EUCLID, 2.0, q)
    out = solve_minkowski(mu, EUCLID, 2.0, q)
    assert out.iterations > 3
    assert out.max_residual < (2e-2 if q > 1 else 3e-2)
    s = math.sqrt(out.body.area / K.area)
    assert aligned_hausdorff_distance(out.body, K.scale(s))[0] < 2e-2 * out.body.diameter
    if q < 1:
        fo = (mu.weights * out.support ** (q - 1)) @ mu.directions
        assert np.linalg.norm(fo) < 1e-3 * mu.total


def test_outcome_json():
    mu = DiscreteMeasure(AXES, np.ones(4))
    out = solve_minkowski(mu, EUCLID, 2.0, 2.0)
    doc = out.to_json()
    assert {"vertices", "lambda", "residuals", "iterations", "objective_trace"} <= set(doc)
    assert doc["lambda"] == 1.0
    again = solve_minkowski(mu, EUCLID, 2.0, 2.0).to_json()
    assert again == doc


def test_verify_solution():
    mu = DiscreteMeasure(AXES, np.ones(4))
    out = solve_q_gt_1(mu, EUCLID, 2.0, 2.0)
    rep = verify_solution(out, mu, EUCLID, 2.0, 2.0)
    assert rep.lam == 1.0
    assert rep.polya_szego
    assert rep.max_residual < 2e-2
    assert rep.cells_per_diameter == 120
    # inflate one support value by 10%
    h = out.support.copy()
    h[1] *= 1.1
    bad = dataclasses.replace(out, body=wulff_shape(SupportVector(mu.directions, h)), support=h)
    rep_bad = verify_solution(bad, mu, EUCLID, 2.0, 2.0)
    assert rep_bad.residuals[1] > 5e-2


@pytest.mark.slow
def test_verify_residuals_shrink_with_resolution():
    K = ConvexPolygon([[-1.5, -0.5], [1.5, -0.5], [1.5, 0.5], [-1.5, 0.5]])
    mu = forward_measure(K, EUCLID, 2.0, 2.0, cells=120)
    coarse = solve_q_gt_1(mu, EUCLID, 2.0, 2.0, SolverConfig(cells_per_diameter=30))
    fine = solve_q_gt_1(mu, EUCLID, 2.0, 2.0, SolverConfig(cells_per_diameter=60))
    r_coarse = verify_solution(coarse, mu, EUCLID, 2.0, 2.0, 120).max_residual
    r_fine = verify_solution(fine, mu, EUCLID, 2.0, 2.0, 120).max_residual
    assert r_fine < r_coarse
