from dataclasses import replace

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from geovortex.fieldgrid import Grid2D, OutOfDomain, SymTensorField
from geovortex.ingest import analytic_flow, polar_metric_tensor
from geovortex.nullgeo import (ClosedCurve, DegenerateMetric, GeodesicState, MetricFamily, OrbitOptions,
                               SingularDenominator, admissible, alpha_invariance_check, find_closed_orbits,
                               first_integral, hamiltonian_orbit, hamiltonian_rhs, null_residual, phi_prime,
                               search_closed_orbits, seed_points)

# --------------------------------------------------------------------------
# symbolic oracles, independent of the package code
#
# On the null set q(x, phi) = <e_phi, A(x) e_phi> = 0 a null-geodesic keeps
# q = 0, so d/ds q(x(s), phi(s)) = grad_x q . e_phi + dq/dphi phi' = 0.
# That gives phi' = -(grad_x q . e_phi) / (dq/dphi) without the package's
# closed form.

x1s, x2s, ph = sp.symbols("x1 x2 phi", real=True)


def _sym_turning_rate(A):
    e = sp.Matrix([sp.cos(ph), sp.sin(ph)])
    q = (e.T * A * e)[0]
    dq_dx = sp.diff(q, x1s) * e[0] + sp.diff(q, x2s) * e[1]
    return sp.simplify(-dq_dx / sp.diff(q, ph))


A_LIN = sp.Matrix([[x1s, 0], [0, 1]])
PP_LIN = _sym_turning_rate(A_LIN)


def _polar_sym():
    r = sp.sqrt(x1s**2 + x2s**2)
    Q = sp.Matrix([[x1s / r, -x2s / r], [x2s / r, x1s / r]])
    return Q * sp.Matrix([[1, 1], [1, r - 1]]) * Q.T


def _field(fun, grid):
    X1, X2 = grid.mesh()
    return SymTensorField(grid, *fun(X1, X2))


LIN_GRID = Grid2D(-1.0, 1.5, -1.0, 1.0, 26, 21)
LIN = MetricFamily(_field(lambda a, b: (a, 0 * a, 1 + 0 * a), LIN_GRID))


def test_symbolic_oracle_value():
    val = PP_LIN.subs({x1s: 0, x2s: 0, ph: sp.pi / 4})
    assert sp.simplify(val + 1 / (2 * sp.sqrt(2))) == 0
    assert sp.simplify(PP_LIN - (-sp.cos(ph) ** 2 / (2 * sp.sin(ph) * (1 - x1s)))) == 0


def test_phi_prime_matches_symbolic_oracle():
    assert phi_prime(LIN, (0.0, 0.0), np.pi / 4) == pytest.approx(-1 / (2 * np.sqrt(2)), abs=1e-12)
    f = sp.lambdify((x1s, x2s, ph), PP_LIN, "numpy")
    rng = np.random.default_rng(3)
    x = np.stack([rng.uniform(-0.9, 0.7, 50), rng.uniform(-0.9, 0.9, 50)], axis=-1)
    phi = rng.uniform(0.2, 1.3, 50)
    assert np.allclose(phi_prime(LIN, x, phi), f(x[:, 0], x[:, 1], phi), rtol=0, atol=1e-11)


def test_singular_denominator_near_x1_equal_one():
    with pytest.raises(SingularDenominator):
        phi_prime(LIN, (1.0, 0.2), np.pi / 4)
    assert not admissible(LIN, [(1.0, 0.2)], np.pi / 4)[0]
    assert admissible(LIN, [(0.5, 0.2)], np.pi / 4)[0]


def test_constant_metric_turning_rate_zero():
    A = _field(lambda a, b: (2 + 0 * a, 0.3 + 0 * a, -1 + 0 * a), LIN_GRID)
    m = MetricFamily(A)
    assert phi_prime(m, (0.1, -0.2), 0.7) == 0.0
    res = alpha_invariance_check(m, [(0.1, -0.2, 0.7), (0.3, 0.3, 2.0)], alphas=[-4.0, 9.0])
    assert res and res.max_error == 0.0 and res.n_checked == 2


def test_out_of_domain():
    with pytest.raises(OutOfDomain):
        phi_prime(LIN, (3.0, 0.0), 0.5)


def test_alpha_invariance_linear_example():
    rng = np.random.default_rng(7)
    s = np.stack([rng.uniform(-0.9, 0.8, 100), rng.uniform(-0.9, 0.9, 100), rng.uniform(0, 2 * np.pi, 100)], -1)
    res = alpha_invariance_check(LIN, s, alphas=3.7)
    assert res.ok and res.max_error <= 1e-12 and res.n_checked > 90


def test_inadmissible_sample_is_skipped():
    # at x1 = 1 the denominator vanishes for both A and A - alpha I
    res = alpha_invariance_check(LIN, [(1.0, 0.0, np.pi / 4), (0.0, 0.0, np.pi / 4)], alphas=2.0)
    assert res.ok and res.n_checked == 1


@given(alpha=st.floats(-10, 10), px=st.floats(-0.9, 0.8), py=st.floats(-0.9, 0.9), phi=st.floats(0, 2 * np.pi))
def test_alpha_invariance_property(alpha, px, py, phi):
    res = alpha_invariance_check(LIN, [(px, py, phi)], alphas=alpha)
    assert res.ok


def test_parameter_mapping():
    A = LIN.A
    assert MetricFamily(A, "lcs_lambda_squared").alpha(1.1) == pytest.approx(1.21)
    assert MetricFamily(A, "oecs_mu").alpha(-0.3) == -0.3
    with pytest.raises(ValueError):
        MetricFamily(A, "other")


# --------------------------------------------------------------------------
# seeds


def test_seed_lines():
    g = Grid2D(-1.0, 1.0, -1.0, 1.0, 41, 41)
    # a12 is nonzero so that horizontal directions are admissible
    m = MetricFamily(_field(lambda a, b: (1 + a * a, 0.3 + 0 * a, 2 + 0 * a), g))
    seeds = seed_points(m, 1.25, 0.0)
    assert seeds.status == "ok" and len(seeds) > 10
    assert np.allclose(np.abs(seeds.points[:, 0]), 0.5, atol=1e-10)
    assert np.any(seeds.points[:, 0] > 0) and np.any(seeds.points[:, 0] < 0)


def test_seed_inadmissible_when_horizontal_direction_singular():
    g = Grid2D(-1.0, 1.0, -1.0, 1.0, 41, 41)
    m = MetricFamily(_field(lambda a, b: (1 + a * a, 0 * a, 2 + 0 * a), g))
    seeds = seed_points(m, 1.25, 0.0)
    assert len(seeds) == 0 and seeds.status == "EmptySeedSet" and seeds.dropped["singular"] > 0


def test_empty_seed_set_below_minimum():
    g = Grid2D(-1.0, 1.0, -1.0, 1.0, 41, 41)
    m = MetricFamily(_field(lambda a, b: (1 + a * a, 0.3 + 0 * a, 2 + 0 * a), g))
    assert seed_points(m, 0.5, 0.0).status == "EmptySeedSet"


def test_seed_argument_checks():
    with pytest.raises(ValueError):
        seed_points(LIN, 0.0, 7.0)
    with pytest.raises(ValueError):
        seed_points(LIN, 0.0, 0.0, stride=-1.0)


def test_degenerate_metric_status():
    g = Grid2D(-1.0, 1.0, -1.0, 1.0, 11, 11)
    one = np.ones(g.shape)
    m = MetricFamily(SymTensorField(g, one, 0 * one, one))
    assert seed_points(m, 1.0).status == "DegenerateMetric"
    res = search_closed_orbits(m, 1.0)
    assert res.curves == [] and res.seeds.status == "DegenerateMetric"


# --------------------------------------------------------------------------
# polar demo metric


def test_unit_circle_in_null_set_symbolically():
    A = _polar_sym()
    t = sp.symbols("t", real=True)
    on = {x1s: sp.cos(t), x2s: sp.sin(t)}
    e = sp.Matrix([-sp.sin(t), sp.cos(t)])
    q = sp.simplify((e.T * A.subs(on) * e)[0])
    assert q == 0
    # the circle's curvature 1 matches the turning rate along it
    pp = _sym_turning_rate(A)
    for tv in (sp.Rational(1, 3), sp.Rational(5, 4), 2):
        val = pp.subs({x1s: sp.cos(tv), x2s: sp.sin(tv), ph: tv + sp.pi / 2})
        assert abs(float(sp.N(val, 30)) - 1.0) < 1e-25


def test_polar_tensor_matches_symbolic():
    A = _polar_sym()
    f = sp.lambdify((x1s, x2s), [A[0, 0], A[0, 1], A[1, 1]], "numpy")
    rng = np.random.default_rng(1)
    x = rng.uniform(-2, 2, (20, 2))
    ref = f(x[:, 0], x[:, 1])
    got = polar_metric_tensor(x[:, 0], x[:, 1])
    for a, b in zip(got, ref):
        assert np.allclose(a, b, rtol=0, atol=1e-14)


@pytest.fixture(scope="module")
def polar():
    m = MetricFamily(analytic_flow("polar_metric_demo"))
    return m, search_closed_orbits(m, 0.0, trace=True)


def test_polar_seeds_near_poles(polar):
    m, res = polar
    pts = res.seeds.points
    for pole in ((0.0, 1.0), (0.0, -1.0)):
        assert np.min(np.linalg.norm(pts - pole, axis=1)) <= m.grid.spacing


def test_polar_unit_circle_found(polar):
    m, res = polar
    close = [c for c in res.curves if np.min(np.linalg.norm(c.vertices - (0.0, -1.0), axis=1)) < 0.05]
    assert len(close) == 1
    c = close[0]
    assert np.max(np.abs(np.hypot(*c.vertices.T) - 1)) <= 1e-3
    assert c.winding in (1, -1)
    assert c.closure_residual <= m.grid.spacing
    assert null_residual(m, 0.0, c) <= 1e-6 * m.norm


def test_seed_targeted_search(polar):
    m, res = polar
    keep = np.linalg.norm(res.seeds.points - (0.0, -1.0), axis=1) < 0.1
    sub = replace(res.seeds, points=res.seeds.points[keep], contour=res.seeds.contour[keep],
                  sigma=res.seeds.sigma[keep])
    curves = find_closed_orbits(m, 0.0, sub)
    assert len(curves) == 1
    assert np.max(np.abs(np.hypot(*curves[0].vertices.T) - 1)) <= 1e-3


def test_winding_and_first_integral_along_orbits(polar):
    m, res = polar
    for c in res.curves:
        assert abs(c.phi[-1] - c.phi[0] - 2 * np.pi * c.winding) <= 1e-6
        assert np.array_equal(c.vertices[0], c.seed) or np.linalg.norm(c.vertices[0] - c.seed) <= 1e-12
    for tr in res.trajectories:
        inside = m.grid.contains(tr[:, 0], tr[:, 1])
        q = first_integral(m, tr[inside, :2], tr[inside, 2], 0.0)
        assert np.max(np.abs(q)) <= 1e-6 * m.norm


def test_curvature_consistency(polar):
    m, res = polar
    c = res.curves[0]
    v = c.vertices
    seg = np.diff(v, axis=0)
    ds = np.linalg.norm(seg, axis=1)
    ang = np.unwrap(np.arctan2(seg[:, 1], seg[:, 0]))
    fd = np.diff(ang) / (0.5 * (ds[1:] + ds[:-1]))
    mid = v[1:-1]
    pp = phi_prime(m, mid, c.phi[1:-1])
    assert np.max(np.abs(fd - pp)) <= 10 * ds.max()


def test_exact_circle_residuals():
    m = MetricFamily(analytic_flow("polar_metric_demo"))
    t = np.linspace(0, 2 * np.pi, 400, endpoint=False)
    # evaluate on the exact tensor: its interpolant error would dominate
    a11, a12, a22 = polar_metric_tensor(np.cos(t), np.sin(t))
    e = np.stack([-np.sin(t), np.cos(t)], -1)
    q = a11 * e[:, 0] ** 2 + 2 * a12 * e[:, 0] * e[:, 1] + a22 * e[:, 1] ** 2
    assert np.max(np.abs(0.5 * q)) <= 1e-12
    circ = ClosedCurve(np.stack([np.cos(t), np.sin(t)], -1), t + np.pi / 2, 0.0, 1, 0.0, np.pi,
                       np.array([1.0, 0.0]), 2 * np.pi)
    assert null_residual(m, 0.0, circ) <= 1e-3
    shifted = ClosedCurve(circ.vertices + (0.1, 0.0), circ.phi, 0.0, 1, 0.0, np.pi, circ.seed, 2 * np.pi)
    assert null_residual(m, 0.0, shifted) > 1e-3
    far = ClosedCurve(circ.vertices * 5, circ.phi, 0.0, 1, 0.0, np.pi, circ.seed, 2 * np.pi)
    with pytest.raises(OutOfDomain):
        null_residual(m, 0.0, far)


def test_hamiltonian_cross_check(polar):
    from geovortex._geometry import hausdorff
    m, res = polar
    c = res.curves[0]
    h = hamiltonian_orbit(m, c.vertices[0], c.phi[0], 0.0)
    assert h is not None
    assert hausdorff(h.vertices, c.vertices) <= 1e-4


# --------------------------------------------------------------------------
# straight geodesics and statuses


def test_constant_indefinite_metric_has_no_closed_curves():
    g = Grid2D(-1.0, 1.0, -1.0, 1.0, 21, 21)
    one = np.ones(g.shape)
    m = MetricFamily(SymTensorField(g, one, 0 * one, -one))
    for alpha in (-0.5, 0.0, 0.5):
        for phi0 in (0.0, np.pi / 4):
            res = search_closed_orbits(m, alpha, seed_points(m, alpha, phi0))
            assert res.curves == []


def test_orbit_leaving_domain_is_a_status():
    g = Grid2D(-1.0, 1.0, -1.0, 1.0, 21, 21)
    X1, _ = g.mesh()
    # q(phi0 = 0) = a11 = x1 vanishes on x1 = 0; constant a12 makes phi' = 0 there
    m = MetricFamily(SymTensorField(g, X1, np.full(g.shape, 0.5), np.ones(g.shape)))
    res = search_closed_orbits(m, 0.0, opts=OrbitOptions(refine=False))
    assert res.curves == []
    assert "Closed" not in res.statuses and "LeftDomain" in res.statuses


def test_orbit_options_validation():
    with pytest.raises(ValueError):
        OrbitOptions(tol=0.0)
    with pytest.raises(ValueError):
        OrbitOptions(phi_max=np.pi)


# --------------------------------------------------------------------------
# co-geodesic right-hand side


def _const(a11, a12, a22):
    g = Grid2D(-1.0, 1.0, -1.0, 1.0, 11, 11)
    one = np.ones(g.shape)
    return MetricFamily(SymTensorField(g, a11 * one, a12 * one, a22 * one))


@pytest.mark.parametrize("phi", [0.0, 0.4, 2.5])
def test_hamiltonian_rhs_constant_indefinite(phi):
    dx, dphi = hamiltonian_rhs(_const(1.0, 0.0, -1.0), GeodesicState((0.1, 0.2), phi))
    assert np.allclose(dx, [np.cos(phi), -np.sin(phi)], atol=1e-14) and dphi == 0.0


def test_hamiltonian_rhs_scaled_identity():
    dx, dphi = hamiltonian_rhs(_const(2.0, 0.0, 2.0), ((0.0, 0.0), 1.1))
    assert np.allclose(dx, 0.5 * np.array([np.cos(1.1), np.sin(1.1)]), atol=1e-15) and dphi == 0.0


def test_hamiltonian_rhs_degenerate():
    with pytest.raises(DegenerateMetric):
        hamiltonian_rhs(_const(1.0, 1.0, 1.0), ((0.0, 0.0), 0.3))
    with pytest.raises(DegenerateMetric):
        hamiltonian_rhs(_const(2.0, 0.0, 2.0), ((0.0, 0.0), 0.3), alpha=2.0)
