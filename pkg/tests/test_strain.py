import numpy as np
import pytest
from hypothesis import given, strategies as st

from geovortex.fieldgrid import Grid2D, ScalarField, VectorField2D
from geovortex.ingest import AnalyticFlow, analytic_flow, velocity_from_streamfunction
from geovortex.strain import okubo_weiss, rate_of_strain, strain_from_streamfunction

G = Grid2D(-1.0, 1.0, -1.0, 1.0, 21, 21)
X1, X2 = G.mesh()


def _vel(u, v):
    return VectorField2D(G, np.broadcast_to(u, G.shape).copy(), np.broadcast_to(v, G.shape).copy(), time=0.0)


def test_saddle_strain_exact():
    S = rate_of_strain(analytic_flow("saddle"), 0.0)
    assert np.allclose(S.tensor.a11, 1, atol=1e-12) and np.allclose(S.tensor.a22, -1, atol=1e-12)
    assert np.abs(S.tensor.a12).max() <= 1e-12 and np.abs(S.vorticity).max() <= 1e-12
    assert np.allclose(okubo_weiss(S).values, 1, atol=1e-12)


@pytest.mark.parametrize("omega", [1.0, 0.3, -2.0])
def test_rotation_strain_and_vorticity(omega):
    S = rate_of_strain(_vel(-omega * X2, omega * X1))
    for c in (S.tensor.a11, S.tensor.a12, S.tensor.a22):
        assert np.abs(c).max() <= 1e-12
    assert np.allclose(S.vorticity, 2 * omega, atol=1e-12)
    assert np.allclose(okubo_weiss(S).values, -4 * omega**2, atol=1e-11)


def test_translation_and_zero_flow():
    for u, v in ((0.7, -1.3), (0.0, 0.0)):
        S = rate_of_strain(_vel(u, v))
        assert np.abs(S.tensor.a11).max() + np.abs(S.tensor.a12).max() <= 1e-14
        assert np.abs(S.vorticity).max() <= 1e-14
        assert np.abs(okubo_weiss(S).values).max() <= 1e-26


def test_series_needs_time():
    with pytest.raises(ValueError):
        rate_of_strain(analytic_flow("saddle"))


@pytest.mark.parametrize("psi, expect", [
    (X1 * X2, (-1.0, 0.0, 1.0)),
    (np.full(G.shape, 3.2), (0.0, 0.0, 0.0)),
    (0.5 * (X1**2 + X2**2), (0.0, 0.0, 0.0)),
])
def test_streamfunction_examples(psi, expect):
    S = strain_from_streamfunction(ScalarField(G, psi))
    for c, e in zip((S.tensor.a11, S.tensor.a12, S.tensor.a22), expect):
        assert np.allclose(c, e, atol=1e-10)
    assert np.abs(S.trace).max() == 0.0


def test_streamfunction_rotation_vorticity():
    S = strain_from_streamfunction(ScalarField(G, 0.5 * (X1**2 + X2**2)))
    assert np.allclose(S.vorticity, 2.0, atol=1e-10)


def test_streamfunction_requires_scalar():
    with pytest.raises(TypeError):
        strain_from_streamfunction(X1 * X2)


def test_streamfunction_and_velocity_routes_agree():
    flow = AnalyticFlow("double_gyre")
    g = Grid2D(0.0, 2.0, 0.0, 1.0, 161, 81)
    psi = flow.sample_streamfunction(g, 0.0)
    a = strain_from_streamfunction(psi)
    b = rate_of_strain(velocity_from_streamfunction(psi))
    c = rate_of_strain(flow.sample(g, [0.0]), 0.0)
    inner = (slice(4, -4), slice(4, -4))
    scale = np.abs(c.tensor.a11).max()
    for s in (a, b):
        for k in ("a11", "a12", "a22"):
            d = getattr(s.tensor, k)[inner] - getattr(c.tensor, k)[inner]
            assert np.abs(d).max() <= 1e-2 * scale


def test_incompressible_eigenvalues_opposite():
    # the steep Gaussian needs a finer grid than its default at the boundary nodes
    grids = {"gaussian_vortex": Grid2D(-1.5, 1.5, -1.5, 1.5, 161, 161)}
    for name in ("saddle", "solid_rotation", "double_gyre", "gaussian_vortex"):
        S = rate_of_strain(analytic_flow(name, grids.get(name)), 0.0)
        assert np.abs(S.s1 + S.s2).max() <= 1e-6


def test_eigen_conventions():
    S = rate_of_strain(analytic_flow("double_gyre"), 0.0)
    assert np.all(S.s1 <= S.s2)
    T = S.tensor
    for s, e in ((S.s1, S.e1), (S.s2, S.e2)):
        r0 = T.a11 * e[..., 0] + T.a12 * e[..., 1] - s * e[..., 0]
        r1 = T.a12 * e[..., 0] + T.a22 * e[..., 1] - s * e[..., 1]
        assert np.abs(r0).max() <= 1e-12 and np.abs(r1).max() <= 1e-12
        assert np.allclose(np.linalg.norm(e, axis=-1), 1.0)


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), c=st.floats(-3, 3), d=st.floats(-3, 3))
def test_affine_velocity_gradient_reproduced(a, b, c, d):
    S = rate_of_strain(_vel(a * X1 + b * X2, c * X1 + d * X2))
    tol = 1e-11 * (1 + abs(a) + abs(b) + abs(c) + abs(d))
    assert np.allclose(S.tensor.a11, a, atol=tol) and np.allclose(S.tensor.a22, d, atol=tol)
    assert np.allclose(S.tensor.a12, 0.5 * (b + c), atol=tol)
    assert np.allclose(S.vorticity, c - b, atol=tol)
