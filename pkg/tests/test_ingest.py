import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from geovortex.fieldgrid import Grid2D, ScalarField, VectorField2D
from geovortex.ingest import (AnalyticFlow, BadParams, CoordinateSingularity, DatasetDescriptor, EarthParams,
                              MissingFile, NearEquator, ParseError, ShapeMismatch, analytic_flow,
                              geostrophic_velocity, load_dataset, polar_metric_tensor, velocity_from_streamfunction,
                              write_dataset)

G10 = Grid2D(0.0, 1.0, 0.0, 2.0, 10, 10)


def velocity_slices(rng, n=2):
    return [VectorField2D(G10, rng.normal(size=G10.shape), rng.normal(size=G10.shape), time=float(k))
            for k in range(n)]


def test_velocity_round_trip(tmp_path, rng):
    slices = velocity_slices(rng)
    write_dataset(tmp_path / "v.json", slices)
    ds = load_dataset(tmp_path / "v.json")
    assert ds.kind == "velocity" and len(ds) == 2
    for a, b in zip(slices, ds):
        assert isinstance(b, VectorField2D)
        assert np.array_equal(a.u, b.u) and np.array_equal(a.v, b.v)
    assert ds.grid == G10
    assert list(ds.times) == [0.0, 1.0]


def test_data_layout_is_u_then_v_x1_slow(tmp_path):
    X1, X2 = G10.mesh()
    write_dataset(tmp_path / "v.json", [VectorField2D(G10, X1, X2 + 10)])
    raw = np.fromfile(tmp_path / "v_0000.bin", dtype="<f8")
    n = G10.n1 * G10.n2
    assert np.array_equal(raw[:n], X1.ravel()) and np.array_equal(raw[n:], (X2 + 10).ravel())
    assert raw[1] == X1[0, 1] and raw[G10.n2] == X1[1, 0]


def test_missing_file_when_fewer_files_than_times(tmp_path, rng):
    write_dataset(tmp_path / "v.json", velocity_slices(rng))
    doc = json.loads((tmp_path / "v.json").read_text())
    doc["times"] = [0.0, 1.0, 2.0]
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(MissingFile):
        load_dataset(tmp_path / "v.json")


def test_missing_descriptor(tmp_path):
    with pytest.raises(MissingFile):
        load_dataset(tmp_path / "nope.json")


def test_ssh_requires_lonlat(tmp_path):
    h = ScalarField(G10, np.zeros(G10.shape))
    with pytest.raises(ParseError):
        write_dataset(tmp_path / "h.json", [h], kind="ssh", units="cartesian")
    doc = {"kind": "ssh", "x1_min": 0, "x1_max": 1, "x2_min": 0, "x2_max": 1, "n1": 10, "n2": 10,
           "units": "cartesian", "times": [0.0], "files": ["h_0000.bin"]}
    (tmp_path / "h.json").write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        load_dataset(tmp_path / "h.json")


@pytest.mark.parametrize("patch", [
    {"kind": "pressure"},
    {"units": "furlongs"},
    {"times": [1.0, 0.0]},
    {"n1": 2},
])
def test_descriptor_invariants(tmp_path, rng, patch):
    write_dataset(tmp_path / "v.json", velocity_slices(rng))
    doc = json.loads((tmp_path / "v.json").read_text())
    doc.update(patch)
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        load_dataset(tmp_path / "v.json")


def test_malformed_json(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ParseError):
        DatasetDescriptor.read(tmp_path / "bad.json")


def test_shape_mismatch(tmp_path, rng):
    write_dataset(tmp_path / "v.json", velocity_slices(rng, 1))
    raw = np.fromfile(tmp_path / "v_0000.bin", dtype="<f8")
    raw[:-3].tofile(tmp_path / "v_0000.bin")
    with pytest.raises(ShapeMismatch):
        load_dataset(tmp_path / "v.json")


def test_lonlat_stored_in_radians(tmp_path):
    native = Grid2D(-60.0, -40.0, 20.0, 40.0, 11, 11)
    rad = Grid2D(*np.deg2rad(native.bounds), 11, 11)
    h = ScalarField(rad, np.ones(rad.shape), time=3.0)
    write_dataset(tmp_path / "h.json", [h], kind="ssh", units="degrees_lonlat")
    doc = json.loads((tmp_path / "h.json").read_text())
    assert doc["x1_min"] == pytest.approx(-60.0) and doc["times"] == [3.0]
    ds = load_dataset(tmp_path / "h.json")
    assert ds.grid.x2_max == pytest.approx(np.deg2rad(40.0))
    v = ds.velocity_series()
    assert v.times[0] == pytest.approx(3.0 * 86400)


def lat_grid(lo=-0.7, hi=-0.3):
    return Grid2D(0.0, 0.4, lo, hi, 17, 17)


def test_geostrophic_constant_height_is_still():
    g = lat_grid()
    v = geostrophic_velocity([ScalarField(g, np.full(g.shape, 0.7))])
    f = v.at(0.0)
    assert np.max(np.abs(f.u)) <= 1e-25 and np.max(np.abs(f.v)) <= 1e-25


def test_geostrophic_hand_value():
    g = lat_grid()
    p = EarthParams()
    c = 0.3
    _, LAT = g.mesh()
    f = geostrophic_velocity([ScalarField(g, c * LAT)], p).at(0.0)
    th = -0.5
    j = int(np.argmin(np.abs(g.x2 - th)))
    assert g.x2[j] == pytest.approx(th)
    expected = -p.g * c / (p.R_earth**2 * 2 * p.Omega * np.sin(th) * np.cos(th))
    assert f.u[5, j] == pytest.approx(expected, rel=1e-10)
    assert abs(f.v[5, j]) <= 1e-12 * abs(expected)


def test_geostrophic_metric_units_relation():
    g = lat_grid()
    X, LAT = g.mesh()
    h = ScalarField(g, 0.1 * np.sin(5 * X) * LAT**2)
    p = EarthParams()
    ang = geostrophic_velocity([h], p).at(0.0)
    met = geostrophic_velocity([h], p, units="metric").at(0.0)
    assert np.allclose(met.u / (p.R_earth * np.cos(LAT)), ang.u, rtol=1e-12, atol=0)
    assert np.allclose(met.v / p.R_earth, ang.v, rtol=1e-12, atol=0)


def test_geostrophic_singular_latitudes():
    with pytest.raises(NearEquator):
        geostrophic_velocity([ScalarField(lat_grid(-0.2, 0.2), np.zeros((17, 17)))])
    with pytest.raises(CoordinateSingularity):
        geostrophic_velocity([ScalarField(lat_grid(1.0, 1.56), np.zeros((17, 17)))])


def test_analytic_definitions():
    u, v, _ = AnalyticFlow("saddle").velocity(0.0, 2.0, 3.0)
    assert (u, v) == (2.0, -3.0)
    u, v, _ = AnalyticFlow("solid_rotation", omega=0.5).velocity(0.0, 1.0, 0.0)
    assert (u, v) == pytest.approx((0.0, 0.5))
    a11, a12, a22 = polar_metric_tensor(1.0, 0.0)
    assert np.allclose([a11, a12, a22], [1.0, 1.0, 0.0], atol=1e-15)


def test_polar_demo_sampling():
    A = analytic_flow("polar_metric_demo")
    assert A.grid.shape == (100, 100)
    with pytest.raises(BadParams):
        analytic_flow("polar_metric_demo", grid=Grid2D(-1, 1, -1, 1, 5, 5))


@pytest.mark.parametrize("call", [
    lambda: analytic_flow("taylor_green"),
    lambda: analytic_flow("saddle", omega=2.0),
    lambda: AnalyticFlow("double_gyre", A=-0.1),
    lambda: analytic_flow("saddle", times=[]),
])
def test_bad_params(call):
    with pytest.raises(BadParams):
        call()


@pytest.mark.parametrize("name", ["saddle", "solid_rotation", "double_gyre", "gaussian_vortex"])
def test_incompressible_and_jacobian(name, rng):
    flow = AnalyticFlow(name)
    x0, x1, y0, y1 = flow.bounds
    pts = np.column_stack([rng.uniform(x0, x1, 50), rng.uniform(y0, y1, 50)])
    t = 1.3
    J = flow.jacobian(t, pts[:, 0], pts[:, 1])
    assert np.max(np.abs(J[..., 0, 0] + J[..., 1, 1])) <= 1e-12
    h = 1e-6
    up, vp, _ = flow.velocity(t, pts[:, 0] + h, pts[:, 1])
    um, vm, _ = flow.velocity(t, pts[:, 0] - h, pts[:, 1])
    assert np.allclose((up - um) / (2 * h), J[..., 0, 0], atol=1e-7)
    assert np.allclose((vp - vm) / (2 * h), J[..., 1, 0], atol=1e-7)


def test_streamfunction_velocity_consistent():
    flow = AnalyticFlow("double_gyre")
    g = Grid2D(0.0, 2.0, 0.0, 1.0, 161, 81)
    v = velocity_from_streamfunction(flow.sample_streamfunction(g, 2.0))
    ref = flow.sample(g, [2.0]).at(2.0)
    assert np.max(np.abs(v.u - ref.u)) <= 1e-5 and np.max(np.abs(v.v - ref.v)) <= 1e-5


def test_outside_bounds_flagged():
    _, _, ok = AnalyticFlow("double_gyre").velocity(0.0, np.array([1.0, 2.5]), np.array([0.5, 0.5]))
    assert ok.tolist() == [True, False]


@given(arrays(np.float64, (2, 5, 6), elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_round_trip_bit_exact_property(tmp_path_factory, data):
    g = Grid2D(0.0, 1.0, 0.0, 1.0, 5, 6)
    d = tmp_path_factory.mktemp("rt")
    write_dataset(d / "s.json", [ScalarField(g, data[0]), ScalarField(g, data[1])], times=[0.5, 1.5],
                  kind="streamfunction")
    ds = load_dataset(d / "s.json")
    assert np.array_equal(ds[0].values, data[0]) and np.array_equal(ds[1].values, data[1])
