"""Dataset loading/writing, geostrophic velocities and analytic benchmark flows.

On-disk format
--------------
A dataset is a UTF-8 JSON descriptor::

    {"kind": "velocity", "units": "cartesian",
     "x1_min": 0.0, "x1_max": 2.0, "x2_min": 0.0, "x2_max": 1.0,
     "n1": 201, "n2": 101,
     "times": [0.0, 7.0], "files": ["t0.bin", "t1.bin"]}

plus one raw little-endian float64 file per time slice, row-major with
``x1`` as the slow axis.  Multi-component kinds store their components as
consecutive ``n1*n2`` blocks: ``u, v`` for ``velocity`` and
``a11, a12, a22`` for ``tensor``.  ``ssh`` and ``streamfunction`` hold one
block.  Times are in days; ``degrees_lonlat`` bounds are converted to
radians on load.  Relative file names resolve against the descriptor's
directory.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .advect import VelocitySeries
from .fieldgrid import Grid2D, ScalarField, SymTensorField, VectorField2D

__all__ = [
    "default_grid",
    "IngestError",
    "ParseError",
    "ShapeMismatch",
    "MissingFile",
    "BadParams",
    "NearEquator",
    "CoordinateSingularity",
    "DatasetDescriptor",
    "Dataset",
    "EarthParams",
    "load_dataset",
    "write_dataset",
    "geostrophic_velocity",
    "AnalyticFlow",
    "analytic_flow",
    "polar_metric_tensor",
    "velocity_from_streamfunction",
]

KINDS = {"velocity": 2, "ssh": 1, "streamfunction": 1, "tensor": 3, "scalar": 1}
UNITS = ("degrees_lonlat", "cartesian")
SECONDS_PER_DAY = 86400.0


class IngestError(Exception):
    """Base class for dataset problems."""


class ParseError(IngestError):
    """Descriptor is malformed or violates an invariant."""


class ShapeMismatch(IngestError):
    """A data file does not hold the declared number of samples."""


class MissingFile(IngestError):
    """A referenced data file is absent or the file list is short."""


class BadParams(ValueError):
    """Invalid parameters for an analytic flow."""


class CoordinateSingularity(ValueError):
    """Latitude too close to a singular point of the geostrophic formulas."""


class NearEquator(CoordinateSingularity):
    """The Coriolis parameter vanishes on the grid."""


@dataclass
class DatasetDescriptor:
    kind: str
    x1_min: float
    x1_max: float
    x2_min: float
    x2_max: float
    n1: int
    n2: int
    units: str
    times: list
    files: list
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d, base_dir="."):
        required = ("kind", "x1_min", "x1_max", "x2_min", "x2_max", "n1", "n2", "units", "times", "files")
        missing = [k for k in required if k not in d]
        if missing:
            raise ParseError(f"descriptor lacks fields: {', '.join(missing)}")
        try:
            desc = cls(
                kind=str(d["kind"]),
                x1_min=float(d["x1_min"]), x1_max=float(d["x1_max"]),
                x2_min=float(d["x2_min"]), x2_max=float(d["x2_max"]),
                n1=int(d["n1"]), n2=int(d["n2"]),
                units=str(d["units"]),
                times=[float(t) for t in d["times"]],
                files=[str(f) for f in d["files"]],
                base_dir=base_dir,
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(f"descriptor field has the wrong type: {exc}") from exc
        desc.validate()
        return desc

    @classmethod
    def read(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except FileNotFoundError as exc:
            raise MissingFile(f"descriptor not found: {path}") from exc
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ParseError(f"descriptor {path} is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ParseError("descriptor must be a JSON object")
        return cls.from_dict(d, base_dir=os.path.dirname(os.path.abspath(path)))

    def validate(self):
        if self.kind not in KINDS:
            raise ParseError(f"unknown kind {self.kind!r}; expected one of {sorted(KINDS)}")
        if self.units not in UNITS:
            raise ParseError(f"unknown units {self.units!r}; expected one of {UNITS}")
        if self.kind == "ssh" and self.units != "degrees_lonlat":
            raise ParseError("sea-surface height data must use degrees_lonlat units")
        if not self.times:
            raise ParseError("at least one time slice is required")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ParseError("times must be strictly increasing")
        try:
            self.grid_native()
        except ValueError as exc:
            raise ParseError(str(exc)) from exc
        if len(self.files) != len(self.times):
            raise MissingFile(f"{len(self.times)} times declared but {len(self.files)} files listed")

    def grid_native(self):
        return Grid2D(self.x1_min, self.x1_max, self.x2_min, self.x2_max, self.n1, self.n2)

    def grid(self):
        """Grid in internal units (radians for lon-lat data)."""
        g = self.grid_native()
        if self.units == "degrees_lonlat":
            r = np.deg2rad
            return Grid2D(float(r(g.x1_min)), float(r(g.x1_max)), float(r(g.x2_min)), float(r(g.x2_max)), g.n1, g.n2)
        return g

    def to_dict(self):
        return {
            "kind": self.kind,
            "x1_min": self.x1_min, "x1_max": self.x1_max,
            "x2_min": self.x2_min, "x2_max": self.x2_max,
            "n1": self.n1, "n2": self.n2,
            "units": self.units,
            "times": list(self.times),
            "files": list(self.files),
        }

    def file_path(self, k):
        f = self.files[k]
        return f if os.path.isabs(f) else os.path.join(self.base_dir, f)


@dataclass
class Dataset:
    """Loaded slices plus their descriptor.  Behaves as a sequence of fields."""

    descriptor: DatasetDescriptor
    grid: Grid2D
    fields: list = field(default_factory=list)

    @property
    def kind(self):
        return self.descriptor.kind

    @property
    def times(self):
        return np.asarray(self.descriptor.times, dtype=float)

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, k):
        return self.fields[k]

    def __iter__(self):
        return iter(self.fields)

    def velocity_series(self, params=None):
        """Velocity slices as a :class:`VelocitySeries`.

        ``ssh`` data go through :func:`geostrophic_velocity` (time in
        seconds); ``streamfunction`` data are differentiated.
        """
        if self.kind == "velocity":
            return VelocitySeries(self.fields, self.times)
        if self.kind == "streamfunction":
            return VelocitySeries([velocity_from_streamfunction(f) for f in self.fields], self.times)
        if self.kind == "ssh":
            return geostrophic_velocity(self.fields, params or EarthParams())
        raise ParseError(f"a {self.kind} dataset carries no velocity")


def _finite_mask(blocks):
    # derived fields (FTLE, tensors) mark unusable nodes with NaN
    ok = np.logical_and.reduce([np.isfinite(b) for b in blocks])
    return None if ok.all() else ok


def load_dataset(path):
    """Read a descriptor and its raw slices.

    Non-finite samples are rejected for velocity, ssh and streamfunction
    data; in ``scalar`` and ``tensor`` datasets they mark masked nodes.

    Raises
    ------
    ParseError, ShapeMismatch, MissingFile
    """
    desc = DatasetDescriptor.read(path)
    grid = desc.grid()
    ncomp = KINDS[desc.kind]
    n = desc.n1 * desc.n2
    fields = []
    for k, t in enumerate(desc.times):
        fp = desc.file_path(k)
        if not os.path.exists(fp):
            raise MissingFile(f"data file not found: {fp}")
        raw = np.fromfile(fp, dtype="<f8")
        if raw.size != ncomp * n:
            raise ShapeMismatch(f"{fp} holds {raw.size} values, expected {ncomp * n}")
        blocks = [raw[i * n:(i + 1) * n].reshape(desc.n1, desc.n2).astype(float) for i in range(ncomp)]
        try:
            if desc.kind == "velocity":
                fields.append(VectorField2D(grid, blocks[0], blocks[1], time=t))
            elif desc.kind == "tensor":
                fields.append(SymTensorField(grid, blocks[0], blocks[1], blocks[2], _finite_mask(blocks), t))
            elif desc.kind == "scalar":
                fields.append(ScalarField(grid, blocks[0], time=t, valid=_finite_mask(blocks)))
            else:
                fields.append(ScalarField(grid, blocks[0], time=t))
        except ValueError as exc:
            raise ShapeMismatch(f"{fp}: {exc}") from exc
    return Dataset(desc, grid, fields)


def _blocks(fld):
    if isinstance(fld, VectorField2D):
        return "velocity", [fld.u, fld.v]
    if isinstance(fld, SymTensorField):
        return "tensor", [fld.a11, fld.a12, fld.a22]
    if isinstance(fld, ScalarField):
        return None, [fld.values]
    return None, [np.asarray(fld, dtype=float)]


def write_dataset(path, fields, times=None, kind=None, units="cartesian", native_grid=None, stem=None):
    """Write fields as a descriptor plus raw slices next to it.

    Parameters
    ----------
    path : str
        Descriptor path (``.json``).
    fields : sequence of ScalarField / VectorField2D / SymTensorField
    times : sequence of float, optional
        Slice times in days; defaults to each field's ``time`` (or its index).
    kind : str, optional
        Required for scalar fields (``ssh``, ``streamfunction`` or a generic
        ``scalar`` diagnostic such as FTLE).
    native_grid : Grid2D, optional
        Bounds to record in the descriptor.  For ``degrees_lonlat`` data
        defaults to the field grid converted from radians.

    Returns
    -------
    DatasetDescriptor
    """
    fields = list(fields)
    if not fields:
        raise ValueError("nothing to write")
    inferred, _ = _blocks(fields[0])
    kind = kind or inferred
    if kind is None:
        raise ValueError("kind is required for scalar fields")
    if times is None:
        times = [f.time if getattr(f, "time", None) is not None else float(k) for k, f in enumerate(fields)]
    grid = fields[0].grid
    if native_grid is None:
        if units == "degrees_lonlat":
            d = np.rad2deg
            native_grid = Grid2D(float(d(grid.x1_min)), float(d(grid.x1_max)), float(d(grid.x2_min)),
                                 float(d(grid.x2_max)), grid.n1, grid.n2)
        else:
            native_grid = grid
    out_dir = os.path.dirname(os.path.abspath(path))
    os.makedirs(out_dir, exist_ok=True)
    stem = stem or os.path.splitext(os.path.basename(path))[0]
    files = []
    for k, fld in enumerate(fields):
        _, blocks = _blocks(fld)
        name = f"{stem}_{k:04d}.bin"
        payload = np.concatenate([np.ascontiguousarray(b, dtype="<f8").ravel() for b in blocks])
        payload.astype("<f8").tofile(os.path.join(out_dir, name))
        files.append(name)
    desc = DatasetDescriptor(kind, native_grid.x1_min, native_grid.x1_max, native_grid.x2_min,
                             native_grid.x2_max, native_grid.n1, native_grid.n2, units,
                             [float(t) for t in times], files, base_dir=out_dir)
    desc.validate()
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(desc.to_dict(), fh, indent=2)
        fh.write("\n")
    return desc


@dataclass(frozen=True)
class EarthParams:
    g: float = 9.81
    R_earth: float = 6.371e6
    Omega: float = 7.2921159e-5

    def __post_init__(self):
        if not (self.g > 0 and self.R_earth > 0 and self.Omega > 0):
            raise ValueError("Earth parameters must be positive")


def geostrophic_velocity(h, params=EarthParams(), theta_min=0.05, units="angular"):
    """Geostrophic surface velocity from sea-surface height slices.

    ``h`` holds ScalarFields on a longitude/latitude grid in radians
    (``x1`` = longitude, ``x2`` = latitude) with times in days.  With
    ``units="angular"`` the result is ``(dlon/dt, dlat/dt)`` in rad/s::

        dlon/dt = -g / (R^2 f cos(lat)) dh/dlat
        dlat/dt =  g / (R^2 f cos(lat)) dh/dlon,   f = 2 Omega sin(lat)

    ``units="metric"`` returns eastward/northward speeds in m/s instead
    (``u = -g/(R f) dh/dlat``, ``v = g/(R f cos(lat)) dh/dlon``); the two
    agree after dividing by ``R cos(lat)`` and ``R`` respectively.
    Slopes come from the interpolant gradient.  The returned series uses
    seconds as its time axis.

    Raises
    ------
    NearEquator
        If any latitude on the grid is within ``theta_min`` of the equator.
    CoordinateSingularity
        If any latitude is within ``theta_min`` of a pole.
    """
    if isinstance(h, ScalarField):
        h = [h]
    h = list(h)
    if units not in ("angular", "metric"):
        raise ValueError("units must be 'angular' or 'metric'")
    grid = h[0].grid
    lat = grid.x2
    if np.any(np.abs(lat) < theta_min):
        raise NearEquator(f"latitudes within {theta_min} rad of the equator")
    if np.any(np.abs(lat) > np.pi / 2 - theta_min):
        raise CoordinateSingularity(f"latitudes within {theta_min} rad of a pole")
    _, LAT = grid.mesh()
    fc = 2.0 * params.Omega * np.sin(LAT)
    cos = np.cos(LAT)
    out = []
    times = []
    for k, hf in enumerate(h):
        _, grads, _ = hf.node_derivatives(order=1)
        dh_dlon = grads[..., 0, 0]
        dh_dlat = grads[..., 0, 1]
        if units == "angular":
            pref = params.g / (params.R_earth**2 * fc * cos)
            u = -pref * dh_dlat
            v = pref * dh_dlon
        else:
            u = -params.g / (params.R_earth * fc) * dh_dlat
            v = params.g / (params.R_earth * fc * cos) * dh_dlon
        t_days = hf.time if hf.time is not None else float(k)
        times.append(t_days * SECONDS_PER_DAY)
        out.append(VectorField2D(grid, u, v, time=t_days * SECONDS_PER_DAY))
    return VelocitySeries(out, times)


def velocity_from_streamfunction(psi):
    """``u = -dpsi/dx2``, ``v = dpsi/dx1`` at the grid nodes."""
    _, grads, _ = psi.node_derivatives(order=1)
    return VectorField2D(psi.grid, -grads[..., 0, 1], grads[..., 0, 0], time=psi.time)


# --------------------------------------------------------------------------
# analytic flows

_DEFAULTS = {
    "saddle": {},
    "solid_rotation": {"omega": 1.0},
    "double_gyre": {"A": 0.1, "eps": 0.25, "omega": 2 * np.pi / 10},
    "gaussian_vortex": {"omega0": 1.0, "radius": 0.5},
    "polar_metric_demo": {},
}

_DEFAULT_BOUNDS = {
    "saddle": (-4.0, 4.0, -4.0, 4.0),
    "solid_rotation": (-2.0, 2.0, -2.0, 2.0),
    "double_gyre": (0.0, 2.0, 0.0, 1.0),
    "gaussian_vortex": (-1.5, 1.5, -1.5, 1.5),
    "polar_metric_demo": (-2.0, 2.0, -2.0, 2.0),
}


class AnalyticFlow:
    """Closed-form velocity field.

    ``saddle``: ``f = (x1, -x2)``.
    ``solid_rotation``: ``f = omega (-x2, x1)``.
    ``double_gyre``: streamfunction ``A sin(pi g(x1, t)) sin(pi x2)`` with
    ``g = a x1^2 + b x1``, ``a = eps sin(omega t)``, ``b = 1 - 2a``, and
    velocity ``(-dpsi/dx2, dpsi/dx1)``.
    ``gaussian_vortex``: steady rotation ``f = Omega(r) (-x2, x1)`` with
    ``Omega(r) = omega0 exp(-r^2 / radius^2)``; circles about the origin
    are material curves with zero tangential stretching.

    ``bounds`` (x1_min, x1_max, x2_min, x2_max) restricts where the field is
    reported as defined; ``None`` means everywhere.
    """

    def __init__(self, name, bounds="default", **params):
        if name not in _DEFAULTS or name == "polar_metric_demo":
            raise BadParams(f"unknown flow {name!r}")
        unknown = set(params) - set(_DEFAULTS[name])
        if unknown:
            raise BadParams(f"unknown parameters for {name}: {sorted(unknown)}")
        p = dict(_DEFAULTS[name])
        p.update(params)
        for k, val in p.items():
            if not np.isfinite(val):
                raise BadParams(f"parameter {k} must be finite")
        if name == "double_gyre" and p["A"] <= 0:
            raise BadParams("double gyre amplitude must be positive")
        if name == "gaussian_vortex" and p["radius"] <= 0:
            raise BadParams("vortex radius must be positive")
        self.name = name
        self.params = p
        self.bounds = _DEFAULT_BOUNDS[name] if bounds == "default" else bounds

    def __repr__(self):
        return f"AnalyticFlow({self.name!r}, {self.params})"

    @property
    def t_span(self):
        return (-np.inf, np.inf)

    def contains(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.bounds is None:
            return np.isfinite(x1) & np.isfinite(x2)
        a, b, c, d = self.bounds
        return (x1 >= a) & (x1 <= b) & (x2 >= c) & (x2 <= d)

    def _gyre(self, t):
        p = self.params
        a = p["eps"] * np.sin(p["omega"] * t)
        return a, 1.0 - 2.0 * a

    def _omega_r(self, x1, x2):
        p = self.params
        return p["omega0"] * np.exp(-(x1 * x1 + x2 * x2) / p["radius"] ** 2)

    def velocity(self, t, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        t = np.asarray(t, dtype=float)
        ok = self.contains(x1, x2)
        if self.name == "saddle":
            u, v = x1 + 0 * t, -x2 + 0 * t
        elif self.name == "solid_rotation":
            w = self.params["omega"]
            u, v = -w * x2 + 0 * t, w * x1 + 0 * t
        elif self.name == "gaussian_vortex":
            w = self._omega_r(x1, x2)
            u, v = -w * x2 + 0 * t, w * x1 + 0 * t
        else:
            A = self.params["A"]
            a, b = self._gyre(t)
            g = a * x1 * x1 + b * x1
            dg = 2 * a * x1 + b
            u = -np.pi * A * np.sin(np.pi * g) * np.cos(np.pi * x2)
            v = np.pi * A * np.cos(np.pi * g) * np.sin(np.pi * x2) * dg
        u, v, ok = np.broadcast_arrays(u, v, ok)
        return np.where(ok, u, np.nan), np.where(ok, v, np.nan), ok.copy()

    def jacobian(self, t, x1, x2):
        """Exact velocity gradient ``(..., 2, 2)``."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        x1, x2 = np.broadcast_arrays(x1, x2)
        J = np.zeros(x1.shape + (2, 2))
        if self.name == "saddle":
            J[..., 0, 0], J[..., 1, 1] = 1.0, -1.0
        elif self.name == "solid_rotation":
            w = self.params["omega"]
            J[..., 0, 1], J[..., 1, 0] = -w, w
        elif self.name == "gaussian_vortex":
            w = self._omega_r(x1, x2)
            k = -2.0 / self.params["radius"] ** 2 * w  # dOmega/dx_i = k x_i
            J[..., 0, 0] = -k * x1 * x2
            J[..., 0, 1] = -w - k * x2 * x2
            J[..., 1, 0] = w + k * x1 * x1
            J[..., 1, 1] = k * x1 * x2
        else:
            A = self.params["A"]
            a, b = self._gyre(t)
            g = a * x1 * x1 + b * x1
            dg = 2 * a * x1 + b
            pi = np.pi
            J[..., 0, 0] = -pi * pi * A * np.cos(pi * g) * dg * np.cos(pi * x2)
            J[..., 0, 1] = pi * pi * A * np.sin(pi * g) * np.sin(pi * x2)
            J[..., 1, 0] = pi * A * np.sin(pi * x2) * (-pi * np.sin(pi * g) * dg * dg + np.cos(pi * g) * 2 * a)
            J[..., 1, 1] = pi * pi * A * np.cos(pi * g) * np.cos(pi * x2) * dg
        return J

    def streamfunction(self, t, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.name == "saddle":
            return -x1 * x2
        if self.name == "solid_rotation":
            return 0.5 * self.params["omega"] * (x1 * x1 + x2 * x2)
        if self.name == "gaussian_vortex":
            R2 = self.params["radius"] ** 2
            return -0.5 * self.params["omega0"] * R2 * np.exp(-(x1 * x1 + x2 * x2) / R2)
        a, b = self._gyre(t)
        return self.params["A"] * np.sin(np.pi * (a * x1 * x1 + b * x1)) * np.sin(np.pi * x2)

    def sample(self, grid, times=(0.0,)):
        """Sample onto ``grid`` at each time as a :class:`VelocitySeries`."""
        X1, X2 = grid.mesh()
        slices = []
        for t in times:
            u, v, _ = AnalyticFlow(self.name, bounds=None, **self.params).velocity(t, X1, X2)
            slices.append(VectorField2D(grid, u, v, time=float(t)))
        return VelocitySeries(slices, list(times))

    def sample_streamfunction(self, grid, t=0.0):
        X1, X2 = grid.mesh()
        return ScalarField(grid, self.streamfunction(t, X1, X2), time=float(t))


def polar_metric_tensor(x1, x2):
    """Components ``(a11, a12, a22)`` of the polar-frame demo metric.

    ``A = Q [[1, 1], [1, r - 1]] Q^T`` with ``Q = [e_r | e_theta]``; the unit
    circle is a closed null-geodesic of ``A`` (its tangent ``e_theta`` has
    ``<e_theta, A e_theta> = r - 1 = 0``).  Undefined at the origin.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    r = np.hypot(x1, x2)
    er1, er2 = x1 / r, x2 / r
    et1, et2 = -er2, er1
    d = r - 1.0
    a11 = er1 * er1 + 2 * er1 * et1 + d * et1 * et1
    a12 = er1 * er2 + er1 * et2 + et1 * er2 + d * et1 * et2
    a22 = er2 * er2 + 2 * er2 * et2 + d * et2 * et2
    return a11, a12, a22


_DEFAULT_NODES = {"saddle": (81, 81), "solid_rotation": (81, 81), "gaussian_vortex": (121, 121),
                  "double_gyre": (201, 101), "polar_metric_demo": (100, 100)}


def default_grid(name):
    """Default sampling grid of a benchmark flow or the demo metric."""
    if name not in _DEFAULT_NODES:
        raise BadParams(f"unknown flow {name!r}")
    return Grid2D(*_DEFAULT_BOUNDS[name], *_DEFAULT_NODES[name])


def analytic_flow(name, grid=None, times=(0.0,), **params):
    """Sample a benchmark flow (or the demo metric) on a grid.

    Parameters
    ----------
    name : {"saddle", "solid_rotation", "double_gyre", "gaussian_vortex", "polar_metric_demo"}
    grid : Grid2D, optional
        Defaults: ``[-4, 4]^2`` (saddle), ``[-2, 2]^2`` (rotation, demo
        metric), ``[0, 2] x [0, 1]`` (double gyre); the demo metric grid has
        an even node count so the origin is not a node.
    times : sequence of float
        Sample times for velocity flows.

    Returns
    -------
    VelocitySeries, or SymTensorField for ``polar_metric_demo``.
    """
    if name not in _DEFAULTS:
        raise BadParams(f"unknown flow {name!r}")
    if grid is None:
        grid = default_grid(name)
    if name == "polar_metric_demo":
        if params:
            raise BadParams("polar_metric_demo takes no parameters")
        X1, X2 = grid.mesh()
        if np.any((X1 == 0) & (X2 == 0)):
            raise BadParams("the demo metric is undefined at the origin; use a grid without a node there")
        return SymTensorField(grid, *polar_metric_tensor(X1, X2))
    times = list(times)
    if not times:
        raise BadParams("at least one sample time is required")
    return AnalyticFlow(name, **params).sample(grid, times)
