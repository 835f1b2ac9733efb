"""Uniform-grid fields with bicubic interpolation and analytic derivatives.

Every field is sampled on a :class:`Grid2D` with ``x1`` as the slow (first)
array axis.  Interpolation uses piecewise bicubic patches whose corner data
(value, first derivatives and cross derivative) are taken from an
interpolating bicubic spline, so the patches reproduce that spline exactly:
the interpolant is C2, reproduces grid samples, and is exact for
polynomials of degree <= 3 in each variable.  Gradients and Hessians are
derivatives of the patches themselves, never re-differenced samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.interpolate import RectBivariateSpline

__all__ = [
    "resolution_error",
    "OutOfDomain",
    "Grid2D",
    "Bicubic",
    "ScalarField",
    "VectorField2D",
    "SymTensorField",
    "interpolate",
    "gradient",
]


class OutOfDomain(ValueError):
    """Query point outside the sampled domain (or inside a masked cell)."""


# Hermite -> monomial basis change on the unit interval.
_M = np.array(
    [[1.0, 0.0, 0.0, 0.0],
     [0.0, 0.0, 1.0, 0.0],
     [-3.0, 3.0, -2.0, -1.0],
     [2.0, -2.0, 1.0, 1.0]]
)


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectilinear grid ``[x1_min, x1_max] x [x2_min, x2_max]``."""

    x1_min: float
    x1_max: float
    x2_min: float
    x2_max: float
    n1: int
    n2: int

    def __post_init__(self):
        if not (self.x1_min < self.x1_max and self.x2_min < self.x2_max):
            raise ValueError("grid bounds must satisfy min < max on both axes")
        if int(self.n1) != self.n1 or int(self.n2) != self.n2:
            raise ValueError("sample counts must be integers")
        if self.n1 < 4 or self.n2 < 4:
            raise ValueError("bicubic interpolation needs at least 4 samples per axis")
        for name in ("x1_min", "x1_max", "x2_min", "x2_max"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def from_axes(cls, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return cls(float(x1[0]), float(x1[-1]), float(x2[0]), float(x2[-1]), x1.size, x2.size)

    @property
    def shape(self):
        return (self.n1, self.n2)

    @property
    def bounds(self):
        return (self.x1_min, self.x1_max, self.x2_min, self.x2_max)

    @property
    def h1(self):
        return (self.x1_max - self.x1_min) / (self.n1 - 1)

    @property
    def h2(self):
        return (self.x2_max - self.x2_min) / (self.n2 - 1)

    @property
    def spacing(self):
        """The finer of the two grid spacings."""
        return min(self.h1, self.h2)

    @property
    def x1(self):
        return np.linspace(self.x1_min, self.x1_max, self.n1)

    @property
    def x2(self):
        return np.linspace(self.x2_min, self.x2_max, self.n2)

    @property
    def perimeter(self):
        return 2.0 * ((self.x1_max - self.x1_min) + (self.x2_max - self.x2_min))

    def mesh(self):
        """Node coordinates as two ``(n1, n2)`` arrays."""
        return np.meshgrid(self.x1, self.x2, indexing="ij")

    def points(self):
        """Node coordinates as an ``(n1*n2, 2)`` array in storage order."""
        X1, X2 = self.mesh()
        return np.column_stack([X1.ravel(), X2.ravel()])

    def contains(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return (x1 >= self.x1_min) & (x1 <= self.x1_max) & (x2 >= self.x2_min) & (x2 <= self.x2_max)

    def refined(self, factor):
        """Same bounds with ``factor`` times as many cells per axis."""
        return Grid2D(self.x1_min, self.x1_max, self.x2_min, self.x2_max,
                      (self.n1 - 1) * factor + 1, (self.n2 - 1) * factor + 1)


def _fill_masked(values, valid):
    if valid is None or valid.all():
        return values
    if not valid.any():
        raise ValueError("field has no valid samples")
    _, (i, j) = ndimage.distance_transform_edt(~valid, return_indices=True)
    return values[i, j]


class Bicubic:
    """Piecewise-bicubic interpolant of one or more components on a grid.

    Parameters
    ----------
    grid : Grid2D
    components : sequence of (n1, n2) arrays
    valid : (n1, n2) bool array, optional
        Nodes flagged False are excluded; any cell touching one is treated
        as outside the domain.
    """

    def __init__(self, grid, components, valid=None):
        self.grid = grid
        comps = [np.asarray(c, dtype=float) for c in components]
        for c in comps:
            if c.shape != grid.shape:
                raise ValueError(f"component shape {c.shape} does not match grid {grid.shape}")
        if valid is not None:
            valid = np.asarray(valid, dtype=bool)
        self.ncomp = len(comps)
        x1, x2 = grid.x1, grid.x2
        h1, h2 = grid.h1, grid.h2
        coeffs = []
        for c in comps:
            c = _fill_masked(c, valid)
            # work relative to one sample so constant data give exactly zero slopes
            base = float(c.flat[0])
            f = c - base
            spl = RectBivariateSpline(x1, x2, f, kx=3, ky=3, s=0)
            fu = spl(x1, x2, dx=1) * h1
            fv = spl(x1, x2, dy=1) * h2
            fuv = spl(x1, x2, dx=1, dy=1) * (h1 * h2)
            G = np.empty((grid.n1 - 1, grid.n2 - 1, 4, 4))
            G[..., 0, 0] = f[:-1, :-1]
            G[..., 0, 1] = f[:-1, 1:]
            G[..., 1, 0] = f[1:, :-1]
            G[..., 1, 1] = f[1:, 1:]
            G[..., 0, 2] = fv[:-1, :-1]
            G[..., 0, 3] = fv[:-1, 1:]
            G[..., 1, 2] = fv[1:, :-1]
            G[..., 1, 3] = fv[1:, 1:]
            G[..., 2, 0] = fu[:-1, :-1]
            G[..., 2, 1] = fu[:-1, 1:]
            G[..., 3, 0] = fu[1:, :-1]
            G[..., 3, 1] = fu[1:, 1:]
            G[..., 2, 2] = fuv[:-1, :-1]
            G[..., 2, 3] = fuv[:-1, 1:]
            G[..., 3, 2] = fuv[1:, :-1]
            G[..., 3, 3] = fuv[1:, 1:]
            cf = _M @ G @ _M.T
            cf[..., 0, 0] += base
            coeffs.append(cf)
        # (n1-1, n2-1, ncomp, 4, 4)
        self._coef = np.ascontiguousarray(np.stack(coeffs, axis=2))
        if valid is None:
            self._cell_ok = None
        else:
            self._cell_ok = valid[:-1, :-1] & valid[1:, :-1] & valid[:-1, 1:] & valid[1:, 1:]

    def inside(self, x1, x2):
        """True where the point lies in the grid box and in an unmasked cell."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        ok = self.grid.contains(x1, x2)
        if self._cell_ok is not None:
            i, j, _, _ = self._locate(np.where(ok, x1, self.grid.x1_min), np.where(ok, x2, self.grid.x2_min))
            ok &= self._cell_ok[i, j]
        return ok

    def _locate(self, x1, x2):
        g = self.grid
        s1 = (x1 - g.x1_min) / g.h1
        s2 = (x2 - g.x2_min) / g.h2
        i = np.clip(np.floor(s1).astype(np.intp), 0, g.n1 - 2)
        j = np.clip(np.floor(s2).astype(np.intp), 0, g.n2 - 2)
        return i, j, s1 - i, s2 - j

    def evaluate(self, x1, x2, order=1, strict=True):
        """Values and derivatives at arbitrary points.

        Returns
        -------
        values : (..., ncomp)
        grads : (..., ncomp, 2), present when ``order >= 1``
        hess : (..., ncomp, 2, 2), present when ``order >= 2``
        ok : (...) bool
            Points outside the domain get NaN outputs (only when
            ``strict=False``; otherwise :class:`OutOfDomain` is raised).
        """
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if x1.shape != x2.shape:
            x1, x2 = np.broadcast_arrays(x1, x2)
        shape = x1.shape
        x1 = x1.ravel()
        x2 = x2.ravel()
        g = self.grid
        ok = (x1 >= g.x1_min) & (x1 <= g.x1_max) & (x2 >= g.x2_min) & (x2 <= g.x2_max)
        all_ok = ok.all()
        s1 = (x1 - g.x1_min) / g.h1
        s2 = (x2 - g.x2_min) / g.h2
        if not all_ok:
            s1 = np.where(ok, s1, 0.0)
            s2 = np.where(ok, s2, 0.0)
        i = np.minimum(s1.astype(np.intp), g.n1 - 2)
        j = np.minimum(s2.astype(np.intp), g.n2 - 2)
        if self._cell_ok is not None:
            ok &= self._cell_ok[i, j]
            all_ok = ok.all()
        if strict and not all_ok:
            bad = np.flatnonzero(~ok)[0]
            raise OutOfDomain(f"point ({x1[bad]:.6g}, {x2[bad]:.6g}) is outside the sampled domain")
        u = (s1 - i)[:, None]
        v = (s2 - j)[:, None, None]
        c = self._coef[i, j]  # (m, ncomp, 4, 4); c[..., a, b] multiplies u**a v**b
        cv = ((c[..., 3] * v + c[..., 2]) * v + c[..., 1]) * v + c[..., 0]
        vals = ((cv[..., 3] * u + cv[..., 2]) * u + cv[..., 1]) * u + cv[..., 0]
        out = [vals]
        if order >= 1:
            h1, h2 = g.h1, g.h2
            dcv = (3 * c[..., 3] * v + 2 * c[..., 2]) * v + c[..., 1]
            g1 = ((3 * cv[..., 3] * u + 2 * cv[..., 2]) * u + cv[..., 1]) / h1
            g2 = (((dcv[..., 3] * u + dcv[..., 2]) * u + dcv[..., 1]) * u + dcv[..., 0]) / h2
            out.append(np.stack([g1, g2], axis=-1))
            if order >= 2:
                d2cv = 6 * c[..., 3] * v + 2 * c[..., 2]
                h11 = (6 * cv[..., 3] * u + 2 * cv[..., 2]) / h1**2
                h22 = (((d2cv[..., 3] * u + d2cv[..., 2]) * u + d2cv[..., 1]) * u + d2cv[..., 0]) / h2**2
                h12 = ((3 * dcv[..., 3] * u + 2 * dcv[..., 2]) * u + dcv[..., 1]) / (h1 * h2)
                out.append(np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2))
        res = []
        for a in out:
            if not all_ok:
                a = np.where(ok.reshape((-1,) + (1,) * (a.ndim - 1)), a, np.nan)
            res.append(a.reshape(shape + a.shape[1:]))
        res.append(ok.reshape(shape))
        return tuple(res)

    def __call__(self, x1, x2, strict=True):
        return self.evaluate(x1, x2, order=0, strict=strict)[0]

    def gradient(self, x1, x2, strict=True):
        return self.evaluate(x1, x2, order=1, strict=strict)[1]

    def hessian(self, x1, x2, strict=True):
        return self.evaluate(x1, x2, order=2, strict=strict)[2]


def _as_readonly(a, shape, name, valid=None):
    a = np.array(a, dtype=float)
    if a.shape != tuple(shape):
        raise ValueError(f"{name} has shape {a.shape}, grid expects {tuple(shape)}")
    check = a if valid is None else a[valid]
    if not np.all(np.isfinite(check)):
        raise ValueError(f"{name} contains non-finite values")
    a.flags.writeable = False
    return a


def _as_mask(valid, shape):
    if valid is None:
        return None
    valid = np.array(valid, dtype=bool)
    if valid.shape != tuple(shape):
        raise ValueError("mask shape does not match grid")
    valid.flags.writeable = False
    return valid


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Scalar samples on a grid.  ``valid`` marks usable nodes (default: all)."""

    grid: Grid2D
    values: np.ndarray
    time: float | None = None
    valid: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        valid = _as_mask(self.valid, self.grid.shape)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "values", _as_readonly(self.values, self.grid.shape, "values", valid))

    @cached_property
    def interpolant(self):
        return Bicubic(self.grid, [self.values], self.valid)

    def value(self, x1, x2, strict=True):
        return self.interpolant(x1, x2, strict)[..., 0]

    def gradient(self, x1, x2, strict=True):
        return self.interpolant.gradient(x1, x2, strict)[..., 0, :]

    def hessian(self, x1, x2, strict=True):
        return self.interpolant.hessian(x1, x2, strict)[..., 0, :, :]

    def node_derivatives(self, order=1):
        """Interpolant derivatives evaluated at every grid node."""
        X1, X2 = self.grid.mesh()
        return self.interpolant.evaluate(X1, X2, order=order, strict=False)


@dataclass(frozen=True, eq=False)
class VectorField2D:
    """Velocity-like vector samples ``(u, v)`` on a grid at one time."""

    grid: Grid2D
    u: np.ndarray
    v: np.ndarray
    time: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "u", _as_readonly(self.u, self.grid.shape, "u"))
        object.__setattr__(self, "v", _as_readonly(self.v, self.grid.shape, "v"))

    @cached_property
    def interpolant(self):
        return Bicubic(self.grid, [self.u, self.v])

    def value(self, x1, x2, strict=True):
        return self.interpolant(x1, x2, strict)

    def gradient(self, x1, x2, strict=True):
        """Velocity gradient ``[[du/dx1, du/dx2], [dv/dx1, dv/dx2]]``."""
        return self.interpolant.gradient(x1, x2, strict)


@dataclass(frozen=True, eq=False)
class SymTensorField:
    """Symmetric 2x2 tensor samples stored as three components."""

    grid: Grid2D
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    valid: np.ndarray | None = field(default=None, repr=False)
    time: float | None = None

    def __post_init__(self):
        valid = _as_mask(self.valid, self.grid.shape)
        object.__setattr__(self, "valid", valid)
        for name in ("a11", "a12", "a22"):
            object.__setattr__(self, name, _as_readonly(getattr(self, name), self.grid.shape, name, valid))

    @cached_property
    def interpolant(self):
        return Bicubic(self.grid, [self.a11, self.a12, self.a22], self.valid)

    def components(self, x1, x2, strict=True):
        """``(..., 3)`` array of ``a11, a12, a22``."""
        return self.interpolant(x1, x2, strict)

    def value(self, x1, x2, strict=True):
        """``(..., 2, 2)`` tensor."""
        c = self.components(x1, x2, strict)
        return np.stack([np.stack([c[..., 0], c[..., 1]], -1), np.stack([c[..., 1], c[..., 2]], -1)], -2)

    def gradient(self, x1, x2, strict=True):
        """``(..., 3, 2)`` gradients of ``a11, a12, a22``."""
        return self.interpolant.gradient(x1, x2, strict)

    def norm_inf(self):
        """Largest matrix infinity-norm over valid nodes."""
        n = np.maximum(np.abs(self.a11) + np.abs(self.a12), np.abs(self.a12) + np.abs(self.a22))
        if self.valid is not None:
            n = n[self.valid]
        return float(n.max()) if n.size else 0.0

    def shifted(self, alpha):
        """Samples of ``A - alpha I`` as a new field."""
        return SymTensorField(self.grid, self.a11 - alpha, self.a12, self.a22 - alpha, self.valid, self.time)


def _split_point(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of 2")
    return x[..., 0], x[..., 1]


def interpolate(fld, x):
    """Interpolated value of ``fld`` at point(s) ``x`` (shape ``(2,)`` or ``(n, 2)``).

    Scalars come back as floats, vectors as ``(2,)`` and tensors as ``(2, 2)``
    (with the usual leading batch axis for multiple points).
    """
    x1, x2 = _split_point(x)
    out = fld.value(x1, x2)
    if np.ndim(out) == 0:
        return float(out)
    return out


def gradient(fld, x):
    """Analytic gradient of the interpolant of ``fld`` at ``x``.

    Scalar fields give ``(2,)``; tensor fields give ``(3, 2)`` rows for
    ``a11, a12, a22``; vector fields give the ``(2, 2)`` Jacobian.
    """
    x1, x2 = _split_point(x)
    return fld.gradient(x1, x2)


def resolution_error(fld):
    """Relative interpolation-error estimate per node of a tensor field.

    The field is refit from every other node and the refit is compared
    with the samples; the discrepancy, divided by the local matrix
    infinity-norm and spread to the 3x3 neighbourhood, bounds the error
    of the full-resolution interpolant from above (by roughly a factor 16
    for smooth data).  Masked nodes get ``inf``.
    """
    g = fld.grid
    if g.n1 < 7 or g.n2 < 7:
        raise ValueError("grid too small to estimate resolution")
    comps = [np.asarray(fld.a11), np.asarray(fld.a12), np.asarray(fld.a22)]
    valid = fld.valid if fld.valid is not None else np.ones(g.shape, dtype=bool)
    n1h, n2h = (g.n1 + 1) // 2, (g.n2 + 1) // 2
    half = Grid2D(g.x1_min, g.x1_min + (n1h - 1) * 2 * g.h1, g.x2_min, g.x2_min + (n2h - 1) * 2 * g.h2, n1h, n2h)
    hv = valid[::2, ::2]
    coarse = Bicubic(half, [c[::2, ::2] for c in comps], hv if not hv.all() else None)
    X1, X2 = g.mesh()
    vals, ok = coarse.evaluate(X1, X2, order=0, strict=False)
    diff = np.max(np.abs(vals - np.stack(comps, axis=-1)), axis=-1)
    norm = np.maximum(np.abs(comps[0]) + np.abs(comps[1]), np.abs(comps[1]) + np.abs(comps[2]))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(ok & valid, diff / norm, np.inf)
    rel = np.where(np.isnan(rel), np.inf, rel)
    if not (ok | ~valid).all():
        # nodes beyond the coarse grid's reach (odd last row/column)
        reach = ok | ~valid
        _, (i, j) = ndimage.distance_transform_edt(~reach, return_indices=True)
        rel = np.where(reach, rel, rel[i, j])
    return ndimage.maximum_filter(rel, size=3, mode="nearest")
