"""Particle advection, flow-map gradients, Cauchy-Green tensors and FTLE.

Velocity sources are duck-typed: anything exposing
``velocity(t, x1, x2) -> (u, v, ok)`` with array arguments works, where
``ok`` flags points at which the field is defined.  :class:`VelocitySeries`
wraps sampled slices; :class:`geovortex.ingest.AnalyticFlow` evaluates
closed-form benchmark flows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._dopri import BatchDopri
from ._parallel import map_chunks
from ._tensor import sym_eig2
from .fieldgrid import Grid2D, ScalarField, SymTensorField, VectorField2D

__all__ = [
    "VelocitySeries",
    "StepSizeUnderflow",
    "Trajectory",
    "integrate_trajectory",
    "flow_map",
    "FlowMapGradientField",
    "flow_map_gradient",
    "CauchyGreenField",
    "cauchy_green",
    "ftle",
    "RUNNING",
    "DONE",
    "LEFT_DOMAIN",
    "STEP_UNDERFLOW",
    "STEP_LIMIT",
]

RUNNING, DONE, LEFT_DOMAIN, STEP_UNDERFLOW, STEP_LIMIT = 0, 1, 2, 3, 4
STATUS_NAMES = {RUNNING: "Running", DONE: "Done", LEFT_DOMAIN: "LeftDomain",
                STEP_UNDERFLOW: "StepSizeUnderflow", STEP_LIMIT: "StepLimit"}

_OUTSIDE = 1


class StepSizeUnderflow(RuntimeError):
    """The adaptive step collapsed away from any domain boundary."""


class VelocitySeries:
    """Velocity slices on a common grid, linear in time between slices.

    A single slice is treated as a steady field.
    """

    def __init__(self, fields, times=None):
        fields = list(fields)
        if not fields:
            raise ValueError("need at least one velocity slice")
        if times is None:
            times = [f.time if f.time is not None else 0.0 for f in fields]
        times = np.asarray(times, dtype=float)
        if times.size != len(fields):
            raise ValueError("one time per slice required")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("slice times must be strictly increasing")
        grid = fields[0].grid
        if any(f.grid != grid for f in fields):
            raise ValueError("all slices must share one grid")
        self.fields = fields
        self.times = times
        self.grid = grid

    @property
    def t_span(self):
        if self.times.size == 1:
            return (-np.inf, np.inf)
        return (float(self.times[0]), float(self.times[-1]))

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, k):
        return self.fields[k]

    def at(self, t):
        """The velocity slice at time ``t`` (linear blend of neighbours)."""
        if self.times.size == 1:
            return self.fields[0]
        k, w = self._bracket(np.asarray([t], dtype=float))
        k, w = int(k[0]), float(w[0])
        a, b = self.fields[k], self.fields[k + 1]
        return VectorField2D(self.grid, (1 - w) * a.u + w * b.u, (1 - w) * a.v + w * b.v, time=t)

    def _bracket(self, t):
        times = self.times
        k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)
        w = (t - times[k]) / (times[k + 1] - times[k])
        return k, w

    def contains(self, x1, x2):
        return self.grid.contains(x1, x2)

    def velocity(self, t, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), x1.shape)
        if self.times.size == 1:
            vals, ok = self.fields[0].interpolant.evaluate(x1, x2, order=0, strict=False)
            return vals[..., 0], vals[..., 1], ok
        lo, hi = self.t_span
        span = hi - lo
        in_time = (t >= lo - 1e-12 * span) & (t <= hi + 1e-12 * span)
        k, w = self._bracket(np.clip(t, lo, hi))
        u = np.full(x1.shape, np.nan)
        v = np.full(x1.shape, np.nan)
        ok = np.zeros(x1.shape, dtype=bool)
        for kk in np.unique(k):
            sel = k == kk
            va, oka = self.fields[kk].interpolant.evaluate(x1[sel], x2[sel], order=0, strict=False)
            vb, _ = self.fields[kk + 1].interpolant.evaluate(x1[sel], x2[sel], order=0, strict=False)
            ww = w[sel][:, None]
            blend = (1 - ww) * va + ww * vb
            u[sel] = blend[:, 0]
            v[sel] = blend[:, 1]
            ok[sel] = oka
        ok &= in_time
        return u, v, ok


def _rhs(vel):
    def fun(t, y):
        u, v, ok = vel.velocity(t, y[:, 0], y[:, 1])
        dy = np.column_stack([u, v])
        return np.where(ok[:, None], dy, 0.0), np.where(ok, 0, _OUTSIDE)
    return fun


def _check_start(vel, x0):
    if hasattr(vel, "contains"):
        return np.asarray(vel.contains(x0[:, 0], x0[:, 1]), dtype=bool)
    return np.ones(len(x0), dtype=bool)


def _advect(vel, x0, t0, t1, tol, atol=None, max_steps=100000, sample_times=None):
    """Integrate rows of ``x0`` from ``t0`` to ``t1``.

    Returns final positions, status codes and, if requested, positions at
    ``sample_times`` (NaN where not reached).
    """
    x0 = np.array(x0, dtype=float, ndmin=2)
    m = len(x0)
    status = np.full(m, RUNNING)
    status[~_check_start(vel, x0)] = LEFT_DOMAIN
    samples = None
    if sample_times is not None:
        sample_times = np.asarray(sample_times, dtype=float)
        samples = np.full((m, sample_times.size, 2), np.nan)
    if t1 == t0:
        status[status == RUNNING] = DONE
        if samples is not None:
            hit = sample_times == t0
            samples[:, hit] = x0[:, None, :]
        return x0.copy(), status, samples
    duration = abs(t1 - t0)
    direction = np.sign(t1 - t0)
    atol = tol if atol is None else atol
    live = status == RUNNING
    if not live.any():
        return x0.copy(), status, samples
    idx = np.flatnonzero(live)
    stepper = BatchDopri(_rhs(vel), t0, x0[idx], rtol=tol, atol=atol, direction=direction,
                         h_max=duration, h_min=1e-12 * max(duration, 1.0))
    st = np.full(idx.size, RUNNING)
    st[stepper.stalled] = LEFT_DOMAIN
    if samples is not None:
        hit = sample_times == t0
        samples[idx[:, None], np.flatnonzero(hit)[None, :]] = x0[idx][:, None, :]
    nsteps = np.zeros(idx.size, dtype=int)
    while True:
        rows = np.flatnonzero(st == RUNNING)
        if rows.size == 0:
            break
        remaining = np.abs(t1 - stepper.s[rows])
        acc = stepper.attempt(rows, h_cap=remaining)
        nsteps[rows] += 1
        arows = rows[acc]
        if samples is not None and arows.size:
            lo = np.minimum(stepper.s_old[arows], stepper.s[arows])
            hi = np.maximum(stepper.s_old[arows], stepper.s[arows])
            for r, a, b in zip(arows, lo, hi):
                inside = np.flatnonzero((sample_times > a) & (sample_times <= b)) if direction > 0 else \
                    np.flatnonzero((sample_times >= a) & (sample_times < b))
                if inside.size:
                    samples[idx[r], inside] = stepper.dense_single(r, sample_times[inside])
        finished = arows[np.abs(stepper.s[arows] - t1) <= 1e-14 * max(1.0, abs(t1))]
        st[finished] = DONE
        stalled = rows[stepper.stalled[rows]]
        if stalled.size:
            st[stalled] = np.where(stepper.reason[stalled] == _OUTSIDE, LEFT_DOMAIN, STEP_UNDERFLOW)
        st[(st == RUNNING) & (nsteps >= max_steps)] = STEP_LIMIT
    final = x0.copy()
    final[idx] = stepper.y
    status[idx] = st
    return final, status, samples


class Trajectory(NamedTuple):
    t: np.ndarray
    x: np.ndarray
    status: str


def integrate_trajectory(v, x0, t0, t1, tol=1e-8, sample_times=None, atol=None):
    """Advect one particle from ``t0`` to ``t1`` (``t1 < t0`` runs backwards).

    Parameters
    ----------
    v : velocity source
    x0 : (2,) start point
    tol : float
        Relative local error tolerance; the absolute floor defaults to the
        same value.
    sample_times : array_like, optional
        Times at which to report the path (dense output).  Defaults to
        ``[t0, t1]``.

    Returns
    -------
    Trajectory
        ``t`` and ``x`` hold the reached samples only; ``status`` is
        ``"Done"`` or ``"LeftDomain"``.

    Raises
    ------
    StepSizeUnderflow
        If the step size collapses inside the domain.
    """
    x0 = np.asarray(x0, dtype=float).reshape(1, 2)
    if sample_times is None:
        sample_times = np.array([t0, t1], dtype=float) if t1 != t0 else np.array([t0], dtype=float)
    sample_times = np.asarray(sample_times, dtype=float)
    _, status, samples = _advect(v, x0, t0, t1, tol, atol=atol, sample_times=sample_times)
    code = int(status[0])
    if code in (STEP_UNDERFLOW, STEP_LIMIT):
        raise StepSizeUnderflow(f"trajectory from {x0[0]} stalled ({STATUS_NAMES[code]})")
    pts = samples[0]
    reached = np.all(np.isfinite(pts), axis=1)
    return Trajectory(sample_times[reached], pts[reached], STATUS_NAMES[code])


def flow_map(v, points, t0, t1, tol=1e-10, atol=None, chunk_size=4096, workers=None):
    """Images of ``points`` (``(m, 2)``) under the flow map from ``t0`` to ``t1``.

    Returns ``(images, ok)``; rows that left the domain have ``ok=False``.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 2)

    def work(a, b):
        fin, st, _ = _advect(v, points[a:b], t0, t1, tol, atol=atol)
        return fin, st

    parts = map_chunks(work, len(points), chunk_size, workers)
    if not parts:
        return np.zeros((0, 2)), np.zeros(0, dtype=bool)
    fin = np.concatenate([p[0] for p in parts])
    st = np.concatenate([p[1] for p in parts])
    return fin, st == DONE


@dataclass(frozen=True, eq=False)
class FlowMapGradientField:
    """Deformation gradient on a grid; ``valid`` is False where masked."""

    grid: Grid2D
    F11: np.ndarray
    F12: np.ndarray
    F21: np.ndarray
    F22: np.ndarray
    t0: float
    t1: float
    aux_delta: float
    valid: np.ndarray = field(repr=False, default=None)

    def matrix(self):
        """``(n1, n2, 2, 2)`` array of gradients."""
        return np.stack([np.stack([self.F11, self.F12], -1), np.stack([self.F21, self.F22], -1)], -2)

    @property
    def det(self):
        return self.F11 * self.F22 - self.F12 * self.F21


def flow_map_gradient(v, grid, t0, t1, aux_delta=None, tol=1e-10, atol=None, workers=None):
    """Flow-map gradient by central differences over an auxiliary cross.

    Each node ``x`` is surrounded by ``x +/- aux_delta e1`` and
    ``x +/- aux_delta e2``; those four points are advected and differenced.
    Nodes any of whose auxiliary trajectories leave the domain are masked.

    Parameters
    ----------
    aux_delta : float, optional
        Auxiliary offset; defaults to a tenth of the finer grid spacing.
    """
    if aux_delta is None:
        aux_delta = grid.spacing / 10.0
    if aux_delta <= 0:
        raise ValueError("aux_delta must be positive")
    shape = grid.shape
    if t1 == t0:
        one = np.ones(shape)
        zero = np.zeros(shape)
        return FlowMapGradientField(grid, one, zero, zero.copy(), one.copy(), t0, t1, aux_delta,
                                    np.ones(shape, dtype=bool))
    nodes = grid.points()
    d = aux_delta
    offsets = np.array([[d, 0.0], [-d, 0.0], [0.0, d], [0.0, -d]])
    aux = (nodes[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
    img, ok = flow_map(v, aux, t0, t1, tol=tol, atol=atol, workers=workers)
    img = img.reshape(-1, 4, 2)
    ok = ok.reshape(-1, 4).all(axis=1)
    dx1 = (img[:, 0] - img[:, 1]) / (2 * d)
    dx2 = (img[:, 2] - img[:, 3]) / (2 * d)
    F11 = dx1[:, 0].reshape(shape)
    F21 = dx1[:, 1].reshape(shape)
    F12 = dx2[:, 0].reshape(shape)
    F22 = dx2[:, 1].reshape(shape)
    valid = ok.reshape(shape)
    nanify = lambda a: np.where(valid, a, np.nan)
    return FlowMapGradientField(grid, nanify(F11), nanify(F12), nanify(F21), nanify(F22),
                                t0, t1, aux_delta, valid)


@dataclass(frozen=True, eq=False)
class CauchyGreenField:
    """Right Cauchy-Green tensor with ordered eigenvalues and eigenvectors.

    ``lam1 <= lam2``; ``xi2 = R xi1``; ``degenerate`` marks repeated
    eigenvalues (``xi1 = (1, 0)`` there).  Masked nodes carry NaN in the
    eigen arrays and are excluded by ``tensor.valid``.
    """

    tensor: SymTensorField
    lam1: np.ndarray
    lam2: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    degenerate: np.ndarray
    t0: float = 0.0
    t1: float = 0.0

    @property
    def grid(self):
        return self.tensor.grid

    @property
    def valid(self):
        v = self.tensor.valid
        return np.ones(self.grid.shape, dtype=bool) if v is None else v

    @property
    def T(self):
        return self.t1 - self.t0


def cauchy_green(gradF):
    """``C = grad(F)^T grad(F)`` with a closed-form eigen-decomposition."""
    valid = np.ones(gradF.grid.shape, dtype=bool) if gradF.valid is None else gradF.valid
    F11 = np.where(valid, gradF.F11, 1.0)
    F12 = np.where(valid, gradF.F12, 0.0)
    F21 = np.where(valid, gradF.F21, 0.0)
    F22 = np.where(valid, gradF.F22, 1.0)
    c11 = F11 * F11 + F21 * F21
    c12 = F11 * F12 + F21 * F22
    c22 = F12 * F12 + F22 * F22
    detF = F11 * F22 - F12 * F21
    l1, l2, e1, e2, deg = sym_eig2(c11, c12, c22, det=detF * detF)
    nan = lambda a: np.where(valid if a.ndim == 2 else valid[..., None], a, np.nan)
    tensor = SymTensorField(gradF.grid, c11, c12, c22, valid=None if valid.all() else valid)
    return CauchyGreenField(tensor, nan(l1), nan(l2), nan(e1), nan(e2), deg & valid,
                            t0=gradF.t0, t1=gradF.t1)


def ftle(cg, T=None):
    """Finite-time Lyapunov exponent ``log(lam2) / (2 |T|)`` per node."""
    if T is None:
        T = cg.T
    if T == 0:
        raise ValueError("FTLE needs a nonzero integration time")
    valid = cg.valid & np.isfinite(cg.lam2)
    lam2 = np.where(valid, cg.lam2, 1.0)
    if np.any(lam2 <= 0):
        raise ValueError("largest Cauchy-Green eigenvalue must be positive")
    vals = np.log(lam2) / (2.0 * abs(T))
    return ScalarField(cg.grid, np.where(valid, vals, np.nan), time=cg.t0,
                       valid=None if valid.all() else valid)
