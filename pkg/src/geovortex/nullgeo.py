"""Closed null-geodesics of a family of indefinite metrics ``A(x) - alpha I``.

A tangent direction ``e = (cos phi, sin phi)`` is null for the shifted
metric where ``q = <e, (A - alpha I) e>`` vanishes.  Along a unit-speed
null curve the tangent angle obeys the reduced flow::

    x'   = e
    phi' = -<e, (grad A . e) e> / (2 <e, R^T A e>),     R = [[0, -1], [1, 0]]

which does not involve ``alpha``: the shift enters the denominator only
through ``<e, R^T e> = 0`` and drops out of ``grad A``.  ``q`` is a first
integral of the flow, so an orbit started on ``q = 0`` stays there, and
closed curves of the family are the ``x``-projections of orbits that come
back to their start after the angle has turned by ``+-2 pi``.

Seeds are drawn from the zero contour of ``q(x, phi0)``; each is shot
once, near-misses are bracketed by the sign of the return displacement
along the contour and tightened by a root solve, and accepted curves are
deduplicated by Hausdorff distance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq
from skimage.measure import find_contours

from ._dopri import BatchDopri
from ._geometry import hausdorff, hausdorff_lower_bound, signed_area
from ._parallel import map_chunks
from .fieldgrid import OutOfDomain, SymTensorField

__all__ = [
    "InvarianceResult",
    "admissible",
    "SingularDenominator",
    "DegenerateMetric",
    "MetricFamily",
    "GeodesicState",
    "ClosedCurve",
    "SeedSet",
    "OrbitOptions",
    "OrbitSearch",
    "phi_prime",
    "alpha_invariance_check",
    "seed_points",
    "find_closed_orbits",
    "search_closed_orbits",
    "null_residual",
    "first_integral",
    "hamiltonian_rhs",
    "hamiltonian_orbit",
]

PARAMETER_KINDS = ("generic_alpha", "lcs_lambda_squared", "oecs_mu")

# per-seed outcomes
CLOSED = "Closed"
LEFT_DOMAIN = "LeftDomain"
SINGULAR = "SingularDenominator"
MAX_LENGTH = "MaxArcLength"
MAX_TURNING = "MaxTurning"
STEP_LIMIT = "StepLimit"
UNDERFLOW = "StepSizeUnderflow"
DEGENERATE = "DegenerateMetric"
EMPTY = "EmptySeedSet"

_CODE_OUTSIDE = 1
_CODE_SINGULAR = 2
_CODE_DEGENERATE = 3


class SingularDenominator(ValueError):
    """``<e, R^T A e>`` is below the admissibility threshold."""


class DegenerateMetric(ValueError):
    """The metric (or its shift) is too close to singular or to zero."""


@dataclass(frozen=True, eq=False)
class MetricFamily:
    """``A(x) - alpha I`` for a sampled symmetric tensor field ``A``.

    Parameters
    ----------
    A : SymTensorField
    parameter_kind : {"generic_alpha", "lcs_lambda_squared", "oecs_mu"}
        How user-facing parameters map to ``alpha``: ``lambda**2`` for
        LCS, identity otherwise.
    traceless : bool
        Treat ``A`` as trace-free (``a22 = -a11``), the incompressible
        strain form.
    delta_sing : float, optional
        Absolute admissibility threshold on ``|<e, R^T A e>|``; defaults to
        ``1e-8 * ||A||_inf``.
    """

    A: SymTensorField
    parameter_kind: str = "generic_alpha"
    traceless: bool = False
    delta_sing: float | None = None

    def __post_init__(self):
        if self.parameter_kind not in PARAMETER_KINDS:
            raise ValueError(f"parameter_kind must be one of {PARAMETER_KINDS}")
        a = (self.A.a11, self.A.a12, self.A.a22)
        v = self.A.valid
        if any(not np.all(np.isfinite(c if v is None else c[v])) for c in a):
            raise ValueError("metric samples must be finite on valid nodes")

    @property
    def grid(self):
        return self.A.grid

    @cached_property
    def field(self):
        """The tensor actually used (trace removed when ``traceless``)."""
        if not self.traceless:
            return self.A
        A = self.A
        return SymTensorField(A.grid, A.a11, A.a12, -np.asarray(A.a11), A.valid, A.time)

    @cached_property
    def norm(self):
        return self.field.norm_inf()

    @property
    def sing_threshold(self):
        if self.delta_sing is not None:
            return float(self.delta_sing)
        return 1e-8 * self.norm

    def alpha(self, parameter):
        """Shift ``alpha`` for a user-facing parameter value."""
        return parameter**2 if self.parameter_kind == "lcs_lambda_squared" else parameter

    def evaluate(self, x1, x2):
        """``(comps (m, 3), grads (m, 3, 2), ok (m,))``; NaN where not ok."""
        vals, grads, ok = self.field.interpolant.evaluate(x1, x2, order=1, strict=False)
        return vals, grads, ok


@dataclass(frozen=True)
class GeodesicState:
    x: tuple
    phi: float


def _forms(comps, grads, c, s, alpha):
    """``q``, the ``R^T`` form ``B`` and the numerator of ``phi'``.

    The shift is applied to the unshifted forms with the identity's own
    forms (``c*c + s*s`` and ``c*s - s*c``) so the result is exactly
    independent of ``alpha`` where it should be.
    """
    a11, a12, a22 = comps[..., 0], comps[..., 1], comps[..., 2]
    cc, ss, cs = c * c, s * s, c * s
    q = cc * a11 + 2 * cs * a12 + ss * a22 - alpha * (cc + ss)
    B = a12 * (cc - ss) + (a22 - a11) * cs - alpha * (c * s - s * c)
    de = grads[..., 0] * c[..., None] + grads[..., 1] * s[..., None]  # (m, 3)
    num = cc * de[..., 0] + 2 * cs * de[..., 1] + ss * de[..., 2]
    return q, B, num


def _phi_prime_traceless(comps, grads, c, s):
    """Trace-free form written with double angles; equal to the generic form
    when ``a22 = -a11``."""
    c2 = c * c - s * s
    s2 = 2 * c * s
    d11 = grads[..., 0, 0] * c + grads[..., 0, 1] * s
    d12 = grads[..., 1, 0] * c + grads[..., 1, 1] * s
    den = comps[..., 1] * c2 - comps[..., 0] * s2
    return -(d11 * c2 + d12 * s2) / (2 * den), den


def _phi_prime_arrays(metric, comps, grads, phi, alpha):
    c, s = np.cos(phi), np.sin(phi)
    if metric.traceless:
        with np.errstate(divide="ignore", invalid="ignore"):
            pp, B = _phi_prime_traceless(comps, grads, c, s)
        return pp, B
    _, B, num = _forms(comps, grads, c, s, alpha)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        pp = -num / (2 * B)
    return pp, B


def phi_prime(metric, x, phi, alpha=0.0):
    """Turning rate of a null-geodesic through ``x`` with tangent angle ``phi``.

    ``x`` may be ``(2,)`` or ``(m, 2)`` with ``phi`` broadcastable to the
    batch.

    Raises
    ------
    SingularDenominator
        If ``|<e, R^T (A - alpha I) e>|`` is below ``metric.sing_threshold``.
    OutOfDomain
        If a point is outside the sampled field.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    x = np.atleast_2d(x)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (len(x),))
    comps, grads, ok = metric.evaluate(x[:, 0], x[:, 1])
    if not ok.all():
        raise OutOfDomain("point outside the sampled metric")
    pp, B = _phi_prime_arrays(metric, comps, grads, phi, alpha)
    if np.any(np.abs(B) < metric.sing_threshold):
        raise SingularDenominator("tangent direction is not admissible (|<e, R^T A e>| below threshold)")
    return float(pp[0]) if scalar else pp


@dataclass(frozen=True)
class InvarianceResult:
    """Outcome of :func:`alpha_invariance_check`; truthy when it passed."""

    ok: bool
    max_error: float
    n_checked: int

    def __bool__(self):
        return self.ok


def alpha_invariance_check(metric, samples, alphas=None, rng=None, atol=1e-12):
    """Compare ``phi'`` evaluated with ``alpha = 0`` and with random shifts.

    ``samples`` is ``(m, 3)`` rows of ``(x1, x2, phi)``; rows that are not
    admissible for either side are skipped.  ``alphas`` defaults to one
    uniform draw in ``[-10, 10]`` per sample.

    Returns
    -------
    InvarianceResult
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if alphas is None:
        rng = np.random.default_rng(rng)
        alphas = rng.uniform(-10, 10, len(samples))
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (len(samples),))
    comps, grads, ok = metric.evaluate(samples[:, 0], samples[:, 1])
    p0, B0 = _phi_prime_arrays(metric, comps, grads, samples[:, 2], 0.0)
    pa, Ba = _phi_prime_arrays(metric, comps, grads, samples[:, 2], alphas)
    thr = metric.sing_threshold
    use = ok & (np.abs(B0) >= thr) & (np.abs(Ba) >= thr)
    err = float(np.max(np.abs(p0[use] - pa[use]))) if use.any() else 0.0
    return InvarianceResult(err <= atol, err, int(use.sum()))


def admissible(metric, x, phi, alpha=0.0):
    """Mask of points inside the field whose direction ``phi`` is admissible."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (len(x),))
    comps, grads, ok = metric.evaluate(x[:, 0], x[:, 1])
    _, B = _phi_prime_arrays(metric, comps, grads, phi, alpha)
    with np.errstate(invalid="ignore"):
        return ok & (np.abs(B) >= metric.sing_threshold)


def first_integral(metric, x, phi, alpha):
    """``q/2 = <e, (A - alpha I) e> / 2`` at points ``x`` with angles ``phi``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    comps, grads, ok = metric.evaluate(x[:, 0], x[:, 1])
    if not ok.all():
        raise OutOfDomain("point outside the sampled metric")
    phi = np.broadcast_to(np.asarray(phi, dtype=float), (len(x),))
    q, _, _ = _forms(comps, grads, np.cos(phi), np.sin(phi), alpha)
    return 0.5 * q


# --------------------------------------------------------------------------
# seeds


@dataclass(frozen=True, eq=False)
class SeedSet:
    """Admissible initial positions on the zero contour of ``q(., phi0)``.

    Attributes
    ----------
    points : (n, 2) seed positions, projected onto ``q = 0``
    contour : (n,) index of the contour each seed came from
    sigma : (n,) arc-length position of each seed along its contour
    contours : list of (k, 2) contour polylines
    closed : list of bool, one per contour
    status : "ok", "EmptySeedSet" or "DegenerateMetric"
    dropped : dict of counts of rejected candidates by reason
    """

    points: np.ndarray
    contour: np.ndarray
    sigma: np.ndarray
    contours: list
    closed: list
    alpha: float
    phi0: float
    status: str = "ok"
    dropped: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def _q_and_grad(metric, x, phi0, alpha):
    comps, grads, ok = metric.evaluate(x[:, 0], x[:, 1])
    c, s = np.cos(phi0), np.sin(phi0)
    q = c * c * comps[:, 0] + 2 * c * s * comps[:, 1] + s * s * comps[:, 2] - alpha * (c * c + s * s)
    gq = c * c * grads[:, 0] + 2 * c * s * grads[:, 1] + s * s * grads[:, 2]
    return q, gq, ok


def _project(metric, x, phi0, alpha, max_iter=30):
    """Newton steps along ``grad q`` onto ``q = 0``; returns (x, ok)."""
    x = np.array(x, dtype=float, ndmin=2)
    scale = max(metric.norm, abs(alpha), 1e-300)
    cap = metric.grid.spacing
    done = np.zeros(len(x), dtype=bool)
    alive = np.ones(len(x), dtype=bool)
    for _ in range(max_iter):
        act = np.flatnonzero(alive & ~done)
        if act.size == 0:
            break
        q, gq, ok = _q_and_grad(metric, x[act], phi0, alpha)
        alive[act[~ok]] = False
        conv = ok & (np.abs(q) <= 1e-14 * scale)
        done[act[conv]] = True
        move = ok & ~conv
        g2 = (gq**2).sum(axis=1)
        move &= g2 > 0
        alive[act[ok & ~conv & ~(g2 > 0)]] = False
        idx = act[move]
        step = (q[move] / g2[move])[:, None] * gq[move]
        n = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, cap / np.maximum(n, 1e-300))[:, None]
        x[idx] -= step
    # a final check for rows that hit the iteration cap
    rest = np.flatnonzero(alive & ~done)
    if rest.size:
        q, _, ok = _q_and_grad(metric, x[rest], phi0, alpha)
        done[rest[ok & (np.abs(q) <= 1e-10 * scale)]] = True
    return x, done & alive


def _resample(poly, stride, closed):
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    L = cum[-1]
    if L == 0:
        return np.zeros(1), L, cum
    if closed:
        n = max(1, int(np.floor(L / stride)))
        sig = np.arange(n) * (L / n)
    else:
        n = int(np.floor(L / stride))
        sig = np.arange(n + 1) * stride
        sig = sig[sig <= L]
    return sig, L, cum


def _along(poly, cum, sig, closed):
    L = cum[-1]
    if closed and L > 0:
        sig = np.mod(sig, L)
    sig = np.clip(sig, 0, L)
    return np.stack([np.interp(sig, cum, poly[:, 0]), np.interp(sig, cum, poly[:, 1])], axis=-1)


def seed_points(metric, alpha, phi0=0.0, stride=None, degenerate_tol=1e-8):
    """Admissible seeds on ``<e_phi0, (A - alpha I) e_phi0> = 0``.

    Zero contours of ``q`` on the grid come from marching squares, are
    resampled every ``stride`` of arc length (default two grid spacings)
    and each sample is Newton-projected onto the interpolated level set.
    Samples with ``|<e, R^T A e>| < delta_sing`` at ``phi0`` are dropped.

    Returns
    -------
    SeedSet
        ``status`` is ``"EmptySeedSet"`` when no admissible seed exists and
        ``"DegenerateMetric"`` when ``A - alpha I`` vanishes on the grid.
    """
    if not 0 <= phi0 < 2 * np.pi:
        raise ValueError("phi0 must lie in [0, 2 pi)")
    A = metric.field
    grid = metric.grid
    stride = 2 * grid.spacing if stride is None else float(stride)
    if stride <= 0:
        raise ValueError("stride must be positive")
    valid = A.valid if A.valid is not None else np.ones(grid.shape, dtype=bool)
    scale = max(metric.norm, abs(alpha), 1e-300)
    dev = np.maximum.reduce([np.abs(A.a11 - alpha), np.abs(A.a12), np.abs(A.a22 - alpha)])
    empty = np.zeros((0, 2))
    if not np.any(dev[valid] > degenerate_tol * scale):
        return SeedSet(empty, np.zeros(0, int), np.zeros(0), [], [], alpha, phi0, DEGENERATE)
    c, s = np.cos(phi0), np.sin(phi0)
    q = c * c * A.a11 + 2 * c * s * A.a12 + s * s * A.a22 - alpha * (c * c + s * s)
    qmask = np.where(valid, q, np.nan)
    if not (np.nanmin(qmask) <= 0 <= np.nanmax(qmask)):
        return SeedSet(empty, np.zeros(0, int), np.zeros(0), [], [], alpha, phi0, EMPTY)
    raw = find_contours(q, 0.0, mask=valid if A.valid is not None else None)
    contours, closed = [], []
    for r in raw:
        xy = np.stack([grid.x1_min + r[:, 0] * grid.h1, grid.x2_min + r[:, 1] * grid.h2], axis=-1)
        contours.append(xy)
        closed.append(len(xy) > 2 and np.allclose(xy[0], xy[-1], rtol=0, atol=1e-12 * max(1.0, grid.spacing)))
    pts, cid, sig_all = [], [], []
    for k, (poly, cl) in enumerate(zip(contours, closed)):
        sig, _, cum = _resample(poly, stride, cl)
        pts.append(_along(poly, cum, sig, cl))
        cid.append(np.full(len(sig), k))
        sig_all.append(sig)
    if not pts:
        return SeedSet(empty, np.zeros(0, int), np.zeros(0), contours, closed, alpha, phi0, EMPTY)
    pts = np.concatenate(pts)
    cid = np.concatenate(cid)
    sig_all = np.concatenate(sig_all)
    x, ok = _project(metric, pts, phi0, alpha)
    dropped = {"projection": int((~ok).sum())}
    comps, grads, inside = metric.evaluate(x[:, 0], x[:, 1])
    ok &= inside
    local = np.max(np.abs(comps - alpha * np.array([1.0, 0.0, 1.0])), axis=1)
    degen = ok & ~(local > degenerate_tol * scale)
    dropped["degenerate"] = int(degen.sum())
    ok &= ~degen
    _, B = _phi_prime_arrays(metric, comps, grads, np.full(len(x), phi0), alpha)
    sing = ok & ~(np.abs(B) >= metric.sing_threshold)
    dropped["singular"] = int(sing.sum())
    ok &= ~sing
    if ok.any():
        status = "ok"
    elif dropped["degenerate"] == len(x):
        status = DEGENERATE
    else:
        status = EMPTY
    return SeedSet(x[ok], cid[ok], sig_all[ok], contours, closed, alpha, phi0, status, dropped)


# --------------------------------------------------------------------------
# orbit search


@dataclass(frozen=True)
class OrbitOptions:
    """Numerical settings of the closed-orbit search.

    ``None`` entries resolve against the metric's grid: ``eps_close`` is one
    grid spacing, ``eps_dedup`` twice ``eps_close``, ``L_max`` twice the
    domain perimeter, ``sample_ds`` a quarter spacing and ``delta_sing``
    ``1e-8 ||A||_inf``.
    """

    tol: float = 1e-9
    atol: float | None = None
    delta_sing: float | None = None
    eps_close: float | None = None
    eps_dedup: float | None = None
    L_max: float | None = None
    phi_max: float = 4 * np.pi
    sample_ds: float | None = None
    stride: float | None = None
    refine: bool = True
    refine_iter: int = 50
    max_steps: int = 100000
    chunk_size: int = 128
    workers: int | None = None

    def __post_init__(self):
        for name in ("tol", "atol", "delta_sing", "eps_close", "eps_dedup", "L_max", "sample_ds", "stride"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")
        if not self.phi_max > 2 * np.pi:
            raise ValueError("phi_max must exceed 2 pi")

    def resolved(self, metric):
        g = metric.grid
        eps = self.eps_close if self.eps_close is not None else g.spacing
        return {
            "tol": self.tol,
            "atol": self.atol if self.atol is not None else self.tol * 1e-2 * g.spacing,
            "delta_sing": self.delta_sing if self.delta_sing is not None else metric.sing_threshold,
            "eps_close": eps,
            "eps_dedup": self.eps_dedup if self.eps_dedup is not None else 2 * eps,
            "L_max": self.L_max if self.L_max is not None else 2 * g.perimeter,
            "phi_max": self.phi_max,
            "sample_ds": self.sample_ds if self.sample_ds is not None else 0.25 * g.spacing,
            "h_max": g.spacing,
        }


@dataclass(frozen=True, eq=False)
class ClosedCurve:
    """A closed null-geodesic.

    ``vertices`` run from the seed to the return point ``x(s*)``; ``phi``
    holds the unwrapped tangent angle at each vertex.  ``parameter`` is
    the user-facing family parameter (``lambda`` for LCS, ``mu`` for
    OECS) and ``alpha`` the corresponding shift.
    """

    vertices: np.ndarray
    phi: np.ndarray
    alpha: float
    winding: int
    closure_residual: float
    enclosed_area: float
    seed: np.ndarray
    arclength: float
    parameter: float | None = None
    refined: bool = False

    @property
    def centroid(self):
        from ._geometry import centroid
        return centroid(self.vertices)

    def __len__(self):
        return len(self.vertices)


@dataclass(eq=False)
class OrbitSearch:
    """Result of :func:`search_closed_orbits`.

    ``statuses`` holds one outcome string per seed of ``seeds``;
    ``trajectories`` is filled only in trace mode.
    """

    curves: list
    seeds: SeedSet
    statuses: list
    alpha: float
    n_refined: int = 0
    trajectories: list | None = None

    def counts(self):
        out = {}
        for s in self.statuses:
            out[s] = out.get(s, 0) + 1
        return out


def _lagrangian_rhs(metric, alpha, delta):
    def fun(s, y):
        comps, grads, ok = metric.evaluate(y[:, 0], y[:, 1])
        pp, B = _phi_prime_arrays(metric, comps, grads, y[:, 2], alpha)
        code = np.zeros(len(y), dtype=int)
        code[~ok] = _CODE_OUTSIDE
        code[ok & ~(np.abs(B) >= delta)] = _CODE_SINGULAR
        dy = np.stack([np.cos(y[:, 2]), np.sin(y[:, 2]), np.where(code == 0, pp, 0.0)], axis=-1)
        return dy, code
    return fun


_REASON = {_CODE_OUTSIDE: LEFT_DOMAIN, _CODE_SINGULAR: SINGULAR, _CODE_DEGENERATE: DEGENERATE, -1: UNDERFLOW}


def _shoot(fun, x0, phi0, cfg, max_steps, record=False, trace=False):
    """Integrate rows from ``(x0, phi0)`` until closure or a stop condition.

    Returns a dict of per-row arrays: status, first-return point and
    winding, closure point/residual/arc length and, when recording, the
    sampled vertices and angles.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    m = len(x0)
    y0 = np.column_stack([x0, np.full(m, phi0)])
    h_max = cfg["h_max"]
    st = BatchDopri(fun, 0.0, y0, rtol=cfg["tol"], atol=cfg["atol"], h_max=h_max, h_min=1e-10 * h_max)
    status = np.array([""] * m, dtype=object)
    for r in np.flatnonzero(st.stalled):
        status[r] = _REASON.get(int(st.reason[r]), UNDERFLOW)
    ret_x = np.full((m, 2), np.nan)
    ret_w = np.zeros(m, dtype=int)
    end_x = np.full((m, 2), np.nan)
    end_phi = np.full(m, np.nan)
    end_s = np.full(m, np.nan)
    resid = np.full(m, np.inf)
    nsteps = np.zeros(m, dtype=int)
    eps = cfg["eps_close"]
    ds = cfg["sample_ds"]
    rec = [None] * m
    if record or trace:
        rec = [[(0.0, y0[r])] for r in range(m)]

    targets = (phi0 + 2 * np.pi, phi0 - 2 * np.pi)
    while True:
        active = np.flatnonzero(status == "")
        if active.size == 0:
            break
        acc = st.attempt(active)
        nsteps[active] += 1
        for r in active[~acc]:
            if st.stalled[r]:
                status[r] = _REASON.get(int(st.reason[r]), UNDERFLOW)
        rows = active[acc]
        if rows.size == 0:
            continue
        p_old = st.y_old[rows, 2]
        p_new = st.y[rows, 2]
        close_s = np.full(rows.size, np.nan)
        for tgt, w in zip(targets, (1, -1)):
            g_old = p_old - tgt
            g_new = p_new - tgt
            cross = ((g_old < 0) & (g_new >= 0)) | ((g_old > 0) & (g_new <= 0))
            for k in np.flatnonzero(cross & np.isnan(close_s)):
                r = rows[k]
                a, b = st.s_old[r], st.s[r]

                def f(sq, r=r, tgt=tgt):
                    return st.dense_single(r, sq)[0, 2] - tgt

                fa, fb = f(a), f(b)
                if fa * fb < 0:
                    s_star = brentq(f, a, b, xtol=1e-12, rtol=4 * np.finfo(float).eps)
                else:
                    s_star = b if abs(fb) <= abs(fa) else a
                ys = st.dense_single(r, s_star)[0]
                d = float(np.hypot(ys[0] - x0[r, 0], ys[1] - x0[r, 1]))
                if np.isnan(ret_x[r, 0]):
                    ret_x[r] = ys[:2]
                    ret_w[r] = w
                if d <= eps:
                    status[r] = CLOSED
                    close_s[k] = s_star
                    end_x[r] = ys[:2]
                    end_phi[r] = ys[2]
                    end_s[r] = s_star
                    resid[r] = d
        if record or trace:
            for k, r in enumerate(rows):
                a, b = st.s_old[r], st.s[r]
                top = b if np.isnan(close_s[k]) else close_s[k]
                n0 = int(np.floor(a / ds)) + 1
                n1 = int(np.floor(top / ds))
                if n1 >= n0:
                    sq = np.arange(n0, n1 + 1) * ds
                    sq = sq[(sq > a) & (sq < top)]
                    if sq.size:
                        vals = st.dense_single(r, sq)
                        rec[r].extend(zip(sq, vals))
                if not np.isnan(close_s[k]):
                    rec[r].append((close_s[k], np.array([end_x[r, 0], end_x[r, 1], end_phi[r]])))
                elif trace:
                    rec[r].append((b, st.y[r].copy()))
        run = rows[status[rows] == ""]
        if run.size:
            over_L = st.s[run] > cfg["L_max"]
            over_phi = np.abs(st.y[run, 2] - phi0) > cfg["phi_max"]
            status[run[over_L]] = MAX_LENGTH
            status[run[~over_L & over_phi]] = MAX_TURNING
            status[run[(status[run] == "") & (nsteps[run] >= max_steps)]] = STEP_LIMIT
    out = {"status": status, "ret_x": ret_x, "ret_w": ret_w, "end_x": end_x, "end_phi": end_phi,
           "end_s": end_s, "resid": resid}
    if record or trace:
        out["rec"] = rec
    return out


def _run_chunked(fun, x0, phi0, cfg, opts, record=False, trace=False):
    n = len(x0)
    if n == 0:
        return {"status": np.zeros(0, dtype=object), "ret_x": np.zeros((0, 2)), "ret_w": np.zeros(0, int),
                "end_x": np.zeros((0, 2)), "end_phi": np.zeros(0), "end_s": np.zeros(0),
                "resid": np.zeros(0), "rec": []}
    parts = map_chunks(lambda a, b: _shoot(fun, x0[a:b], phi0, cfg, opts.max_steps, record, trace),
                       n, opts.chunk_size, opts.workers)
    out = {}
    for key in parts[0]:
        if key == "rec":
            out[key] = [r for p in parts for r in p[key]]
        else:
            out[key] = np.concatenate([p[key] for p in parts])
    return out


def _tangent_dir(metric, x, phi0, alpha):
    _, gq, ok = _q_and_grad(metric, x, phi0, alpha)
    t = np.stack([-gq[:, 1], gq[:, 0]], axis=-1)
    n = np.linalg.norm(t, axis=1, keepdims=True)
    return t / np.where(n > 0, n, 1.0)


def _refine(metric, alpha, seeds, first, fun, cfg, opts):
    """Tighten sign changes of the along-contour return displacement (Illinois false position)."""
    phi0 = seeds.phi0
    x0 = seeds.points
    n = len(x0)
    have = ~np.isnan(first["ret_x"][:, 0])
    t_hat = _tangent_dir(metric, x0, phi0, alpha)
    d = np.einsum("ij,ij->i", np.nan_to_num(first["ret_x"] - x0), t_hat)
    pairs = []
    for i in range(n):
        nxt = i + 1
        if nxt < n and seeds.contour[nxt] == seeds.contour[i]:
            j = nxt
        elif seeds.closed[seeds.contour[i]]:
            first_idx = np.flatnonzero(seeds.contour == seeds.contour[i])[0]
            j = first_idx
            if j == i:
                continue
        else:
            continue
        both_closed = first["status"][i] == CLOSED and first["status"][j] == CLOSED
        if have[i] and have[j] and not both_closed and first["ret_w"][i] == first["ret_w"][j] and d[i] * d[j] < 0:
            pairs.append((i, j))
    if not pairs:
        return np.zeros((0, 2))
    polys = [seeds.contours[seeds.contour[i]] for i, _ in pairs]
    cums = [np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))]) for p in polys]
    closed = [seeds.closed[seeds.contour[i]] for i, _ in pairs]
    a = np.array([seeds.sigma[i] for i, _ in pairs])
    b = np.array([seeds.sigma[j] for _, j in pairs])
    # unwrap the wrap-around bracket of closed contours
    for k, (i, j) in enumerate(pairs):
        if b[k] <= a[k]:
            b[k] += cums[k][-1]
    fa = np.array([d[i] for i, _ in pairs])
    fb = np.array([d[j] for _, j in pairs])
    w = np.array([first["ret_w"][i] for i, _ in pairs])
    best_c = np.where(np.abs(fa) <= np.abs(fb), a, b)
    best_f = np.minimum(np.abs(fa), np.abs(fb))
    alive = np.ones(len(pairs), dtype=bool)
    # return points carry integration noise well above round-off, so stop
    # once the displacement is a small fraction of the closure tolerance
    conv_tol = 1e-4 * cfg["eps_close"]

    def point(k, sig):
        p = _along(polys[k], cums[k], np.array([sig]), closed[k])
        return p[0]

    for _ in range(opts.refine_iter):
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            c = b[act] - fb[act] * (b[act] - a[act]) / (fb[act] - fa[act])
        lo = np.minimum(a[act], b[act])
        hi = np.maximum(a[act], b[act])
        bad = ~np.isfinite(c) | (c <= lo) | (c >= hi)
        c = np.where(bad, 0.5 * (a[act] + b[act]), c)
        raw = np.array([point(k, ck) for k, ck in zip(act, c)])
        xc, ok = _project(metric, raw, phi0, alpha)
        res = _run_chunked(fun, xc, phi0, cfg, opts)
        fc = np.einsum("ij,ij->i", np.nan_to_num(res["ret_x"] - xc), _tangent_dir(metric, xc, phi0, alpha))
        good = ok & ~np.isnan(res["ret_x"][:, 0]) & (res["ret_w"] == w[act])
        alive[act[~good]] = False
        for k, ck, fk, g in zip(act, c, fc, good):
            if not g:
                continue
            if abs(fk) < best_f[k]:
                best_f[k], best_c[k] = abs(fk), ck
            if fk * fb[k] < 0:
                a[k], fa[k] = b[k], fb[k]
            else:
                fa[k] *= 0.5
            b[k], fb[k] = ck, fk
            if abs(fk) <= conv_tol or abs(b[k] - a[k]) <= 1e-13 * max(1.0, cums[k][-1]):
                alive[k] = False
    raw = np.array([point(k, ck) for k, ck in enumerate(best_c)])
    xc, ok = _project(metric, raw, phi0, alpha)
    return xc[ok]


def _curve_from_record(rec, alpha, seed, resid, w, refined):
    s = np.array([t for t, _ in rec])
    ys = np.array([y for _, y in rec])
    verts = ys[:, :2].copy()
    return ClosedCurve(verts, ys[:, 2].copy(), float(alpha), int(w), float(resid),
                       abs(signed_area(verts)), np.asarray(seed, dtype=float), float(s[-1]), refined=refined)


def search_closed_orbits(metric, alpha, seeds=None, opts=None, trace=False):
    """Closed null-geodesics of ``A - alpha I`` started from ``seeds``.

    Parameters
    ----------
    metric : MetricFamily
    alpha : float
        Shift (already mapped from the user parameter).
    seeds : SeedSet, optional
        Defaults to :func:`seed_points` at ``phi0 = 0``.
    opts : OrbitOptions, optional
    trace : bool
        Also return every seed's sampled orbit (debugging aid).

    Returns
    -------
    OrbitSearch
    """
    opts = opts or OrbitOptions()
    if seeds is None:
        seeds = seed_points(metric, alpha, 0.0, stride=opts.stride)
    if seeds.status != "ok" or len(seeds) == 0:
        status = seeds.status if seeds.status != "ok" else EMPTY
        return OrbitSearch([], seeds, [status] * len(seeds), alpha, trajectories=[] if trace else None)
    cfg = opts.resolved(metric)
    fun = _lagrangian_rhs(metric, alpha, cfg["delta_sing"])
    first = _run_chunked(fun, seeds.points, seeds.phi0, cfg, opts, trace=trace)
    cand = [seeds.points[first["status"] == CLOSED]]
    refined_flag = [np.zeros(len(cand[0]), dtype=bool)]
    n_ref = 0
    if opts.refine:
        extra = _refine(metric, alpha, seeds, first, fun, cfg, opts)
        n_ref = len(extra)
        cand.append(extra)
        refined_flag.append(np.ones(len(extra), dtype=bool))
    cand = np.concatenate(cand)
    refined_flag = np.concatenate(refined_flag)
    curves = []
    if len(cand):
        res = _run_chunked(fun, cand, seeds.phi0, cfg, opts, record=True)
        order = []
        for k in range(len(cand)):
            if res["status"][k] == CLOSED:
                order.append(k)
        # smallest residual first, ties broken by candidate index
        order.sort(key=lambda k: (res["resid"][k], k))
        kept = []
        for k in order:
            crv = _curve_from_record(res["rec"][k], alpha, cand[k], res["resid"][k],
                                     int(np.sign(res["end_phi"][k] - seeds.phi0)), bool(refined_flag[k]))
            if any(hausdorff_lower_bound(crv.vertices, o.vertices) < cfg["eps_dedup"]
                   and hausdorff(crv.vertices, o.vertices) < cfg["eps_dedup"] for o in kept):
                continue
            kept.append(crv)
        curves = sorted(kept, key=lambda c: (-c.enclosed_area, c.seed[0], c.seed[1]))
    trajs = None
    if trace:
        trajs = []
        for rec in first["rec"]:
            ys = np.array([y for _, y in rec])
            trajs.append(ys)
    return OrbitSearch(curves, seeds, list(first["status"]), alpha, n_ref, trajs)


def find_closed_orbits(metric, alpha, seeds=None, opts=None):
    """List of :class:`ClosedCurve` found from ``seeds`` (see :func:`search_closed_orbits`)."""
    return search_closed_orbits(metric, alpha, seeds, opts).curves


def null_residual(metric, alpha, curve):
    """Largest ``|<e_phi, (A - alpha I) e_phi>| / 2`` over the curve's vertices.

    Raises
    ------
    OutOfDomain
        If a vertex lies outside the sampled field.
    """
    return float(np.max(np.abs(first_integral(metric, curve.vertices, curve.phi, alpha))))


# --------------------------------------------------------------------------
# co-geodesic (momentum) formulation


def _hamiltonian_arrays(comps, grads, p_angle, alpha, det_tol, cond_max):
    a11 = comps[..., 0] - alpha
    a12 = comps[..., 1]
    a22 = comps[..., 2] - alpha
    det = a11 * a22 - a12 * a12
    tr2 = 0.5 * (a11 + a22)
    disc = np.hypot(0.5 * (a11 - a22), a12)
    big = np.abs(tr2) + disc
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.abs(det) / big
        cond = big / small
    bad = ~(np.abs(det) >= det_tol) | ~(cond <= cond_max)
    c, s = np.cos(p_angle), np.sin(p_angle)
    with np.errstate(divide="ignore", invalid="ignore"):
        w1 = (a22 * c - a12 * s) / det
        w2 = (-a12 * c + a11 * s) / det
    with np.errstate(invalid="ignore", over="ignore"):
        gh = -(grads[..., 0, :] * (w1 * w1)[..., None] + 2 * grads[..., 1, :] * (w1 * w2)[..., None]
               + grads[..., 2, :] * (w2 * w2)[..., None])
        dphi = -0.5 * (gh[..., 0] * (-s) + gh[..., 1] * c)
    return w1, w2, dphi, bad


def hamiltonian_rhs(metric, state, alpha=0.0, det_tol=None, cond_max=1e10):
    """Right-hand side of the co-geodesic flow at ``state``.

    ``state.phi`` is the polar angle of the momentum ``p``; returns
    ``(dx/ds, dphi/ds)`` with ``dx/ds = A^{-1} e_phi`` and
    ``dphi/ds = -<grad h, R e_phi> / 2``, ``h = <e_phi, A^{-1} e_phi>``.

    Raises
    ------
    DegenerateMetric
        If ``|det(A - alpha I)|`` is below ``det_tol`` (default
        ``1e-12 ||A||_inf^2``) or its condition number exceeds ``cond_max``.
    """
    if not isinstance(state, GeodesicState):
        state = GeodesicState(tuple(state[0]), float(state[1]))
    x = np.asarray(state.x, dtype=float)
    comps, grads, ok = metric.evaluate(x[None, 0], x[None, 1])
    if not ok.all():
        raise OutOfDomain("point outside the sampled metric")
    if det_tol is None:
        det_tol = 1e-12 * max(metric.norm, abs(alpha)) ** 2
    w1, w2, dphi, bad = _hamiltonian_arrays(comps, grads, np.array([state.phi]), alpha, det_tol, cond_max)
    if bad[0]:
        raise DegenerateMetric("metric is singular or ill-conditioned at this point")
    return np.array([w1[0], w2[0]]), float(dphi[0])


def hamiltonian_orbit(metric, x0, phi0, alpha=0.0, opts=None, det_tol=None, cond_max=1e10):
    """Trace the co-geodesic flow from a seed given in tangent form.

    ``phi0`` is the tangent angle of the matching null-geodesic; the
    momentum starts along ``(A - alpha I) e_phi0``.  Integration stops once
    the momentum angle has turned by ``+-2 pi`` with the position back
    within ``eps_close`` of ``x0``.

    Returns
    -------
    ClosedCurve or None
    """
    opts = opts or OrbitOptions()
    cfg = opts.resolved(metric)
    x0 = np.asarray(x0, dtype=float)
    comps, _, ok = metric.evaluate(x0[None, 0], x0[None, 1])
    if not ok.all():
        raise OutOfDomain("seed outside the sampled metric")
    a11, a12, a22 = comps[0, 0] - alpha, comps[0, 1], comps[0, 2] - alpha
    c, s = np.cos(phi0), np.sin(phi0)
    p_angle = float(np.arctan2(a12 * c + a22 * s, a11 * c + a12 * s))
    if det_tol is None:
        det_tol = 1e-12 * max(metric.norm, abs(alpha)) ** 2

    def fun(sv, y):
        comps, grads, ok = metric.evaluate(y[:, 0], y[:, 1])
        w1, w2, dphi, bad = _hamiltonian_arrays(comps, grads, y[:, 2], alpha, det_tol, cond_max)
        code = np.zeros(len(y), dtype=int)
        code[~ok] = _CODE_OUTSIDE
        code[ok & bad] = _CODE_DEGENERATE
        dy = np.stack([w1, w2, dphi], axis=-1)
        return np.where(code[:, None] == 0, dy, 0.0), code

    res = _shoot(fun, x0[None], p_angle, cfg, opts.max_steps, record=True)
    if res["status"][0] != CLOSED:
        return None
    return _curve_from_record(res["rec"][0], alpha, x0, res["resid"][0],
                              int(np.sign(res["end_phi"][0] - p_angle)), False)
