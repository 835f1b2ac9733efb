"""Vortex boundaries from closed null-geodesics, with independent checks.

``elliptic_oecs`` works on the instantaneous rate-of-strain tensor with
shifts ``mu``; ``elliptic_lcs`` on the Cauchy-Green tensor with shifts
``lambda**2``.  Curves of all parameter values are grouped by nesting and
the area-maximal member of each family is flagged as its boundary.  Each
curve carries diagnostics computed from fields other than the one that
produced it: the stretch condition re-evaluated on the source tensor,
alignment with the closed-form null directions of ``C - lambda^2 I`` and,
for LCS, the stretching of the curve's own segments under the flow map.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._geometry import centroid, count_intersections, points_in_polygon
from ._tensor import sym_eig2
from .advect import CauchyGreenField, cauchy_green, flow_map, flow_map_gradient
from .fieldgrid import ScalarField, SymTensorField, VectorField2D, resolution_error
from .nullgeo import MetricFamily, OrbitOptions, null_residual, search_closed_orbits, seed_points
from .strain import StrainField, rate_of_strain, strain_from_streamfunction

__all__ = [
    "NotDefined",
    "ReportedCurve",
    "Family",
    "VortexBoundaryReport",
    "select_outermost",
    "elliptic_oecs",
    "elliptic_lcs",
    "closed_geodesics",
    "eta_field",
    "eta_alignment_error",
    "locate_singularities",
    "Singularities",
    "tangential_stretch_check",
    "advected_stretch_ratios",
    "DEFAULT_LAMBDAS",
]

DEFAULT_LAMBDAS = (0.9, 0.95, 1.0, 1.05, 1.1)
INVALID_NESTING = "InvalidNesting"


class NotDefined(ValueError):
    """The null directions of ``C - lambda^2 I`` do not exist at this point."""


@dataclass(eq=False)
class ReportedCurve:
    """A closed curve plus its bookkeeping and diagnostics.

    ``family_id`` is -1 for curves excluded from grouping (see ``flags``).
    Diagnostics not applicable to the pipeline are NaN.
    """

    curve: object
    parameter: float
    family_id: int = -1
    outermost: bool = False
    null_residual: float = np.nan
    stretch_error: float = np.nan
    alignment_error: float = np.nan
    advected_error: float = np.nan
    flags: tuple = ()


@dataclass(eq=False)
class Family:
    """Nested curves, innermost first; the last entry is the boundary."""

    curves: list
    parameters: list

    @property
    def outermost_index(self):
        return len(self.curves) - 1

    @property
    def outermost(self):
        return self.curves[-1]


@dataclass(eq=False)
class VortexBoundaryReport:
    """Curves found by a pipeline, grouped into nested families.

    ``curves`` is ordered by family, then by area inside each family, then
    ungrouped curves; ``statuses`` maps each parameter value to the count
    of seed outcomes.
    """

    kind: str
    curves: list = field(default_factory=list)
    families: list = field(default_factory=list)
    statuses: dict = field(default_factory=dict)
    parameters: list = field(default_factory=list)
    cauchy_green: CauchyGreenField | None = None
    analysis_mask: np.ndarray | None = None

    def __len__(self):
        return len(self.curves)

    @property
    def boundaries(self):
        return [rc for rc in self.curves if rc.outermost]


# --------------------------------------------------------------------------
# nesting


def _canonical_key(c):
    v = np.asarray(c.vertices)
    ctr = v.mean(axis=0)
    return (round(float(c.enclosed_area), 12), round(float(ctr[0]), 12), round(float(ctr[1]), 12), len(v),
            float(v[0, 0]), float(v[0, 1]))


def _bbox(v):
    return np.concatenate([v.min(axis=0), v.max(axis=0)])


def _contains(outer, inner, vote=0.9):
    if inner.enclosed_area >= outer.enclosed_area:
        return False
    if not points_in_polygon(centroid(inner.vertices)[None], outer.vertices)[0]:
        return False
    return points_in_polygon(inner.vertices, outer.vertices).mean() >= vote


def select_outermost(curves):
    """Group closed curves by containment and flag each family's boundary.

    Two curves belong to one family when one contains the other (its
    centroid and at least 90% of its vertices fall inside, by the even-odd
    rule).  Curves whose polylines cross any other curve are returned
    separately as invalid.  The result does not depend on input order.

    Returns
    -------
    families : list of Family
        Ordered by the boundary's centroid (x1, then x2).
    invalid : list
        Curves with crossings, in canonical order.
    """
    curves = sorted(curves, key=_canonical_key)
    n = len(curves)
    boxes = [_bbox(np.asarray(c.vertices)) for c in curves]
    crossing = np.zeros(n, dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            bi, bj = boxes[i], boxes[j]
            if bi[0] > bj[2] or bj[0] > bi[2] or bi[1] > bj[3] or bj[1] > bi[3]:
                continue
            if count_intersections(curves[i].vertices, curves[j].vertices) > 0:
                crossing[i] = crossing[j] = True
    good = [k for k in range(n) if not crossing[k]]
    parent = {}
    for k in good:
        holders = [j for j in good if j != k and _contains(curves[j], curves[k])]
        if holders:
            # the largest holder is the family root
            parent[k] = max(holders, key=lambda j: (curves[j].enclosed_area, -j))
    roots = [k for k in good if k not in parent]
    fams = []
    for r in roots:
        members = [r] + [k for k in good if parent.get(k) == r]
        members.sort(key=lambda k: (curves[k].enclosed_area, k))
        fams.append(Family([curves[k] for k in members], [getattr(curves[k], "parameter", None) for k in members]))
    fams.sort(key=lambda f: tuple(np.round(centroid(f.outermost.vertices), 12)) + (f.outermost.enclosed_area,))
    invalid = [curves[k] for k in range(n) if crossing[k]]
    return fams, invalid


def _assemble(kind, found, statuses, parameters):
    """Group ``(ReportedCurve)`` entries into a report."""
    by_id = {id(rc.curve): rc for rc in found}
    fams, invalid = select_outermost([rc.curve for rc in found])
    ordered = []
    for fid, fam in enumerate(fams):
        for k, c in enumerate(fam.curves):
            rc = by_id[id(c)]
            rc.family_id = fid
            rc.outermost = k == fam.outermost_index
            ordered.append(rc)
    for c in invalid:
        rc = by_id[id(c)]
        rc.family_id = -1
        rc.outermost = False
        rc.flags = tuple(sorted(set(rc.flags) | {INVALID_NESTING}))
        ordered.append(rc)
    return VortexBoundaryReport(kind, ordered, fams, statuses, list(parameters))


# --------------------------------------------------------------------------
# diagnostics


def _vertex_dirs(curve):
    phi = np.asarray(curve.phi, dtype=float)
    return np.stack([np.cos(phi), np.sin(phi)], axis=-1)


def tangential_stretch_check(curve, context, parameter):
    """Deviation of the tangential stretch (rate) along a curve from its target.

    With a :class:`CauchyGreenField` returns
    ``max |sqrt(<e, C e>) - lambda| / lambda``; with a :class:`StrainField`
    returns ``max |<e, S e> - mu|``, ``e`` being the curve tangent at each
    vertex.  A plain :class:`SymTensorField` is treated as a strain tensor.

    Raises
    ------
    OutOfDomain
        If a vertex lies outside the field.
    """
    v = np.asarray(curve.vertices, dtype=float)
    e = _vertex_dirs(curve)
    if isinstance(context, CauchyGreenField):
        comps = context.tensor.components(v[:, 0], v[:, 1])
        q = e[:, 0] ** 2 * comps[:, 0] + 2 * e[:, 0] * e[:, 1] * comps[:, 1] + e[:, 1] ** 2 * comps[:, 2]
        return float(np.max(np.abs(np.sqrt(np.maximum(q, 0.0)) - parameter)) / parameter)
    tensor = context.tensor if isinstance(context, StrainField) else context
    comps = tensor.components(v[:, 0], v[:, 1])
    q = e[:, 0] ** 2 * comps[:, 0] + 2 * e[:, 0] * e[:, 1] * comps[:, 1] + e[:, 1] ** 2 * comps[:, 2]
    return float(np.max(np.abs(q - parameter)))


def advected_stretch_ratios(curve, velocity, t0, T, tol=1e-10, workers=None):
    """Length ratios of the curve's segments after advection over ``[t0, t0+T]``.

    Returns ``(segment_ratios, total_ratio)``; NaN ratios mark segments
    whose end points left the domain.
    """
    v = np.asarray(curve.vertices, dtype=float)
    img, ok = flow_map(velocity, v, t0, t0 + T, tol=tol, workers=workers)
    seg0 = np.linalg.norm(np.diff(v, axis=0), axis=1)
    seg1 = np.linalg.norm(np.diff(img, axis=0), axis=1)
    good = ok[:-1] & ok[1:] & (seg0 > 0)
    ratios = np.full(len(seg0), np.nan)
    ratios[good] = seg1[good] / seg0[good]
    total = seg1[good].sum() / seg0[good].sum() if good.any() else np.nan
    return ratios, float(total)


def _eta_arrays(l1, l2, xi1, xi2, lam2):
    gap = l2 - l1
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.sqrt((l2 - lam2) / gap)
        b = np.sqrt((lam2 - l1) / gap)
    defined = (gap > 0) & (l1 <= lam2) & (lam2 <= l2)
    ep = a[..., None] * xi1 + b[..., None] * xi2
    em = a[..., None] * xi1 - b[..., None] * xi2
    return ep, em, defined


def eta_field(cg, lam, x):
    """Both null directions of ``C - lambda^2 I`` at ``x``.

    ``eta^+- = sqrt((l2 - lambda^2)/(l2 - l1)) xi1 +- sqrt((lambda^2 - l1)/(l2 - l1)) xi2``.

    Raises
    ------
    NotDefined
        Unless ``l1 <= lambda^2 <= l2`` with ``l1 < l2``.
    OutOfDomain
        If ``x`` is outside the field.
    """
    x = np.asarray(x, dtype=float)
    tensor = cg.tensor if isinstance(cg, CauchyGreenField) else cg
    comps = tensor.components(x[None, 0], x[None, 1])[0]
    l1, l2, xi1, xi2, degen = sym_eig2(comps[0], comps[1], comps[2])
    ep, em, ok = _eta_arrays(l1, l2, xi1, xi2, lam * lam)
    if degen or not ok:
        raise NotDefined(f"lambda^2 = {lam * lam:.6g} outside [{float(l1):.6g}, {float(l2):.6g}] or degenerate point")
    return ep, em


def eta_alignment_error(curve, cg, lam):
    """Largest ``|sin|`` of the angle between the curve tangent and the nearer
    of ``eta^+-``, over vertices where both are defined (NaN if none)."""
    v = np.asarray(curve.vertices, dtype=float)
    comps = cg.tensor.components(v[:, 0], v[:, 1])
    l1, l2, xi1, xi2, degen = sym_eig2(comps[:, 0], comps[:, 1], comps[:, 2])
    lam2 = lam * lam
    ep, em, ok = _eta_arrays(l1, l2, xi1, xi2, lam2)
    ok &= ~degen & (l1 < lam2) & (lam2 < l2)
    if not ok.any():
        return np.nan
    t = _vertex_dirs(curve)
    sp = np.abs(t[:, 0] * ep[:, 1] - t[:, 1] * ep[:, 0])
    sm = np.abs(t[:, 0] * em[:, 1] - t[:, 1] * em[:, 0])
    return float(np.max(np.minimum(sp, sm)[ok]))


@dataclass(frozen=True, eq=False)
class Singularities:
    """Isolated points with equal eigenvalues, and a flag for fields that are
    degenerate everywhere."""

    points: np.ndarray
    globally_degenerate: bool = False

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def _bilinear_roots(d, b):
    """Roots in the unit square of two bilinear forms given by corner values.

    ``d``, ``b`` are ``(f00, f10, f01, f11)`` with ``f10`` at ``u = 1``.
    """
    def coeffs(f):
        f00, f10, f01, f11 = f
        return f00, f10 - f00, f01 - f00, f11 - f10 - f01 + f00

    a0, a1, a2, a3 = coeffs(d)
    b0, b1, b2, b3 = coeffs(b)
    c2 = b2 * a3 - b3 * a2
    c1 = b0 * a3 - b1 * a2 + b2 * a1 - b3 * a0
    c0 = b0 * a1 - b1 * a0
    if abs(c2) > 1e-14 * (abs(c1) + abs(c0) + 1e-300):
        vs = np.roots([c2, c1, c0])
    elif abs(c1) > 0:
        vs = np.array([-c0 / c1])
    else:
        return []
    out = []
    tol = 1e-10
    for v in vs:
        if abs(np.imag(v)) > 1e-10 or not -tol <= np.real(v) <= 1 + tol:
            continue
        v = float(np.real(v))
        den = a1 + a3 * v
        if abs(den) > 1e-14:
            u = -(a0 + a2 * v) / den
        else:
            den = b1 + b3 * v
            if abs(den) <= 1e-14:
                continue
            u = -(b0 + b2 * v) / den
        if -tol <= u <= 1 + tol:
            out.append((min(max(u, 0.0), 1.0), min(max(v, 0.0), 1.0)))
    return out


def locate_singularities(fld, degenerate_tol=1e-12):
    """Points where the two eigenvalues of a symmetric tensor field coincide.

    Zeros of ``(a11 - a22, a12)`` are bracketed per grid cell by sign
    changes of both components at the corners and solved on the bilinear
    interpolant of the cell.  A field whose components vanish everywhere
    is reported as globally degenerate with no isolated points.

    Returns
    -------
    Singularities
    """
    tensor = fld.tensor if isinstance(fld, (CauchyGreenField, StrainField)) else fld
    g = tensor.grid
    d = np.asarray(tensor.a11) - np.asarray(tensor.a22)
    b = np.asarray(tensor.a12)
    scale = max(np.max(np.abs(tensor.a11)), np.max(np.abs(tensor.a22)), np.max(np.abs(b)), 1e-300)
    valid = tensor.valid if tensor.valid is not None else np.ones(g.shape, dtype=bool)
    if np.all(np.maximum(np.abs(d), np.abs(b))[valid] <= degenerate_tol * scale):
        return Singularities(np.zeros((0, 2)), True)

    def corners(f):
        return f[:-1, :-1], f[1:, :-1], f[:-1, 1:], f[1:, 1:]

    dc = corners(d)
    bc = corners(b)
    vc = corners(valid)
    cell_ok = vc[0] & vc[1] & vc[2] & vc[3]
    d_lo = np.minimum.reduce(dc)
    d_hi = np.maximum.reduce(dc)
    b_lo = np.minimum.reduce(bc)
    b_hi = np.maximum.reduce(bc)
    cand = cell_ok & (d_lo <= 0) & (d_hi >= 0) & (b_lo <= 0) & (b_hi >= 0)
    pts = []
    for i, j in zip(*np.nonzero(cand)):
        for u, v in _bilinear_roots([f[i, j] for f in dc], [f[i, j] for f in bc]):
            pts.append((g.x1_min + (i + u) * g.h1, g.x2_min + (j + v) * g.h2))
    if not pts:
        return Singularities(np.zeros((0, 2)), False)
    pts = np.array(pts)
    merged = []
    tol = 1e-9 * g.spacing
    for p in pts[np.lexsort((pts[:, 1], pts[:, 0]))]:
        if not any(np.hypot(*(p - q)) <= tol for q in merged):
            merged.append(p)
    return Singularities(np.array(merged), False)


# --------------------------------------------------------------------------
# pipelines


def _search_family(metric, parameters, opts, phi0, diagnose):
    found = []
    statuses = {}
    for p in parameters:
        alpha = metric.alpha(p)
        seeds = seed_points(metric, alpha, phi0, stride=opts.stride)
        res = search_closed_orbits(metric, alpha, seeds, opts)
        counts = res.counts() if len(seeds) else {seeds.status: 1}
        statuses[float(p)] = counts
        for c in res.curves:
            c = replace(c, parameter=float(p))
            rc = ReportedCurve(c, float(p), null_residual=null_residual(metric, alpha, c))
            diagnose(rc)
            found.append(rc)
    return found, statuses


def _strain_input(v, t):
    if isinstance(v, StrainField):
        return v
    if isinstance(v, ScalarField):
        return strain_from_streamfunction(v)
    if isinstance(v, VectorField2D):
        return rate_of_strain(v)
    return rate_of_strain(v, t if t is not None else v.t_span[0])


def elliptic_oecs(v, mu_values=None, opts=None, t=None, phi0=0.0, trace_tol=1e-3):
    """Elliptic objective Eulerian coherent structures.

    Parameters
    ----------
    v : VectorField2D, velocity series, ScalarField (streamfunction) or StrainField
    mu_values : sequence of float, optional
        Tangential stretch rates.  Defaults to ``{-0.1, ..., 0.1}`` in steps
        of 0.01 times the median of ``|s2|``.
    opts : OrbitOptions, optional
    t : float, optional
        Slice time when ``v`` is a velocity series.
    trace_tol : float
        The trace-free form is used when ``max |tr S| <= trace_tol * max |S|``.

    Returns
    -------
    VortexBoundaryReport
    """
    opts = opts or OrbitOptions()
    strain = _strain_input(v, t)
    S = strain.tensor
    size = max(np.max(np.abs(S.a11)), np.max(np.abs(S.a12)), np.max(np.abs(S.a22)))
    traceless = bool(np.max(np.abs(strain.trace)) <= trace_tol * size) if size > 0 else True
    if mu_values is None:
        mu_values = np.round(np.arange(-10, 11) * 0.01, 2) * float(np.median(np.abs(strain.s2)))
    mu_values = [float(m) for m in mu_values]
    if not mu_values:
        raise ValueError("at least one mu value is required")
    metric = MetricFamily(S, "oecs_mu", traceless=traceless)

    def diagnose(rc):
        rc.stretch_error = tangential_stretch_check(rc.curve, strain, rc.parameter)

    found, statuses = _search_family(metric, mu_values, opts, phi0, diagnose)
    return _assemble("oecs", found, statuses, mu_values)


def elliptic_lcs(v, t0, T, lambda_values=DEFAULT_LAMBDAS, opts=None, grid=None, aux_delta=None,
                 flow_tol=1e-10, phi0=0.0, check_advection=True, resolution_tol=0.16, workers=None):
    """Elliptic Lagrangian coherent structures over ``[t0, t0 + T]``.

    Parameters
    ----------
    v : velocity source (series or analytic flow)
    lambda_values : sequence of float
        Tangential stretch factors; the metric shift is ``lambda**2``.
    grid : Grid2D, optional
        Analysis grid for the Cauchy-Green tensor; defaults to the
        velocity grid.
    check_advection : bool
        Advect every curve and record the worst segment stretch error
        relative to ``lambda`` in ``advected_error``.
    resolution_tol : float or None
        Nodes whose Cauchy-Green interpolation-error estimate (see
        :func:`geovortex.fieldgrid.resolution_error`) exceeds this are
        masked, so orbits stop where the tensor is not resolved by the
        analysis grid.  ``None`` keeps every node.

    Returns
    -------
    VortexBoundaryReport
    """
    opts = opts or OrbitOptions()
    lambda_values = [float(x) for x in lambda_values]
    if not lambda_values or any(x <= 0 for x in lambda_values):
        raise ValueError("lambda values must be positive and non-empty")
    if grid is None:
        grid = v.grid if hasattr(v, "grid") else v[0].grid
    F = flow_map_gradient(v, grid, t0, t0 + T, aux_delta=aux_delta, tol=flow_tol, workers=workers)
    cg = cauchy_green(F)
    tensor = cg.tensor
    if resolution_tol is not None:
        keep = resolution_error(tensor) <= resolution_tol
        if tensor.valid is not None:
            keep &= tensor.valid
        tensor = SymTensorField(tensor.grid, tensor.a11, tensor.a12, tensor.a22, keep, tensor.time)
    metric = MetricFamily(tensor, "lcs_lambda_squared")

    def diagnose(rc):
        rc.stretch_error = tangential_stretch_check(rc.curve, cg, rc.parameter)
        rc.alignment_error = eta_alignment_error(rc.curve, cg, rc.parameter)
        if check_advection:
            ratios, _ = advected_stretch_ratios(rc.curve, v, t0, T, tol=flow_tol, workers=workers)
            rc.advected_error = float(np.nanmax(np.abs(ratios / rc.parameter - 1.0))) if np.isfinite(ratios).any() else np.nan

    found, statuses = _search_family(metric, lambda_values, opts, phi0, diagnose)
    report = _assemble("lcs", found, statuses, lambda_values)
    report.cauchy_green = cg
    report.analysis_mask = tensor.valid
    return report


def closed_geodesics(A, alpha_values, opts=None, phi0=0.0):
    """Closed null-geodesics of a raw tensor field for each shift ``alpha``."""
    opts = opts or OrbitOptions()
    if not isinstance(A, SymTensorField):
        raise TypeError("A must be a SymTensorField")
    alpha_values = [float(a) for a in alpha_values]
    if not alpha_values:
        raise ValueError("at least one alpha value is required")
    metric = MetricFamily(A, "generic_alpha")
    found, statuses = _search_family(metric, alpha_values, opts, phi0, lambda rc: None)
    return _assemble("geodesics", found, statuses, alpha_values)
