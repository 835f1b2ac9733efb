"""Small polyline/polygon utilities: area, containment, intersections, Hausdorff."""
from __future__ import annotations

import numpy as np


def _closed(poly):
    poly = np.asarray(poly, dtype=float)
    if len(poly) > 1 and np.array_equal(poly[0], poly[-1]):
        return poly
    return np.vstack([poly, poly[:1]])


def signed_area(poly):
    """Shoelace area; positive for counterclockwise vertex order."""
    p = _closed(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def centroid(poly):
    p = _closed(poly)
    x, y = p[:, 0], p[:, 1]
    cross = x[:-1] * y[1:] - x[1:] * y[:-1]
    a = cross.sum() / 2
    if abs(a) < 1e-300:
        return p[:-1].mean(axis=0)
    return np.array([((x[:-1] + x[1:]) * cross).sum(), ((y[:-1] + y[1:]) * cross).sum()]) / (6 * a)


def points_in_polygon(points, poly):
    """Even-odd containment of ``points`` (k, 2) in the closed polygon."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = _closed(poly)
    x0, y0 = p[:-1, 0], p[:-1, 1]
    x1, y1 = p[1:, 0], p[1:, 1]
    px = pts[:, 0, None]
    py = pts[:, 1, None]
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (px < xint)
    return (hits.sum(axis=1) % 2) == 1


def _segments(poly, close):
    p = _closed(poly) if close else np.asarray(poly, dtype=float)
    return p[:-1], p[1:]


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def count_intersections(a, b, close=True, chunk=512):
    """Number of proper crossings between the segments of two polylines."""
    a0, a1 = _segments(a, close)
    b0, b1 = _segments(b, close)
    lo_b = np.minimum(b0, b1)
    hi_b = np.maximum(b0, b1)
    total = 0
    for i in range(0, len(a0), chunk):
        p, q = a0[i:i + chunk, None, :], a1[i:i + chunk, None, :]
        lo_a = np.minimum(p, q)
        hi_a = np.maximum(p, q)
        box = np.all((lo_a <= hi_b[None]) & (lo_b[None] <= hi_a), axis=-1)
        if not box.any():
            continue
        ia, ib = np.nonzero(box)
        P, Q = a0[i + ia], a1[i + ia]
        R, S = b0[ib], b1[ib]
        d1 = _orient(R[:, 0], R[:, 1], S[:, 0], S[:, 1], P[:, 0], P[:, 1])
        d2 = _orient(R[:, 0], R[:, 1], S[:, 0], S[:, 1], Q[:, 0], Q[:, 1])
        d3 = _orient(P[:, 0], P[:, 1], Q[:, 0], Q[:, 1], R[:, 0], R[:, 1])
        d4 = _orient(P[:, 0], P[:, 1], Q[:, 0], Q[:, 1], S[:, 0], S[:, 1])
        total += int(np.count_nonzero((d1 * d2 < 0) & (d3 * d4 < 0)))
    return total


def count_self_intersections(poly, chunk=512):
    """Proper crossings between non-adjacent segments of one closed polyline."""
    a0, a1 = _segments(poly, True)
    n = len(a0)
    total = 0
    for i in range(0, n, chunk):
        idx = np.arange(i, min(i + chunk, n))
        P, Q = a0[idx, None], a1[idx, None]
        R, S = a0[None], a1[None]
        d1 = _orient(R[..., 0], R[..., 1], S[..., 0], S[..., 1], P[..., 0], P[..., 1])
        d2 = _orient(R[..., 0], R[..., 1], S[..., 0], S[..., 1], Q[..., 0], Q[..., 1])
        d3 = _orient(P[..., 0], P[..., 1], Q[..., 0], Q[..., 1], R[..., 0], R[..., 1])
        d4 = _orient(P[..., 0], P[..., 1], Q[..., 0], Q[..., 1], S[..., 0], S[..., 1])
        j = np.arange(n)[None]
        gap = np.abs(idx[:, None] - j)
        nonadj = (gap > 1) & (gap < n - 1) & (j > idx[:, None])
        total += int(np.count_nonzero((d1 * d2 < 0) & (d3 * d4 < 0) & nonadj))
    return total


def point_to_polyline(points, poly, close=False, chunk=256):
    """Distance from each point to the nearest segment of ``poly``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a, b = _segments(poly, close)
    if len(a) == 0:
        return np.linalg.norm(pts - np.asarray(poly, dtype=float)[0], axis=1)
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    dd = np.where(dd == 0, 1.0, dd)
    out = np.empty(len(pts))
    for i in range(0, len(pts), chunk):
        p = pts[i:i + chunk, None, :]
        t = np.clip(np.einsum("kij,ij->ki", p - a[None], d) / dd, 0.0, 1.0)
        proj = a[None] + t[..., None] * d[None]
        out[i:i + chunk] = np.sqrt(((p - proj) ** 2).sum(-1)).min(axis=1)
    return out


def hausdorff_lower_bound(a, b):
    """Cheap lower bound on the Hausdorff distance from bounding-box extents."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(max(np.abs(a.min(axis=0) - b.min(axis=0)).max(),
                     np.abs(a.max(axis=0) - b.max(axis=0)).max()))


def hausdorff(a, b, close=False):
    """Symmetric Hausdorff distance between two polylines (vertex to segment)."""
    return float(max(point_to_polyline(a, b, close).max(), point_to_polyline(b, a, close).max()))
