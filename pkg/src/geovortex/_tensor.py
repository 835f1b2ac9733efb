"""Closed-form eigen-decomposition of symmetric 2x2 tensors."""
from __future__ import annotations

import numpy as np


def rotate_ccw(v):
    """Counterclockwise quarter turn ``R v`` of ``(..., 2)`` vectors."""
    v = np.asarray(v)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def sym_eig2(a11, a12, a22, det=None, degenerate_tol=1e-12):
    """Eigenvalues ``l1 <= l2`` and unit eigenvectors with ``e2 = R e1``.

    ``det`` may be supplied when it is known more accurately than
    ``a11*a22 - a12**2`` (e.g. ``det(F)**2`` for Cauchy-Green tensors); it
    is used to recover the smaller-magnitude eigenvalue without
    cancellation.  Where the eigenvalue gap is below
    ``degenerate_tol * (|l1| + |l2|)`` the tensor is flagged degenerate
    and ``e1`` is set to ``(1, 0)``.

    Returns
    -------
    l1, l2 : arrays
    e1, e2 : arrays with trailing dimension 2
    degenerate : bool array
    """
    a11, a12, a22 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (a11, a12, a22)))
    half_tr = 0.5 * (a11 + a22)
    half_diff = 0.5 * (a11 - a22)
    disc = np.hypot(half_diff, a12)
    if det is None:
        det = a11 * a22 - a12 * a12
    det = np.broadcast_to(np.asarray(det, dtype=float), a11.shape)
    big = np.where(half_tr >= 0, half_tr + disc, half_tr - disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(big != 0, det / big, 0.0)
    l2 = np.where(half_tr >= 0, big, small)
    l1 = np.where(half_tr >= 0, small, big)
    # guard ordering against round-off in the det-based branch
    l1, l2 = np.minimum(l1, l2), np.maximum(l1, l2)

    theta = 0.5 * np.arctan2(a12, half_diff)  # direction of the larger eigenvalue
    e2 = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    e1 = np.stack([np.sin(theta), -np.cos(theta)], axis=-1)
    degenerate = (2 * disc) <= degenerate_tol * (np.abs(l1) + np.abs(l2))
    degenerate |= (disc == 0)
    if np.any(degenerate):
        e1 = np.where(degenerate[..., None], np.array([1.0, 0.0]), e1)
        e2 = np.where(degenerate[..., None], np.array([0.0, 1.0]), e2)
    return l1, l2, e1, e2, degenerate
