"""Rate-of-strain, vorticity and Okubo-Weiss diagnostics.

Derivatives come from the bicubic interpolant evaluated at the grid
nodes.  Second derivatives of a streamfunction are only piecewise smooth
across cells (the interpolant is C2, its third derivatives jump), so for
noisy or coarse data refine the grid until the strain entries stop
changing at the scale of the structures of interest.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._tensor import sym_eig2
from .fieldgrid import ScalarField, SymTensorField, VectorField2D

__all__ = ["StrainField", "rate_of_strain", "strain_from_streamfunction", "okubo_weiss"]


@dataclass(frozen=True, eq=False)
class StrainField:
    """Rate-of-strain tensor, its ordered eigen data and the vorticity."""

    tensor: SymTensorField
    s1: np.ndarray
    s2: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    vorticity: np.ndarray
    time: float | None = None

    @property
    def grid(self):
        return self.tensor.grid

    @property
    def trace(self):
        return self.tensor.a11 + self.tensor.a22


def _build(grid, s11, s12, s22, omega, time):
    s1, s2, e1, e2, _ = sym_eig2(s11, s12, s22)
    return StrainField(SymTensorField(grid, s11, s12, s22, time=time), s1, s2, e1, e2, omega, time)


def rate_of_strain(v, t=None):
    """``S = (grad f + grad f^T) / 2`` and ``omega = dv/dx1 - du/dx2`` per node.

    ``v`` is a :class:`VectorField2D`, or a velocity series together with
    the time ``t`` at which to take the slice.
    """
    if not isinstance(v, VectorField2D):
        if t is None:
            raise ValueError("a time is required to take a slice of a velocity series")
        v = v.at(t)
    X1, X2 = v.grid.mesh()
    _, J, _ = v.interpolant.evaluate(X1, X2, order=1, strict=False)
    ux, uy = J[..., 0, 0], J[..., 0, 1]
    vx, vy = J[..., 1, 0], J[..., 1, 1]
    return _build(v.grid, ux, 0.5 * (uy + vx), vy, vx - uy, v.time)


def strain_from_streamfunction(psi):
    """Strain of the flow ``u = -dpsi/dx2, v = dpsi/dx1``.

    ``S11 = -psi_21``, ``S12 = (psi_11 - psi_22) / 2``, ``S22 = psi_21``;
    trace-free by construction.  Vorticity is the Laplacian of ``psi``.
    """
    if not isinstance(psi, ScalarField):
        raise TypeError("psi must be a ScalarField")
    _, _, H, _ = psi.node_derivatives(order=2)
    p11 = H[..., 0, 0, 0]
    p12 = H[..., 0, 0, 1]
    p22 = H[..., 0, 1, 1]
    return _build(psi.grid, -p12, 0.5 * (p11 - p22), p12.copy(), p11 + p22, psi.time)


def okubo_weiss(strain):
    """``OW = s2^2 - omega^2`` per node."""
    return ScalarField(strain.grid, strain.s2**2 - strain.vorticity**2, time=strain.time)
