"""Vortex boundaries as closed null-geodesics of Lorentzian metric families.

Modules
-------
fieldgrid : grids, sampled fields and bicubic interpolation
ingest    : dataset descriptors, raw-float I/O, geostrophic velocity, analytic flows
advect    : trajectories, flow map gradient, Cauchy-Green tensor, FTLE
strain    : rate of strain, vorticity, Okubo-Weiss
nullgeo   : reduced geodesic flow, seeds, closed-orbit search
vortex    : elliptic OECS/LCS pipelines, nesting, diagnostics
export    : CSV/GeoJSON/SVG output
cli       : ``geovortex`` command
"""
__version__ = "0.1.0"

from .advect import (CauchyGreenField, FlowMapGradientField, VelocitySeries, cauchy_green, flow_map,
                     flow_map_gradient, ftle, integrate_trajectory)
from .export import export_curves, read_curves_csv, render_svg
from .fieldgrid import Grid2D, ScalarField, SymTensorField, VectorField2D
from .ingest import AnalyticFlow, analytic_flow, load_dataset, write_dataset
from .nullgeo import (ClosedCurve, MetricFamily, OrbitOptions, find_closed_orbits, phi_prime,
                      search_closed_orbits, seed_points)
from .strain import okubo_weiss, rate_of_strain, strain_from_streamfunction
from .vortex import VortexBoundaryReport, closed_geodesics, elliptic_lcs, elliptic_oecs, select_outermost

__all__ = [
    "AnalyticFlow",
    "CauchyGreenField",
    "ClosedCurve",
    "FlowMapGradientField",
    "Grid2D",
    "MetricFamily",
    "OrbitOptions",
    "ScalarField",
    "SymTensorField",
    "VectorField2D",
    "VelocitySeries",
    "VortexBoundaryReport",
    "analytic_flow",
    "cauchy_green",
    "closed_geodesics",
    "elliptic_lcs",
    "elliptic_oecs",
    "export_curves",
    "find_closed_orbits",
    "flow_map",
    "flow_map_gradient",
    "ftle",
    "integrate_trajectory",
    "load_dataset",
    "okubo_weiss",
    "phi_prime",
    "rate_of_strain",
    "read_curves_csv",
    "render_svg",
    "search_closed_orbits",
    "seed_points",
    "select_outermost",
    "strain_from_streamfunction",
    "write_dataset",
]
