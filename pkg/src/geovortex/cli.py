"""Command-line entry point: ``geovortex <subcommand> [options]``.

Subcommands: ``oecs``, ``lcs``, ``ftle``, ``ow``, ``geodesics`` and
``selftest``.  ``--input`` takes a dataset descriptor (JSON) or one of the
built-in demos.  Exit status is 0 on success, 1 for configuration or input
errors and 2 when a computation fails.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .advect import cauchy_green, flow_map_gradient, ftle
from .export import export_curves, export_scalar, render_svg
from .fieldgrid import ScalarField
from .ingest import (AnalyticFlow, BadParams, CoordinateSingularity, IngestError, analytic_flow, default_grid,
                     load_dataset)
from .nullgeo import OrbitOptions
from .strain import okubo_weiss, rate_of_strain, strain_from_streamfunction
from .vortex import DEFAULT_LAMBDAS, VortexBoundaryReport, closed_geodesics, elliptic_lcs, elliptic_oecs

__all__ = ["main", "run", "build_parser", "ConfigError", "DEMOS"]

DEMOS = {
    "demo_saddle": "saddle",
    "demo_solid_rotation": "solid_rotation",
    "demo_double_gyre": "double_gyre",
    "demo_gaussian_vortex": "gaussian_vortex",
    "demo_polar_metric": "polar_metric_demo",
}
# forcing period of the double gyre; a natural default horizon for its demo
_DEMO_T = {"double_gyre": 10.0, "gaussian_vortex": 5.0, "saddle": 1.0, "solid_rotation": 1.0}

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class ConfigError(Exception):
    """Invalid command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text):
    try:
        vals = [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("parameter list must not be empty")
    return vals


def _positive(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"{text} is not positive")
    return v


def _optional_positive(text):
    if text.lower() == "none":
        return None
    return _positive(text)


def _add_orbit_flags(p):
    d = OrbitOptions()
    g = p.add_argument_group("closed-orbit search")
    g.add_argument("--tol", type=_positive, default=d.tol, help=f"integrator relative tolerance (default {d.tol:g})")
    g.add_argument("--delta-sing", type=_positive, default=None,
                   help="admissibility threshold on |<e, R^T A e>| (default 1e-8 ||A||_inf)")
    g.add_argument("--eps-close", type=_positive, default=None, help="closure tolerance (default one grid spacing)")
    g.add_argument("--eps-dedup", type=_positive, default=None,
                   help="Hausdorff distance below which curves are duplicates (default 2 eps_close)")
    g.add_argument("--L-max", dest="L_max", type=_positive, default=None,
                   help="maximal arc length per orbit (default twice the domain perimeter)")
    g.add_argument("--stride", type=_positive, default=None,
                   help="seed spacing along the zero contour (default two grid spacings)")
    g.add_argument("--phi-max", type=_positive, default=d.phi_max,
                   help="turning limit in radians (default 4 pi)")
    g.add_argument("--max-steps", type=int, default=d.max_steps, help=f"step limit per orbit (default {d.max_steps})")
    g.add_argument("--no-refine", action="store_true", help="disable root refinement of near-closed orbits")
    g.add_argument("--phi0", type=float, default=0.0, help="seed tangent angle (default 0)")


def _add_common(p, input_required=True):
    p.add_argument("--input", required=input_required,
                   help="dataset descriptor JSON or a demo name: " + ", ".join(DEMOS))
    p.add_argument("--out", default="geovortex_out", help="output directory (default geovortex_out)")
    p.add_argument("--svg", action="store_true", help="also write an SVG plot")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default GEOVORTEX_THREADS, 0 = all cores)")


def _add_flow_flags(p):
    p.add_argument("--t0", type=float, default=None,
                   help="start time in dataset units, days for ssh (default first sample time, 0 for demos)")
    p.add_argument("--T", type=float, default=None,
                   help="integration time; negative for backward time (default: demo horizon, else the data span)")
    p.add_argument("--aux-delta", type=_positive, default=None,
                   help="auxiliary-grid offset for the flow-map gradient (default grid spacing / 10)")
    p.add_argument("--flow-tol", type=_positive, default=1e-10, help="trajectory tolerance (default 1e-10)")
    p.add_argument("--refine", type=int, default=1,
                   help="analysis grid = data grid with this many cells per data cell (default 1)")


def build_parser():
    parser = _Parser(prog="geovortex", description="Vortex boundaries as closed null-geodesics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("oecs", help="elliptic OECS from an instantaneous velocity or streamfunction")
    _add_common(p)
    p.add_argument("--t", type=float, default=None, help="slice time (default first sample time)")
    p.add_argument("--mu", type=_floats, default=None,
                   help="stretch rates (default -0.1..0.1 step 0.01 times the median |s2|)")
    _add_orbit_flags(p)

    p = sub.add_parser("lcs", help="elliptic LCS over a finite time interval")
    _add_common(p)
    _add_flow_flags(p)
    p.add_argument("--lambda", dest="lam", type=_floats, default=list(DEFAULT_LAMBDAS),
                   help="stretch factors (default " + " ".join(f"{x:g}" for x in DEFAULT_LAMBDAS) + ")")
    p.add_argument("--resolution-tol", type=_optional_positive, default=0.16,
                   help="mask nodes whose Cauchy-Green interpolation error exceeds this ('none' keeps all; default 0.16)")
    p.add_argument("--no-advection-check", action="store_true", help="skip the advected stretch diagnostic")
    _add_orbit_flags(p)

    p = sub.add_parser("ftle", help="finite-time Lyapunov exponent field")
    _add_common(p)
    _add_flow_flags(p)

    p = sub.add_parser("ow", help="Okubo-Weiss field")
    _add_common(p)
    p.add_argument("--t", type=float, default=None, help="slice time (default first sample time)")

    p = sub.add_parser("geodesics", help="closed null-geodesics of a tensor field A - alpha I")
    _add_common(p)
    p.add_argument("--alpha", type=_floats, required=True, help="metric shifts")
    _add_orbit_flags(p)

    p = sub.add_parser("selftest", help="run the built-in acceptance checks")
    p.add_argument("--only", type=_floats, default=None, help="criterion numbers to run (default all)")
    p.add_argument("--out", default=None, help="also write the curves of the checked runs here")
    p.add_argument("--threads", type=int, default=None, help="worker threads")
    return parser


# --------------------------------------------------------------------------
# inputs


class _Source:
    """Resolved ``--input``: an analytic demo or a loaded dataset."""

    def __init__(self, spec):
        self.spec = spec
        self.demo = DEMOS.get(spec)
        self.dataset = None
        if self.demo is None:
            self.dataset = load_dataset(spec)

    @property
    def grid(self):
        return default_grid(self.demo) if self.demo else self.dataset.grid

    @property
    def time_scale(self):
        """Seconds per input time unit: geostrophic series run in seconds."""
        return 86400.0 if self.dataset is not None and self.dataset.kind == "ssh" else 1.0

    @property
    def is_tensor(self):
        return self.demo == "polar_metric_demo" or (self.dataset is not None and self.dataset.kind == "tensor")

    def times(self):
        return np.array([0.0]) if self.demo else self.dataset.times

    def velocity(self):
        if self.is_tensor:
            raise ConfigError(f"{self.spec} is a tensor field, not a velocity source")
        if self.demo:
            return AnalyticFlow(self.demo)
        if self.dataset.kind == "scalar":
            raise ConfigError(f"{self.spec} holds a generic scalar field, not a velocity source")
        return self.dataset.velocity_series()

    def tensor(self):
        if not self.is_tensor:
            raise ConfigError(f"{self.spec} is not a tensor field; geodesics needs kind 'tensor'")
        if self.demo:
            return analytic_flow(self.demo)
        return self.dataset[0]

    def instantaneous(self, t):
        """Strain input at time ``t``: a streamfunction slice or a velocity slice."""
        if self.demo:
            flow = AnalyticFlow(self.demo)
            return flow.sample(self.grid, [t]).at(t)
        if self.dataset.kind == "streamfunction":
            k = int(np.argmin(np.abs(self.dataset.times - t)))
            if self.dataset.times[k] != t:
                raise ConfigError(f"no streamfunction slice at t = {t}")
            return self.dataset[k]
        return self.velocity().at(t * self.time_scale)

    def horizon(self, args):
        t0 = args.t0 if args.t0 is not None else float(self.times()[0])
        if args.T is not None:
            T = args.T
        elif self.demo:
            T = _DEMO_T[self.demo]
        else:
            T = float(self.times()[-1] - t0)
        if T == 0:
            raise ConfigError("integration time T must be nonzero")
        return t0 * self.time_scale, T * self.time_scale


def _orbit_options(args, workers):
    try:
        return OrbitOptions(tol=args.tol, delta_sing=args.delta_sing, eps_close=args.eps_close,
                            eps_dedup=args.eps_dedup, L_max=args.L_max, phi_max=args.phi_max, stride=args.stride,
                            refine=not args.no_refine, max_steps=args.max_steps, workers=workers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _config_dict(args):
    out = {}
    for k, v in sorted(vars(args).items()):
        out[k] = v
    return out


def _write_summary(out, args, report=None, extra=None):
    os.makedirs(out, exist_ok=True)
    doc = {"config": _config_dict(args)}
    if report is not None:
        doc["kind"] = report.kind
        doc["curves"] = len(report.curves)
        doc["boundaries"] = len(report.boundaries)
        doc["families"] = len(report.families)
        doc["statuses"] = {f"{k:.17g}": dict(sorted(v.items())) for k, v in report.statuses.items()}
    if extra:
        doc.update(extra)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _analysis_grid(src, refine):
    if refine < 1:
        raise ConfigError("--refine must be at least 1")
    return src.grid if refine == 1 else src.grid.refined(refine)


# --------------------------------------------------------------------------
# subcommands


def _cmd_oecs(args, workers):
    src = _Source(args.input)
    opts = _orbit_options(args, workers)
    t = args.t if args.t is not None else float(src.times()[0])
    inp = src.instantaneous(t)
    yield "configured"
    report = elliptic_oecs(inp, mu_values=args.mu, opts=opts, phi0=args.phi0)
    export_curves(report, args.out)
    _write_summary(args.out, args, report)
    if args.svg:
        strain = strain_from_streamfunction(inp) if isinstance(inp, ScalarField) else rate_of_strain(inp)
        render_svg(report, okubo_weiss(strain), os.path.join(args.out, "curves.svg"))
    print(f"oecs: {len(report.curves)} curves, {len(report.boundaries)} boundaries -> {args.out}")


def _cmd_lcs(args, workers):
    src = _Source(args.input)
    opts = _orbit_options(args, workers)
    v = src.velocity()
    t0, T = src.horizon(args)
    grid = _analysis_grid(src, args.refine)
    yield "configured"
    report = elliptic_lcs(v, t0, T, args.lam, opts=opts, grid=grid, aux_delta=args.aux_delta,
                          flow_tol=args.flow_tol, phi0=args.phi0, check_advection=not args.no_advection_check,
                          resolution_tol=args.resolution_tol, workers=workers)
    export_curves(report, args.out)
    _write_summary(args.out, args, report, {"t0": t0, "T": T})
    if args.svg:
        render_svg(report, ftle(report.cauchy_green, T), os.path.join(args.out, "curves.svg"))
    print(f"lcs: {len(report.curves)} curves, {len(report.boundaries)} boundaries -> {args.out}")


def _cmd_ftle(args, workers):
    src = _Source(args.input)
    v = src.velocity()
    t0, T = src.horizon(args)
    grid = _analysis_grid(src, args.refine)
    yield "configured"
    F = flow_map_gradient(v, grid, t0, t0 + T, aux_delta=args.aux_delta, tol=args.flow_tol, workers=workers)
    field = ftle(cauchy_green(F), T)
    export_scalar(field, args.out, "ftle")
    _write_summary(args.out, args, extra={"t0": t0, "T": T, "masked_nodes": int(np.isnan(field.values).sum())})
    if args.svg:
        render_svg(VortexBoundaryReport("ftle"), field, os.path.join(args.out, "ftle.svg"))
    print(f"ftle: {grid.n1}x{grid.n2} nodes -> {args.out}")


def _cmd_ow(args, workers):
    src = _Source(args.input)
    t = args.t if args.t is not None else float(src.times()[0])
    inp = src.instantaneous(t)
    yield "configured"
    strain = strain_from_streamfunction(inp) if isinstance(inp, ScalarField) else rate_of_strain(inp)
    field = okubo_weiss(strain)
    export_scalar(field, args.out, "ow")
    _write_summary(args.out, args, extra={"t": t})
    if args.svg:
        render_svg(VortexBoundaryReport("ow"), field, os.path.join(args.out, "ow.svg"))
    print(f"ow: {field.grid.n1}x{field.grid.n2} nodes -> {args.out}")


def _cmd_geodesics(args, workers):
    src = _Source(args.input)
    A = src.tensor()
    opts = _orbit_options(args, workers)
    yield "configured"
    report = closed_geodesics(A, args.alpha, opts=opts, phi0=args.phi0)
    export_curves(report, args.out)
    _write_summary(args.out, args, report)
    if args.svg:
        render_svg(report, None, os.path.join(args.out, "curves.svg"))
    print(f"geodesics: {len(report.curves)} curves -> {args.out}")


def _cmd_selftest(args, workers):
    from . import acceptance

    numbers = None
    if args.only is not None:
        numbers = [int(x) for x in args.only]
        bad = [n for n in numbers if n not in acceptance.CRITERIA]
        if bad:
            raise ConfigError(f"unknown criteria {bad}")
    yield "configured"
    results = acceptance.run_criteria(numbers, args.out)
    failed = [r.number for r in results if not (r.passed and r.in_time)]
    print(f"selftest: {len(results) - len(failed)}/{len(results)} PASS")
    if failed:
        raise RuntimeError(f"criteria {failed} failed")


COMMANDS = {"oecs": _cmd_oecs, "lcs": _cmd_lcs, "ftle": _cmd_ftle, "ow": _cmd_ow,
            "geodesics": _cmd_geodesics, "selftest": _cmd_selftest}


def run(argv=None):
    """Parse ``argv``, run the subcommand and return the exit status.

    Each command is a generator that yields once its configuration and
    inputs are validated; failures before that point are configuration
    errors (exit 1), failures after it runtime errors (exit 2).
    """
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None:
            if args.threads < 0:
                raise ConfigError("--threads must be >= 0")
            workers = args.threads
        else:
            workers = None
        steps = COMMANDS[args.command](args, workers)
        next(steps)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ConfigError, IngestError, BadParams, CoordinateSingularity, ValueError, TypeError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        for _ in steps:
            pass
    except Exception as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
