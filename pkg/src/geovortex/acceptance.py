"""Built-in acceptance suite on analytic flows and the demo metric.

Each ``criterion_*`` function returns a :class:`CheckResult`; expensive
pipeline runs are cached so criteria sharing a run do not repeat it.
``run_all`` is what ``geovortex selftest`` prints.
"""
from __future__ import annotations

import os
import tempfile
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._geometry import count_intersections, hausdorff
from .advect import cauchy_green, flow_map_gradient, ftle
from .export import export_curves
from .fieldgrid import Grid2D, SymTensorField
from .ingest import AnalyticFlow, analytic_flow, default_grid
from .nullgeo import (MetricFamily, OrbitOptions, admissible, alpha_invariance_check, first_integral,
                      hamiltonian_orbit, phi_prime, search_closed_orbits, seed_points)
from .strain import okubo_weiss, rate_of_strain, strain_from_streamfunction
from .vortex import closed_geodesics, elliptic_lcs, elliptic_oecs

__all__ = ["CheckResult", "CRITERIA", "run_all", "run_criteria", "clear_cache"]

GYRE_LAMBDAS = (0.9, 1.0, 1.1)
GYRE_T = 10.0
VORTEX_T = 5.0


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    limit: float | None = None
    values: dict = field(default_factory=dict)

    @property
    def in_time(self):
        return self.limit is None or self.seconds <= self.limit

    def line(self):
        status = "PASS" if self.passed and self.in_time else "FAIL"
        budget = f" (limit {self.limit:g} s)" if self.limit is not None else ""
        return f"[{status}] {self.number:2d} {self.name}: {self.detail}; {self.seconds:.2f} s{budget}"


# --------------------------------------------------------------------------
# shared runs


def random_tensor_field(seed=0, n=64, modes=4):
    """Smooth random symmetric tensor field on the unit square."""
    rng = np.random.default_rng(seed)
    g = Grid2D(0.0, 1.0, 0.0, 1.0, n, n)
    X1, X2 = g.mesh()

    def comp():
        out = np.zeros_like(X1)
        for _ in range(modes):
            a, b, c, d = rng.normal(size=4)
            out += a * np.sin(2 * np.pi * (b * X1 + c * X2) + d)
        return out

    return SymTensorField(g, comp(), comp(), comp())


@lru_cache(maxsize=None)
def polar_run(workers=None):
    metric = MetricFamily(analytic_flow("polar_metric_demo"))
    opts = OrbitOptions(workers=workers)
    seeds = seed_points(metric, 0.0, 0.0)
    t = time.perf_counter()
    res = search_closed_orbits(metric, 0.0, seeds, opts, trace=True)
    return metric, res, time.perf_counter() - t


@lru_cache(maxsize=None)
def gyre_lcs_run(workers=None):
    flow = AnalyticFlow("double_gyre")
    t = time.perf_counter()
    rep = elliptic_lcs(flow, 0.0, GYRE_T, GYRE_LAMBDAS, grid=default_grid("double_gyre"),
                       opts=OrbitOptions(workers=workers), workers=workers)
    return rep, time.perf_counter() - t


@lru_cache(maxsize=None)
def vortex_lcs_run(workers=None):
    flow = AnalyticFlow("gaussian_vortex")
    t = time.perf_counter()
    rep = elliptic_lcs(flow, 0.0, VORTEX_T, GYRE_LAMBDAS, grid=default_grid("gaussian_vortex"),
                       opts=OrbitOptions(workers=workers), workers=workers)
    return rep, time.perf_counter() - t


@lru_cache(maxsize=None)
def vortex_oecs_run():
    flow = AnalyticFlow("gaussian_vortex")
    v = flow.sample(default_grid("gaussian_vortex"), [0.0]).at(0.0)
    t = time.perf_counter()
    rep = elliptic_oecs(v, mu_values=[0.0])
    return rep, time.perf_counter() - t


def clear_cache():
    for f in (polar_run, gyre_lcs_run, vortex_lcs_run, vortex_oecs_run):
        f.cache_clear()


# --------------------------------------------------------------------------
# criteria


def criterion_1(n_samples=10_000, seed=1):
    """phi' is unchanged by the shift alpha at admissible samples."""
    t = time.perf_counter()
    A = random_tensor_field()
    metric = MetricFamily(A)
    rng = np.random.default_rng(seed)
    xs = []
    al = []
    while sum(len(x) for x in xs) < n_samples:
        s = np.column_stack([rng.uniform(0, 1, n_samples), rng.uniform(0, 1, n_samples),
                             rng.uniform(0, 2 * np.pi, n_samples)])
        a = rng.uniform(-2, 2, n_samples) * metric.norm
        keep = admissible(metric, s[:, :2], s[:, 2], 0.0)
        xs.append(s[keep])
        al.append(a[keep])
    s = np.concatenate(xs)[:n_samples]
    a = np.concatenate(al)[:n_samples]
    res = alpha_invariance_check(metric, s, a, atol=1e-12)
    # second route: resample A - alpha I as its own field for a few shifts
    rel = 0.0
    for shift in np.linspace(-2, 2, 9) * metric.norm:
        shifted = MetricFamily(SymTensorField(A.grid, A.a11 - shift, A.a12, A.a22 - shift))
        use = admissible(shifted, s[:, :2], s[:, 2], 0.0) & admissible(metric, s[:, :2], s[:, 2], shift)
        p1 = phi_prime(metric, s[use, :2], s[use, 2], shift)
        p2 = phi_prime(shifted, s[use, :2], s[use, 2], 0.0)
        rel = max(rel, float(np.max(np.abs(p1 - p2) / np.maximum(1.0, np.abs(p1)))))
    dt = time.perf_counter() - t
    ok = bool(res) and res.n_checked >= n_samples and rel <= 1e-10
    return CheckResult(1, "alpha independence", ok,
                       f"{res.n_checked} samples, max |dphi'| = {res.max_error:.3g} (<= 1e-12); "
                       f"resampled-shift route rel {rel:.2g} (<= 1e-10)", dt, 5.0,
                       {"max_error": res.max_error, "n": res.n_checked, "resampled_rel": rel})


def criterion_2():
    """|q| / 2 stays below 1e-6 ||A|| along every orbit of the demo run."""
    metric, res, dt = polar_run()
    worst = 0.0
    for y in res.trajectories:
        _, _, ok = metric.evaluate(y[:, 0], y[:, 1])
        if ok.any():
            worst = max(worst, float(np.max(np.abs(first_integral(metric, y[ok, :2], y[ok, 2], 0.0)))))
    for c in res.curves:
        worst = max(worst, float(np.max(np.abs(first_integral(metric, c.vertices, c.phi, 0.0)))))
    bound = 1e-6 * metric.norm
    return CheckResult(2, "first integral", worst <= bound,
                       f"{len(res.trajectories)} orbits, max |q/2| = {worst:.3g} (<= {bound:.3g})", dt, 10.0,
                       {"max_q": worst, "bound": bound})


def criterion_3():
    """The demo metric at alpha = 0 has the unit circle as a closed orbit."""
    metric, res, dt = polar_run()
    eps = OrbitOptions().resolved(metric)["eps_close"]
    best = None
    for c in res.curves:
        dev = float(np.max(np.abs(np.hypot(c.vertices[:, 0], c.vertices[:, 1]) - 1.0)))
        if best is None or dev < best[0]:
            best = (dev, c)
    if best is None:
        return CheckResult(3, "known closed null-geodesic", False, "no closed curve found", dt, 10.0)
    dev, c = best
    ok = dev <= 1e-3 and abs(c.winding) == 1 and c.closure_residual <= eps
    return CheckResult(3, "known closed null-geodesic", ok,
                       f"{len(res.curves)} curve(s), radial deviation {dev:.3g}, winding {c.winding:+d}, "
                       f"closure {c.closure_residual:.3g} (<= {eps:.3g})", dt, 10.0,
                       {"deviation": dev, "winding": c.winding, "closure": c.closure_residual})


def criterion_4():
    """The co-geodesic (momentum) flow reproduces the criterion-3 curve."""
    metric, res, _ = polar_run()
    t = time.perf_counter()
    if not res.curves:
        return CheckResult(4, "Lagrangian/Hamiltonian equivalence", False, "no reference curve")
    c = min(res.curves, key=lambda c: np.max(np.abs(np.hypot(*c.vertices.T) - 1.0)))
    h = hamiltonian_orbit(metric, c.vertices[0], c.phi[0], 0.0)
    if h is None:
        return CheckResult(4, "Lagrangian/Hamiltonian equivalence", False, "momentum orbit did not close",
                           time.perf_counter() - t)
    d = hausdorff(c.vertices, h.vertices)
    return CheckResult(4, "Lagrangian/Hamiltonian equivalence", d <= 1e-4,
                       f"Hausdorff distance {d:.3g} (<= 1e-4)", time.perf_counter() - t, None, {"hausdorff": d})


def criterion_5():
    """FTLE of the saddle is 1 and of solid rotation 0."""
    t = time.perf_counter()
    out = {}
    for name, target, tol in (("saddle", 1.0, 1e-3), ("solid_rotation", 0.0, 1e-6)):
        g = Grid2D(*default_grid(name).bounds, 64, 64)
        flow = AnalyticFlow(name, bounds=None)
        F = flow_map_gradient(flow, g, 0.0, 1.0, aux_delta=g.spacing / 10)
        L = ftle(cauchy_green(F)).values
        out[name] = (float(np.nanmax(np.abs(L - target))), int(np.isfinite(L).sum()), tol)
    dt = time.perf_counter() - t
    ok = all(err <= tol and n == 64 * 64 for err, n, tol in out.values())
    detail = ", ".join(f"{k} max err {e:.3g} (<= {tol:g}) on {n} nodes" for k, (e, n, tol) in out.items())
    return CheckResult(5, "FTLE analytic values", ok, detail, dt, 30.0,
                       {k: v[0] for k, v in out.items()})


def criterion_6():
    """Okubo-Weiss of solid rotation is -4 and of the saddle 1, by two routes."""
    t = time.perf_counter()
    errs = {}
    for name, target in (("solid_rotation", -4.0), ("saddle", 1.0)):
        g = default_grid(name)
        flow = AnalyticFlow(name)
        ow_v = okubo_weiss(rate_of_strain(flow.sample(g, [0.0]).at(0.0))).values
        ow_p = okubo_weiss(strain_from_streamfunction(flow.sample_streamfunction(g))).values
        errs[name] = max(float(np.max(np.abs(ow_v - target))), float(np.max(np.abs(ow_p - target))))
    ok = all(e <= 1e-10 for e in errs.values())
    detail = ", ".join(f"{k} max err {e:.3g}" for k, e in errs.items()) + " (<= 1e-10, velocity and streamfunction)"
    return CheckResult(6, "Okubo-Weiss analytic values", ok, detail, time.perf_counter() - t, None, errs)


def criterion_7():
    """Reported LCS boundaries stretch by lambda under the flow, within 2%."""
    rep, dt = gyre_lcs_run()
    vrep, _ = vortex_lcs_run()
    gyre = [rc.advected_error for rc in rep.boundaries]
    vort = [rc.advected_error for rc in vrep.boundaries]
    ok_g = all(np.isfinite(e) and e <= 0.02 for e in gyre)
    ok_v = len(vort) > 0 and all(np.isfinite(e) and e <= 0.02 for e in vort)
    worst = lambda xs: f"{max(xs):.3g}" if xs else "n/a"
    return CheckResult(7, "elliptic LCS stretch fidelity", ok_g and ok_v,
                       f"double gyre: {len(gyre)} boundaries, worst {worst(gyre)}; "
                       f"gaussian vortex: {len(vort)} boundaries, worst {worst(vort)} (<= 0.02)", dt, 300.0,
                       {"gyre_boundaries": len(gyre), "vortex_boundaries": len(vort)})


def criterion_8():
    """Vertex tangents of reported LCSs align with the closed-form eta field."""
    t = time.perf_counter()
    rep, _ = gyre_lcs_run()
    vrep, _ = vortex_lcs_run()
    errs = {"gyre": [rc.alignment_error for rc in rep.curves],
            "vortex": [rc.alignment_error for rc in vrep.curves]}
    finite = {k: [e for e in v if np.isfinite(e)] for k, v in errs.items()}
    ok = all(e <= 1e-3 for v in finite.values() for e in v) and len(finite["vortex"]) > 0
    detail = "; ".join(f"{k}: {len(v)} curves checked, worst |sin| {max(v):.3g}" if v else f"{k}: 0 curves"
                       for k, v in finite.items()) + " (<= 1e-3)"
    return CheckResult(8, "eta alignment", ok, detail, time.perf_counter() - t)


def criterion_9():
    """Curves within one family never cross."""
    t = time.perf_counter()
    reports = {"polar": closed_geodesics(analytic_flow("polar_metric_demo"), [0.0]),
               "gyre lcs": gyre_lcs_run()[0], "vortex lcs": vortex_lcs_run()[0], "vortex oecs": vortex_oecs_run()[0]}
    pairs = 0
    hits = 0
    for rep in reports.values():
        for fam in rep.families:
            cs = fam.curves
            for i in range(len(cs)):
                for j in range(i + 1, len(cs)):
                    pairs += 1
                    hits += count_intersections(cs[i].vertices, cs[j].vertices)
    sizes = ", ".join(f"{k} {len(r.curves)}" for k, r in reports.items())
    return CheckResult(9, "non-intersection within families", hits == 0,
                       f"{pairs} curve pairs ({sizes} curves), {hits} intersections", time.perf_counter() - t)


def criterion_10():
    """A constant saddle-strain tensor has phi' = 0 and no closed curves."""
    t = time.perf_counter()
    g = Grid2D(-1.0, 1.0, -1.0, 1.0, 41, 41)
    A = SymTensorField(g, np.ones(g.shape), np.zeros(g.shape), -np.ones(g.shape))
    metric = MetricFamily(A)
    rng = np.random.default_rng(3)
    s = np.column_stack([rng.uniform(-1, 1, 2000), rng.uniform(-1, 1, 2000), rng.uniform(0, 2 * np.pi, 2000)])
    worst = 0.0
    for alpha in (0.0, 0.5, -0.5):
        use = admissible(metric, s[:, :2], s[:, 2], alpha)
        worst = max(worst, float(np.max(np.abs(phi_prime(metric, s[use, :2], s[use, 2], alpha)))))
    rep = closed_geodesics(A, [0.0, 0.5, -0.5])
    ok = worst <= 1e-15 and len(rep.curves) == 0
    return CheckResult(10, "constant-tensor degeneracy", ok,
                       f"max |phi'| = {worst:.3g}, {len(rep.curves)} closed curves", time.perf_counter() - t)


def _csv_bytes(report):
    with tempfile.TemporaryDirectory() as d:
        path, _ = export_curves(report, d)
        with open(path, "rb") as fh:
            return fh.read()


def determinism_outputs(workers):
    """Curve CSV bytes of the demo-metric and LCS pipelines at a worker count."""
    polar = closed_geodesics(analytic_flow("polar_metric_demo"), [0.0], OrbitOptions(workers=workers))
    return {"polar": _csv_bytes(polar), "gyre lcs": _csv_bytes(gyre_lcs_run(workers)[0]),
            "vortex lcs": _csv_bytes(vortex_lcs_run(workers)[0])}


def criterion_11(thread_counts=(1, 4)):
    """Equal configs give byte-identical curve CSVs for any thread count."""
    t = time.perf_counter()
    outs = [determinism_outputs(w) for w in thread_counts]
    same = {k: all(o[k] == outs[0][k] for o in outs[1:]) for k in outs[0]}
    rows = {k: outs[0][k].count(b"\n") - 1 for k in outs[0]}
    detail = ", ".join(f"{k} {'identical' if v else 'DIFFERENT'} ({rows[k]} rows)" for k, v in same.items())
    return CheckResult(11, "determinism", all(same.values()),
                       f"threads {list(thread_counts)}: {detail}", time.perf_counter() - t)


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
}


def run_criteria(numbers=None, out=None):
    """Run the selected criteria (all by default) and print one line each.

    With ``out`` set, the curves of the demo-metric and LCS runs are also
    written there as CSV/GeoJSON (one sub-directory per run).
    """
    numbers = sorted(CRITERIA) if numbers is None else sorted(numbers)
    results = []
    for n in numbers:
        r = CRITERIA[n]()
        print(r.line(), flush=True)
        results.append(r)
    if out is not None:
        metric = polar_run()[0]
        export_curves(closed_geodesics(metric.A, [0.0]), os.path.join(out, "polar"))
        if any(n in (7, 8, 9, 11) for n in numbers):
            export_curves(gyre_lcs_run()[0], os.path.join(out, "gyre_lcs"))
            export_curves(vortex_lcs_run()[0], os.path.join(out, "vortex_lcs"))
    return results


def run_all(out=None):
    return run_criteria(None, out)
