"""Curve and field output: CSV, GeoJSON, raw-float datasets and SVG plots.

Writers are single-threaded and format floats with 17 significant digits,
so equal reports give byte-identical files and re-read vertices match
exactly.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .ingest import write_dataset

__all__ = [
    "CSV_COLUMNS",
    "CurveRecord",
    "curve_records",
    "export_curves",
    "read_curves_csv",
    "read_curves_geojson",
    "export_scalar",
    "render_svg",
]

CSV_COLUMNS = ("curve_id", "family_id", "outermost", "parameter", "s_index", "x1", "x2", "phi")


def _fmt(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def _json_num(x):
    x = float(x)
    return None if not math.isfinite(x) else x


@dataclass(frozen=True, eq=False)
class CurveRecord:
    """Flat, file-format-neutral view of one reported curve."""

    curve_id: int
    family_id: int
    outermost: bool
    parameter: float
    winding: int
    closure_residual: float
    null_residual: float
    stretch_error: float
    vertices: np.ndarray
    phi: np.ndarray

    def properties(self):
        return {
            "curve_id": self.curve_id,
            "family_id": self.family_id,
            "outermost": self.outermost,
            "parameter": _json_num(self.parameter),
            "winding": self.winding,
            "closure_residual": _json_num(self.closure_residual),
            "null_residual": _json_num(self.null_residual),
            "stretch_error": _json_num(self.stretch_error),
        }


def curve_records(report):
    """One :class:`CurveRecord` per curve of a report, in report order."""
    out = []
    for k, rc in enumerate(report.curves):
        c = rc.curve
        out.append(CurveRecord(k, int(rc.family_id), bool(rc.outermost), float(rc.parameter), int(c.winding),
                               float(c.closure_residual), float(rc.null_residual), float(rc.stretch_error),
                               np.asarray(c.vertices, dtype=float), np.asarray(c.phi, dtype=float)))
    return out


def export_curves(report, directory):
    """Write ``curves.csv`` and ``curves.geojson`` into ``directory``.

    The CSV has one row per vertex; the GeoJSON one ``LineString`` feature
    per curve carrying the record fields as properties.

    Returns
    -------
    (csv_path, geojson_path)

    Raises
    ------
    OSError
        When the directory cannot be created or written.
    """
    os.makedirs(directory, exist_ok=True)
    records = curve_records(report)
    csv_path = os.path.join(directory, "curves.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            for s, (p, ph) in enumerate(zip(r.vertices, r.phi)):
                w.writerow([r.curve_id, r.family_id, int(r.outermost), _fmt(r.parameter), s,
                            _fmt(p[0]), _fmt(p[1]), _fmt(ph)])
    features = []
    for r in records:
        features.append({
            "type": "Feature",
            "properties": r.properties(),
            "geometry": {"type": "LineString", "coordinates": [[float(a), float(b)] for a, b in r.vertices]},
        })
    gj_path = os.path.join(directory, "curves.geojson")
    with open(gj_path, "w") as fh:
        json.dump({"type": "FeatureCollection", "kind": report.kind, "features": features}, fh,
                  indent=1, allow_nan=False)
        fh.write("\n")
    return csv_path, gj_path


def read_curves_csv(path):
    """Curves of a ``curves.csv`` as ``{curve_id: dict}`` in file order.

    Each entry has ``family_id``, ``outermost``, ``parameter``,
    ``vertices`` (k, 2) and ``phi`` (k,).
    """
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        for row in reader:
            cid = int(row["curve_id"])
            e = rows.setdefault(cid, {"family_id": int(row["family_id"]), "outermost": row["outermost"] == "1",
                                      "parameter": float(row["parameter"]), "pts": [], "phi": []})
            e["pts"].append((float(row["x1"]), float(row["x2"])))
            e["phi"].append(float(row["phi"]))
    out = {}
    for cid, e in rows.items():
        out[cid] = {"family_id": e["family_id"], "outermost": e["outermost"], "parameter": e["parameter"],
                    "vertices": np.array(e["pts"], dtype=float).reshape(-1, 2), "phi": np.array(e["phi"])}
    return out


def read_curves_geojson(path):
    """Features of a ``curves.geojson`` as ``(properties, vertices)`` pairs."""
    with open(path) as fh:
        doc = json.load(fh)
    return [(f["properties"], np.array(f["geometry"]["coordinates"], dtype=float).reshape(-1, 2))
            for f in doc["features"]]


def export_scalar(field, directory, name):
    """Write a scalar field as a raw-float dataset ``<name>.json`` plus data."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{name}.json")
    t = field.time if field.time is not None else 0.0
    write_dataset(path, [field], times=[t], kind="scalar", stem=name)
    return path


# --------------------------------------------------------------------------
# SVG


def _ramp(t):
    # blue -> red through a light midpoint
    t = min(max(float(t), 0.0), 1.0)
    lo = np.array([33, 102, 172])
    mid = np.array([240, 240, 240])
    hi = np.array([178, 24, 43])
    c = lo + (mid - lo) * (2 * t) if t < 0.5 else mid + (hi - mid) * (2 * t - 1)
    return "#%02x%02x%02x" % tuple(int(round(x)) for x in c)


def render_svg(report, background=None, path="curves.svg", width=640):
    """Standalone SVG of the report's curves over an optional scalar field.

    The background is drawn as grayscale cell rectangles; curves are paths
    colored by parameter, boundaries drawn thicker, with a legend listing
    the parameter values.

    Raises
    ------
    OSError
        When ``path`` cannot be written.
    """
    if background is not None:
        g = background.grid
        box = (g.x1_min, g.x1_max, g.x2_min, g.x2_max)
    elif report.curves:
        allv = np.vstack([np.asarray(rc.curve.vertices) for rc in report.curves])
        lo, hi = allv.min(axis=0), allv.max(axis=0)
        pad = 0.05 * max(float((hi - lo).max()), 1e-12)
        box = (lo[0] - pad, hi[0] + pad, lo[1] - pad, hi[1] + pad)
    else:
        box = (0.0, 1.0, 0.0, 1.0)
    x0, x1, y0, y1 = (float(b) for b in box)
    scale = width / (x1 - x0)
    height = max(1, int(round((y1 - y0) * scale)))
    legend_w = 120

    def sx(x):
        return (x - x0) * scale

    def sy(y):
        return (y1 - y) * scale

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width + legend_w}" height="{height}" '
             f'viewBox="0 0 {width + legend_w} {height}">',
             f'<rect x="0" y="0" width="{width + legend_w}" height="{height}" fill="white"/>']
    if background is not None:
        vals = np.asarray(background.values, dtype=float)
        fin = np.isfinite(vals)
        if fin.any():
            lo, hi = float(vals[fin].min()), float(vals[fin].max())
            span = hi - lo if hi > lo else 1.0
            g = background.grid
            parts.append('<g id="background" shape-rendering="crispEdges">')
            for i in range(g.n1):
                for j in range(g.n2):
                    if not fin[i, j]:
                        continue
                    level = int(round(255 * (vals[i, j] - lo) / span))
                    cx = g.x1_min + (i - 0.5) * g.h1
                    cy = g.x2_min + (j + 0.5) * g.h2
                    parts.append(f'<rect x="{sx(cx):.3f}" y="{sy(cy):.3f}" width="{g.h1 * scale:.3f}" '
                                 f'height="{g.h2 * scale:.3f}" fill="rgb({level},{level},{level})"/>')
            parts.append("</g>")
    params = sorted({float(rc.parameter) for rc in report.curves})
    pspan = (params[-1] - params[0]) if len(params) > 1 else 1.0

    def color(p):
        return _ramp((p - params[0]) / pspan if len(params) > 1 else 0.5)

    parts.append('<g id="curves" fill="none">')
    for k, rc in enumerate(report.curves):
        v = np.asarray(rc.curve.vertices)
        d = "M" + " L".join(f"{sx(a):.3f},{sy(b):.3f}" for a, b in v) + " Z"
        w = 2.5 if rc.outermost else 1.0
        parts.append(f'<path id="curve-{k}" d="{d}" stroke="{color(rc.parameter)}" stroke-width="{w}"/>')
    parts.append("</g>")
    parts.append('<g id="legend" font-family="sans-serif" font-size="11">')
    parts.append(f'<text x="{width + 8}" y="16">{report.kind} parameter</text>')
    for n, p in enumerate(params):
        y = 34 + 16 * n
        parts.append(f'<rect x="{width + 8}" y="{y - 9}" width="12" height="10" fill="{color(p)}"/>')
        parts.append(f'<text x="{width + 26}" y="{y}">{p:.6g}</text>')
    parts.append("</g>")
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
    return path
