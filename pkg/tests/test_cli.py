import inspect
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from geovortex import cli
from geovortex.advect import flow_map_gradient
from geovortex.export import read_curves_csv
from geovortex.fieldgrid import Grid2D, SymTensorField
from geovortex.ingest import load_dataset, polar_metric_tensor, write_dataset
from geovortex.nullgeo import OrbitOptions
from geovortex.vortex import elliptic_lcs


def test_geodesics_polar_demo(tmp_path, capsys):
    out = tmp_path / "r"
    assert cli.run(["geodesics", "--input", "demo_polar_metric", "--alpha", "0", "--out", str(out), "--svg"]) == 0
    curves = read_curves_csv(out / "curves.csv")
    assert len(curves) >= 1
    dev = [np.max(np.abs(np.hypot(*c["vertices"].T) - 1)) for c in curves.values()]
    assert min(dev) <= 1e-3
    summary = json.load(open(out / "summary.json"))
    assert summary["kind"] == "geodesics" and summary["config"]["alpha"] == [0.0]
    assert (out / "curves.geojson").exists() and (out / "curves.svg").exists()
    assert "geodesics:" in capsys.readouterr().out


def test_missing_input_is_config_error(tmp_path, capsys):
    code = cli.run(["lcs", "--input", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "MissingFile" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [],
    ["nonsense"],
    ["lcs"],
    ["lcs", "--input", "demo_double_gyre", "--lambda", ""],
    ["lcs", "--input", "demo_double_gyre", "--tol", "-1"],
    ["lcs", "--input", "demo_double_gyre", "--T", "0"],
    ["lcs", "--input", "demo_polar_metric"],
    ["geodesics", "--input", "demo_double_gyre", "--alpha", "0"],
    ["oecs", "--input", "demo_saddle", "--phi-max", "1"],
    ["ftle", "--input", "demo_saddle", "--refine", "0"],
    ["selftest", "--only", "99"],
    ["ow", "--input", "demo_saddle", "--threads", "-2"],
])
def test_bad_configuration_exit_one(argv, tmp_path, capsys):
    assert cli.run(argv + (["--out", str(tmp_path)] if "--input" in argv else [])) == 1
    assert capsys.readouterr().err.strip()


def test_runtime_failure_exit_two(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise FloatingPointError("integration blew up")
    monkeypatch.setattr(cli, "elliptic_oecs", boom)
    assert cli.run(["oecs", "--input", "demo_saddle", "--out", str(tmp_path)]) == 2
    assert "FloatingPointError" in capsys.readouterr().err


def test_ftle_and_ow_outputs(tmp_path):
    out = tmp_path / "f"
    assert cli.run(["ftle", "--input", "demo_saddle", "--out", str(out), "--svg"]) == 0
    vals = load_dataset(out / "ftle.json")[0].values
    assert np.allclose(vals[np.isfinite(vals)], 1.0, atol=1e-3)
    assert (out / "ftle.svg").exists()
    out = tmp_path / "w"
    assert cli.run(["ow", "--input", "demo_solid_rotation", "--out", str(out)]) == 0
    assert np.allclose(load_dataset(out / "ow.json")[0].values, -4.0, atol=1e-10)


def test_geodesics_from_tensor_dataset(tmp_path):
    g = Grid2D(-2.0, 2.0, -2.0, 2.0, 40, 40)
    X1, X2 = g.mesh()
    desc = tmp_path / "metric.json"
    write_dataset(str(desc), [SymTensorField(g, *polar_metric_tensor(X1, X2))], times=[0.0], kind="tensor")
    out = tmp_path / "o"
    assert cli.run(["geodesics", "--input", str(desc), "--alpha", "0", "--out", str(out)]) == 0
    curves = read_curves_csv(out / "curves.csv")
    assert min(np.max(np.abs(np.hypot(*c["vertices"].T) - 1)) for c in curves.values()) <= 1e-2


def test_selftest_subset_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(["selftest", "--only", "3", "--out", str(a)]) == 0
    assert cli.run(["selftest", "--only", "3", "--out", str(b), "--threads", "2"]) == 0
    text = capsys.readouterr().out
    assert text.count("[PASS]  3") == 2
    files = sorted(os.path.relpath(os.path.join(d, f), a) for d, _, fs in os.walk(a) for f in fs)
    assert files
    for f in files:
        assert open(a / f, "rb").read() == open(b / f, "rb").read()


def test_flag_defaults_match_module_defaults():
    parser = cli.build_parser()
    sub = parser._subparsers._group_actions[0].choices
    lcs = {a.dest: a.default for a in sub["lcs"]._actions}
    sig = inspect.signature(elliptic_lcs).parameters
    assert lcs["lam"] == list(sig["lambda_values"].default)
    assert lcs["resolution_tol"] == sig["resolution_tol"].default
    assert lcs["flow_tol"] == sig["flow_tol"].default == inspect.signature(flow_map_gradient).parameters["tol"].default
    assert lcs["aux_delta"] is None and sig["aux_delta"].default is None
    d = OrbitOptions()
    for name in ("tol", "phi_max", "max_steps"):
        assert lcs[name] == getattr(d, name)
    for name in ("delta_sing", "eps_close", "eps_dedup", "L_max", "stride"):
        assert lcs[name] is None and getattr(d, name) is None
    assert lcs["phi0"] == sig["phi0"].default
    for action in sub["lcs"]._actions:
        if action.option_strings and action.dest not in ("help",) and action.default not in (None, False):
            assert "default" in (action.help or ""), action.dest


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "geovortex.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("geovortex ")
    res = subprocess.run([sys.executable, "-m", "geovortex.cli", "ow", "--input", "nope.json",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 1 and "MissingFile" in res.stderr
