import logging
import subprocess
import sys

import numpy as np
import pytest

from membrane_fem import shapes
from membrane_fem.cli import main
from membrane_fem.config import PRESETS, ConfigError, ScenarioConfig, apply_overrides, dump_config, load_config, preset
from membrane_fem.driver import coarsened, run, snapshot_steps
from membrane_fem.dynamics import DIAGNOSTIC_COLUMNS
from membrane_fem.io import DiagnosticsWriter, read_diagnostics, read_vtk_points, write_vtk


def test_config_defaults():
    cfg = ScenarioConfig()
    assert (cfg.mu_minus, cfg.mu_plus, cfg.mu_gamma) == (1.0, 1.0, 1.0)
    assert (cfg.rho_minus, cfg.rho_plus, cfg.rho_gamma) == (0.0, 0.0, 0.0)
    assert (cfg.alpha_minus, cfg.alpha_plus, cfg.theta, cfg.beta) == (1.0, 1.0, 1.0, 1.0)
    assert (cfg.kbar_minus, cfg.gauss_plus) == (0.0, 0.0)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_roundtrips_through_text(name, tmp_path):
    cfg = preset(name)
    path = tmp_path / "cfg.ini"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


def test_config_file_on_top_of_a_preset(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[scenario]\npreset = letter_c\n\n[discretization]\ntau = 1e-3  # coarser step\n")
    cfg = load_config(path)
    assert cfg.tau == 1e-3 and cfg.shape == "letter_c" and cfg.surface_elements == 257


def test_manifest_sections_are_ignored_when_reloading(tmp_path):
    run(coarsened(preset("circle-stationary"), 4), tmp_path, max_steps=1)
    cfg = load_config(tmp_path / "manifest.txt")
    assert cfg.name == "circle-stationary"


@pytest.mark.parametrize("text, message", [
    ("[physics]\nbeta = 0\n", "beta"),
    ("[physics]\nalpha_plus = -1\n", "alpha_plus"),
    ("[physics]\nwibble = 3\n", "unknown key"),
    ("[nonsense]\nbeta = 1\n", "unknown section"),
    ("[discretization]\ntau = fast\n", "cannot parse"),
    ("[discretization]\ndomain_lo = 0 0 0\n", "same length"),
    ("[scenario]\nstress_free = x- x+ y- y+\n", "Dirichlet"),
    ("[scenario]\nstress_free = q+\n", "face"),
    ("[scenario]\nc_mean = 1.5\n", "c_mean"),
])
def test_invalid_configs_are_rejected(text, message, tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    with pytest.raises(ConfigError, match=message):
        load_config(path)


def test_overrides():
    cfg = apply_overrides(preset("shear_a"), ["physics.mu_minus=10", "cells=2 2", "stress_free=y-"])
    assert cfg.mu_minus == 10.0 and cfg.cells == (2, 2) and cfg.stress_free == ("y-",)
    for bad in (["mu_minus"], ["nothing=1"]):
        with pytest.raises(ConfigError):
            apply_overrides(cfg, bad)
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("letter_z")


def test_gaussian_rigidity_bound_warns(caplog):
    with caplog.at_level(logging.WARNING):
        ScenarioConfig(gauss_minus=0.0, gauss_plus=3.0).validate()
    assert "Gaussian rigidity" in caplog.text
    caplog.clear()
    with caplog.at_level(logging.WARNING):
        ScenarioConfig(gauss_minus=-0.5, gauss_plus=0.5).validate()
    assert caplog.text == ""


def test_coarsening():
    cfg = preset("letter_c")
    half = coarsened(cfg, 2)
    assert half.surface_elements == 128 and half.fine_level == cfg.fine_level - 2
    assert coarsened(cfg, 1) is cfg
    with pytest.raises(ValueError):
        coarsened(cfg, 3)


def test_snapshot_schedule():
    cfg = ScenarioConfig(tau=0.1, snapshot_every=4, snapshot_times=(0.5, 9.0))
    assert snapshot_steps(cfg, 10) == [0, 4, 5, 8, 10]


# ---------------------------------------------------------------- files
def test_vtk_roundtrip(tmp_path):
    for surf in (shapes.circle(9), shapes.icosphere(1)):
        c = np.linspace(-1, 1, surf.n_vertices) / 3
        write_vtk(surf, tmp_path / "s.vtk", {"C": c, "other": c ** 2})
        pts, data = read_vtk_points(tmp_path / "s.vtk")
        np.testing.assert_array_equal(pts[:, :surf.dim], surf.vertices)
        np.testing.assert_array_equal(data["C"], c)
        np.testing.assert_array_equal(data["other"], c ** 2)


def test_diagnostics_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    records = [{c: float(v) for c, v in zip(DIAGNOSTIC_COLUMNS, rng.standard_normal(len(DIAGNOSTIC_COLUMNS)))}
               for _ in range(5)]
    with DiagnosticsWriter(tmp_path / "d.csv", DIAGNOSTIC_COLUMNS) as w:
        for r in records:
            w.write(r)
    back = read_diagnostics(tmp_path / "d.csv")
    assert tuple(back) == DIAGNOSTIC_COLUMNS
    for c in DIAGNOSTIC_COLUMNS:
        np.testing.assert_array_equal(back[c], [r[c] for r in records])


# ---------------------------------------------------------------- command line
def test_cli_list_and_show(capsys):
    assert main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert "letter_c" in names and "shear_b" in names
    assert main(["preset", "shear_b", "--show", "--override", "tau=1e-3", "--resolution", "2"]) == 0
    out = capsys.readouterr().out
    assert "tau = 0.001" in out and "surface_elements = 128" in out and "mu_minus = 10.0" in out


def test_cli_errors(capsys, tmp_path):
    assert main(["preset", "letter_z"]) == 2
    assert main(["preset", "letter_c", "--override", "beta=-1"]) == 2
    assert main(["run", str(tmp_path / "missing.ini")]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_run_writes_outputs_and_is_reproducible(tmp_path):
    args = ["preset", "letter_c", "--resolution", "8", "--max-steps", "4", "--seed", "3", "--threads", "1",
            "--override", "snapshot_every=2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    assert (a / "diagnostics.csv").read_bytes() == (b / "diagnostics.csv").read_bytes()
    lines = (a / "diagnostics.csv").read_text().splitlines()
    assert lines[0] == ",".join(DIAGNOSTIC_COLUMNS) and len(lines) == 6
    assert sorted(p.name for p in a.glob("snapshot_*.vtk")) == [f"snapshot_00000{k}.vtk" for k in (0, 2, 4)]
    manifest = (a / "manifest.txt").read_text()
    assert "status = completed" in manifest and "seed = 3" in manifest and "steps_done = 4" in manifest
    # the manifest alone reproduces the run
    assert main(["run", str(a / "manifest.txt"), "--max-steps", "4", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "diagnostics.csv").read_bytes() == (a / "diagnostics.csv").read_bytes()


def test_stationary_preset_run_is_flat(tmp_path):
    res = run(coarsened(preset("circle-stationary"), 2), tmp_path)
    assert res.status == 0 and res.manifest.steps_done == 10
    d = read_diagnostics(tmp_path / "diagnostics.csv")
    assert np.ptp(d["E_total"]) <= 1e-8 * d["E_total"][0]
    assert np.ptp(d["area"]) <= 1e-8


def test_failed_run_writes_a_failure_snapshot(tmp_path):
    cfg = coarsened(preset("letter_c"), 8).replace(vi_max_sweeps=1, vi_method="uzawa")
    res = run(cfg, tmp_path, max_steps=3)
    assert res.status == 1 and res.manifest.status == "failed"
    assert (tmp_path / "snapshot_failure.vtk").exists()
    assert "status = failed" in (tmp_path / "manifest.txt").read_text()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "membrane_fem", "list"], capture_output=True, text=True,
                         check=True).stdout
    assert "c0_junction" in out
