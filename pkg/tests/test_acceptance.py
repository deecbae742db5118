"""Acceptance criteria 1-10, one test each; the summary after the run prints one line per criterion.

Criteria 8 and 9 integrate for tens of minutes to hours and run only with ARTIFACT_LONG=1.
"""

import os

import numpy as np
import pytest

from membrane_fem import shapes
from membrane_fem.assembly import CHSystem
from membrane_fem.coefficients import MaterialLaw
from membrane_fem.config import preset
from membrane_fem.driver import coarsened, run
from membrane_fem.dynamics import Simulation, gradient_check
from membrane_fem.io import read_diagnostics
from membrane_fem.solvers import solve_ch_vi
from membrane_fem.verification import (check_gauss_bonnet, drift_scaling, energy_decay, junction_comparison,
                                       tank_treading, tumbling)

import test_assembly_oracles as oracle_tests
from oracles import ActiveSetEnumerator

LONG = os.environ.get("ARTIFACT_LONG") == "1"
long_only = pytest.mark.skipif(not LONG, reason="set ARTIFACT_LONG=1 to integrate this scenario")


def run_preset(tmp_path, name, overrides=(), resolution=1):
    cfg = coarsened(preset(name, list(overrides)), resolution)
    result = run(cfg, tmp_path / name)
    assert result.status == 0, result.manifest.cause
    return cfg, read_diagnostics(tmp_path / name / "diagnostics.csv")


@pytest.mark.criterion(1)
def test_assembled_operators_match_dense_oracles(record_property):
    for dim in (2, 3):
        setup = oracle_tests.build_setup(dim)
        for name in oracle_tests.ORACLE_CHECKS:
            getattr(oracle_tests, name)(setup)
    record_property("detail", f"{len(oracle_tests.ORACLE_CHECKS)} operator groups in 2D and 3D "
                              f"within {oracle_tests.TOL:g}")


@pytest.mark.criterion(2)
def test_exact_invariants_over_200_letter_c_steps(record_property):
    cfg = coarsened(preset("letter_c"), 4)
    sim = Simulation(cfg)
    total0 = np.dot(sim.state.surf.lumped_mass, sim.state.C)
    worst = {"concentration": 0.0, "excess |C|": 0.0}
    for _ in range(200):
        sim.step()
        st = sim.state
        worst["concentration"] = max(worst["concentration"], abs(np.dot(st.surf.lumped_mass, st.C) - total0))
        worst["excess |C|"] = max(worst["excess |C|"], np.abs(st.C).max() - 1.0)
        for k, v in sim.last_report.residuals.items():
            worst[k] = max(worst.get(k, 0.0), v)
    record_property("detail", "  ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert worst["excess |C|"] <= 0.0
    assert all(v <= 1e-10 for v in worst.values()), worst


@pytest.mark.criterion(3)
def test_energy_gradient_is_second_order(record_property):
    rows = []
    rng = np.random.default_rng(1)
    polygon = shapes.circle(64)
    polygon = polygon.with_vertices(polygon.vertices * (1 + 0.1 * rng.standard_normal((64, 1))))
    res2 = gradient_check(polygon, rng.uniform(-0.9, 0.9, 64), MaterialLaw(0.5, 1.5, -0.5, -2.0), 1.0, 0.2,
                          rng.standard_normal((64, 2)))
    rows.append(("64-gon", res2))
    rng = np.random.default_rng(2)
    sphere = shapes.icosphere(2)
    assert sphere.n_vertices == 162
    sphere = sphere.with_vertices(sphere.vertices * (1 + 0.05 * rng.standard_normal((162, 1))))
    law = MaterialLaw(1.0, 1.5, -0.5, 0.5, -0.25, 0.25)
    res3 = gradient_check(sphere, rng.uniform(-0.9, 0.9, 162), law, 1.0, 0.3, rng.standard_normal((162, 3)))
    rows.append(("sphere", res3))
    record_property("detail", "  ".join(f"{n}: order {r.observed_order:.3f} best {r.best_error:.1e}"
                                        for n, r in rows))
    for _, r in rows:
        assert abs(r.observed_order - 2) <= 0.05 and r.best_error <= 1e-6


@pytest.mark.criterion(4)
def test_conservation_drift_is_first_order_in_tau(tmp_path, record_property):
    _, coarse = run_preset(tmp_path / "a", "letter_c", ["t_final=0.2", "tau=5e-4"])
    _, fine = run_preset(tmp_path / "b", "letter_c", ["t_final=0.2", "tau=2.5e-4"])
    ok, detail = drift_scaling(coarse, fine)
    record_property("detail", detail)
    assert ok, detail


@pytest.mark.criterion(5)
def test_energy_decreases_up_to_slack(tmp_path, record_property):
    cfg, diag = run_preset(tmp_path, "letter_c", resolution=4)
    assert diag["t"][-1] == pytest.approx(1.0)
    ok, detail = energy_decay(diag["E_total"], cfg.tau)
    record_property("detail", detail)
    assert ok, detail


@pytest.mark.criterion(6)
def test_stationary_circle(record_property):
    details = []
    for n in (64, 128):
        cfg = preset("circle-stationary", [f"surface_elements={n}", "fine_level=8"])
        sim = Simulation(cfg)
        h = sim.state.surf.mesh_size
        sim.step()
        u = np.abs(sim.state.U).max()
        disp = np.linalg.norm(sim.state.surf.vertices - sim.state.prev_vertices, axis=1).max()
        details.append(f"n={n}: |U|={u:.1e} disp={disp:.1e} (bound {10 * cfg.tau * h * h:.1e})")
        assert u <= 1e-7 and disp <= 10 * cfg.tau * h * h, details[-1]
    record_property("detail", "  ".join(details))


@pytest.mark.criterion(7)
def test_discrete_gauss_bonnet(record_property):
    ok, detail = check_gauss_bonnet((2, 3, 4))
    record_property("detail", detail)
    assert ok, detail


@long_only
@pytest.mark.long
@pytest.mark.criterion(8)
def test_junction_energies(tmp_path, record_property):
    _, c0 = run_preset(tmp_path, "c0_junction")
    _, c1 = run_preset(tmp_path, "c1_junction")
    ok, detail = junction_comparison(c0, c1)
    record_property("detail", detail)
    assert ok, detail


@long_only
@pytest.mark.long
@pytest.mark.criterion(9)
def test_shear_regimes(tmp_path, record_property):
    _, a = run_preset(tmp_path, "shear_a", resolution=2)
    _, b = run_preset(tmp_path, "shear_b", resolution=2)
    ok_a, detail_a = tank_treading(a["incl_angle"])
    ok_b, detail_b = tumbling(b["incl_angle"])
    record_property("detail", f"(a) {detail_a}  (b) {detail_b}")
    assert ok_a and ok_b


@pytest.mark.criterion(10)
def test_gauss_seidel_matches_active_set_enumeration(record_property):
    rng = np.random.default_rng(2024)
    surf = shapes.circle(12)
    m, A = surf.lumped_mass, surf.stiffness
    enum = ActiveSetEnumerator(m, A.toarray(), 20.0, 0.1)
    worst = 0.0
    for _ in range(50):
        C_old = rng.uniform(-1, 1, 12)
        g, r = rng.normal(0, 2, 12) * m, 20.0 * m * C_old
        C_ref, _ = enum.solve(g, r)
        out = solve_ch_vi(CHSystem(m, A, g, r, 20.0, 0.1, True), C_old, method="pgs")
        worst = max(worst, np.abs(out.C - C_ref).max())
    record_property("detail", f"max |C_pgs - C_enum| = {worst:.1e} over 50 right-hand sides")
    assert worst <= 1e-9
