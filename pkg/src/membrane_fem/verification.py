"""Self-checks run by ``artifact verify``: fast versions of the invariant and oracle tests."""

from __future__ import annotations

import logging
import time

import numpy as np

from . import shapes
from .assembly import CHSystem, curvature_from_geometry, weingarten_field
from .coefficients import MaterialLaw
from .config import preset
from .driver import coarsened
from .dynamics import Simulation, gradient_check
from .solvers import solve_ch_vi
from .surface_mesh import geometric_diagnostics

logger = logging.getLogger(__name__)


def check_stationary_circle(n=64):
    cfg = preset("circle-stationary", [f"surface_elements={n}", "fine_level=8"])
    sim = Simulation(cfg)
    h = sim.state.surf.mesh_size
    sim.step()
    st = sim.state
    u = float(np.abs(st.U).max())
    disp = float(np.linalg.norm(st.surf.vertices - st.prev_vertices, axis=1).max())
    bound = 10 * cfg.tau * h * h
    return u <= 1e-7 and disp <= bound, f"|U|={u:.2e}  displacement={disp:.2e} (bound {bound:.2e})"


def check_gradient(seed=1):
    rng = np.random.default_rng(seed)
    surf = shapes.circle(64)
    surf = surf.with_vertices(surf.vertices * (1 + 0.1 * rng.standard_normal((64, 1))))
    C = rng.uniform(-0.9, 0.9, 64)
    law = MaterialLaw(0.5, 1.5, -0.5, -2.0)
    res = gradient_check(surf, C, law, 1.0, 0.2, rng.standard_normal((64, 2)))
    order = res.observed_order
    return abs(order - 2) <= 0.05 and res.best_error <= 1e-6, \
        f"order={order:.3f}  best relative error={res.best_error:.2e}"


def check_gauss_bonnet(levels=(2, 3, 4)):
    errors = []
    for lvl in levels:
        surf = shapes.icosphere(lvl)
        kappa = curvature_from_geometry(surf)
        euler = geometric_diagnostics(surf, kappa, weingarten_field(surf, kappa))[2]
        errors.append(abs(euler - 2.0))
    ok = all(b < a for a, b in zip(errors, errors[1:]))
    return ok, "errors " + ", ".join(f"{e:.1e}" for e in errors)


def check_vi_agreement(trials=10, seed=0):
    """Gauss–Seidel and Uzawa are independent iterations; both must reach the same KKT point."""
    rng = np.random.default_rng(seed)
    surf = shapes.circle(12)
    m, A = surf.lumped_mass, surf.stiffness
    worst = 0.0
    for _ in range(trials):
        C_old = rng.uniform(-1, 1, 12)
        system = CHSystem(m, A, rng.normal(0, 2, 12) * m, 20.0 * m * C_old, 20.0, 0.1, True)
        a = solve_ch_vi(system, C_old, method="pgs")
        b = solve_ch_vi(system, C_old, method="uzawa")
        worst = max(worst, float(np.abs(a.C - b.C).max()))
    return worst <= 1e-9, f"max |C_pgs - C_uzawa| = {worst:.1e} over {trials} problems"


def letter_c_run(steps=10):
    cfg = coarsened(preset("letter_c"), 4)
    sim = Simulation(cfg)
    records = [sim.diagnostics()]
    worst = {}
    for _ in range(steps):
        sim.step()
        records.append(sim.diagnostics())
        for k, v in sim.last_report.residuals.items():
            worst[k] = max(worst.get(k, 0.0), v)
    return cfg, records, worst


def check_letter_c_invariants(run):
    cfg, records, worst = run
    drift = max(abs(r["total_C"] - records[0]["total_C"]) for r in records)
    bounds = max(max(abs(r["min_C"]), abs(r["max_C"])) for r in records)
    ok = drift <= 1e-10 and bounds <= 1.0 and all(v <= 1e-10 for v in worst.values())
    detail = f"mass drift={drift:.1e}  max|C|={bounds:.3f}  " + \
        "  ".join(f"{k}={v:.1e}" for k, v in worst.items())
    return ok, detail


def check_letter_c_energy(run):
    cfg, records, _ = run
    E = np.array([r["E_total"] for r in records])
    slack = 1e-3 * cfg.tau * E[0]
    worst = float(np.diff(E).max())
    return worst <= slack and E[-1] < E[0], f"largest increase={worst:.2e} (slack {slack:.2e})"


# ---------------------------------------------------------------- whole-run criteria
def relative_drift(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(abs(values[-1] - values[0]) / abs(values[0]))


def drift_scaling(diag_coarse, diag_fine, band=0.2):
    """Volume and area drift ratios between a run and the same run with half the time step.

    First-order drift halves, so each ratio must lie within ``band`` of 1/2
    (relative).
    """
    ratios = {key: relative_drift(diag_fine[key]) / relative_drift(diag_coarse[key])
              for key in ("volume", "area")}
    ok = all(abs(r - 0.5) <= 0.5 * band for r in ratios.values())
    detail = "  ".join(f"{k}: {relative_drift(diag_coarse[k]):.3e} -> {relative_drift(diag_fine[k]):.3e} "
                       f"(ratio {r:.3f})" for k, r in ratios.items())
    return ok, detail


def energy_decay(E, tau, slack_factor=1e-3):
    """Steps may raise the energy by at most slack_factor·τ·E(0), and the run must lose energy overall."""
    E = np.asarray(E, dtype=float)
    slack = slack_factor * tau * E[0]
    worst = float(np.diff(E).max())
    ok = worst <= slack and E[-1] < E[0]
    return ok, f"largest increase={worst:.2e} (slack {slack:.2e})  E(0)={E[0]:.4f}  E(end)={E[-1]:.4f}"


def junction_comparison(diag_c0, diag_c1, targets=(33.52, 33.97), kappa_targets=(2.32, 2.83)):
    """Final total and curvature energies of the two junction runs against reference values."""
    e0, e1 = float(diag_c0["E_total"][-1]), float(diag_c1["E_total"][-1])
    k0, k1 = float(diag_c0["E_kappa"][-1]), float(diag_c1["E_kappa"][-1])
    rel = [abs(e0 / targets[0] - 1), abs(e1 / targets[1] - 1)]
    krel = [abs(k0 / kappa_targets[0] - 1), abs(k1 / kappa_targets[1] - 1)]
    ok = max(rel) <= 0.05 and max(krel) <= 0.10 and e0 < e1
    detail = (f"E_total {e0:.3f} vs {e1:.3f} (targets {targets[0]}, {targets[1]}; off {rel[0]:.1%}, {rel[1]:.1%})  "
              f"E_kappa {k0:.3f} vs {k1:.3f} (targets {kappa_targets[0]}, {kappa_targets[1]}; "
              f"off {krel[0]:.1%}, {krel[1]:.1%})")
    return ok, detail


def tank_treading(angle, tail=0.2, max_std=5.0):
    """Steady inclination: standard deviation over the last ``tail`` of the run below ``max_std`` degrees."""
    angle = np.asarray(angle, dtype=float)
    last = angle[int(len(angle) * (1 - tail)):]
    std = float(np.std(last))
    return std < max_std, f"std over last {tail:.0%} = {std:.2f} deg, final angle {angle[-1]:.1f} deg"


def tumbling(angle, min_turn=360.0):
    """Monotone winding of the unwrapped inclination through more than ``min_turn`` degrees."""
    angle = np.asarray(angle, dtype=float)
    steps = np.diff(angle)
    sign = np.sign(angle[-1] - angle[0]) or 1.0
    backwards = float(np.max(-sign * steps, initial=0.0))
    turn = float(abs(angle[-1] - angle[0]))
    ok = turn > min_turn and backwards <= 0.0
    return ok, f"net winding {turn:.1f} deg, largest backward step {backwards:.3g} deg"


def run_checks(steps=10) -> list[tuple[str, bool, str]]:
    rows = []
    cached = {}

    def letter_c():
        if "run" not in cached:
            cached["run"] = letter_c_run(steps)
        return cached["run"]

    checks = [("stationary circle", check_stationary_circle),
              ("energy gradient", check_gradient),
              ("Gauss-Bonnet", check_gauss_bonnet),
              ("VI solvers agree", check_vi_agreement),
              ("letter C invariants", lambda: check_letter_c_invariants(letter_c())),
              ("letter C energy", lambda: check_letter_c_energy(letter_c()))]
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is reported, not raised
            ok, detail = False, f"error: {exc}"
        rows.append((name, bool(ok), f"{detail}  [{time.perf_counter() - t0:.1f}s]"))
    return rows
