import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from membrane_fem import shapes
from membrane_fem.coefficients import MaterialLaw
from membrane_fem.config import preset
from membrane_fem.driver import coarsened
from membrane_fem.dynamics import (Simulation, StepFailure, curvature_energy, gradient_check,
                                   inclination_angle, init_geometry_fields, initial_concentration,
                                   kinetic_energy, membrane_energy, rescale_to_mean)
from membrane_fem.surface_mesh import enclosed_volume


@pytest.mark.parametrize("n", [7, 32, 257])
def test_regular_polygon_curvature_is_minus_the_position(n):
    surf = shapes.circle(n)
    kappa, W, Y = init_geometry_fields(surf, np.zeros(n), MaterialLaw())
    np.testing.assert_allclose(kappa, -surf.vertices, atol=1e-12)
    # uniform unit rigidity and no spontaneous curvature: the multiplier is the curvature itself
    np.testing.assert_allclose(Y, kappa, atol=1e-15)


def test_sphere_mean_curvature_converges_to_minus_two():
    errors = []
    for level in (1, 2, 3, 4):
        surf = shapes.icosphere(level)
        kappa, _, _ = init_geometry_fields(surf, np.zeros(surf.n_vertices), MaterialLaw())
        scalar = np.einsum("ki,ki->k", kappa, surf.vertices)
        # the mass-weighted mean is -2 identically (it equals -2|Γ|/|Γ|), so test the plain vertex mean
        assert np.dot(surf.lumped_mass, scalar) / surf.lumped_mass.sum() == pytest.approx(-2, rel=1e-12)
        errors.append(abs(scalar.mean() + 2))
    assert errors[-1] < 1e-3 and all(b < a / 2 for a, b in zip(errors, errors[1:]))


def test_circle_bending_energy_tends_to_pi():
    errs = []
    for n in (32, 64, 128):
        surf = shapes.circle(n)
        kappa, W, _ = init_geometry_fields(surf, np.zeros(n), MaterialLaw())
        e = curvature_energy(surf, kappa, W, np.zeros(n), MaterialLaw())
        # closed form n sin(π/n) for the inscribed n-gon
        assert e == pytest.approx(n * np.sin(np.pi / n), rel=1e-12)
        errs.append(abs(e - np.pi))
    assert errs[2] < errs[1] < errs[0]


@given(st.integers(8, 60), st.floats(-0.95, 0.95), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_random_initial_concentration_hits_the_mean(n, target, seed):
    surf = shapes.ellipse(n, 1.3, 0.7)
    cfg = preset("circle-stationary").replace(initial_c="random", c_mean=target)
    C = initial_concentration(cfg, surf, np.random.default_rng(seed))
    m = surf.lumped_mass
    assert np.dot(m, C) / m.sum() == pytest.approx(target, abs=1e-12)
    assert np.abs(C).max() <= 1.0 + 1e-15
    assert np.allclose(rescale_to_mean(C, m, target), C)


@pytest.mark.parametrize("target", [-0.4, 0.0, 0.7])
def test_banded_initial_concentration_hits_the_mean(target):
    surf = shapes.ellipse(257, 1.25, 0.5)
    cfg = preset("c0_junction").replace(c_mean=target)
    C = initial_concentration(cfg, surf, None)
    m = surf.lumped_mass
    assert np.dot(m, C) / m.sum() == pytest.approx(target, abs=1e-13)
    assert np.sum(np.abs(C) < 1) <= 1


def test_preset_shapes_match_their_stated_sizes():
    c = Simulation(preset("circle-stationary"))
    assert c.state.surf.measures.sum() == pytest.approx(2 * 64 * np.sin(np.pi / 64), rel=1e-14)
    assert c.diagnostics()["total_C"] == 0.0
    shear = shapes.ellipse(257, 1.25, 0.5)
    assert shear.measures.sum() == pytest.approx(5.75, abs=0.01)
    letter = shapes.letter_c(257, 2.823, 0.15)
    assert letter.measures.sum() == pytest.approx(2.823, rel=1e-3)
    # a γπ-wide interface at γ = 0.02 spans about six elements
    assert 0.02 * np.pi / letter.measures.mean() == pytest.approx(5.7, abs=0.6)


def test_energies_without_density_have_no_kinetic_part():
    sim = Simulation(coarsened(preset("letter_c"), 8))
    sim.step()
    st_ = sim.state
    assert kinetic_energy(st_.dofs, st_.U, np.zeros(st_.bulk.n_elements), st_.surf, 0.0) == 0.0
    assert sim.diagnostics()["E_kin"] == 0.0


@pytest.mark.parametrize("n", [64, 128])
def test_circle_stays_put(n):
    cfg = preset("circle-stationary", [f"surface_elements={n}", "fine_level=8"])
    sim = Simulation(cfg)
    h = sim.state.surf.mesh_size
    for _ in range(2):
        sim.step()
        st_ = sim.state
        assert np.abs(st_.U).max() <= 1e-7
        assert np.linalg.norm(st_.surf.vertices - st_.prev_vertices, axis=1).max() <= 10 * cfg.tau * h * h


def test_step_conserves_concentration_and_volume_identity():
    sim = Simulation(coarsened(preset("letter_c"), 8))
    before = np.dot(sim.state.surf.lumped_mass, sim.state.C)
    for _ in range(3):
        old = sim.state.surf
        sim.step()
        st_ = sim.state
        assert np.dot(st_.surf.lumped_mass, st_.C) == pytest.approx(before, abs=1e-10)
        dX = st_.surf.vertices - old.vertices
        assert abs(np.dot(old.lumped_mass, np.einsum("ki,ki->k", dX, old.vertex_normals))) <= 1e-10
        assert all(v <= 1e-10 for v in sim.last_report.residuals.values())
        st_.check()


def test_translating_everything_translates_the_step():
    shift = np.array([0.5, -0.25])
    base = coarsened(preset("letter_c"), 8)
    moved_cfg = base.replace(domain_lo=tuple(np.add(base.domain_lo, shift)),
                             domain_hi=tuple(np.add(base.domain_hi, shift)))
    surf = Simulation(base).state.surf
    a = Simulation(base, surf=surf)
    b = Simulation(moved_cfg, surf=surf.with_vertices(surf.vertices + shift))
    np.testing.assert_allclose(b.state.C, a.state.C)
    xa, xb = a.state.surf.vertices.copy(), b.state.surf.vertices.copy()
    a.step()
    b.step()
    np.testing.assert_allclose(b.state.surf.vertices - xb, a.state.surf.vertices - xa, atol=1e-12)
    da, db = a.diagnostics(), b.diagnostics()
    for key in ("E_total", "E_kappa", "E_CH", "area", "volume"):
        assert db[key] == pytest.approx(da[key], rel=1e-12, abs=1e-12)


def test_step_failure_carries_the_last_state():
    sim = Simulation(coarsened(preset("letter_c"), 8).replace(vi_max_sweeps=1, vi_method="uzawa"))
    with pytest.raises(StepFailure) as info:
        sim.step()
    assert info.value.state is sim.state and sim.state.step == 0


# ---------------------------------------------------------------- energy gradient
def perturbed_polygon(n, seed):
    rng = np.random.default_rng(seed)
    surf = shapes.circle(n)
    return surf.with_vertices(surf.vertices * (1 + 0.1 * rng.standard_normal((n, 1)))), rng


def test_translation_leaves_the_energy_unchanged():
    surf, rng = perturbed_polygon(40, 3)
    C = rng.uniform(-0.9, 0.9, 40)
    law = MaterialLaw(0.5, 1.5, -0.5, -2.0)
    res = gradient_check(surf, C, law, 1.0, 0.2, np.tile([0.3, -0.7], (40, 1)))
    assert abs(res.predicted) < 1e-10
    assert np.abs(res.fd).max() < 1e-8


def test_inflating_a_circle_matches_the_closed_form():
    n = 128
    surf = shapes.circle(n)
    res = gradient_check(surf, np.ones(n), MaterialLaw(), 1e-6, 0.05, surf.vertices)
    # E = n sin(π/n) / R for the circumscribed radius R, so dE/dR at R=1 is -n sin(π/n)
    assert res.predicted == pytest.approx(-n * np.sin(np.pi / n), rel=1e-10)
    assert res.predicted == pytest.approx(-np.pi, rel=1e-3)


@pytest.mark.parametrize("junction", ["c1", "c0"])
def test_gradient_matches_differences_in_the_plane(junction):
    surf, rng = perturbed_polygon(64, 1)
    C = rng.uniform(-0.9, 0.9, 64)
    law = MaterialLaw(0.5, 1.5, -0.5, -2.0, junction=junction)
    res = gradient_check(surf, C, law, 1.0, 0.2, rng.standard_normal((64, 2)))
    assert abs(res.observed_order - 2) <= 0.05
    assert res.best_error <= 1e-6


def test_gradient_matches_differences_on_a_sphere_with_gaussian_rigidity():
    surf = shapes.icosphere(2)
    rng = np.random.default_rng(2)
    surf = surf.with_vertices(surf.vertices * (1 + 0.05 * rng.standard_normal((surf.n_vertices, 1))))
    C = rng.uniform(-0.9, 0.9, surf.n_vertices)
    law = MaterialLaw(1.0, 1.5, -0.5, 0.5, -0.25, 0.25)
    assert surf.n_vertices == 162
    res = gradient_check(surf, C, law, 1.0, 0.3, rng.standard_normal((162, 3)))
    assert abs(res.observed_order - 2) <= 0.05
    assert res.best_error <= 1e-6


def test_energy_is_rotation_invariant():
    surf, rng = perturbed_polygon(30, 7)
    C = rng.uniform(-1, 1, 30)
    law = MaterialLaw(0.5, 1.5, -0.5, -2.0)
    c, s = np.cos(0.7), np.sin(0.7)
    rotated = surf.with_vertices(surf.vertices @ np.array([[c, -s], [s, c]]).T)
    assert membrane_energy(rotated, C, law, 1.0, 0.1) == pytest.approx(membrane_energy(surf, C, law, 1.0, 0.1),
                                                                      rel=1e-12)


# ---------------------------------------------------------------- inclination angle
@given(st.floats(-89.0, 89.0))
@settings(max_examples=30, deadline=None)
def test_inclination_angle_of_a_rotated_ellipse(angle):
    surf = shapes.ellipse(101, 2.5, 1.0)
    a = np.radians(angle)
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    got, gap = inclination_angle(surf.with_vertices(surf.vertices @ R.T + 3.0), with_anisotropy=True)
    assert got == pytest.approx(angle, abs=1e-9)
    assert gap > 0.5


def test_inclination_angle_is_unwrapped_over_a_full_turn():
    cfg = preset("circle-stationary")
    surf = shapes.ellipse(64, 2.0, 0.5)
    sim = Simulation(cfg.replace(domain_lo=(-3.0, -3.0), domain_hi=(3.0, 3.0)), surf=surf)
    angles = []
    for a in np.radians(np.arange(0, 400, 10)):
        R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        sim.state.surf = surf.with_vertices(surf.vertices @ R.T)
        angles.append(sim.diagnostics()["incl_angle"])
    np.testing.assert_allclose(np.subtract(angles, angles[0]), np.arange(0, 400, 10), atol=1e-8)


def test_isotropic_shape_has_no_axis():
    _, gap = inclination_angle(shapes.circle(60), with_anisotropy=True)
    assert gap < 1e-12
    assert enclosed_volume(shapes.circle(60)) > 0
