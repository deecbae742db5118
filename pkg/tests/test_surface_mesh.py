import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from membrane_fem import shapes
from membrane_fem.assembly import curvature_from_geometry, weingarten_field
from membrane_fem.surface_mesh import (MeshError, PerCorner, PerElement, SurfaceMesh, enclosed_volume,
                                       geometric_diagnostics, lumped_inner_product, read_mesh_text,
                                       surface_divergence_p1, surface_gradient_p1, write_mesh_text)

from oracles import dense_surface_operators, segment_normal, triangle_normal


@st.composite
def star_polygons(draw, min_n=5, max_n=40):
    n = draw(st.integers(min_n, max_n))
    radii = draw(st.lists(st.floats(0.5, 1.5), min_size=n, max_size=n))
    jitter = draw(st.lists(st.floats(-0.3, 0.3), min_size=n, max_size=n))
    phi = -2 * np.pi * (np.arange(n) + 0.5 + np.array(jitter)) / n
    pts = np.column_stack([np.array(radii) * np.cos(phi), np.array(radii) * np.sin(phi)])
    return shapes.polygon_from_points(pts)


@st.composite
def rigid_motions(draw, dim):
    q, _ = np.linalg.qr(np.array(draw(st.lists(st.floats(-1, 1), min_size=dim * dim, max_size=dim * dim)))
                        .reshape(dim, dim) + 3 * np.eye(dim))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    shift = np.array(draw(st.lists(st.floats(-2, 2), min_size=dim, max_size=dim)))
    return q, shift


def test_normals_point_outward_for_clockwise_polygon():
    surf = shapes.circle(16)
    centroids = surf.vertices[surf.simplices].mean(axis=1)
    assert np.all(np.einsum("ji,ji->j", surf.normals, centroids) > 0)
    assert enclosed_volume(surf) > 0


def test_normals_match_dense_construction():
    for surf in (shapes.ellipse(12, 1.2, 0.6), shapes.icosphere(1)):
        P = surf.vertices[surf.simplices]
        ref = [segment_normal(*p) if surf.dim == 2 else triangle_normal(*p) for p in P]
        np.testing.assert_allclose(surf.normals, ref, atol=1e-14)


def test_circle_measures_and_curvature():
    n = 256
    surf = shapes.circle(n, radius=2.0)
    assert surf.measures.sum() == pytest.approx(2 * n * 2.0 * np.sin(np.pi / n), rel=1e-14)
    kappa = curvature_from_geometry(surf)
    # κ = -(1/R) ν for a circle with outward normal
    radial = surf.vertices / np.linalg.norm(surf.vertices, axis=1)[:, None]
    np.testing.assert_allclose(kappa, -0.5 * radial, atol=1e-4)


def test_sphere_volume_area_and_euler_characteristic():
    surf = shapes.icosphere(4, radius=1.0)
    kappa = curvature_from_geometry(surf)
    area, vol, euler = geometric_diagnostics(surf, kappa, weingarten_field(surf, kappa))
    assert area == pytest.approx(4 * np.pi, rel=2e-3)
    assert vol == pytest.approx(4 * np.pi / 3, rel=3e-3)
    assert euler == pytest.approx(2.0, abs=0.05)


@given(star_polygons())
@settings(max_examples=40, deadline=None)
def test_polygon_operators_match_dense_loops(surf):
    mass, A, omega = dense_surface_operators(surf.vertices, surf.simplices)
    np.testing.assert_allclose(surf.lumped_mass, mass, rtol=1e-13)
    np.testing.assert_allclose(surf.stiffness.toarray(), A, atol=1e-10 * np.abs(A).max())
    np.testing.assert_allclose(surf.vertex_normals, omega, atol=1e-13)


@given(star_polygons())
@settings(max_examples=40, deadline=None)
def test_stiffness_is_symmetric_psd_with_constant_kernel(surf):
    A = surf.stiffness.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-12 * np.abs(A).max())
    np.testing.assert_allclose(A @ np.ones(surf.n_vertices), 0, atol=1e-10 * np.abs(A).max())
    assert np.linalg.eigvalsh(A).min() > -1e-10 * np.abs(A).max()
    assert surf.lumped_mass.sum() == pytest.approx(surf.measures.sum(), rel=1e-13)


@given(star_polygons(), rigid_motions(2))
@settings(max_examples=30, deadline=None)
def test_geometry_is_invariant_under_rigid_motions(surf, motion):
    Q, b = motion
    moved = surf.with_vertices(surf.vertices @ Q.T + b)
    np.testing.assert_allclose(moved.measures, surf.measures, rtol=1e-12)
    np.testing.assert_allclose(moved.normals, surf.normals @ Q.T, atol=1e-12)
    assert enclosed_volume(moved) == pytest.approx(enclosed_volume(surf), rel=1e-10)
    k0 = curvature_from_geometry(surf)
    np.testing.assert_allclose(curvature_from_geometry(moved), k0 @ Q.T, atol=1e-9 * np.abs(k0).max())


@given(rigid_motions(3))
@settings(max_examples=15, deadline=None)
def test_sphere_geometry_is_invariant_under_rigid_motions(motion):
    Q, b = motion
    surf = shapes.icosphere(1)
    moved = surf.with_vertices(surf.vertices @ Q.T + b)
    np.testing.assert_allclose(moved.hat_gradients, surf.hat_gradients @ Q.T, atol=1e-12)
    assert enclosed_volume(moved) == pytest.approx(enclosed_volume(surf), rel=1e-12)


def test_reversed_mesh_flips_normals_and_volume():
    surf = shapes.icosphere(1)
    rev = surf.reversed()
    np.testing.assert_allclose(rev.normals, -surf.normals)
    assert enclosed_volume(rev) == pytest.approx(-enclosed_volume(surf))


def test_hat_gradients_reproduce_affine_functions():
    surf = shapes.icosphere(2)
    a = np.array([0.3, -1.2, 2.0])
    f = surf.vertices @ a
    grad = surface_gradient_p1(surf, f)
    tangential = a - np.einsum("ji,i->j", surf.normals, a)[:, None] * surf.normals
    np.testing.assert_allclose(grad, tangential, atol=1e-12)
    # ∇_s·id = d - 1
    np.testing.assert_allclose(surface_divergence_p1(surf, surf.vertices), 2.0, atol=1e-12)


def test_lumped_inner_product_accepts_element_and_corner_fields():
    surf = shapes.circle(10)
    ones = np.ones(surf.n_vertices)
    length = surf.measures.sum()
    assert lumped_inner_product(surf, ones, ones) == pytest.approx(length)
    assert lumped_inner_product(surf, PerElement(np.full(10, 2.0)), ones) == pytest.approx(2 * length)
    corner = PerCorner(np.ones((10, 2)))
    assert lumped_inner_product(surf, corner, corner) == pytest.approx(length)
    assert lumped_inner_product(surf, PerElement(surf.normals), PerElement(surf.normals)) == pytest.approx(length)


def test_mesh_text_roundtrip(tmp_path):
    surf = shapes.icosphere(1)
    write_mesh_text(surf, tmp_path / "m.txt")
    back = read_mesh_text(tmp_path / "m.txt")
    np.testing.assert_array_equal(back.vertices, surf.vertices)
    np.testing.assert_array_equal(back.simplices, surf.simplices)


@pytest.mark.parametrize("verts, simps, message", [
    (np.zeros((3, 2)), [[0, 1], [1, 2]], "closed"),
    ([[0, 0], [1, 0], [0, 1]], [[0, 1], [1, 2], [2, 0], [0, 1]], "closed"),
    ([[0, 0], [1, 0], [1, 0]], [[0, 1], [1, 2], [2, 0]], "degenerate"),
    ([[0, 0], [1, 0], [0, 1]], [[0, 1], [1, 3], [3, 0]], "range"),
    (np.zeros((4, 3)), [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]], "direction"),
    (np.eye(3), [[0, 1, 2]], "closed"),
])
def test_invalid_meshes_are_rejected(verts, simps, message):
    with pytest.raises(MeshError, match=message):
        SurfaceMesh(verts, simps)


def test_wrong_shapes_are_rejected():
    with pytest.raises(MeshError):
        SurfaceMesh(np.zeros((4, 4)), [[0, 1, 2, 3]])
    with pytest.raises(MeshError):
        SurfaceMesh(np.zeros((4, 2)), [[0, 1, 2]])
