"""Initial interface geometries.

Curves are returned clockwise so that segment normals point outward; closed
surfaces are oriented with outward right-hand normals.
"""

from __future__ import annotations

import numpy as np

from .surface_mesh import SurfaceMesh


def polygon_from_points(points) -> SurfaceMesh:
    """Closed polygon through ``points`` given in clockwise order."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    simp = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    return SurfaceMesh(pts, simp)


def _signed_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def equidistributed_curve(dense, n) -> SurfaceMesh:
    """Resample a densely sampled closed curve with ``n`` vertices equally spaced in arc length."""
    dense = np.asarray(dense, dtype=float)
    if _signed_area(dense) > 0:
        dense = dense[::-1]
    closed = np.vstack([dense, dense[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, s[-1], n, endpoint=False)
    pts = np.stack([np.interp(targets, s, closed[:, i]) for i in range(2)], axis=1)
    return polygon_from_points(pts)


def circle(n, radius=1.0, center=(0.0, 0.0)) -> SurfaceMesh:
    """Regular n-gon inscribed in a circle, first vertex on the positive x-axis."""
    theta = -2 * np.pi * np.arange(n) / n
    pts = np.asarray(center) + radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return polygon_from_points(pts)


def ellipse(n, semi_x, semi_y, center=(0.0, 0.0), angle=0.0, dense=20000) -> SurfaceMesh:
    t = np.linspace(0, 2 * np.pi, dense, endpoint=False)
    pts = np.stack([semi_x * np.cos(t), semi_y * np.sin(t)], axis=1)
    c, s = np.cos(angle), np.sin(angle)
    pts = pts @ np.array([[c, s], [-s, c]]) + np.asarray(center)
    return equidistributed_curve(pts, n)


def letter_c(n, length=2.823, thickness=0.15, opening=0.5 * np.pi, center=(0.0, 0.0),
             dense=40000) -> SurfaceMesh:
    """C-shaped stadium arc: an annular sector with semicircular end caps.

    The mid-line radius is chosen so the boundary has total ``length``.
    """
    span = 2 * np.pi - opening
    r = (length - np.pi * thickness) / (2 * span)
    w = 0.5 * thickness
    a0, a1 = 0.5 * opening, 2 * np.pi - 0.5 * opening
    m = dense // 4
    outer = np.linspace(a0, a1, m)
    pts = [np.stack([(r + w) * np.cos(outer), (r + w) * np.sin(outer)], 1)]
    c1 = r * np.array([np.cos(a1), np.sin(a1)])
    cap = np.linspace(a1, a1 + np.pi, m)
    pts.append(c1 + w * np.stack([np.cos(cap), np.sin(cap)], 1))
    inner = np.linspace(a1, a0, m)
    pts.append(np.stack([(r - w) * np.cos(inner), (r - w) * np.sin(inner)], 1))
    c0 = r * np.array([np.cos(a0), np.sin(a0)])
    cap0 = np.linspace(a0 + np.pi, a0 + 2 * np.pi, m)
    pts.append(c0 + w * np.stack([np.cos(cap0), np.sin(cap0)], 1))
    dense_pts = np.vstack(pts) + np.asarray(center)
    _, idx = np.unique(np.round(dense_pts, 14), axis=0, return_index=True)
    dense_pts = dense_pts[np.sort(idx)]
    return equidistributed_curve(dense_pts, n)


# ------------------------------------------------------------------ surfaces
def icosphere(level, radius=1.0, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Icosahedron refined ``level`` times by edge midpoints, projected to the sphere.

    Vertex counts are 12, 42, 162, 642, 2562, ...
    """
    p = (1 + 5 ** 0.5) / 2
    v = np.array([[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
                  [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
                  [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]], dtype=float)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    v /= np.linalg.norm(v, axis=1)[:, None]
    for _ in range(level):
        v, f = _midpoint_subdivide(v, f)
        v /= np.linalg.norm(v, axis=1)[:, None]
    return SurfaceMesh(radius * v + np.asarray(center), f)


def _midpoint_subdivide(v, f):
    edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    mids = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    nf = len(f)
    m01, m12, m20 = (len(v) + inv[:nf], len(v) + inv[nf:2 * nf], len(v) + inv[2 * nf:])
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    nfaces = np.concatenate([np.stack([a, m01, m20], 1), np.stack([m01, b, m12], 1),
                             np.stack([m20, m12, c], 1), np.stack([m01, m12, m20], 1)])
    return np.vstack([v, mids]), nfaces


def cube_sphere(n) -> SurfaceMesh:
    """Unit-cube surface with an ``n × n`` grid per face, projected to the unit sphere.

    ``n = 16`` gives (1538, 3072) vertices/triangles, ``n = 32`` gives (6146, 12288).
    """
    u = np.linspace(-1, 1, n + 1)
    verts, faces, index = [], [], {}

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    for axis in range(3):
        for sign in (-1.0, 1.0):
            a1, a2 = [i for i in range(3) if i != axis]
            grid = np.empty((n + 1, n + 1), dtype=np.int64)
            for i, x in enumerate(u):
                for j, y in enumerate(u):
                    p = np.zeros(3)
                    p[axis], p[a1], p[a2] = sign, x, y
                    grid[i, j] = vid(p)
            for i in range(n):
                for j in range(n):
                    q00, q10, q01, q11 = grid[i, j], grid[i + 1, j], grid[i, j + 1], grid[i + 1, j + 1]
                    if (i + j) % 2 == 0:
                        tris = [(q00, q10, q11), (q00, q11, q01)]
                    else:
                        tris = [(q00, q10, q01), (q10, q11, q01)]
                    faces.extend(tris)
    v = np.array(verts)
    f = np.array(faces)
    # orient outward
    cen = v[f].mean(axis=1)
    nrm = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    flip = np.einsum("ij,ij->i", nrm, cen) < 0
    f[flip] = f[flip][:, [1, 0, 2]]
    v = v / np.linalg.norm(v, axis=1)[:, None]
    return SurfaceMesh(v, f)


def superellipsoid(base: SurfaceMesh, semi_axes, exponent=4.0) -> SurfaceMesh:
    """Radially project a star-shaped mesh onto ``Σ |x_i/a_i|^p = 1``."""
    v = base.vertices / np.linalg.norm(base.vertices, axis=1)[:, None]
    a = np.asarray(semi_axes, dtype=float)
    s = np.sum(np.abs(v / a) ** exponent, axis=1) ** (-1.0 / exponent)
    return SurfaceMesh(v * s[:, None], base.simplices)


def flat_plate(n=16, size=(4.0, 4.0, 1.0), exponent=3.55) -> SurfaceMesh:
    """Rounded flat box of the given extents on a cube-sphere grid."""
    return superellipsoid(cube_sphere(n), 0.5 * np.asarray(size), exponent)


def armed_star(base: SurfaceMesh, arms, amplitude=0.6, flatten=0.5) -> SurfaceMesh:
    """In-plane star with ``arms`` lobes: r(θ, φ) = 1 + a·sin^2(θ)·cos(arms·φ), z scaled by ``flatten``."""
    v = base.vertices / np.linalg.norm(base.vertices, axis=1)[:, None]
    phi = np.arctan2(v[:, 1], v[:, 0])
    sin2 = 1.0 - v[:, 2] ** 2
    r = 1.0 + amplitude * sin2 * np.cos(arms * phi)
    out = v * r[:, None]
    out[:, 2] *= flatten
    return SurfaceMesh(out, base.simplices)
