"""Polyhedral interface meshes and their piecewise-linear calculus.

A :class:`SurfaceMesh` is a closed, oriented polygon (``dim=2``) or triangulated
surface (``dim=3``). Simplex orientation fixes the unit normal, which always
points into the exterior phase. For segments the normal is the tangent rotated
counter-clockwise, so a polygon enclosing its interior runs clockwise; triangles
use the right-hand rule.

All fields live at vertices and are read as continuous piecewise-linear
functions. Element-wise data (normals, gradients of P1 fields) is constant per
simplex; the vertex-quadrature ("lumped") inner product samples such data with
one-sided limits, i.e. per simplex corner.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np
from scipy import sparse

logger = logging.getLogger(__name__)

DEGENERACY_FLOOR = 1e-12


class MeshError(ValueError):
    """Invalid or degenerate surface mesh."""


@dataclass(frozen=True)
class PerElement:
    """Field that is constant on each simplex, shape ``(J, ...)``."""

    values: np.ndarray


@dataclass(frozen=True)
class PerCorner:
    """Field with one value per simplex corner, shape ``(J, dim, ...)``."""

    values: np.ndarray


class SurfaceMesh:
    """Closed oriented polyhedral hypersurface in R^d.

    Parameters
    ----------
    vertices : array_like, shape (K, d)
    simplices : array_like of int, shape (J, d)
        Vertex indices per simplex (segments for d=2, triangles for d=3).
    validate : bool
        Check closedness, orientability and nondegeneracy.
    degeneracy_floor : float
        Relative floor on simplex measures (w.r.t. the mean measure).
    """

    def __init__(self, vertices, simplices, validate=True, degeneracy_floor=DEGENERACY_FLOOR):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.simplices = np.ascontiguousarray(simplices, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise MeshError("vertices must have shape (K, 2) or (K, 3)")
        self.dim = self.vertices.shape[1]
        if self.simplices.ndim != 2 or self.simplices.shape[1] != self.dim:
            raise MeshError(f"simplices must have {self.dim} vertices each")
        self.degeneracy_floor = degeneracy_floor
        if validate:
            self._check_topology()
            self._check_measures()

    # ------------------------------------------------------------------ basics
    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_simplices(self) -> int:
        return self.simplices.shape[0]

    def with_vertices(self, vertices) -> "SurfaceMesh":
        """Same connectivity, new vertex positions."""
        return SurfaceMesh(vertices, self.simplices, validate=False,
                           degeneracy_floor=self.degeneracy_floor)

    def reversed(self) -> "SurfaceMesh":
        """Mesh with flipped orientation (normals point the other way)."""
        simp = self.simplices.copy()
        simp[:, [0, 1]] = simp[:, [1, 0]]
        return SurfaceMesh(self.vertices, simp, validate=False,
                           degeneracy_floor=self.degeneracy_floor)

    def _check_topology(self):
        K, d = self.n_vertices, self.dim
        if self.simplices.min() < 0 or self.simplices.max() >= K:
            raise MeshError("simplex index out of range")
        if d == 2:
            starts = np.bincount(self.simplices[:, 0], minlength=K)
            ends = np.bincount(self.simplices[:, 1], minlength=K)
            if np.any(starts + ends == 0):
                raise MeshError("isolated vertex")
            if np.any(starts != 1) or np.any(ends != 1):
                raise MeshError("curve is not closed and consistently oriented")
        else:
            s = self.simplices
            directed = np.concatenate([s[:, [0, 1]], s[:, [1, 2]], s[:, [2, 0]]])
            if np.bincount(s.ravel(), minlength=K).min() == 0:
                raise MeshError("isolated vertex")
            key = directed[:, 0] * K + directed[:, 1]
            rev = directed[:, 1] * K + directed[:, 0]
            uniq, counts = np.unique(key, return_counts=True)
            if np.any(counts != 1):
                raise MeshError("edge traversed twice in the same direction")
            if not np.all(np.isin(rev, uniq, assume_unique=False)):
                raise MeshError("surface is not closed")

    def _check_measures(self):
        meas = self.measures
        floor = self.degeneracy_floor * meas.mean()
        bad = np.flatnonzero(meas < floor)
        if bad.size:
            raise MeshError(f"degenerate simplices {bad[:10].tolist()} (measure < {floor:.3e})")

    # -------------------------------------------------------------- geometry
    @cached_property
    def edge_vectors(self) -> np.ndarray:
        """``(J, d, d-1)``: columns q_i - q_0 of every simplex."""
        q = self.vertices[self.simplices]
        return np.swapaxes(q[:, 1:, :] - q[:, :1, :], 1, 2)

    @cached_property
    def measures(self) -> np.ndarray:
        """(d-1)-dimensional measure |σ_j|."""
        E = self.edge_vectors
        gram = np.einsum("jai,jak->jik", E, E)
        det = np.linalg.det(gram)
        return np.sqrt(np.maximum(det, 0.0)) / factorial(self.dim - 1)

    @cached_property
    def normals(self) -> np.ndarray:
        """Unit normals ν_j, pointing into the exterior phase."""
        E = self.edge_vectors
        if self.dim == 2:
            t = E[:, :, 0]
            n = np.stack([-t[:, 1], t[:, 0]], axis=1)
        else:
            n = np.cross(E[:, :, 0], E[:, :, 1])
        return n / np.linalg.norm(n, axis=1)[:, None]

    @cached_property
    def hat_gradients(self) -> np.ndarray:
        """``(J, d, d)``: entry ``[j, a]`` is ∇_s of the hat function of local vertex a."""
        E = self.edge_vectors
        gram = np.einsum("jai,jak->jik", E, E)
        G = np.einsum("jai,jik->jak", E, np.linalg.inv(gram))  # (J, d, d-1)
        grads = np.empty((self.n_simplices, self.dim, self.dim))
        grads[:, 1:, :] = np.swapaxes(G, 1, 2)
        grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
        return grads

    @cached_property
    def tangential_projections(self) -> np.ndarray:
        """P_j = Id - ν_j ⊗ ν_j per simplex."""
        n = self.normals
        return np.eye(self.dim)[None] - n[:, :, None] * n[:, None, :]

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Diagonal of the vertex-quadrature mass matrix: Σ_{j∋k} |σ_j| / d."""
        w = np.repeat(self.measures / self.dim, self.dim)
        return np.bincount(self.simplices.ravel(), weights=w, minlength=self.n_vertices)

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted vertex normals ω_k (generally |ω_k| < 1)."""
        wn = self.measures[:, None] * self.normals
        acc = np.zeros((self.n_vertices, self.dim))
        for a in range(self.dim):
            np.add.at(acc, self.simplices[:, a], wn)
        area = np.bincount(self.simplices.ravel(), weights=np.repeat(self.measures, self.dim),
                           minlength=self.n_vertices)
        if np.any(area <= 0):
            raise MeshError("isolated vertex")
        return acc / area[:, None]

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        """Scalar P1 stiffness ⟨∇_s χ_l, ∇_s χ_k⟩."""
        g = self.hat_gradients
        loc = self.measures[:, None, None] * np.einsum("jai,jbi->jab", g, g)
        return self.assemble_local(loc)

    def assemble_local(self, loc: np.ndarray) -> sparse.csr_matrix:
        """Scatter ``(J, d, d)`` element matrices into a K×K sparse matrix."""
        s = self.simplices
        rows = np.repeat(s, self.dim, axis=1).ravel()
        cols = np.tile(s, (1, self.dim)).ravel()
        K = self.n_vertices
        return sparse.csr_matrix((loc.ravel(), (rows, cols)), shape=(K, K))

    def scatter_corners(self, corner: np.ndarray) -> np.ndarray:
        """Sum per-corner values ``(J, d, ...)`` onto vertices."""
        out = np.zeros((self.n_vertices,) + corner.shape[2:])
        for a in range(self.dim):
            np.add.at(out, self.simplices[:, a], corner[:, a])
        return out

    @cached_property
    def mesh_size(self) -> float:
        return float(self.measures.max() ** (1.0 / (self.dim - 1)))

    @cached_property
    def quality_ratio(self) -> float:
        """max/min simplex measure; logged, never corrected."""
        m = self.measures
        return float(m.max() / m.min())


# ---------------------------------------------------------------- operations
def element_geometry(mesh: SurfaceMesh, j: int) -> tuple[np.ndarray, float]:
    """Unit normal and measure of simplex ``j``."""
    meas = float(mesh.measures[j])
    if meas < mesh.degeneracy_floor * mesh.measures.mean():
        raise MeshError(f"simplex {j} is degenerate")
    return mesh.normals[j].copy(), meas


def vertex_normals(mesh: SurfaceMesh) -> np.ndarray:
    return mesh.vertex_normals


def corner_values(mesh: SurfaceMesh, f) -> np.ndarray:
    """Per-corner samples ``(J, d, ...)`` of a vertex, element or corner field."""
    if isinstance(f, PerCorner):
        return np.asarray(f.values)
    if isinstance(f, PerElement):
        v = np.asarray(f.values)
        return np.broadcast_to(v[:, None], (v.shape[0], mesh.dim) + v.shape[1:])
    f = np.asarray(f)
    if f.ndim == 0:
        return np.full((mesh.n_simplices, mesh.dim), float(f))
    if f.shape[0] != mesh.n_vertices:
        raise ValueError("vertex field has wrong length")
    return f[mesh.simplices]


def lumped_inner_product(mesh: SurfaceMesh, f, g) -> float:
    """⟨f, g⟩^h = Σ_j |σ_j|/d Σ_corners (f·g)(q_{j_k}^-) with full contraction."""
    fc = corner_values(mesh, f)
    gc = corner_values(mesh, g)
    if fc.shape != gc.shape:
        raise ValueError(f"field shapes differ: {fc.shape} vs {gc.shape}")
    prod = (fc * gc).reshape(fc.shape[0], fc.shape[1], -1).sum(axis=(1, 2))
    return float(np.dot(mesh.measures / mesh.dim, prod))


def surface_gradient_p1(mesh: SurfaceMesh, f, j=None) -> np.ndarray:
    """Element-constant surface gradient of a P1 field.

    Scalar f gives ``(J, d)``; vector f ``(K, d)`` gives ``(J, d, d)`` with
    entry ``[j, a, b] = ∂_b f_a`` (rows are components).
    """
    f = np.asarray(f, dtype=float)
    g = mesh.hat_gradients
    fc = f[mesh.simplices]
    if f.ndim == 1:
        out = np.einsum("ja,jai->ji", fc, g)
    else:
        out = np.einsum("ja...,jai->j...i", fc, g)
    return out if j is None else out[j]


def surface_divergence_p1(mesh: SurfaceMesh, f) -> np.ndarray:
    """Element-constant ∇_s·f of a P1 vector field (trace of the gradient)."""
    return np.einsum("jii->j", surface_gradient_p1(mesh, f))


def tensor_divergence_p1(mesh: SurfaceMesh, Z) -> np.ndarray:
    """Row-wise surface divergence of a P1 tensor field ``(K, d, d)`` → ``(J, d)``."""
    Zc = np.asarray(Z)[mesh.simplices]  # (J, corner, row, col)
    return np.einsum("jcab,jcb->ja", Zc, mesh.hat_gradients)


def enclosed_volume(mesh: SurfaceMesh) -> float:
    """(1/d)⟨id, ν⟩ evaluated exactly (id is affine on each simplex)."""
    centroids = mesh.vertices[mesh.simplices].mean(axis=1)
    return float(np.sum(mesh.measures * np.einsum("ji,ji->j", centroids, mesh.normals)) / mesh.dim)


def geometric_diagnostics(mesh: SurfaceMesh, kappa=None, weingarten=None) -> tuple[float, float, float]:
    """Area, enclosed volume and (d=3, given κ and W) the Euler characteristic estimate."""
    area = float(mesh.measures.sum())
    vol = enclosed_volume(mesh)
    euler = float("nan")
    if mesh.dim == 3 and kappa is not None and weingarten is not None:
        k2 = np.einsum("ki,ki->k", kappa, kappa)
        w2 = np.einsum("kab,kab->k", weingarten, weingarten)
        euler = float(np.dot(mesh.lumped_mass, k2 - w2) / (4 * np.pi))
    return area, vol, euler


# ---------------------------------------------------------------- I/O
def write_mesh_text(mesh: SurfaceMesh, path) -> None:
    """Plain-text mesh: a ``vertices`` block then a ``simplices`` block (0-based)."""
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices} {mesh.dim}\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        fh.write(f"simplices {mesh.n_simplices} {mesh.dim}\n")
        np.savetxt(fh, mesh.simplices, fmt="%d")


def read_mesh_text(path) -> SurfaceMesh:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[0] != "vertices":
        raise MeshError("expected a 'vertices' block")
    K, d = int(head[1]), int(head[2])
    verts = np.array([[float(x) for x in ln.split()] for ln in lines[1:1 + K]])
    head2 = lines[1 + K].split()
    if head2[0] != "simplices":
        raise MeshError("expected a 'simplices' block")
    J = int(head2[1])
    simp = np.array([[int(x) for x in ln.split()] for ln in lines[2 + K:2 + K + J]])
    return SurfaceMesh(verts.reshape(K, d), simp.reshape(J, -1))
