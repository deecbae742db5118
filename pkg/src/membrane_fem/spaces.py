"""Taylor–Hood spaces, simplex quadrature and bulk↔surface transfer operators."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.special import roots_jacobi

from .bulk_mesh import DIRICHLET, STRESS_FREE, BulkMesh, GeometryError
from .surface_mesh import SurfaceMesh


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------- quadrature
@lru_cache(maxsize=None)
def simplex_quadrature(dim: int, degree: int):
    """Collapsed Gauss–Jacobi rule on the unit ``dim``-simplex.

    Returns barycentric points ``(n, dim+1)`` and weights summing to one
    (i.e. to be multiplied by the simplex measure). Exact for polynomials of
    total degree ``degree``.
    """
    if dim == 0:
        return np.ones((1, 1)), np.ones(1)
    npts = max(1, (degree + 2) // 2)
    rules = []
    for i in range(dim):
        a = dim - 1 - i
        x, w = roots_jacobi(npts, a, 0)
        u = 0.5 * (x + 1)
        w = w / 2 ** (a + 1)
        rules.append((u, w))
    pts, wts = [], []
    for combo in itertools.product(*[range(npts)] * dim):
        scale, weight, x = 1.0, 1.0, []
        for i, c in enumerate(combo):
            u, w = rules[i][0][c], rules[i][1][c]
            x.append(scale * u)
            weight *= w
            scale *= 1 - u
        pts.append(x)
        wts.append(weight)
    pts = np.array(pts)
    wts = np.array(wts)
    wts /= wts.sum()
    bary = np.concatenate([1 - pts.sum(axis=1, keepdims=True), pts], axis=1)
    return bary, wts


# ---------------------------------------------------------------- P2 basis
def p2_local_edges(dim: int):
    return list(itertools.combinations(range(dim + 1), 2))


def p2_values(lam: np.ndarray) -> np.ndarray:
    """P2 basis values at barycentric points ``(..., d+1)`` → ``(..., nloc)``."""
    d = lam.shape[-1] - 1
    vals = [lam[..., i] * (2 * lam[..., i] - 1) for i in range(d + 1)]
    vals += [4 * lam[..., a] * lam[..., b] for a, b in p2_local_edges(d)]
    return np.stack(vals, axis=-1)


def p2_dlambda(lam: np.ndarray) -> np.ndarray:
    """Derivatives of the P2 basis w.r.t. barycentric coordinates ``(..., nloc, d+1)``."""
    d = lam.shape[-1] - 1
    nloc = (d + 1) * (d + 2) // 2
    out = np.zeros(lam.shape[:-1] + (nloc, d + 1))
    for i in range(d + 1):
        out[..., i, i] = 4 * lam[..., i] - 1
    for n, (a, b) in enumerate(p2_local_edges(d)):
        out[..., d + 1 + n, a] = 4 * lam[..., b]
        out[..., d + 1 + n, b] = 4 * lam[..., a]
    return out


def p2_nodes_barycentric(dim: int) -> np.ndarray:
    eye = np.eye(dim + 1)
    mids = [0.5 * (eye[a] + eye[b]) for a, b in p2_local_edges(dim)]
    return np.vstack([eye] + mids)


# ---------------------------------------------------------------- dof maps
@dataclass
class DofMap:
    """P2 velocity / P1 pressure numbering on one bulk mesh.

    Velocity dofs are interleaved: node ``n`` component ``r`` is ``n*d + r``.
    """

    bulk: BulkMesh
    element_nodes: np.ndarray  # (T, nloc) P2 node ids
    node_coords: np.ndarray  # (N, d)
    dirichlet_nodes: np.ndarray
    dirichlet_values: np.ndarray  # (n_dirichlet, d)
    zero_mean_pressure: bool

    @property
    def dim(self) -> int:
        return self.bulk.dim

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def n_velocity(self) -> int:
        return self.n_nodes * self.dim

    @property
    def n_pressure(self) -> int:
        return self.bulk.n_vertices

    @property
    def dirichlet_dofs(self) -> np.ndarray:
        d = self.dim
        return (self.dirichlet_nodes[:, None] * d + np.arange(d)).ravel()

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_velocity, bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    def boundary_vector(self) -> np.ndarray:
        """Full velocity vector that is zero except for the Dirichlet values."""
        u = np.zeros(self.n_velocity)
        u[self.dirichlet_dofs] = self.dirichlet_values.ravel()
        return u


def build_spaces(bulk: BulkMesh, g=None) -> DofMap:
    """Taylor–Hood P2–P1 spaces with Dirichlet data ``g`` sampled at ∂₁Ω nodes."""
    d = bulk.dim
    edges, el2edge = bulk.edges
    nv = bulk.n_vertices
    element_nodes = np.concatenate([bulk.simplices, nv + el2edge], axis=1)
    coords = np.concatenate([bulk.vertices, 0.5 * (bulk.vertices[edges[:, 0]] + bulk.vertices[edges[:, 1]])])
    bf = bulk.boundary_facets
    is_d = bf["tag"] == DIRICHLET
    if not is_d.any():
        raise ConfigurationError("the Dirichlet part of the boundary is empty")
    nodes = set()
    pairs = p2_local_edges(d)
    for el, loc in zip(bf["element"][is_d], bf["local"][is_d]):
        for a in range(d + 1):
            if a != loc:
                nodes.add(int(bulk.simplices[el, a]))
        for n, (a, b) in enumerate(pairs):
            if a != loc and b != loc:
                nodes.add(int(nv + el2edge[el, n]))
    dn = np.array(sorted(nodes), dtype=np.int64)
    if g is None:
        vals = np.zeros((len(dn), d))
    else:
        vals = np.asarray(g(coords[dn]), dtype=float).reshape(len(dn), d)
    zero_mean = not np.any(bf["tag"] == STRESS_FREE)
    return DofMap(bulk, element_nodes, coords, dn, vals, zero_mean)


# ---------------------------------------------------------------- transfer
def evaluation_matrix(dofs: DofMap, points, located=None) -> sparse.csr_matrix:
    """Scalar P2 evaluation at ``points``: ``(n_points, n_nodes)``."""
    points = np.atleast_2d(points)
    elem, lam = dofs.bulk.locate(points) if located is None else located
    vals = p2_values(lam)
    nloc = vals.shape[1]
    rows = np.repeat(np.arange(len(points)), nloc)
    cols = dofs.element_nodes[elem].ravel()
    return sparse.csr_matrix((vals.ravel(), (rows, cols)), shape=(len(points), dofs.n_nodes))


def vectorize(mat: sparse.spmatrix, d: int) -> sparse.csr_matrix:
    """Interleaved vector version ``mat ⊗ Id``."""
    return sparse.kron(mat, sparse.identity(d), format="csr")


def interpolate_p2(old: DofMap, values: np.ndarray, new: DofMap) -> np.ndarray:
    """Nodal interpolation I₂ of an old P2 field ``(N_old, ...)`` onto the nodes of ``new``."""
    if old is new:
        return np.array(values, copy=True)
    return evaluation_matrix(old, new.node_coords) @ values


def interpolate_p0(old: BulkMesh, values: np.ndarray, new: BulkMesh, degree: int = 2) -> np.ndarray:
    """I₀: element averages of an old piecewise-constant field on the new elements."""
    lam, w = simplex_quadrature(new.dim, degree)
    pts = np.einsum("qa,tad->tqd", lam, new.vertices[new.simplices]).reshape(-1, new.dim)
    elem, _ = old.locate(pts)
    return (values[elem].reshape(new.n_elements, -1) * w).sum(axis=1)


def pushforward(values) -> np.ndarray:
    """Π: vertex values carried by index onto the next interface (a copy)."""
    return np.array(values, copy=True)


def surface_interpolate(surf: SurfaceMesh, func) -> np.ndarray:
    """π: sample a function at the interface vertices."""
    return np.asarray(func(surf.vertices))


# ---------------------------------------------------------------- surface quadrature
@dataclass
class SurfaceQuadraturePlan:
    """Quadrature on every interface simplex, with located bulk points."""

    points: np.ndarray  # (J, nq, d) physical points
    surface_lambda: np.ndarray  # (nq, d) barycentric on σ_j
    weights: np.ndarray  # (J, nq)
    element: np.ndarray  # (J, nq) bulk element
    bulk_lambda: np.ndarray  # (J, nq, d+1)

    def integrate(self, dofs: DofMap, nodal: np.ndarray) -> np.ndarray:
        """∫_{σ_j} f for a scalar bulk P2 function, per interface simplex."""
        vals = p2_values(self.bulk_lambda)
        f = np.einsum("jqn,jqn->jq", vals, nodal[dofs.element_nodes[self.element]])
        return (f * self.weights).sum(axis=1)


def plan_surface_quadrature(bulk: BulkMesh, surf: SurfaceMesh, order: int = 4) -> SurfaceQuadraturePlan:
    lam, w = simplex_quadrature(surf.dim - 1, order)
    pts = np.einsum("qa,jad->jqd", lam, surf.vertices[surf.simplices])
    J, nq = pts.shape[:2]
    try:
        elem, blam = bulk.locate(pts.reshape(-1, surf.dim))
    except GeometryError as exc:
        raise GeometryError(f"surface quadrature point outside the domain: {exc}") from exc
    return SurfaceQuadraturePlan(pts, lam, surf.measures[:, None] * w[None], elem.reshape(J, nq),
                                 blam.reshape(J, nq, -1))
