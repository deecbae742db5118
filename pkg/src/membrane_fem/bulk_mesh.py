"""Simplicial bulk meshes of box domains with interface-driven bisection.

Meshes start from a Kuhn (Freudenthal) triangulation of a grid of cubes and
are refined by tagged bisection: a simplex ``(x0, ..., xd)`` at generation
``l`` has tag ``k = d - (l mod d)`` and is cut at the midpoint ``z`` of the
edge ``x0 xk`` into ``(x0, ..., x_{k-1}, z, x_{k+1}, ..., xd)`` and
``(x1, ..., xk, z, x_{k+1}, ..., xd)``. On Kuhn meshes this rule (newest
vertex bisection for d=2) keeps refinements conforming after closure.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from math import factorial
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .surface_mesh import SurfaceMesh

logger = logging.getLogger(__name__)

INTERIOR, EXTERIOR, INTERFACIAL = -1, 1, 0
DIRICHLET, STRESS_FREE = 1, 2


class GeometryError(RuntimeError):
    """Interface left the computational domain, or a point could not be located."""


class RefinementError(ValueError):
    """Inconsistent refinement levels."""


@dataclass
class BoxDomain:
    """Union of axis-aligned boxes with a boundary-tag rule.

    ``boundary_tag`` maps ``(centroid, outward_normal)`` arrays of boundary
    facets to tags (1 = Dirichlet, 2 = stress free); the default tags
    everything Dirichlet.
    """

    boxes: list
    cells: tuple
    boundary_tag: Callable | None = None

    @property
    def dim(self) -> int:
        return len(self.boxes[0][0])

    def contains(self, x, tol=1e-12) -> np.ndarray:
        x = np.atleast_2d(x)
        inside = np.zeros(len(x), dtype=bool)
        for lo, hi in self.boxes:
            inside |= np.all((x >= np.asarray(lo) - tol) & (x <= np.asarray(hi) + tol), axis=1)
        return inside

    @cached_property
    def bounds(self):
        lo = np.min([b[0] for b in self.boxes], axis=0)
        hi = np.max([b[1] for b in self.boxes], axis=0)
        return np.asarray(lo, float), np.asarray(hi, float)


def box_domain(lo, hi, cells, boundary_tag=None) -> BoxDomain:
    return BoxDomain([(tuple(lo), tuple(hi))], tuple(cells), boundary_tag)


def kuhn_mesh(domain: BoxDomain):
    """Vertices and Maubach-ordered simplices of the Kuhn triangulation of ``domain``."""
    lo, hi = domain.bounds
    d = domain.dim
    n = np.asarray(domain.cells)
    h = (hi - lo) / n
    grid = np.stack(np.meshgrid(*[np.arange(m + 1) for m in n], indexing="ij"), -1).reshape(-1, d)
    strides = np.cumprod(np.concatenate([[1], (n + 1)[::-1][:-1]]))[::-1]
    cells = np.stack(np.meshgrid(*[np.arange(m) for m in n], indexing="ij"), -1).reshape(-1, d)
    centers = lo + (cells + 0.5) * h
    cells = cells[domain.contains(centers)]
    simplices = []
    for perm in itertools.permutations(range(d)):
        path = [cells.copy()]
        cur = cells.copy()
        for ax in perm:
            cur = cur.copy()
            cur[:, ax] += 1
            path.append(cur)
        simplices.append(np.stack([p @ strides for p in path], axis=1))
    simp = np.concatenate(simplices)
    used, inv = np.unique(simp, return_inverse=True)
    verts = lo + grid[used] * h
    return verts, inv.reshape(simp.shape)


class BulkMesh:
    """Conforming simplicial mesh with per-element bisection generation."""

    def __init__(self, vertices, simplices, level=None, domain: BoxDomain | None = None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.simplices = np.ascontiguousarray(simplices, dtype=np.int64)
        self.dim = self.vertices.shape[1]
        self.level = (np.zeros(len(self.simplices), dtype=np.int64) if level is None
                      else np.asarray(level, dtype=np.int64))
        self.domain = domain
        self.classification: np.ndarray | None = None
        self.classified_for: int | None = None

    @classmethod
    def from_domain(cls, domain: BoxDomain) -> "BulkMesh":
        v, s = kuhn_mesh(domain)
        return cls(v, s, domain=domain)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.simplices)

    # ----------------------------------------------------------- geometry
    @cached_property
    def jacobians(self) -> np.ndarray:
        """``(T, d, d)`` with columns x_i - x_0."""
        x = self.vertices[self.simplices]
        return np.swapaxes(x[:, 1:] - x[:, :1], 1, 2)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(np.linalg.det(self.jacobians)) / factorial(self.dim)

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """``(T, d+1, d)``: constant gradients of the barycentric coordinates."""
        Jinv = self.inverse_jacobians  # rows: ∇λ_1..∇λ_d
        g = np.empty((self.n_elements, self.dim + 1, self.dim))
        g[:, 1:] = Jinv
        g[:, 0] = -Jinv.sum(axis=1)
        return g

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.vertices[self.simplices].mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        x = self.vertices[self.simplices]
        diam = np.zeros(self.n_elements)
        for a, b in itertools.combinations(range(self.dim + 1), 2):
            diam = np.maximum(diam, np.linalg.norm(x[:, a] - x[:, b], axis=1))
        return diam

    @cached_property
    def edges(self):
        """Unique edges ``(E, 2)`` and the element→edge map ``(T, d(d+1)/2)``.

        Local edge order is lexicographic over vertex pairs ``(a, b)``, a < b.
        """
        pairs = list(itertools.combinations(range(self.dim + 1), 2))
        e = np.stack([np.sort(self.simplices[:, list(p)], axis=1) for p in pairs], axis=1)
        flat = e.reshape(-1, 2)
        uniq, inv = np.unique(flat, axis=0, return_inverse=True)
        return uniq, inv.reshape(self.n_elements, len(pairs))

    @cached_property
    def facets(self):
        """Unique facets, element→facet map (facet a is opposite local vertex a), and counts."""
        d = self.dim
        f = np.stack([np.sort(np.delete(self.simplices, a, axis=1), axis=1) for a in range(d + 1)], 1)
        flat = f.reshape(-1, d)
        uniq, inv, counts = np.unique(flat, axis=0, return_inverse=True, return_counts=True)
        return uniq, inv.reshape(self.n_elements, d + 1), counts

    @cached_property
    def boundary_facets(self) -> dict:
        """Boundary facets: owning element, local index (opposite vertex), tag, outward normal, measure."""
        _, f2e, counts = self.facets
        el, loc = np.nonzero(counts[f2e] == 1)
        grads = self.barycentric_gradients[el, loc]
        nrm = -grads / np.linalg.norm(grads, axis=1)[:, None]
        keep = np.ones((len(el), self.dim + 1), bool)
        keep[np.arange(len(el)), loc] = False
        fv = self.simplices[el][keep].reshape(len(el), self.dim)
        x = self.vertices[fv]
        centroid = x.mean(axis=1)
        # facet measure = d·|T| / height, height = 1/|∇λ_opposite|
        meas = self.dim * self.volumes[el] * np.linalg.norm(grads, axis=1)
        if self.domain is not None and self.domain.boundary_tag is not None:
            tag = np.asarray(self.domain.boundary_tag(centroid, nrm), dtype=np.int64)
        else:
            tag = np.full(len(el), DIRICHLET, dtype=np.int64)
        return dict(element=el, local=loc, tag=tag, normal=nrm, measure=meas, vertices=fv,
                    centroid=centroid)

    @cached_property
    def _tree(self):
        return cKDTree(self.barycenters)

    def barycentric(self, elements, x) -> np.ndarray:
        """Barycentric coordinates of points ``x`` w.r.t. ``elements``."""
        x0 = self.vertices[self.simplices[elements, 0]]
        lam = np.einsum("tij,tj->ti", self.inverse_jacobians[elements], x - x0)
        return np.concatenate([1.0 - lam.sum(axis=1, keepdims=True), lam], axis=1)

    # ----------------------------------------------------------- queries
    def locate(self, x, tol=1e-10):
        """Vectorized point location: containing element and barycentric coordinates."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = len(x)
        elem = np.full(n, -1, dtype=np.int64)
        lam = np.zeros((n, self.dim + 1))
        pending = np.arange(n)
        k = min(8, self.n_elements)
        while pending.size:
            _, cand = self._tree.query(x[pending], k=k)
            cand = np.atleast_2d(cand).reshape(len(pending), -1)
            found = np.zeros(len(pending), dtype=bool)
            for c in range(cand.shape[1]):
                sel = ~found
                if not sel.any():
                    break
                ids = cand[sel, c]
                b = self.barycentric(ids, x[pending[sel]])
                ok = b.min(axis=1) >= -tol
                idx = np.flatnonzero(sel)[ok]
                elem[pending[idx]] = ids[ok]
                lam[pending[idx]] = b[ok]
                found[idx] = True
            pending = pending[~found]
            if pending.size == 0:
                break
            if k >= self.n_elements:
                raise GeometryError(f"{pending.size} point(s) outside the domain, e.g. {x[pending[0]]}")
            k = min(4 * k, self.n_elements)
        lam = np.clip(lam, 0.0, 1.0)
        lam /= lam.sum(axis=1, keepdims=True)
        return elem, lam


def locate_point(bulk: BulkMesh, x):
    """Containing element and barycentric coordinates of a single point."""
    e, lam = bulk.locate(np.asarray(x, dtype=float)[None])
    return int(e[0]), lam[0]


# ---------------------------------------------------------------- refinement
class _MidpointTable:
    def __init__(self, n_vertices):
        self.keys = np.zeros(0, dtype=np.int64)
        self.ids = np.zeros(0, dtype=np.int64)
        self.base = np.int64(1 << 31)

    def key(self, a, b):
        return np.minimum(a, b) * self.base + np.maximum(a, b)

    def lookup(self, keys):
        pos = np.searchsorted(self.keys, keys)
        pos = np.minimum(pos, max(len(self.keys) - 1, 0))
        hit = (self.keys[pos] == keys) if len(self.keys) else np.zeros(len(keys), bool)
        return hit, (self.ids[pos] if len(self.keys) else np.zeros(len(keys), np.int64))

    def insert(self, keys, ids):
        k = np.concatenate([self.keys, keys])
        i = np.concatenate([self.ids, ids])
        order = np.argsort(k, kind="stable")
        self.keys, self.ids = k[order], i[order]


class _Refiner:
    """Mutable bisection state; produces conforming meshes."""

    def __init__(self, vertices, simplices, level):
        self.vertices = [np.asarray(vertices, float)]
        self.nv = len(vertices)
        self.simplices = np.asarray(simplices, np.int64)
        self.level = np.asarray(level, np.int64)
        self.d = self.simplices.shape[1] - 1
        self.table = _MidpointTable(self.nv)
        self.parent_flag = None

    def _coords(self):
        if len(self.vertices) > 1:
            self.vertices = [np.concatenate(self.vertices)]
        return self.vertices[0]

    def bisect(self, marked: np.ndarray, carry=None):
        """Bisect elements flagged in ``marked``; ``carry`` (per element) is copied to children."""
        d = self.d
        idx = np.flatnonzero(marked)
        if idx.size == 0:
            return carry
        S = self.simplices[idx]
        lev = self.level[idx]
        tag = d - (lev % d)
        a = S[:, 0]
        b = S[np.arange(len(idx)), tag]
        keys = self.table.key(a, b)
        hit, ids = self.table.lookup(keys)
        new_keys, first = np.unique(keys[~hit], return_index=True)
        if new_keys.size:
            X = self._coords()
            miss = np.flatnonzero(~hit)[first]
            mids = 0.5 * (X[a[miss]] + X[b[miss]])
            new_ids = self.nv + np.arange(new_keys.size)
            self.nv += new_keys.size
            self.vertices.append(mids)
            self.table.insert(new_keys, new_ids)
            hit2, ids = self.table.lookup(keys)
        z = ids
        c1 = np.empty_like(S)
        c2 = np.empty_like(S)
        for t in range(1, d + 1):
            sel = tag == t
            if not sel.any():
                continue
            s = S[sel]
            zz = z[sel][:, None]
            c1[sel] = np.concatenate([s[:, :t], zz, s[:, t + 1:]], axis=1)
            c2[sel] = np.concatenate([s[:, 1:t + 1], zz, s[:, t + 1:]], axis=1)
        keep = np.ones(len(self.simplices), bool)
        keep[idx] = False
        self.simplices = np.concatenate([self.simplices[keep], c1, c2])
        self.level = np.concatenate([self.level[keep], lev + 1, lev + 1])
        if carry is not None:
            carry = np.concatenate([carry[keep], carry[idx], carry[idx]])
        return carry

    def hanging(self) -> np.ndarray:
        """Elements having an edge that was bisected elsewhere."""
        if len(self.table.keys) == 0:
            return np.zeros(len(self.simplices), bool)
        S = self.simplices
        flag = np.zeros(len(S), bool)
        for a, b in itertools.combinations(range(self.d + 1), 2):
            hit, _ = self.table.lookup(self.table.key(S[:, a], S[:, b]))
            flag |= hit
        return flag

    def refine(self, marked, carry=None, max_rounds=200):
        carry = self.bisect(marked, carry)
        for _ in range(max_rounds):
            h = self.hanging()
            if not h.any():
                return carry
            carry = self.bisect(h, carry)
        raise RefinementError("closure did not terminate")

    def mesh(self, domain=None) -> BulkMesh:
        return BulkMesh(self._coords(), self.simplices, self.level, domain)


def refine(bulk: BulkMesh, marked) -> BulkMesh:
    """Bisect marked elements once, then restore conformity by closure."""
    r = _Refiner(bulk.vertices, bulk.simplices, bulk.level)
    r.refine(np.asarray(marked, bool))
    return r.mesh(bulk.domain)


def uniform_refine(bulk: BulkMesh, times: int) -> BulkMesh:
    r = _Refiner(bulk.vertices, bulk.simplices, bulk.level)
    for _ in range(times):
        r.refine(np.ones(len(r.simplices), bool))
    return r.mesh(bulk.domain)


# ---------------------------------------------------------------- intersection
def _simplex_axes(P, Q):
    """Candidate separating axes for batches of simplices P (n, p, d) and Q (n, q, d)."""
    d = P.shape[2]
    axes = []
    if d == 2:
        for S in (P, Q):
            m = S.shape[1]
            for a, b in itertools.combinations(range(m), 2):
                e = S[:, b] - S[:, a]
                axes.append(np.stack([-e[:, 1], e[:, 0]], 1))
                axes.append(e)
    else:
        def edges(S):
            return [S[:, b] - S[:, a] for a, b in itertools.combinations(range(S.shape[1]), 2)]
        ep, eq = edges(P), edges(Q)
        for S in (P, Q):
            for a, b, c in itertools.combinations(range(S.shape[1]), 3):
                axes.append(np.cross(S[:, b] - S[:, a], S[:, c] - S[:, a]))
        for u in ep:
            for v in eq:
                axes.append(np.cross(u, v))
    return axes


def simplices_intersect(P, Q, tol=1e-12) -> np.ndarray:
    """Closed-set intersection test for batches of convex simplices (separating axes)."""
    P = np.asarray(P, float)
    Q = np.asarray(Q, float)
    scale = np.maximum(np.abs(P).max(axis=(1, 2)), np.abs(Q).max(axis=(1, 2))) + 1.0
    sep = np.zeros(len(P), bool)
    for ax in _simplex_axes(P, Q):
        nrm = np.linalg.norm(ax, axis=1)
        ok = nrm > 1e-14 * scale
        ax = np.where(ok[:, None], ax / np.where(ok, nrm, 1.0)[:, None], 0.0)
        pp = np.einsum("npd,nd->np", P, ax)
        qq = np.einsum("nqd,nd->nq", Q, ax)
        gap = np.maximum(qq.min(1) - pp.max(1), pp.min(1) - qq.max(1))
        sep |= ok & (gap > tol * scale)
    return ~sep


def interfacial_elements(bulk: BulkMesh, surf: SurfaceMesh, candidates=None) -> np.ndarray:
    """Boolean mask of elements whose closure meets the polyhedral interface."""
    T = bulk.n_elements
    mask = np.zeros(T, bool)
    elems = np.arange(T) if candidates is None else np.flatnonzero(candidates)
    if elems.size == 0:
        return mask
    sx = surf.vertices[surf.simplices]
    scen = sx.mean(axis=1)
    srad = np.linalg.norm(sx - scen[:, None], axis=2).max(axis=1)
    tree = cKDTree(scen)
    bx = bulk.vertices[bulk.simplices[elems]]
    bcen = bx.mean(axis=1)
    brad = np.linalg.norm(bx - bcen[:, None], axis=2).max(axis=1)
    lists = tree.query_ball_point(bcen, brad + srad.max() + 1e-12)
    counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=len(lists))
    if counts.sum() == 0:
        return mask
    ei = np.repeat(np.arange(len(elems)), counts)
    sj = np.fromiter(itertools.chain.from_iterable(lists), dtype=np.int64, count=counts.sum())
    near = np.linalg.norm(bcen[ei] - scen[sj], axis=1) <= brad[ei] + srad[sj] + 1e-12
    ei, sj = ei[near], sj[near]
    hit = np.zeros(len(ei), bool)
    chunk = 200000
    for s in range(0, len(ei), chunk):
        sl = slice(s, s + chunk)
        hit[sl] = simplices_intersect(bx[ei[sl]], sx[sj[sl]])
    mask[elems[np.unique(ei[hit])]] = True
    return mask


def winding_number(surf: SurfaceMesh, x) -> np.ndarray:
    """Generalized winding number of points w.r.t. the closed interface (1 inside, 0 outside)."""
    x = np.atleast_2d(x)
    q = surf.vertices[surf.simplices]  # (J, d, d)
    if surf.dim == 2:
        a = q[None, :, 0] - x[:, None]
        b = q[None, :, 1] - x[:, None]
        cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
        dot = np.einsum("pjd,pjd->pj", a, b)
        # clockwise orientation around the interior gives negative angles
        return -np.arctan2(cross, dot).sum(axis=1) / (2 * np.pi)
    a = q[None, :, 0] - x[:, None]
    b = q[None, :, 1] - x[:, None]
    c = q[None, :, 2] - x[:, None]
    la, lb, lc = (np.linalg.norm(v, axis=2) for v in (a, b, c))
    num = np.einsum("pjd,pjd->pj", a, np.cross(b, c))
    den = la * lb * lc + np.einsum("pjd,pjd->pj", a, b) * lc + np.einsum("pjd,pjd->pj", b, c) * la \
        + np.einsum("pjd,pjd->pj", c, a) * lb
    return 2 * np.arctan2(num, den).sum(axis=1) / (4 * np.pi)


def classify_elements(bulk: BulkMesh, surf: SurfaceMesh, interfacial=None) -> np.ndarray:
    """Label elements INTERIOR (-1), EXTERIOR (+1) or INTERFACIAL (0).

    Connected groups of non-interfacial elements share a label; each group is
    labelled by the winding number of one barycenter.
    """
    dom = bulk.domain
    if dom is not None and not np.all(dom.contains(surf.vertices, tol=0.0)):
        raise GeometryError("interface left the domain")
    inter = interfacial_elements(bulk, surf) if interfacial is None else interfacial
    labels = np.zeros(bulk.n_elements, dtype=np.int64)
    free = np.flatnonzero(~inter)
    if free.size:
        _, f2e, _ = bulk.facets
        T = bulk.n_elements
        rows = np.repeat(np.arange(T), bulk.dim + 1)
        inc = sparse.csr_matrix((np.ones(rows.size), (rows, f2e.ravel())))
        adj = (inc @ inc.T).tocsr()
        sub = adj[free][:, free]
        ncomp, comp = connected_components(sub, directed=False)
        first = np.full(ncomp, -1)
        first[comp[::-1]] = np.arange(len(comp))[::-1]
        w = winding_number(surf, bulk.barycenters[free[first]])
        lab = np.where(w > 0.5, INTERIOR, EXTERIOR)
        labels[free] = lab[comp]
    bulk.classification = labels
    bulk.classified_for = id(surf)
    return labels


def phase_coefficients(classification, minus, plus) -> np.ndarray:
    """Piecewise-constant coefficient: interior→minus, exterior→plus, interfacial→mean."""
    c = np.asarray(classification)
    return np.where(c == INTERIOR, minus, np.where(c == EXTERIOR, plus, 0.5 * (minus + plus)))


# ---------------------------------------------------------------- adaptivity
@dataclass
class AdaptParams:
    coarse_level: int
    fine_level: int
    ring: int = 1


class Adapter:
    """Rebuilds the bulk mesh around the current interface from a cached coarse mesh.

    Coarsening is implicit: each call refines the coarse uniform mesh afresh, so
    regions the interface has left return to the coarse level.
    """

    def __init__(self, domain: BoxDomain, params: AdaptParams):
        if params.fine_level < params.coarse_level or params.coarse_level < 0:
            raise RefinementError("need 0 <= coarse_level <= fine_level")
        if params.fine_level > 60:
            raise RefinementError("refinement level overflow")
        self.domain = domain
        self.params = params
        self.coarse = uniform_refine(BulkMesh.from_domain(domain), params.coarse_level)

    def __call__(self, surf: SurfaceMesh) -> BulkMesh:
        p = self.params
        r = _Refiner(self.coarse.vertices, self.coarse.simplices, self.coarse.level)
        cur = r.mesh(self.domain)
        inter = interfacial_elements(cur, surf)
        while True:
            band = _grow(cur, inter, p.ring)
            marked = band & (cur.level < p.fine_level)
            if not marked.any():
                break
            inter = r.refine(marked, carry=inter)
            cur = r.mesh(self.domain)
            inter = interfacial_elements(cur, surf, candidates=inter)
        classify_elements(cur, surf, interfacial=inter)
        return cur


def _grow(bulk: BulkMesh, mask, rings):
    if rings <= 0 or not mask.any():
        return mask.copy()
    T = bulk.n_elements
    rows = np.repeat(np.arange(T), bulk.dim + 1)
    inc = sparse.csr_matrix((np.ones(rows.size), (rows, bulk.simplices.ravel())),
                            shape=(T, bulk.n_vertices))
    out = mask.copy()
    for _ in range(rings):
        touched = inc.T @ out.astype(float) > 0
        out = (inc @ touched.astype(float)) > 0
    return out


def adapt(bulk: BulkMesh, surf: SurfaceMesh, params: AdaptParams) -> BulkMesh:
    """One adaptation pass relative to ``bulk.domain`` (see :class:`Adapter`)."""
    if bulk.domain is None:
        raise RefinementError("bulk mesh has no domain")
    return Adapter(bulk.domain, params)(surf)
