"""Sparse assembly of the coupled flow/geometry system and the Cahn–Hilliard step.

Interface integrals against bulk functions that carry the vertex-quadrature
("lumped") inner product reduce to point evaluations of the bulk P2 basis at
interface vertices. This evaluation is the trace matrix ``E`` (``K×N``
scalar, ``Kd×Nd`` for vectors); every bulk↔surface block is a surface matrix
composed with ``E``.

Which interface terms are lumped and which are exact:

=========================================  ==========
term                                       quadrature
=========================================  ==========
momentum surface mass ρ_Γ/τ                 lumped
surface viscosity 2μ_Γ D_s : D_s            exact (P1)
surface divergence constraint               exact (P1)
P_sing column ⟨φ, ω⟩                        lumped
forcing ⟨F_Γ, ξ⟩                            lumped
position update ⟨(X - id)/τ, χ⟩             lumped
curvature ⟨κ, η⟩, ⟨Y, ξ⟩, c                  lumped
stiffness ⟨∇_s ·, ∇_s ·⟩ and 𝓩_Γ            exact
d_κ, d_α, d_G, b_CH part of d_β            lumped
|∇_s C|² tensor part of d_β, last d_Z term  exact
=========================================  ==========
"""

from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .bulk_mesh import STRESS_FREE, BulkMesh
from .coefficients import MaterialLaw
from .spaces import (DofMap, evaluation_matrix, p2_dlambda, p2_values, simplex_quadrature,
                     vectorize)
from .surface_mesh import SurfaceMesh, surface_gradient_p1, tensor_divergence_p1

logger = logging.getLogger(__name__)


class AssemblyError(RuntimeError):
    pass


# ---------------------------------------------------------------- bulk
# per-mesh caches: physical P2 gradients at quadrature points and the CSR
# pattern of the velocity space, both reused by every assembly on that mesh
_GRADIENTS: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()
_PATTERNS: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def _p2_tables(bulk: BulkMesh, degree: int, gradients: bool = True):
    lam, w = simplex_quadrature(bulk.dim, degree)
    phi = p2_values(lam)  # (nq, nloc)
    if not gradients:
        return lam, w, phi, None
    per_mesh = _GRADIENTS.setdefault(bulk, {})
    if degree not in per_mesh:
        per_mesh[degree] = np.einsum("qna,tad->tqnd", p2_dlambda(lam), bulk.barycentric_gradients)
    return lam, w, phi, per_mesh[degree]


def _vector_pattern(dofs: DofMap):
    """CSR structure of the P2 vector space and the slot of every local entry in its data array."""
    if dofs.bulk in _PATTERNS:
        return _PATTERNS[dofs.bulk]
    d = dofs.dim
    nodes = dofs.element_nodes
    T, nloc = nodes.shape
    gdof = (nodes[:, :, None] * d + np.arange(d)).reshape(T, nloc * d)
    rows = np.repeat(gdof, nloc * d, axis=1).ravel()
    cols = np.tile(gdof, (1, nloc * d)).ravel()
    n = dofs.n_velocity
    key = rows.astype(np.int64) * n + cols
    unique, slot = np.unique(key, return_inverse=True)
    indices = (unique % n).astype(np.int32)
    indptr = np.searchsorted(unique // n, np.arange(n + 1)).astype(np.int32)
    _PATTERNS[dofs.bulk] = (slot, indices, indptr, n)
    return _PATTERNS[dofs.bulk]


def _scatter_vector_blocks(dofs: DofMap, local: np.ndarray) -> sparse.csr_matrix:
    """Global matrix from local ``(T, nloc, d, nloc, d)`` blocks (row node, row comp, col node, col comp)."""
    slot, indices, indptr, n = _vector_pattern(dofs)
    data = np.bincount(slot, weights=local.ravel(), minlength=len(indices))
    return sparse.csr_matrix((data, indices.copy(), indptr.copy()), shape=(n, n))


def _scalar_to_vector_local(loc: np.ndarray, d: int) -> np.ndarray:
    """``(T, nloc, nloc)`` → ``(T, nloc, d, nloc, d)`` with identity in the components."""
    return loc[:, :, None, :, None] * np.eye(d)[None, None, :, None, :]


def viscous_matrix(dofs: DofMap, mu: np.ndarray) -> sparse.csr_matrix:
    """2(μ D(u), D(v)) on the P2 vector space."""
    bulk = dofs.bulk
    _, w, _, dphi = _p2_tables(bulk, 2)
    H = np.einsum("q,tqai,tqbj->tabij", w, dphi, dphi) * (bulk.volumes * mu)[:, None, None, None, None]
    d = bulk.dim
    lap = np.einsum("tabii->tab", H)
    local = _scalar_to_vector_local(lap, d) + np.transpose(H, (0, 1, 4, 2, 3))
    return _scatter_vector_blocks(dofs, local)


def mass_matrix(dofs: DofMap, coeff: np.ndarray) -> sparse.csr_matrix:
    """(c u, v) for a piecewise-constant coefficient."""
    bulk = dofs.bulk
    _, w, phi, _ = _p2_tables(bulk, 4, gradients=False)
    M = np.einsum("q,qa,qb->ab", w, phi, phi)[None] * (bulk.volumes * coeff)[:, None, None]
    return _scatter_vector_blocks(dofs, _scalar_to_vector_local(M, bulk.dim))


def advection_matrix(dofs: DofMap, rho: np.ndarray, wind: np.ndarray) -> sparse.csr_matrix:
    """½(ρ, [(w·∇)u]·v - [(w·∇)v]·u) for a nodal P2 wind field ``(N, d)``."""
    bulk = dofs.bulk
    _, wq, phi, dphi = _p2_tables(bulk, 5)
    wnod = wind[dofs.element_nodes]  # (T, nloc, d)
    wv = np.einsum("qn,tnd->tqd", phi, wnod)
    conv = np.einsum("tqd,tqbd->tqb", wv, dphi)  # (w·∇)φ_b
    N = np.einsum("q,qa,tqb->tab", wq, phi, conv)
    loc = 0.5 * (N - np.transpose(N, (0, 2, 1))) * (bulk.volumes * rho)[:, None, None]
    return _scatter_vector_blocks(dofs, _scalar_to_vector_local(loc, bulk.dim))


def divergence_matrix(dofs: DofMap) -> sparse.csr_matrix:
    """C_Ω with entries -(ψ_q, ∇·(φ_i e_r)), velocity rows × pressure columns."""
    bulk = dofs.bulk
    lam, w, _, dphi = _p2_tables(bulk, 2)
    d = bulk.dim
    loc = -np.einsum("q,tqad,qp->tadp", w, dphi, lam) * bulk.volumes[:, None, None, None]
    nodes = dofs.element_nodes
    T, nloc = nodes.shape
    rows = np.broadcast_to((nodes[:, :, None] * d + np.arange(d))[..., None], loc.shape).ravel()
    cols = np.broadcast_to(bulk.simplices[:, None, None, :], loc.shape).ravel()
    return sparse.csr_matrix((loc.ravel(), (rows, cols)), shape=(dofs.n_velocity, dofs.n_pressure))


def pressure_mass_vector(dofs: DofMap) -> np.ndarray:
    """(ψ_q, 1) used by the zero-mean pressure constraint."""
    bulk = dofs.bulk
    w = np.repeat(bulk.volumes / (bulk.dim + 1), bulk.dim + 1)
    return np.bincount(bulk.simplices.ravel(), weights=w, minlength=bulk.n_vertices)


def pressure_mass_diagonal(dofs: DofMap, mu: np.ndarray) -> np.ndarray:
    """Lumped P1 mass weighted by 1/μ, for preconditioning."""
    bulk = dofs.bulk
    w = np.repeat(bulk.volumes / (bulk.dim + 1) / mu, bulk.dim + 1)
    return np.bincount(bulk.simplices.ravel(), weights=w, minlength=bulk.n_vertices)


def load_vector(dofs: DofMap, coeff: np.ndarray, field_nodes=None, func=None, degree=4) -> np.ndarray:
    """(c f, φ_i e_r) for a nodal P2 field or a callable ``func(x) -> (n, d)``."""
    bulk = dofs.bulk
    lam, w, phi, _ = _p2_tables(bulk, degree, gradients=False)
    d = bulk.dim
    if field_nodes is not None:
        fq = np.einsum("qn,tnd->tqd", phi, field_nodes[dofs.element_nodes])
    else:
        x = np.einsum("qa,tad->tqd", lam, bulk.vertices[bulk.simplices])
        fq = np.asarray(func(x.reshape(-1, d))).reshape(x.shape)
    loc = np.einsum("q,qa,tqd->tad", w, phi, fq) * (bulk.volumes * coeff)[:, None, None]
    out = np.zeros((dofs.n_nodes, d))
    np.add.at(out, dofs.element_nodes, loc)
    return out.ravel()


def outflow_vector(dofs: DofMap, u_nodes: np.ndarray, rho_plus: float) -> np.ndarray:
    """-(ρ₊/2)⟨(u·n) u, φ_i e_r⟩ over the stress-free boundary."""
    bulk = dofs.bulk
    d = bulk.dim
    out = np.zeros((dofs.n_nodes, d))
    bf = bulk.boundary_facets
    sel = np.flatnonzero(bf["tag"] == STRESS_FREE)
    if sel.size == 0 or rho_plus == 0.0:
        return out.ravel()
    flam, fw = simplex_quadrature(d - 1, 6)
    el, loc = bf["element"][sel], bf["local"][sel]
    F, nq = len(sel), len(fw)
    lam = np.zeros((F, nq, d + 1))
    # facet corner c sits at the c-th local vertex other than `loc`
    idx = np.array([[a for a in range(d + 1) if a != l] for l in loc]).reshape(F, d)
    for c in range(d):
        lam[np.arange(F)[:, None], np.arange(nq)[None, :], idx[:, c][:, None]] = flam[None, :, c]
    phi = p2_values(lam)  # (F, q, nloc)
    u = np.einsum("fqn,fnd->fqd", phi, u_nodes[dofs.element_nodes[el]])
    un = np.einsum("fqd,fd->fq", u, bf["normal"][sel])
    vals = -0.5 * rho_plus * np.einsum("q,fq,fqd,fqn->fnd", fw, un, u, phi) * bf["measure"][sel][:, None, None]
    np.add.at(out, dofs.element_nodes[el], vals)
    return out.ravel()


# ---------------------------------------------------------------- surface
@dataclass
class SurfaceBundle:
    """Interface operators on one interface mesh (vector ordering ``k*d + r``)."""

    mesh: SurfaceMesh
    mass: np.ndarray  # (K,) lumped masses
    mass_alpha: np.ndarray  # (K,) lumped masses weighted by α^m
    alpha: np.ndarray  # (K,)
    stiffness: sparse.csr_matrix  # scalar A_Γ (K×K)
    gaussian_stiffness: sparse.csr_matrix  # 𝓩_Γ (Kd×Kd)
    divergence: sparse.csr_matrix  # ⟨χ_l, ∇_s·(χ_v e_r)⟩ (K×Kd)
    viscous: sparse.csr_matrix  # 2μ_Γ⟨D_s, D_s⟩ (Kd×Kd)

    @property
    def vector_stiffness(self) -> sparse.csr_matrix:
        return vectorize(self.stiffness, self.mesh.dim)


def _assemble_surface_blocks(surf: SurfaceMesh, loc: np.ndarray) -> sparse.csr_matrix:
    """Global Kd×Kd matrix from ``(J, a, i, b, j)`` local blocks."""
    d = surf.dim
    s = surf.simplices
    J = len(s)
    g = (s[:, :, None] * d + np.arange(d)).reshape(J, d * d)
    rows = np.repeat(g, d * d, axis=1).ravel()
    cols = np.tile(g, (1, d * d)).ravel()
    n = surf.n_vertices * d
    return sparse.csr_matrix((loc.reshape(J, -1).ravel(), (rows, cols)), shape=(n, n))


def gaussian_stiffness_matrix(surf: SurfaceMesh) -> sparse.csr_matrix:
    """𝓩_Γ = 𝓑_Γ - 𝓑_Γ* - 𝓡_Γ."""
    g = surf.hat_gradients
    meas = surf.measures[:, None, None, None, None]
    B = np.einsum("jai,jbk->jaibk", g, g)  # rows (a,i), cols (b,k): (g_a)_i (g_b)_k
    Bstar = np.einsum("jbi,jak->jaibk", g, g)
    R = np.einsum("jac,jbc,jik->jaibk", g, g, surf.tangential_projections)
    return _assemble_surface_blocks(surf, meas * (B - Bstar - R))


def surface_viscous_matrix(surf: SurfaceMesh, mu_gamma: float) -> sparse.csr_matrix:
    g = surf.hat_gradients
    meas = surf.measures[:, None, None, None, None]
    gg = np.einsum("jac,jbc->jab", g, g)
    term1 = np.einsum("jab,jik->jaibk", gg, surf.tangential_projections)
    term2 = np.einsum("jak,jbi->jaibk", g, g)
    return _assemble_surface_blocks(surf, mu_gamma * meas * (term1 + term2))


def surface_divergence_matrix(surf: SurfaceMesh) -> sparse.csr_matrix:
    d = surf.dim
    s = surf.simplices
    loc = (surf.measures / d)[:, None, None, None] * np.broadcast_to(
        surf.hat_gradients[:, None, :, :], (len(s), d, d, d))  # (j, l, v, r)
    rows = np.broadcast_to(s[:, :, None, None], loc.shape).ravel()
    cols = np.broadcast_to((s[:, None, :, None] * d + np.arange(d)), loc.shape).ravel()
    return sparse.csr_matrix((loc.ravel(), (rows, cols)), shape=(surf.n_vertices, surf.n_vertices * d))


def assemble_surface(surf: SurfaceMesh, C: np.ndarray, law: MaterialLaw, mu_gamma: float = 0.0) -> SurfaceBundle:
    alpha = law.alpha(C)
    if np.any(alpha <= 0):
        raise AssemblyError("bending rigidity must be positive at every vertex")
    m = surf.lumped_mass
    return SurfaceBundle(surf, m, m * alpha, alpha, surf.stiffness, gaussian_stiffness_matrix(surf),
                         surface_divergence_matrix(surf), surface_viscous_matrix(surf, mu_gamma))


# ---------------------------------------------------------------- coupling
@dataclass
class CouplingBlocks:
    trace: sparse.csr_matrix  # scalar E: (K, N_nodes)
    trace_vector: sparse.csr_matrix  # E ⊗ Id
    D: np.ndarray  # P_sing column, length N d
    S: sparse.csr_matrix  # surface-pressure block (N d × K)
    M: sparse.csr_matrix  # transfer block M_{Γ,Ω} (N d × K d)


def assemble_coupling(dofs: DofMap, surf: SurfaceMesh, bundle: SurfaceBundle | None = None,
                      located=None) -> CouplingBlocks:
    """D_Ω = -⟨φ_i, ω⟩^h, S_{Γ,Ω} = -⟨χ_l, ∇_s·(π φ_i e_r)⟩, M_{Γ,Ω} = ⟨χ_l, φ_q⟩^h Id."""
    d = surf.dim
    E = evaluation_matrix(dofs, surf.vertices, located)
    Ev = vectorize(E, d)
    m = surf.lumped_mass
    D = -(Ev.T @ (m[:, None] * surf.vertex_normals).ravel())
    Sdiv = bundle.divergence if bundle is not None else surface_divergence_matrix(surf)
    S = -(Sdiv @ Ev).T.tocsr()
    M = (Ev.T @ sparse.diags(np.repeat(m, d))).tocsr()
    return CouplingBlocks(E, Ev, D, S, M)


def schur_coupling_matrix(bundle: SurfaceBundle, coupling: CouplingBlocks, tau: float) -> sparse.csr_matrix:
    """T_Ω = τ M_{Γ,Ω} M⁻¹ A M⁻¹ M_α M⁻¹ A M⁻¹ M_{Γ,Ω}ᵀ = τ Eᵀ A diag(α/m) A E."""
    d = bundle.mesh.dim
    AE = bundle.vector_stiffness @ coupling.trace_vector
    W = sparse.diags(np.repeat(bundle.alpha / bundle.mass, d))
    return (tau * (AE.T @ W @ AE)).tocsr()


# ---------------------------------------------------------------- curvature rhs
@dataclass
class CurvatureRHS:
    c: np.ndarray
    d_kappa: np.ndarray
    d_alpha: np.ndarray
    d_beta: np.ndarray
    d_gauss: np.ndarray
    d_Z: np.ndarray

    @property
    def d(self) -> np.ndarray:
        """d_κ + d_α + d_β + d_G + d_Z."""
        return self.d_kappa + self.d_alpha + self.d_beta + self.d_gauss + self.d_Z


def assemble_curvature_rhs(surf: SurfaceMesh, kappa, Y, W, C, law: MaterialLaw,
                           beta: float, gamma: float) -> CurvatureRHS:
    """Vectors c and d_κ, d_α, d_β, d_G, d_Z from (transported) vertex fields.

    ``kappa``, ``Y``: ``(K, d)``; ``W``: ``(K, d, d)``; ``C``: ``(K,)``.
    """
    d = surf.dim
    s = surf.simplices
    nu = surf.normals
    g = surf.hat_gradients  # (J, a, i)
    wl = surf.measures / d  # lumped corner weight
    m = surf.lumped_mass
    omega = surf.vertex_normals
    alpha, kbar, gauss = law.alpha(C), law.kbar(C), law.gauss(C)
    kap_c, Y_c = kappa[s], Y[s]  # (J, corner, d)
    al_c, kb_c, ga_c = alpha[s], kbar[s], gauss[s]

    c = (-(alpha * kbar)[:, None] * m[:, None] * omega
         + gauss[:, None] * (m[:, None] * kappa + m[:, None] * np.einsum("kab,kb->ka", W, omega)))

    def scatter(per_elem_vec):
        return surf.scatter_corners(per_elem_vec)

    # d_κ: ½⟨α|κ - κ̄ν|² - 2Y·κ, ∇_s χ_k⟩^h
    diff = kap_c - kb_c[:, :, None] * nu[:, None, :]
    f = 0.5 * al_c * np.einsum("jci,jci->jc", diff, diff) - np.einsum("jci,jci->jc", Y_c, kap_c)
    d_kappa = scatter((wl * f.sum(axis=1))[:, None, None] * g)

    # d_α: ⟨ακ̄, (κ·∇_s χ_k) ν⟩^h
    v = np.einsum("jc,jci->ji", al_c * kb_c, kap_c)
    d_alpha = scatter((wl[:, None] * np.einsum("ji,jai->ja", v, g))[:, :, None] * nu[:, None, :])

    # d_β: β⟨b_CH, ∇_s χ_k⟩^h - βγ⟨∇_s C·∇_s χ_k, ∇_s C⟩
    gC = surface_gradient_p1(surf, C)
    bch = 0.5 * gamma * np.einsum("ji,ji->j", gC, gC)[:, None] + law.psi(C)[s] / gamma
    part1 = beta * (wl * bch.sum(axis=1))[:, None, None] * g
    part2 = beta * gamma * (surf.measures[:, None] * np.einsum("ji,jai->ja", gC, g))[:, :, None] * gC[:, None, :]
    d_beta = scatter(part1 - part2)

    # d_G: ½⟨α^G(|κ|² + |W|²), ∇_s χ_k⟩^h
    W_c = W[s]
    fg = ga_c * (np.einsum("jci,jci->jc", kap_c, kap_c) + np.einsum("jcab,jcab->jc", W_c, W_c))
    d_gauss = scatter((0.5 * wl * fg.sum(axis=1))[:, None, None] * g)

    # d_Z with Z = π[-α^G W]
    if law.has_gauss:
        Z = -gauss[:, None, None] * W
        divZ = tensor_divergence_p1(surf, Z)  # (J, d)
        sj = np.einsum("jcab,jcb->ja", Z[s], kap_c) + d * divZ
        t1 = (wl[:, None] * np.einsum("ji,jai->ja", sj, g))[:, :, None] * nu[:, None, :]
        t2 = -(wl * np.einsum("ji,ji->j", sj, nu))[:, None, None] * g
        Znu = np.einsum("jcab,jb->jca", Z[s], nu)  # corner values of Zν (ν frozen per element)
        H = np.einsum("jca,jcb->jab", Znu, g)  # ∇_s(Zν)
        Hg = np.einsum("jab,jkb->jka", H, g)
        t3 = -surf.measures[:, None, None] * (np.einsum("ja,jka->jk", nu, Hg)[:, :, None] * nu[:, None, :]
                                              - np.einsum("jba,jkb->jka", H, g))
        d_Z = scatter(t1 + t2 + t3)
    else:
        d_Z = np.zeros_like(kappa)
    return CurvatureRHS(c, d_kappa, d_alpha, d_beta, d_gauss, d_Z)


def weingarten_field(surf: SurfaceMesh, kappa: np.ndarray) -> np.ndarray:
    """Symmetric W solving ⟨W, ζ⟩^h + ½⟨ν, [ζ+ζᵀ]κ + ∇_s·[ζ+ζᵀ]⟩^h = 0 for all P1 tensors ζ."""
    d = surf.dim
    nu = surf.normals
    wl = surf.measures / d
    g = surf.hat_gradients
    # corner terms: (1/d)|σ| (ν⊗κ_k + κ_k⊗ν) and |σ| (ν⊗∇χ_k + ∇χ_k⊗ν)
    kap_c = kappa[surf.simplices]
    a = wl[:, None, None, None] * (nu[:, None, :, None] * kap_c[:, :, None, :])
    b = surf.measures[:, None, None, None] * (nu[:, None, :, None] * g[:, :, None, :])
    acc = surf.scatter_corners(a + b)
    acc = acc + np.swapaxes(acc, 1, 2)
    return -0.5 * acc / surf.lumped_mass[:, None, None]


def curvature_from_geometry(surf: SurfaceMesh) -> np.ndarray:
    """κ with M_Γ κ = -A_Γ X (lumped mean curvature vector)."""
    return -(surf.stiffness @ surf.vertices) / surf.lumped_mass[:, None]


def forcing_field(bundle: SurfaceBundle, Y_new, Y_old, rhs: CurvatureRHS) -> np.ndarray:
    """F_Γ from M_Γ F = A_Γ Y + 𝓩_Γ Y_old - d."""
    d = bundle.mesh.dim
    zy = (bundle.gaussian_stiffness @ Y_old.ravel()).reshape(-1, d)
    return (bundle.stiffness @ Y_new + zy - rhs.d) / bundle.mass[:, None]


# ---------------------------------------------------------------- Cahn–Hilliard
@dataclass
class CHSystem:
    """Discrete Cahn–Hilliard step on Γ^{m+1}.

    Unknowns C, M satisfy ``a·m∘C + A M = r`` and the obstacle inequality for
    ``b·A C - m∘M - g``; with the quartic potential the inequality is an
    equation.
    """

    mass: np.ndarray
    stiffness: sparse.csr_matrix
    g: np.ndarray
    r: np.ndarray
    a: float  # ϑ/τ
    b: float  # βγ
    obstacle: bool = True


def assemble_ch_system(surf_new: SurfaceMesh, surf_old: SurfaceMesh, C_old, kappa, W,
                       law: MaterialLaw, beta: float, gamma: float, theta: float, tau: float) -> CHSystem:
    d = surf_new.dim
    s = surf_new.simplices
    nu = surf_new.normals
    wl = surf_new.measures / d
    m = surf_new.lumped_mass
    C = np.asarray(C_old, float)
    alpha, dalpha = law.alpha(C), law.dalpha(C)
    kbar, dkbar = law.kbar(C), law.dkbar(C)
    diff = kappa[s] - kbar[s][:, :, None] * nu[:, None, :]
    sq = np.einsum("jci,jci->jc", diff, diff)
    dn = np.einsum("jci,ji->jc", diff, nu)
    corner = (-0.5 * dalpha[s] * sq + dkbar[s] * alpha[s] * dn) * wl[:, None]
    curv = np.zeros(surf_new.n_vertices)
    np.add.at(curv, s.ravel(), corner.ravel())
    gauss_term = 0.5 * m * law.dgauss(C) * (np.einsum("ki,ki->k", kappa, kappa) - np.einsum("kab,kab->k", W, W))
    g_vec = -beta / gamma * m * law.dpsi(C) + curv - gauss_term
    r = theta / tau * surf_old.lumped_mass * C
    return CHSystem(m, surf_new.stiffness, g_vec, r, theta / tau, beta * gamma,
                    obstacle=law.potential == "obstacle")
