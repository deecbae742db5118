"""Time stepping of the coupled membrane/flow/phase system and its diagnostics."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import shapes
from .assembly import (CurvatureRHS, SurfaceBundle, advection_matrix, assemble_ch_system, assemble_coupling,
                       assemble_curvature_rhs, assemble_surface, curvature_from_geometry,
                       divergence_matrix, load_vector, mass_matrix, outflow_vector,
                       pressure_mass_diagonal, pressure_mass_vector, schur_coupling_matrix,
                       viscous_matrix, weingarten_field)
from .bulk_mesh import (DIRICHLET, STRESS_FREE, AdaptParams, Adapter, BoxDomain, BulkMesh,
                        phase_coefficients)
from .coefficients import MaterialLaw
from .config import ScenarioConfig
from .solvers import SaddlePointSystem, solve_geometry_block, solve_ch_vi, solve_coupled
from .spaces import (DofMap, build_spaces, evaluation_matrix, interpolate_p0, interpolate_p2, p2_values,
                     simplex_quadrature)
from .surface_mesh import SurfaceMesh, enclosed_volume, surface_gradient_p1

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ("t", "E_total", "E_kin", "E_kappa", "E_CH", "area", "volume", "total_C", "min_C",
                      "max_C", "incl_angle", "flow_iters", "vi_sweeps")


class StepFailure(RuntimeError):
    """A time step could not be completed; ``state`` holds the last good state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


# ---------------------------------------------------------------- scenario pieces
_FACE_AXES = {"x": 0, "y": 1, "z": 2}


def boundary_tagger(cfg: ScenarioConfig):
    """Facet tag rule: faces listed in ``stress_free`` get STRESS_FREE, the rest DIRICHLET."""
    if not cfg.stress_free:
        return None
    lo, hi = np.asarray(cfg.domain_lo), np.asarray(cfg.domain_hi)
    faces = [(_FACE_AXES[f[0]], f[1]) for f in cfg.stress_free]

    def tag(centroid, normal):
        out = np.full(len(centroid), DIRICHLET)
        for axis, side in faces:
            wall = lo[axis] if side == "-" else hi[axis]
            on = np.abs(centroid[:, axis] - wall) < 1e-9 * (hi[axis] - lo[axis])
            out[on] = STRESS_FREE
        return out

    return tag


def boundary_velocity(cfg: ScenarioConfig):
    """Dirichlet velocity g as a callable on ``(n, d)`` points (None for g = 0)."""
    d = cfg.dim
    if cfg.boundary == "zero":
        return None
    if cfg.boundary == "shear":
        def g(x):
            out = np.zeros_like(x)
            out[:, 0] = x[:, d - 1]
            return out
        return g
    if cfg.boundary == "poiseuille":
        def g(x):
            out = np.zeros_like(x)
            out[:, 0] = np.maximum(1.0 - np.sum(x[:, 1:] ** 2, axis=1), 0.0)
            return out
        return g
    raise ValueError(f"unknown boundary data {cfg.boundary!r}")


def body_force(cfg: ScenarioConfig):
    if not cfg.body_force or not np.any(cfg.body_force):
        return None
    f = np.asarray(cfg.body_force, dtype=float)
    return lambda x: np.broadcast_to(f, x.shape)


def make_domain(cfg: ScenarioConfig) -> BoxDomain:
    return BoxDomain([(tuple(cfg.domain_lo), tuple(cfg.domain_hi))], tuple(cfg.cells), boundary_tagger(cfg))


def initial_surface(cfg: ScenarioConfig) -> SurfaceMesh:
    n = cfg.surface_elements
    if cfg.shape == "circle":
        return shapes.circle(n, cfg.radius)
    if cfg.shape == "ellipse":
        return shapes.ellipse(n, *cfg.semi_axes)
    if cfg.shape == "letter_c":
        return shapes.letter_c(n, cfg.shape_length, cfg.shape_thickness)
    if cfg.shape == "sphere":
        return shapes.icosphere(cfg.sphere_level, cfg.radius)
    if cfg.shape == "plate":
        return shapes.flat_plate(n, exponent=cfg.plate_exponent)
    if cfg.shape == "star":
        return shapes.armed_star(shapes.icosphere(cfg.sphere_level), cfg.arms, cfg.arm_amplitude)
    raise ValueError(f"unknown shape {cfg.shape!r}")


def rescale_to_mean(values, mass, target):
    """Affine map c ↦ target + s(c - mean) with the largest s ≤ 1 keeping values in [-1, 1]."""
    mean = np.dot(mass, values) / mass.sum()
    dev = values - mean
    s = 1.0
    if dev.max() > 0:
        s = min(s, (1.0 - target) / dev.max())
    if dev.min() < 0:
        s = min(s, (target + 1.0) / -dev.min())
    return target + s * dev


def initial_concentration(cfg: ScenarioConfig, surf: SurfaceMesh, rng: np.random.Generator) -> np.ndarray:
    m = surf.lumped_mass
    if cfg.initial_c == "constant":
        return np.full(surf.n_vertices, cfg.c_mean)
    if cfg.initial_c == "random":
        return rescale_to_mean(rng.uniform(-1.0, 1.0, surf.n_vertices), m, cfg.c_mean)
    if cfg.initial_c == "banded":
        # +1 on the vertices furthest along the band axis, -1 elsewhere, with
        # one transition vertex chosen so the lumped mean is hit exactly
        order = np.argsort(-surf.vertices[:, cfg.band_axis])
        need = 0.5 * (cfg.c_mean + 1.0) * m.sum()  # mass that must carry +1
        C = -np.ones(surf.n_vertices)
        acc = 0.0
        for k in order:
            if acc + m[k] <= need:
                C[k] = 1.0
                acc += m[k]
            else:
                C[k] = -1.0 + 2.0 * (need - acc) / m[k]
                break
        return C
    raise ValueError(f"unknown initial concentration {cfg.initial_c!r}")


# ---------------------------------------------------------------- geometry fields
def membrane_vector(surf: SurfaceMesh, kappa, W, C, law: MaterialLaw) -> np.ndarray:
    """Lumped α(κ - κ̄ν) + α^G(κ + Wν) divided by the vertex mass (the Y of a curvature pair)."""
    alpha, kbar, gauss = law.alpha(C), law.kbar(C), law.gauss(C)
    omega = surf.vertex_normals
    Y = alpha[:, None] * (kappa - kbar[:, None] * omega)
    if law.has_gauss:
        Y = Y + gauss[:, None] * (kappa + np.einsum("kab,kb->ka", W, omega))
    return Y


def init_geometry_fields(surf: SurfaceMesh, C, law: MaterialLaw):
    """κ⁰ from M κ = -A X, W⁰ from the lumped symmetric constraint, Y⁰ from the curvature pair."""
    kappa = curvature_from_geometry(surf)
    W = weingarten_field(surf, kappa)
    return kappa, W, membrane_vector(surf, kappa, W, C, law)


# ---------------------------------------------------------------- energies
def curvature_energy(surf: SurfaceMesh, kappa, W, C, law: MaterialLaw) -> float:
    s = surf.simplices
    alpha, kbar = law.alpha(C), law.kbar(C)
    diff = kappa[s] - kbar[s][:, :, None] * surf.normals[:, None, :]
    e = 0.5 * np.dot(surf.measures / surf.dim, (alpha[s] * np.einsum("jci,jci->jc", diff, diff)).sum(axis=1))
    if law.has_gauss:
        g2 = np.einsum("ki,ki->k", kappa, kappa) - np.einsum("kab,kab->k", W, W)
        e += 0.5 * np.dot(surf.lumped_mass, law.gauss(C) * g2)
    return float(e)


def phase_energy(surf: SurfaceMesh, C, law: MaterialLaw, beta: float, gamma: float) -> float:
    """β⟨b_CH(C), 1⟩^h; the element-constant gradient makes the lumped rule exact for that part."""
    gC = surface_gradient_p1(surf, C)
    grad = 0.5 * gamma * np.dot(surf.measures, np.einsum("ji,ji->j", gC, gC))
    pot = np.dot(surf.lumped_mass, law.psi(C)) / gamma
    return float(beta * (grad + pot))


def kinetic_energy(dofs: DofMap, U, rho, surf: SurfaceMesh, rho_gamma: float, trace=None) -> float:
    e = 0.0
    if np.any(rho):
        lam, w = simplex_quadrature(dofs.dim, 4)
        uq = np.einsum("qn,tnd->tqd", p2_values(lam), U[dofs.element_nodes])
        e += 0.5 * np.einsum("q,t,tqd,tqd->", w, dofs.bulk.volumes * rho, uq, uq)
    if rho_gamma:
        E = evaluation_matrix(dofs, surf.vertices) if trace is None else trace
        us = E @ U
        e += 0.5 * rho_gamma * np.dot(surf.lumped_mass, np.einsum("ki,ki->k", us, us))
    return float(e)


def membrane_energy(surf: SurfaceMesh, C, law: MaterialLaw, beta: float, gamma: float) -> float:
    """E^h with κ and W recomputed on ``surf`` (no lagged fields)."""
    kappa = curvature_from_geometry(surf)
    W = weingarten_field(surf, kappa) if law.has_gauss else np.zeros((surf.n_vertices, surf.dim, surf.dim))
    return curvature_energy(surf, kappa, W, C, law) + phase_energy(surf, C, law, beta, gamma)


def membrane_gradient(surf: SurfaceMesh, C, law: MaterialLaw, beta: float, gamma: float) -> np.ndarray:
    """Forcing F_Γ (per vertex) computed with fresh κ, W, Y on ``surf``."""
    kappa = curvature_from_geometry(surf)
    W = weingarten_field(surf, kappa)
    Y = membrane_vector(surf, kappa, W, C, law)
    bundle = assemble_surface(surf, C, law)
    rhs = assemble_curvature_rhs(surf, kappa, Y, W, C, law, beta, gamma)
    d = surf.dim
    zy = (bundle.gaussian_stiffness @ Y.ravel()).reshape(-1, d)
    return (bundle.stiffness @ Y + zy - rhs.d) / bundle.mass[:, None]


@dataclass
class GradientCheck:
    eps: np.ndarray
    fd: np.ndarray
    predicted: float
    errors: np.ndarray
    orders: np.ndarray

    @property
    def best_error(self) -> float:
        return float(self.errors.min())

    @property
    def observed_order(self) -> float:
        """Least-squares slope of log(error) against log(ε)."""
        return float(np.polyfit(np.log(self.eps), np.log(self.errors), 1)[0])


def gradient_check(surf: SurfaceMesh, C, law: MaterialLaw, beta: float, gamma: float, chi,
                   eps=tuple(1e-3 * 0.5 ** np.arange(9))) -> GradientCheck:
    """Central differences of E^h along the vertex perturbation ``chi`` vs. -⟨F_Γ, χ⟩^h."""
    chi = np.asarray(chi, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if eps.min() < 1e-8:
        logger.warning("perturbations below 1e-8 lose significance in the central difference")
    F = membrane_gradient(surf, C, law, beta, gamma)
    predicted = -float(np.dot(surf.lumped_mass, np.einsum("ki,ki->k", F, chi)))
    fd = np.array([(membrane_energy(surf.with_vertices(surf.vertices + e * chi), C, law, beta, gamma)
                    - membrane_energy(surf.with_vertices(surf.vertices - e * chi), C, law, beta, gamma))
                   / (2 * e) for e in eps])
    err = np.abs(fd - predicted) / max(abs(predicted), 1e-300)
    orders = np.log(err[:-1] / err[1:]) / np.log(eps[:-1] / eps[1:])
    return GradientCheck(eps, fd, predicted, err, orders)


def inclination_angle(surf: SurfaceMesh, with_anisotropy=False):
    """Angle (degrees, in (-90, 90]) of the principal axis of the vertex second moments.

    With ``with_anisotropy`` also returns the relative eigenvalue gap, which
    is zero when the axis is undefined (e.g. a regular polygon).
    """
    x = surf.vertices - surf.vertices.mean(axis=0)
    w, v = np.linalg.eigh(x.T @ x)
    a = v[:, -1]
    gap = (w[-1] - w[-2]) / max(w[-1], 1e-300)
    ang = np.degrees(np.arctan2(a[1], a[0]))
    if ang <= -90:
        ang += 180
    elif ang > 90:
        ang -= 180
    return (float(ang), float(gap)) if with_anisotropy else float(ang)


# ---------------------------------------------------------------- state
@dataclass
class SystemState:
    t: float
    step: int
    surf: SurfaceMesh
    bulk: BulkMesh
    dofs: DofMap
    U: np.ndarray  # (N, d) nodal P2 velocity
    P: np.ndarray
    P_sing: float
    P_gamma: np.ndarray
    kappa: np.ndarray
    Y: np.ndarray
    F: np.ndarray
    W: np.ndarray
    Z: np.ndarray
    C: np.ndarray
    M: np.ndarray
    lam: float
    rho: np.ndarray  # ρ on ``bulk`` (the previous-level density for the next step)
    prev_vertices: np.ndarray | None = None  # Γ^{m-1} vertices, for the surface inertia term

    def check(self, obstacle=True):
        K, d = self.surf.n_vertices, self.surf.dim
        for name in ("kappa", "Y", "F"):
            if getattr(self, name).shape != (K, d):
                raise ValueError(f"{name} has the wrong shape")
        if self.W.shape != (K, d, d) or not np.allclose(self.W, np.swapaxes(self.W, 1, 2), atol=1e-12):
            raise ValueError("W must be a symmetric tensor per vertex")
        if obstacle and np.abs(self.C).max() > 1.0 + 1e-14:
            raise ValueError("concentration outside [-1, 1]")


@dataclass
class StepReport:
    flow_iters: int = 0
    flow_residual: float = 0.0
    flow_fallback: bool = False
    vi_sweeps: int = 0
    vi_residual: float = 0.0
    residuals: dict = field(default_factory=dict)
    bulk_elements: int = 0
    seconds: float = 0.0


@dataclass
class FlowSystem:
    saddle: SaddlePointSystem
    bundle: SurfaceBundle
    coupling: object
    curvature: CurvatureRHS
    rho: np.ndarray
    mu: np.ndarray
    divergence: sparse.csr_matrix


class Simulation:
    """Owns the configuration, the adapter and the current state; ``step`` advances by τ."""

    def __init__(self, cfg: ScenarioConfig, surf: SurfaceMesh | None = None, C=None, seed=None):
        self.cfg = cfg.validate()
        self.law = cfg.law()
        self.domain = make_domain(cfg)
        self.adapter = Adapter(self.domain, AdaptParams(cfg.coarse_level, cfg.fine_level, cfg.ring))
        self.g = boundary_velocity(cfg)
        self.f = body_force(cfg)
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        surf = initial_surface(cfg) if surf is None else surf
        C = initial_concentration(cfg, surf, self.rng) if C is None else np.asarray(C, dtype=float)
        kappa, W, Y = init_geometry_fields(surf, C, self.law)
        bulk = self.adapter(surf)
        dofs = build_spaces(bulk, self.g)
        rho = phase_coefficients(bulk.classification, cfg.rho_minus, cfg.rho_plus)
        U = np.zeros((dofs.n_nodes, surf.dim))
        U.reshape(-1)[dofs.dirichlet_dofs] = dofs.dirichlet_values.ravel()
        self.state = SystemState(0.0, 0, surf, bulk, dofs, U, np.zeros(dofs.n_pressure), 0.0,
                                 np.zeros(surf.n_vertices), kappa, Y, np.zeros_like(kappa), W,
                                 -self.law.gauss(C)[:, None, None] * W, C, np.zeros_like(C), 0.0, rho, None)
        self.last_report = StepReport()
        self._angle = inclination_angle(surf) if surf.dim == 2 else float("nan")

    # -------------------------------------------------------- assembly
    def assemble_flow(self, surf, bulk, dofs, kappa, Y, W, C, U_old, rho_prev, prev_vertices) -> FlowSystem:
        cfg, law, tau = self.cfg, self.law, self.cfg.tau
        d = surf.dim
        cls = bulk.classification
        rho = phase_coefficients(cls, cfg.rho_minus, cfg.rho_plus)
        mu = phase_coefficients(cls, cfg.mu_minus, cfg.mu_plus)
        bundle = assemble_surface(surf, C, law, cfg.mu_gamma)
        coupling = assemble_coupling(dofs, surf, bundle)
        Ev = coupling.trace_vector
        m = surf.lumped_mass
        B = viscous_matrix(dofs, mu)
        b = np.zeros(dofs.n_velocity)
        inertial = np.any(rho) or np.any(rho_prev)
        if inertial:
            B = B + mass_matrix(dofs, 0.5 * (rho + rho_prev) / tau) + advection_matrix(dofs, rho, U_old)
            b += load_vector(dofs, rho_prev / tau, field_nodes=U_old)
            b += outflow_vector(dofs, U_old, cfg.rho_plus)
        if self.f is not None and np.any(rho):
            b += load_vector(dofs, rho, func=self.f)
        if cfg.rho_gamma:
            B = B + (cfg.rho_gamma / tau) * (Ev.T @ sparse.diags(np.repeat(m, d)) @ Ev)
            if prev_vertices is not None:
                v_old = evaluation_matrix(dofs, prev_vertices) @ U_old
                b += (cfg.rho_gamma / tau) * (Ev.T @ (m[:, None] * v_old).ravel())
        if cfg.mu_gamma:
            B = B + Ev.T @ bundle.viscous @ Ev
        B = B + schur_coupling_matrix(bundle, coupling, tau)
        curv = assemble_curvature_rhs(surf, kappa, Y, W, C, law, cfg.beta, cfg.gamma)
        zy = (bundle.gaussian_stiffness @ Y.ravel()).reshape(-1, d)
        zero = np.zeros_like(kappa)
        F0 = solve_geometry_block(bundle, tau, zero, -(bundle.stiffness @ surf.vertices), curv.c,
                                 zy - curv.d)[3]
        b = b + Ev.T @ (m[:, None] * F0).ravel()
        Cdiv = divergence_matrix(dofs)
        Ct = sparse.hstack([Cdiv, sparse.csr_matrix(coupling.D[:, None]), coupling.S], format="csr")
        fixed = dofs.dirichlet_dofs
        u_fixed = dofs.dirichlet_values.ravel()
        mean = pressure_mass_vector(dofs) if dofs.zero_mean_pressure else None
        scale = pressure_mass_diagonal(dofs, mu)
        saddle = SaddlePointSystem(B.tocsr(), Ct, b, dofs.free_dofs, fixed, u_fixed, dofs.n_pressure,
                                   mean, scale)
        return FlowSystem(saddle, bundle, coupling, curv, rho, mu, Cdiv)

    # -------------------------------------------------------- time step
    def step(self) -> SystemState:
        cfg, law, tau = self.cfg, self.law, self.cfg.tau
        st = self.state
        t0 = time.perf_counter()
        report = StepReport()
        surf = st.surf
        d = surf.dim
        try:
            bulk = self.adapter(surf)
            dofs = build_spaces(bulk, self.g)
            inertial = cfg.rho_minus or cfg.rho_plus or cfg.rho_gamma
            if inertial:
                U_old = interpolate_p2(st.dofs, st.U, dofs)
                rho_prev = interpolate_p0(st.bulk, st.rho, bulk)
            else:
                U_old = np.zeros((dofs.n_nodes, d))
                rho_prev = np.zeros(bulk.n_elements)
            # transported fields: index copies onto Γ^m
            kappa, Y, W, C = st.kappa.copy(), st.Y.copy(), st.W.copy(), st.C.copy()
            fs = self.assemble_flow(surf, bulk, dofs, kappa, Y, W, C, U_old, rho_prev, st.prev_vertices)
            x, info = solve_coupled(fs.saddle, tol=cfg.flow_tol, method=cfg.flow_method,
                                    restart=cfg.gmres_restart, maxiter=cfg.gmres_maxiter)
            u, mult = fs.saddle.split(x, dofs.n_velocity)
            U = u.reshape(-1, d)
            npr = dofs.n_pressure
            P, P_sing, P_gamma = mult[:npr], float(mult[npr]), mult[npr + 1:]
            report.flow_iters, report.flow_residual, report.flow_fallback = (info.iterations, info.residual,
                                                                              info.fallback)
            m = surf.lumped_mass
            u_surf = (fs.coupling.trace_vector @ u).reshape(-1, d)
            zy = (fs.bundle.gaussian_stiffness @ Y.ravel()).reshape(-1, d)
            kappa_new, dX, Y_new, F_new = solve_geometry_block(
                fs.bundle, tau, -m[:, None] * u_surf, -(fs.bundle.stiffness @ surf.vertices), fs.curvature.c,
                zy - fs.curvature.d)
            W_new = weingarten_field(surf, kappa_new)
            report.residuals = self._constraint_residuals(fs, dofs, u, u_surf, dX, surf, tau)
            surf_new = surf.with_vertices(surf.vertices + dX)
            ch = assemble_ch_system(surf_new, surf, C, kappa_new, W_new, law, cfg.beta, cfg.gamma, cfg.theta, tau)
            vi = solve_ch_vi(ch, C, st.M, tol=cfg.vi_tol, method=cfg.vi_method, max_sweeps=cfg.vi_max_sweeps)
            report.vi_sweeps, report.vi_residual = vi.sweeps, vi.residual
        except Exception as exc:
            raise StepFailure(f"step {st.step + 1} failed: {exc}", st) from exc
        Z = -law.gauss(vi.C)[:, None, None] * W_new
        self.state = SystemState((st.step + 1) * tau, st.step + 1, surf_new, bulk, dofs, U, P, P_sing, P_gamma,
                                 kappa_new, Y_new, F_new, W_new, Z, vi.C, vi.M, vi.lam, fs.rho,
                                 surf.vertices.copy())
        self._energy_parts = (kinetic_energy(dofs, U, fs.rho, surf, cfg.rho_gamma, fs.coupling.trace),
                              curvature_energy(surf, kappa_new, W_new, C, law))
        report.bulk_elements = bulk.n_elements
        report.seconds = time.perf_counter() - t0
        self.last_report = report
        if surf_new.quality_ratio > 1e3:
            logger.warning("interface quality ratio %.1f at t=%.4g", surf_new.quality_ratio, self.state.t)
        return self.state

    @staticmethod
    def _constraint_residuals(fs: FlowSystem, dofs, u, u_surf, dX, surf, tau):
        """Constraint residuals, each divided by the absolute row sum times max(|u|, 1)."""
        scale = max(np.abs(u).max(), 1.0)
        m, omega = surf.lumped_mass, surf.vertex_normals
        wsum = np.dot(m, np.linalg.norm(omega, axis=1))
        Cdiv = abs(fs.divergence).T.tocsr()
        div_rows = np.asarray(Cdiv.sum(axis=1)).ravel()
        Sdiv = abs(fs.bundle.divergence)
        sdiv_rows = np.asarray(Sdiv.sum(axis=1)).ravel()
        div = np.abs(fs.divergence.T @ u) / np.maximum(div_rows, 1e-300)
        sdiv = np.abs(fs.bundle.divergence @ u_surf.ravel()) / np.maximum(sdiv_rows, 1e-300)
        vol = np.dot(m, np.einsum("ki,ki->k", u_surf, omega))
        vdx = np.dot(m, np.einsum("ki,ki->k", dX, omega))
        return {"bulk_divergence": float(div.max() / scale),
                "volume": float(abs(vol) / wsum / scale),
                "surface_divergence": float(sdiv.max() / scale),
                "volume_update": float(abs(vdx) / wsum / (tau * scale))}

    # -------------------------------------------------------- diagnostics
    def diagnostics(self) -> dict:
        """One diagnostics record for the current state (see DIAGNOSTIC_COLUMNS)."""
        st, cfg, law = self.state, self.cfg, self.law
        if st.step == 0:
            e_kin = 0.0
            e_k = curvature_energy(st.surf, st.kappa, st.W, st.C, law)
        else:
            e_kin, e_k = self._energy_parts
        e_ch = phase_energy(st.surf, st.C, law, cfg.beta, cfg.gamma)
        area = float(st.surf.measures.sum())
        vol = enclosed_volume(st.surf)
        if st.surf.dim == 2:
            raw, gap = inclination_angle(st.surf, with_anisotropy=True)
            # unwrap modulo 180 degrees so tumbling shows as monotone winding;
            # a nearly isotropic shape has no axis and keeps the previous angle
            delta = (raw - self._angle + 90.0) % 180.0 - 90.0 if gap > 1e-6 else 0.0
            self._angle = self._angle + delta
            angle = self._angle
        else:
            angle = float("nan")
        return {"t": st.t, "E_total": e_kin + e_k + e_ch, "E_kin": e_kin, "E_kappa": e_k, "E_CH": e_ch,
                "area": area, "volume": vol, "total_C": float(np.dot(st.surf.lumped_mass, st.C)),
                "min_C": float(st.C.min()), "max_C": float(st.C.max()), "incl_angle": angle,
                "flow_iters": self.last_report.flow_iters, "vi_sweeps": self.last_report.vi_sweeps}

    def euler_estimate(self) -> float:
        """½⟨1, |κ|² - |W|²⟩^h / (2π) for d = 3."""
        st = self.state
        if st.surf.dim != 3:
            return float("nan")
        g2 = np.einsum("ki,ki->k", st.kappa, st.kappa) - np.einsum("kab,kab->k", st.W, st.W)
        return float(0.5 * np.dot(st.surf.lumped_mass, g2) / (2 * np.pi))


def init_scenario(cfg: ScenarioConfig, seed=None) -> Simulation:
    return Simulation(cfg, seed=seed)
