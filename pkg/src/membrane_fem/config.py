"""Scenario configuration: ``key = value`` sections, validation and named presets."""

from __future__ import annotations

import configparser
import dataclasses
import logging
from dataclasses import dataclass, fields

from .coefficients import MaterialLaw

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass
class ScenarioConfig:
    # [physics]
    rho_minus: float = 0.0
    rho_plus: float = 0.0
    mu_minus: float = 1.0
    mu_plus: float = 1.0
    rho_gamma: float = 0.0
    mu_gamma: float = 1.0
    alpha_minus: float = 1.0
    alpha_plus: float = 1.0
    kbar_minus: float = 0.0
    kbar_plus: float = 0.0
    gauss_minus: float = 0.0
    gauss_plus: float = 0.0
    beta: float = 1.0
    gamma: float = 0.05
    theta: float = 1.0
    junction: str = "c1"
    delta: float = 1e-3
    potential: str = "obstacle"
    # [discretization]
    tau: float = 5e-4
    t_final: float = 1.0
    surface_elements: int = 257
    sphere_level: int = 3
    domain_lo: tuple = (-2.0, -2.0)
    domain_hi: tuple = (2.0, 2.0)
    cells: tuple = (4, 4)
    coarse_level: int = 4
    fine_level: int = 10
    ring: int = 1
    # [scenario]
    name: str = "custom"
    shape: str = "circle"
    radius: float = 1.0
    semi_axes: tuple = (1.25, 0.5)
    shape_length: float = 2.823
    shape_thickness: float = 0.15
    plate_exponent: float = 3.55
    arms: int = 4
    arm_amplitude: float = 0.6
    initial_c: str = "constant"
    c_mean: float = 0.0
    band_axis: int = 1
    band_width: float = 0.5
    boundary: str = "zero"
    stress_free: tuple = ()
    body_force: tuple = ()
    seed: int = 0
    # [solver]
    flow_tol: float = 1e-9
    flow_method: str = "lu"
    gmres_restart: int = 60
    gmres_maxiter: int = 600
    vi_tol: float = 1e-10
    vi_method: str = "pgs"
    vi_max_sweeps: int = 20000
    # [output]
    snapshot_every: int = 100
    snapshot_times: tuple = ()
    threads: int = 1

    def law(self) -> MaterialLaw:
        return MaterialLaw(self.alpha_minus, self.alpha_plus, self.kbar_minus, self.kbar_plus,
                           self.gauss_minus, self.gauss_plus, self.junction, self.delta, self.potential)

    @property
    def dim(self) -> int:
        return len(self.domain_lo)

    def replace(self, **changes) -> "ScenarioConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self) -> "ScenarioConfig":
        positive = ["mu_minus", "mu_plus", "alpha_minus", "alpha_plus", "beta", "gamma", "theta", "tau"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ["rho_minus", "rho_plus", "rho_gamma", "mu_gamma"]:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if len(self.domain_lo) != len(self.domain_hi) or len(self.cells) != len(self.domain_lo):
            raise ConfigError("domain_lo, domain_hi and cells must have the same length")
        if self.dim not in (2, 3):
            raise ConfigError("only two and three space dimensions are supported")
        if any(h <= l for l, h in zip(self.domain_lo, self.domain_hi)):
            raise ConfigError("domain_hi must exceed domain_lo componentwise")
        if not 0 <= self.coarse_level <= self.fine_level:
            raise ConfigError("need 0 <= coarse_level <= fine_level")
        if self.potential == "obstacle" and not -1 <= self.c_mean <= 1:
            raise ConfigError("c_mean must lie in [-1, 1] for the obstacle potential")
        for s in self.stress_free:
            if s not in _FACES[: 2 * self.dim]:
                raise ConfigError(f"unknown boundary face {s!r}")
        if len(self.stress_free) == 2 * self.dim:
            raise ConfigError("the Dirichlet part of the boundary is empty")
        law = self.law()  # raises on inconsistent material data
        if (self.gauss_minus or self.gauss_plus) and not law.gauss_bound_ok():
            logger.warning("Gaussian rigidity jump %.3g exceeds twice the smallest bending rigidity %.3g; "
                           "the bending energy is not bounded below",
                           abs(self.gauss_plus - self.gauss_minus), min(self.alpha_minus, self.alpha_plus))
        return self


_FACES = ("x-", "x+", "y-", "y+", "z-", "z+")

SECTIONS = {
    "physics": ["rho_minus", "rho_plus", "mu_minus", "mu_plus", "rho_gamma", "mu_gamma", "alpha_minus",
                "alpha_plus", "kbar_minus", "kbar_plus", "gauss_minus", "gauss_plus", "beta", "gamma",
                "theta", "junction", "delta", "potential"],
    "discretization": ["tau", "t_final", "surface_elements", "sphere_level", "domain_lo", "domain_hi",
                       "cells", "coarse_level", "fine_level", "ring"],
    "scenario": ["name", "shape", "radius", "semi_axes", "shape_length", "shape_thickness",
                 "plate_exponent", "arms", "arm_amplitude", "initial_c", "c_mean", "band_axis",
                 "band_width", "boundary", "stress_free", "body_force", "seed"],
    "solver": ["flow_tol", "flow_method", "gmres_restart", "gmres_maxiter", "vi_tol", "vi_method",
               "vi_max_sweeps"],
    "output": ["snapshot_every", "snapshot_times", "threads"],
}
_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}
_DEFAULTS = ScenarioConfig()


def _parse_value(key: str, text: str):
    kind = type(getattr(_DEFAULTS, key))
    text = text.strip()
    try:
        if kind is tuple:
            parts = [p for p in text.replace(",", " ").split() if p]
            default = getattr(_DEFAULTS, key)
            sample = default[0] if default else None
            if key in ("stress_free",):
                return tuple(parts)
            if isinstance(sample, int) and not isinstance(sample, bool):
                return tuple(int(p) for p in parts)
            return tuple(float(p) for p in parts)
        if kind is bool:
            return text.lower() in ("1", "true", "yes", "on")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {text!r}: {exc}") from exc


def apply_overrides(cfg: ScenarioConfig, overrides) -> ScenarioConfig:
    """Apply ``key=value`` strings; keys may be bare or ``section.key``."""
    changes = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        key = key.strip().split(".")[-1]
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        changes[key] = _parse_value(key, value)
    return cfg.replace(**changes)


def load_config(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        parser.read_file(fh)
    changes = {}
    if parser.has_option("scenario", "preset"):
        base = preset(parser.get("scenario", "preset"))
    for section in parser.sections():
        if section == "run":  # manifest metadata, not configuration
            continue
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in parser.items(section):
            if section == "scenario" and key == "preset":
                continue
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            changes[key] = _parse_value(key, value)
    return (base or ScenarioConfig()).replace(**changes)


def dump_config(cfg: ScenarioConfig) -> str:
    """Render a config as the same ``key = value`` format load_config reads."""
    out = []
    for section, keys in SECTIONS.items():
        out.append(f"[{section}]")
        for key in keys:
            v = getattr(cfg, key)
            if isinstance(v, tuple):
                v = " ".join(str(x) for x in v)
            out.append(f"{key} = {v}")
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------- presets
_TWO_D_LARGE = dict(domain_lo=(-2.0, -2.0), domain_hi=(2.0, 2.0), cells=(4, 4), coarse_level=4, fine_level=10)

PRESETS = {
    "circle-stationary": dict(name="circle-stationary", shape="circle", surface_elements=64, radius=1.0,
                              initial_c="constant", c_mean=0.0, tau=1e-3, t_final=1e-2, **_TWO_D_LARGE),
    "letter_c": dict(name="letter_c", shape="letter_c", surface_elements=257, gamma=0.02, tau=5e-4,
                     t_final=1.0, domain_lo=(-1.0, -1.0), domain_hi=(1.0, 1.0), cells=(2, 2),
                     coarse_level=4, fine_level=12, kbar_minus=-0.5, kbar_plus=-2.0,
                     initial_c="random", c_mean=-0.4),
    "shear_a": dict(name="shear_a", shape="ellipse", semi_axes=(1.25, 0.5), surface_elements=257,
                    gamma=0.05, tau=5e-4, t_final=17.0, rho_minus=1.0, rho_plus=1.0, rho_gamma=1.0,
                    alpha_minus=0.05, alpha_plus=0.2, mu_minus=1.0, mu_plus=1.0, boundary="shear",
                    stress_free=("x-", "x+"), initial_c="random", c_mean=-0.4, **_TWO_D_LARGE),
    "shear_b": dict(name="shear_b", shape="ellipse", semi_axes=(1.25, 0.5), surface_elements=257,
                    gamma=0.05, tau=5e-4, t_final=17.0, rho_minus=1.0, rho_plus=1.0, rho_gamma=1.0,
                    alpha_minus=0.05, alpha_plus=0.2, mu_minus=10.0, mu_plus=1.0, boundary="shear",
                    stress_free=("x-", "x+"), initial_c="random", c_mean=-0.4, **_TWO_D_LARGE),
    "marangoni": dict(name="marangoni", shape="ellipse", semi_axes=(1.25, 0.5), surface_elements=257,
                      gamma=0.05, tau=5e-4, t_final=10.0, kbar_minus=0.5, kbar_plus=2.0, beta=10.0,
                      initial_c="banded", c_mean=-0.4, band_axis=0, **_TWO_D_LARGE),
    "c0_junction": dict(name="c0_junction", shape="ellipse", semi_axes=(1.25, 0.5), surface_elements=257,
                        gamma=0.05, tau=5e-4, t_final=1.0, kbar_minus=-0.2, kbar_plus=-2.0, beta=10.0,
                        junction="c0", initial_c="banded", c_mean=-0.4, band_axis=0, **_TWO_D_LARGE),
    "c1_junction": dict(name="c1_junction", shape="ellipse", semi_axes=(1.25, 0.5), surface_elements=257,
                        gamma=0.05, tau=5e-4, t_final=1.0, kbar_minus=-0.2, kbar_plus=-2.0, beta=10.0,
                        junction="c1", initial_c="banded", c_mean=-0.4, band_axis=0, **_TWO_D_LARGE),
    "plate3d": dict(name="plate3d", shape="plate", domain_lo=(-4.0, -4.0, -4.0), domain_hi=(4.0, 4.0, 4.0),
                    cells=(2, 2, 2), coarse_level=6, fine_level=12, gamma=0.2, tau=1e-3, t_final=2.0,
                    initial_c="random", c_mean=-0.4, surface_elements=16),
    "budding": dict(name="budding", shape="star", arms=4, arm_amplitude=0.6, domain_lo=(-3.0, -3.0, -3.0),
                    domain_hi=(3.0, 3.0, 3.0), cells=(2, 2, 2), coarse_level=6, fine_level=12, sphere_level=3,
                    gamma=0.1, tau=1e-3, t_final=1.0, kbar_minus=0.0, kbar_plus=-3.0, beta=1.0,
                    initial_c="banded", c_mean=-0.4, band_axis=2),
    "spinodal_sphere": dict(name="spinodal_sphere", shape="sphere", sphere_level=3,
                            domain_lo=(-2.0, -2.0, -2.0), domain_hi=(2.0, 2.0, 2.0), cells=(2, 2, 2),
                            coarse_level=6, fine_level=12, gamma=0.1, tau=1e-3, t_final=1.0,
                            initial_c="random", c_mean=0.0),
    "seven_arm": dict(name="seven_arm", shape="star", arms=7, arm_amplitude=0.5, domain_lo=(-3.0, -3.0, -3.0),
                      domain_hi=(3.0, 3.0, 3.0), cells=(2, 2, 2), coarse_level=6, fine_level=12,
                      sphere_level=3, gamma=0.1, tau=1e-3, t_final=1.0, gauss_minus=0.0, gauss_plus=0.5,
                      initial_c="random", c_mean=-0.4),
}


def preset(name: str, overrides=()) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    cfg = ScenarioConfig(**PRESETS[name]).validate()
    return apply_overrides(cfg, overrides) if overrides else cfg
