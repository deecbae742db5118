"""Phase-dependent material laws and the double-well potential."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


def _linear(minus, plus, s):
    return 0.5 * (plus + minus) + 0.5 * (plus - minus) * s


@dataclass(frozen=True)
class MaterialLaw:
    """Bending rigidity α, spontaneous curvature κ̄ and Gaussian rigidity α^G as functions of C.

    ``junction="c1"`` interpolates linearly between the phase values;
    ``junction="c0"`` multiplies the bending rigidity by ``s² + delta``, which
    nearly vanishes at the phase boundary and permits kinks there.
    """

    alpha_minus: float = 1.0
    alpha_plus: float = 1.0
    kbar_minus: float = 0.0
    kbar_plus: float = 0.0
    gauss_minus: float = 0.0
    gauss_plus: float = 0.0
    junction: str = "c1"
    delta: float = 1e-3
    potential: str = "obstacle"

    def __post_init__(self):
        if self.junction not in ("c0", "c1"):
            raise ValueError(f"unknown junction mode {self.junction!r}")
        if self.potential not in ("obstacle", "quartic"):
            raise ValueError(f"unknown potential {self.potential!r}")
        if min(self.alpha_minus, self.alpha_plus) <= 0:
            raise ValueError("bending rigidities must be positive")
        if self.junction == "c0" and self.delta <= 0:
            raise ValueError("junction smoothing delta must be positive")

    def gauss_bound_ok(self) -> bool:
        """min α± ≥ |α^G₊ − α^G₋|/2, the condition keeping the bending energy bounded below."""
        return min(self.alpha_minus, self.alpha_plus) >= 0.5 * abs(self.gauss_plus - self.gauss_minus)

    def alpha(self, s):
        s = np.asarray(s, dtype=float)
        lin = _linear(self.alpha_minus, self.alpha_plus, s)
        return (s * s + self.delta) * lin if self.junction == "c0" else lin

    def dalpha(self, s):
        s = np.asarray(s, dtype=float)
        slope = 0.5 * (self.alpha_plus - self.alpha_minus)
        if self.junction == "c0":
            return 2 * s * _linear(self.alpha_minus, self.alpha_plus, s) + (s * s + self.delta) * slope
        return np.full_like(s, slope)

    def kbar(self, s):
        return _linear(self.kbar_minus, self.kbar_plus, np.asarray(s, dtype=float))

    def dkbar(self, s):
        return np.full_like(np.asarray(s, dtype=float), 0.5 * (self.kbar_plus - self.kbar_minus))

    def gauss(self, s):
        return _linear(self.gauss_minus, self.gauss_plus, np.asarray(s, dtype=float))

    def dgauss(self, s):
        return np.full_like(np.asarray(s, dtype=float), 0.5 * (self.gauss_plus - self.gauss_minus))

    @property
    def has_gauss(self) -> bool:
        return self.gauss_minus != 0.0 or self.gauss_plus != 0.0

    # potential ---------------------------------------------------------
    def psi(self, s):
        s = np.asarray(s, dtype=float)
        if self.potential == "obstacle":
            return 0.5 * (1.0 - s * s)
        return 0.25 * (s * s - 1.0) ** 2

    def dpsi(self, s):
        s = np.asarray(s, dtype=float)
        if self.potential == "obstacle":
            return -s
        return s ** 3 - s
