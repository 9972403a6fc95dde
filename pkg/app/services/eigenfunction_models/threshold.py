"""
Threshold expansions at lambda = lambda_Hess, where the minimum is a degenerate
center with r1 = r2 = 1/2.

In Y = (y - y_c)/sqrt(x) and s = log x the leading transport equation is the
Schroedinger equation 2i nu d_s G = d_Y^2 G, solved on the Fourier side by
x^{i eta^2/(2 nu)} g_hat(eta). Stationary phase as s -> -infinity gives

    u ~ e^{i Phi/x} x^beta (-s)^{-1/2} e^{-i nu Y^2/(2 s)} g(Y/s),
    Phi = nu (1 - (y - y_c)^2/4),  beta = 1/4 + i V1(y_c)/(2 nu),

with g_hat(eta) = sqrt(2 pi / nu) e^{i pi/4} g(-eta/nu). The relative error is O(1/|log x|).
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional

import numpy as np
from scipy.integrate import simpson

from app.core.errors import GridTooCoarse, WrongKind
from app.services.boundary_model import BoundaryData
from app.services.classical import RadialKind, RadialPoint
from app.services.eigenfunction_models.operator import (
    CollarGrid,
    ConjugatePhase,
    QuadraticPhase,
)

logger = logging.getLogger("radialiq.eigenfunction_models.threshold")

MIN_LOG_DEPTH = 5.0


@dataclass(frozen=True)
class ThresholdExpansion:
    q: RadialPoint
    beta: complex
    profile: Any
    incoming: bool = False

    @property
    def nu(self) -> float:
        return abs(self.q.nu_t)

    @property
    def phase(self) -> QuadraticPhase:
        return QuadraticPhase(self.nu, self.q.y_c, -0.25 * self.nu)

    def fourier_profile(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        return math.sqrt(2.0 * math.pi / self.nu) * np.exp(0.25j * math.pi) * self.profile(-eta / self.nu)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "threshold",
            "label": self.q.label,
            "beta": [self.beta.real, self.beta.imag],
            "profile": self.profile.describe(),
            "incoming": self.incoming,
        }


def threshold_expansion(q: RadialPoint, b: BoundaryData, profile: Any) -> ThresholdExpansion:
    """
    Raises:
        WrongKind: q is not an outgoing degenerate center
    """
    if q.kind != RadialKind.DEGENERATE_CENTER or not q.outgoing:
        raise WrongKind(f"{q.label} is not an outgoing degenerate center", {"kind": q.kind.value})
    nu = abs(q.nu_t)
    return ThresholdExpansion(q, complex(0.25, float(b.v1(q.y_c)) / (2.0 * nu)), profile)


def build_threshold_eigenfunction(exp: ThresholdExpansion, grid: CollarGrid) -> CollarGrid:
    """
    Leading-order threshold field on the grid (amplitude frame).

    Raises:
        GridTooCoarse: the grid does not reach |log x| >= 5, or reaches x >= 1
    """
    if -math.log(grid.x[0]) < MIN_LOG_DEPTH:
        raise GridTooCoarse(f"x_min={grid.x[0]:.3g} has |log x| < {MIN_LOG_DEPTH}",
                            {"x_min": float(grid.x[0])})
    if grid.x[-1] >= 1.0:
        raise GridTooCoarse("the logarithmic form needs x < 1", {"x_max": float(grid.x[-1])})

    u = grid.chart.offset(grid.x, grid.coords, grid.b.circumference)
    Y = u / np.sqrt(grid.x)[:, None]
    s = np.log(grid.x)[:, None]
    values = (np.exp(exp.beta * s) * (-s) ** -0.5
              * np.exp(-0.5j * exp.nu * Y * Y / s) * exp.profile(Y / s))
    phase = exp.phase
    if exp.incoming:
        values = np.conj(values)
        phase = ConjugatePhase(phase)
    meta = {**grid.meta, "kind": "threshold", "label": exp.q.label, "incoming": exp.incoming,
            "leading_exponent": 0.25}
    return grid.with_values(values, phase=phase, meta=meta)


def _profile_reach(profile: Any, tol: float = 1e-13) -> float:
    z = np.linspace(-60.0, 60.0, 24001)
    mag = np.abs(profile(z))
    if not np.any(mag):
        return 0.0
    live = z[mag > tol * mag.max()]
    return float(max(abs(live[0]), abs(live[-1]))) + 0.5


def threshold_fourier_field(exp: ThresholdExpansion, x: float, Y: float,
                            max_points: int = 2_000_001) -> complex:
    """
    x^beta (1/2pi) int e^{i Y eta} x^{i eta^2/(2 nu)} g_hat(eta) d eta by
    composite Simpson quadrature, resolving the chirp with 16 points per turn.
    """
    s = math.log(x)
    reach = _profile_reach(exp.profile)
    if reach == 0.0:
        return 0j
    eta_max = exp.nu * reach
    turn_rate = abs(Y) + eta_max * abs(s) / exp.nu
    n = int(min(max_points, 2 * math.ceil(16.0 * turn_rate * eta_max / math.pi) + 1))
    n = max(n | 1, 401)
    eta = np.linspace(-eta_max, eta_max, n)
    integrand = np.exp(1j * Y * eta + 0.5j * s * eta * eta / exp.nu) * exp.fourier_profile(eta)
    G = simpson(integrand, x=eta) / (2.0 * math.pi)
    return complex(np.exp(exp.beta * s) * G)


def conjugate_threshold(exp: ThresholdExpansion) -> ThresholdExpansion:
    return replace(exp, incoming=not exp.incoming)
