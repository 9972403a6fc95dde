"""
Center expansions.

At a center the outgoing eigenfunctions are Schwartz series in oscillator modes of
the front-face variable Y = (y - y_c) / sqrt(x):

    u = e^{i nu/x} sum_j gamma_j x^{1/4 + i theta_j} v_j(Y),
    theta_j = (beta_j + V1(y_c)) / (2 nu),

with Q v_j = beta_j v_j, Q = D_Y^2 + (nu/2)(Y D_Y + D_Y Y) + a Y^2 and a = V0''(y_c)/2.
Conjugating by e^{-i nu Y^2/4} turns Q into the oscillator D_Y^2 + alpha^2 Y^2.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from app.core.errors import NotCenter, TailTooLarge
from app.schemas.config import ExpansionSettings
from app.services.boundary_model import BoundaryData
from app.services.classical import RadialKind, RadialPoint
from app.services.eigenfunction_models.operator import (
    CollarGrid,
    ConjugatePhase,
    ConstantPhase,
    chart_grid_from_settings,
    fd_derivative,
)
from app.services.eigenfunction_models.profiles import HermiteProfile

logger = logging.getLogger("radialiq.eigenfunction_models.center")


@dataclass(frozen=True)
class CenterExpansion:
    q: RadialPoint
    alpha: float
    betas: np.ndarray
    v1_c: float
    gammas: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    j_max: int = 32
    incoming: bool = False

    @property
    def nu(self) -> float:
        return abs(self.q.nu_t)

    @property
    def thetas(self) -> np.ndarray:
        return (self.betas + self.v1_c) / (2.0 * self.nu)

    @property
    def top_mode(self) -> int:
        """Index of the last nonzero coefficient within j_max (-1 when all vanish)."""
        g = np.asarray(self.gammas)[: self.j_max]
        nz = np.flatnonzero(g)
        return int(nz[-1]) if nz.size else -1

    def with_gammas(self, gammas: Sequence[complex]) -> "CenterExpansion":
        return replace(self, gammas=np.asarray(gammas, dtype=complex))

    def oscillator_functions(self, Y: np.ndarray, count: int) -> np.ndarray:
        """Normalized Hermite functions of frequency alpha, rows j = 0..count-1."""
        return HermiteProfile((), self.alpha).basis(Y, count)

    def modes(self, Y: np.ndarray, count: Optional[int] = None) -> np.ndarray:
        """v_j(Y) = e^{-i nu Y^2/4} psi_j(Y)."""
        count = self.j_max if count is None else count
        Y = np.asarray(Y, dtype=float)
        return np.exp(-0.25j * self.nu * Y * Y) * self.oscillator_functions(Y, count)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "center",
            "label": self.q.label,
            "alpha": self.alpha,
            "betas": [float(b) for b in self.betas[:8]],
            "j_max": self.j_max,
            "incoming": self.incoming,
            "n_gammas": int(len(self.gammas)),
        }


def center_modes(q: RadialPoint, b: BoundaryData, j_max: int = 32) -> CenterExpansion:
    """
    Oscillator data at an outgoing center: alpha = sqrt(V0''/2 - nu^2/4),
    beta_j = alpha (2j + 1).

    Raises:
        NotCenter: q is not an outgoing center
    """
    if q.kind != RadialKind.CENTER or not q.outgoing:
        raise NotCenter(f"{q.label} is {q.kind.value}", {"label": q.label, "outgoing": q.outgoing})
    alpha_sq = q.a - 0.25 * q.nu_t ** 2
    if alpha_sq <= 0:
        raise NotCenter(f"alpha^2 = {alpha_sq:.3e} is not positive", {"label": q.label})
    alpha = math.sqrt(alpha_sq)
    betas = alpha * (2.0 * np.arange(j_max) + 1.0)
    return CenterExpansion(q, alpha, betas, float(b.v1(q.y_c)), j_max=j_max)


def conjugate_expansion(exp: CenterExpansion) -> CenterExpansion:
    """The incoming partner: complex conjugation of the outgoing expansion."""
    return replace(exp, incoming=not exp.incoming)


def apply_q(exp: CenterExpansion, values: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Q v by 4th-order differences on a uniform Y grid; two samples at each end are NaN."""
    h = float(Y[1] - Y[0])
    d1 = fd_derivative(values, h, axis=0)
    d2 = fd_derivative(d1, h, axis=0)
    nu = exp.nu
    return -d2 - 1j * nu * Y * d1 - 0.5j * nu * values + exp.q.a * Y * Y * values


def eigen_residual(exp: CenterExpansion, j: int, Y: np.ndarray) -> float:
    """L2 norm of Q v_j - beta_j v_j over the interior of Y."""
    v = exp.modes(Y, j + 1)[j]
    r = apply_q(exp, v, Y) - exp.betas[j] * v
    keep = np.isfinite(r)
    return float(np.sqrt(np.sum(np.abs(r[keep]) ** 2) * (Y[1] - Y[0])))


def mode_gram(exp: CenterExpansion, Y: np.ndarray, count: int) -> np.ndarray:
    v = exp.modes(Y, count)
    return trapezoid(v[:, None, :] * np.conj(v[None, :, :]), Y, axis=-1)


def mode_zero_count(exp: CenterExpansion, j: int, Y: np.ndarray) -> int:
    """Sign changes of the real profile e^{i nu Y^2/4} v_j = psi_j."""
    psi = exp.oscillator_functions(Y, j + 1)[j]
    live = np.abs(psi) > 1e-10 * np.max(np.abs(psi))
    s = np.sign(psi[live])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def center_y_half(exp: CenterExpansion, margin: float = 5.0) -> float:
    """Y window containing the modes up to top_mode with room for their Gaussian tails."""
    j = max(exp.top_mode, 0)
    return (math.sqrt(2 * j + 1) + margin) / math.sqrt(exp.alpha)


def center_grid(exp: CenterExpansion, b: BoundaryData,
                settings: Optional[ExpansionSettings] = None) -> CollarGrid:
    return chart_grid_from_settings(b, exp.q.lam, exp.q.y_c, 0.5, settings, center_y_half(exp))


def build_center_eigenfunction(exp: CenterExpansion, grid: CollarGrid,
                               settings: Optional[ExpansionSettings] = None) -> CollarGrid:
    """
    Truncated mode sum on the grid (amplitude frame, phase e^{i nu/x} factored).

    Raises:
        TailTooLarge: coefficients beyond j_max exceed series_tol in sup norm
    """
    settings = settings or ExpansionSettings()
    gammas = np.asarray(exp.gammas, dtype=complex)
    tail = gammas[exp.j_max:]
    if tail.size:
        # |psi_j| <= (alpha/pi)^{1/4} uniformly
        bound = float(np.sum(np.abs(tail))) * (exp.alpha / math.pi) ** 0.25 * float(grid.x[-1]) ** 0.25
        if bound > settings.series_tol:
            raise TailTooLarge(f"tail beyond j_max={exp.j_max} is {bound:.3e}",
                               {"bound": bound, "series_tol": settings.series_tol})

    u = grid.chart.offset(grid.x, grid.coords, grid.b.circumference)
    if grid.chart.rho == 0.5 and not grid.periodic:
        Y = np.broadcast_to(grid.coords, u.shape)
    else:
        Y = u / np.sqrt(grid.x)[:, None]
    logx = np.log(grid.x)[:, None]
    values = np.zeros(u.shape, dtype=complex)
    top = exp.top_mode
    if top >= 0:
        chirp = np.exp(-0.25j * exp.nu * Y * Y)
        for j, psi in enumerate(exp.oscillator_functions(Y, top + 1)):
            if gammas[j] == 0:
                continue
            values += gammas[j] * np.exp((0.25 + 1j * exp.thetas[j]) * logx) * chirp * psi

    phase = ConstantPhase(exp.nu)
    if exp.incoming:
        values = np.conj(values)
        phase = ConjugatePhase(phase)
    meta = {**grid.meta, "kind": "center", "label": exp.q.label, "incoming": exp.incoming,
            "alpha": exp.alpha, "top_mode": top, "leading_exponent": 0.25}
    logger.debug(f"[EXPAND] center field built", extra={"details": meta})
    return grid.with_values(values, phase=phase, meta=meta)


def predicted_residual_slope(exp: CenterExpansion) -> float:
    """Leading exponent 1/4, one power of x from the bracket and a half power of remainder."""
    return 0.25 + 1.0 + 0.5
