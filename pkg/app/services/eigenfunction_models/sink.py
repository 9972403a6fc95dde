"""
Sink expansions.

At an outgoing sink the eigenfunctions concentrate on the front face of the
blow-up Y = (y - y_c) / x^{r1}:

    u = e^{i Phi(y)/x} x^beta u0(Y),    beta = r2/2 + i V1(y_c) / (2 nu),

with Phi the Legendre phase of the slow branch (curvature r1). In the resonant
case r2/r1 = m the phase jet stops at order m - 1 and the eikonal defect e_m u^m
is absorbed by the extra factor x^{-i c Y^m}, c = -e_m / (2 nu).
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from app.core.errors import InvalidArgument, MissingResonantC, WrongKind
from app.schemas.config import ExpansionSettings, LegendrianSettings
from app.services.boundary_model import BoundaryData
from app.services.classical import RadialKind, RadialPoint
from app.services.eigenfunction_models.operator import (
    CollarGrid,
    ConjugatePhase,
    LegendrePhaseFactor,
    chart_grid_from_settings,
)
from app.services.legendrian import LegendrePhase, continue_phase, evaluate_phase, phase_jet

logger = logging.getLogger("radialiq.eigenfunction_models.sink")

SLOW_BRANCH = 1


@dataclass(frozen=True)
class SinkExpansion:
    q: RadialPoint
    beta: complex
    phase: LegendrePhase
    profile: Any
    resonant_c: Optional[float] = None
    resonant_order: Optional[int] = None
    incoming: bool = False

    @property
    def nu(self) -> float:
        return abs(self.q.nu_t)

    @property
    def r1(self) -> float:
        return self.q.r_real(1)

    @property
    def r2(self) -> float:
        return self.q.r_real(2)

    @property
    def index_generators(self) -> Tuple[float, float, float, float]:
        r1, r2 = self.r1, self.r2
        return (1.0, 1.0 / r1, (2.0 * r2 - 1.0) / r1, r2 / r1)

    @property
    def first_gap(self) -> float:
        """Smallest nonzero element of the index set, in powers of x."""
        return min(self.r1 * g for g in self.index_generators)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "sink",
            "label": self.q.label,
            "beta": [self.beta.real, self.beta.imag],
            "r1": self.r1,
            "r2": self.r2,
            "index_generators": list(self.index_generators),
            "first_gap": self.first_gap,
            "resonant_order": self.resonant_order,
            "resonant_c": self.resonant_c,
            "profile": self.profile.describe(),
            "incoming": self.incoming,
        }


def sink_beta(q: RadialPoint, b: BoundaryData) -> complex:
    nu = abs(q.nu_t)
    return complex(0.5 * q.r_real(2), float(b.v1(q.y_c)) / (2.0 * nu))


def sink_expansion(q: RadialPoint, b: BoundaryData, profile: Any,
                   y_interval: Optional[Tuple[float, float]] = None,
                   settings: Optional[LegendrianSettings] = None,
                   resonant_c: Optional[float] = None) -> SinkExpansion:
    """
    Assemble the expansion data: slow-branch phase (continued over y_interval
    when nonresonant, the truncated jet when resonant) and beta.

    Raises:
        WrongKind: q is not an outgoing sink
    """
    settings = settings or LegendrianSettings()
    if q.kind != RadialKind.SINK_OR_SOURCE or not q.outgoing:
        raise WrongKind(f"{q.label} is not an outgoing sink", {"label": q.label, "kind": q.kind.value})
    n_jet = max(settings.n_jet, int(math.ceil(1.0 / q.r_real(1))) + 1)
    phase = phase_jet(q, SLOW_BRANCH, b, n_jet, truncate_at_resonance=q.resonant)
    phase = replace(phase, jet_handoff=settings.jet_handoff)
    order = None
    if phase.obstructed_order is not None:
        order = phase.obstructed_order
        if resonant_c is None:
            resonant_c = resonant_constant(phase)
    else:
        half = 0.45 * b.circumference
        lo, hi = y_interval or (q.y_c - half, q.y_c + half)
        phase = continue_phase(phase, (lo, hi), settings)
    return SinkExpansion(q, sink_beta(q, b), phase, profile, resonant_c, order)


def resonant_constant(phase: LegendrePhase) -> float:
    """c = -e_m / (2 nu) with e_m the order-m eikonal defect of the truncated jet."""
    if phase.resonant_defect is None:
        raise MissingResonantC("phase jet is not truncated at a resonance", {"label": phase.base.label})
    return -phase.resonant_defect / (2.0 * phase.nu_t)


def conjugate_sink(exp: SinkExpansion) -> SinkExpansion:
    return replace(exp, incoming=not exp.incoming)


def sink_grid(exp: SinkExpansion, b: BoundaryData, settings: Optional[ExpansionSettings] = None,
              y_half: Optional[float] = None) -> CollarGrid:
    return chart_grid_from_settings(b, exp.q.lam, exp.q.y_c, exp.r1, settings, y_half)


def _front_face_variable(exp: SinkExpansion, grid: CollarGrid) -> np.ndarray:
    if not grid.periodic and abs(grid.chart.rho - exp.r1) < 1e-14:
        return np.broadcast_to(grid.coords, (grid.x.size, grid.coords.size))
    u = grid.chart.offset(grid.x, grid.coords, grid.b.circumference)
    return u / (grid.x ** exp.r1)[:, None]


def _phase_cover(exp: SinkExpansion, grid: CollarGrid) -> np.ndarray:
    """
    Mask of grid columns inside the continued phase curve. A chart grid must
    lie inside it entirely; a polar grid may stick out where the profile vanishes.
    """
    curve = exp.phase.curve
    u = grid.chart.offset(grid.x, grid.coords, grid.b.circumference)
    if curve is None:
        reach = float(np.max(np.abs(u)))
        if exp.resonant_order is None and reach > exp.phase.jet_handoff:
            logger.warning(f"[EXPAND] sink phase is a bare jet on |y - y_c| <= {reach:.3g}")
        return np.ones(u.shape, dtype=bool)
    y = exp.q.y_c + u
    inside = (y >= curve.y_lo - 1e-12) & (y <= curve.y_hi + 1e-12)
    if not grid.periodic and not np.all(inside):
        raise InvalidArgument(f"sink phase is continued over [{curve.y_lo:.4f}, {curve.y_hi:.4f}] only")
    return inside


def _profile_values(exp: SinkExpansion, grid: CollarGrid) -> np.ndarray:
    Y = _front_face_variable(exp, grid)
    logx = np.log(grid.x)[:, None]
    values = np.exp(exp.beta * logx) * exp.profile(Y)
    if exp.resonant_order is not None:
        values = values * np.exp(-1j * exp.resonant_c * Y ** exp.resonant_order * logx)
    return values


def build_sink_eigenfunction(exp: SinkExpansion, grid: CollarGrid, profile_tol: float = 1e-10) -> CollarGrid:
    """
    u = e^{i Phi/x} x^beta u0(Y) on the grid (amplitude frame), times
    x^{-i c Y^m} at a resonance.

    On a polar grid reaching beyond the continued phase the field is returned
    as full values (no factored phase), zero where |u0| <= profile_tol * max|u0|.

    Raises:
        MissingResonantC: resonant sink without a constant c
    """
    if exp.resonant_order is not None and exp.resonant_c is None:
        raise MissingResonantC(f"resonant sink {exp.q.label} needs c", {"order": exp.resonant_order})
    inside = _phase_cover(exp, grid)
    values = _profile_values(exp, grid)
    meta = {**grid.meta, "kind": "sink", "label": exp.q.label, "incoming": exp.incoming,
            "beta": [exp.beta.real, exp.beta.imag], "leading_exponent": exp.beta.real,
            "first_gap": exp.first_gap, "resonant_order": exp.resonant_order}

    if not np.all(inside):
        scale = float(np.max(np.abs(values))) if values.size else 0.0
        if np.any(np.abs(values[~inside]) > profile_tol * scale):
            raise InvalidArgument("sink profile does not vanish outside the continued phase")
        y = grid.physical_y()
        full = np.zeros_like(values)
        phi, _, _ = evaluate_phase(exp.phase, y[inside])
        x = np.broadcast_to(grid.x[:, None], y.shape)[inside]
        full[inside] = np.exp(1j * phi / x) * values[inside]
        if exp.incoming:
            full = np.conj(full)
        return grid.with_values(full, phase=None, meta={**meta, "frame": "field"})

    phase = LegendrePhaseFactor(exp.phase)
    if exp.incoming:
        values = np.conj(values)
        phase = ConjugatePhase(phase)
    return grid.with_values(values, phase=phase, meta=meta)


def effective_gap(exp: SinkExpansion, b: BoundaryData) -> float:
    """
    First correction exponent actually present: odd Taylor terms at y_c give
    r1, otherwise the quartic terms give 2 r1; the D_y^2 term gives 2 r2 - 1.
    """
    jet = exp.phase.jet
    odd = (len(jet) > 3 and abs(jet[3]) > 1e-12) or abs(b.v1(exp.q.y_c, 1)) > 1e-12
    first = exp.r1 if odd else 2.0 * exp.r1
    return min(first, 2.0 * exp.r2 - 1.0, 1.0)
