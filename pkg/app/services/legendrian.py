"""
Legendre phases: solutions Phi of the eikonal equation
Phi^2 + (Phi')^2 + V0 - lambda = 0 whose graphs (y, Phi, Phi') are the
W-invariant curves through a radial point. Built as a Taylor jet at the
radial point and continued outward by ODE integration.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import solve_ivp

from app.core.errors import FoldDetected, InvalidArgument, NoConvergence, ResonantObstruction, WrongKind
from app.schemas.config import ClassicalSettings, LegendrianSettings
from app.services.boundary_model import BoundaryData
from app.services.classical import RadialKind, RadialPoint

logger = logging.getLogger("radialiq.legendrian")


@dataclass(frozen=True)
class PhaseCurve:
    """Continued branch: samples plus dense interpolants on each side of y_c."""

    y: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    y_lo: float
    y_hi: float
    left: object = field(default=None, repr=False)
    right: object = field(default=None, repr=False)
    folds: Tuple[float, ...] = ()


@dataclass(frozen=True)
class LegendrePhase:
    base: RadialPoint
    branch: int
    jet: np.ndarray
    b: BoundaryData = field(repr=False)
    curve: Optional[PhaseCurve] = None
    obstructed_order: Optional[int] = None
    resonant_defect: Optional[float] = None
    jet_handoff: float = 1e-2

    @property
    def y_c(self) -> float:
        return self.base.y_c

    @property
    def nu_t(self) -> float:
        return self.base.nu_t

    @property
    def curvature(self) -> float:
        """r_branch = -Phi''(y_c) / nu_t."""
        return -2.0 * self.jet[2] / self.nu_t


# ========== TAYLOR JET ==========

def phase_jet(q: RadialPoint, branch: int, b: BoundaryData, n_jet: int = 8,
              settings: Optional[ClassicalSettings] = None,
              truncate_at_resonance: bool = False) -> LegendrePhase:
    """
    Taylor coefficients c_m of Phi(y_c + u) = sum c_m u^m.

    c0 = nu_t, c1 = 0, c2 = -nu_t r_branch / 2 and for m >= 3
    2 nu_t (1 - m r_branch) c_m = -(v_m + sum c_i c_j + sum d_i d_j)
    where d_k = (k+1) c_{k+1} are the coefficients of Phi'.

    Raises:
        WrongKind: centers and degenerate centers (constant phase only)
        ResonantObstruction: 1 - m r_branch vanishes for some m <= n_jet
    """
    settings = settings or ClassicalSettings()
    if q.kind in (RadialKind.CENTER, RadialKind.DEGENERATE_CENTER):
        raise WrongKind(f"{q.kind.value} carries the constant phase nu_t only", {"label": q.label})
    r = q.r_real(branch)
    nu = q.nu_t
    v = b.v0.taylor(q.y_c, n_jet)

    c = np.zeros(n_jet + 1)
    c[0] = nu
    c[2] = -0.5 * nu * r
    obstructed = None
    defect = None
    for m in range(3, n_jet + 1):
        d = np.arange(1, m) * c[1:m]  # d_0 .. d_{m-2}
        rest = sum(c[i] * c[m - i] for i in range(1, m))
        rest += sum(d[i] * d[m - i] for i in range(2, m - 1))
        factor = 1.0 - m * r
        if abs(factor) <= settings.resonance_tol * max(1.0, abs(m * r)):
            obstructed = m
            defect = float(v[m] + rest)
            if not truncate_at_resonance:
                raise ResonantObstruction(m, details={"branch": branch, "defect": defect})
            logger.info(f"[LEGENDRIAN] jet truncated at resonant order {m}",
                        extra={"details": {"label": q.label, "defect": defect}})
            c = c[:m]
            break
        c[m] = -(v[m] + rest) / (2.0 * nu * factor)

    return LegendrePhase(q, branch, c, b, None, obstructed, defect)


def eikonal_defect_jet(phase: LegendrePhase, order: int) -> np.ndarray:
    """Taylor coefficients of Phi^2 + Phi'^2 + V0 - lambda for the truncated jet."""
    c = phase.jet
    dc = P.polyder(c) if len(c) > 1 else np.zeros(1)
    total = P.polyadd(P.polymul(c, c), P.polymul(dc, dc))
    total = P.polyadd(total, phase.b.v0.taylor(phase.y_c, order))
    total[0] -= phase.base.lam
    out = np.zeros(order + 1)
    n = min(order + 1, len(total))
    out[:n] = total[:n]
    return out


# ========== ODE CONTINUATION ==========

def _rhs(b: BoundaryData):
    def f(y, s):
        phi, mu = s
        return [mu, -(b.v0.scalar(y, 1) + 2.0 * phi * mu) / (2.0 * mu)]
    return f


def continue_phase(phase: LegendrePhase, y_interval: Tuple[float, float],
                   settings: Optional[LegendrianSettings] = None,
                   n_samples: int = 401, strict: bool = False) -> LegendrePhase:
    """
    Integrate the invariant curve as a graph over y, starting from the jet
    at |y - y_c| = jet_handoff. A fold (|dy/dt| = 2|Phi'| < fold_tol)
    truncates the curve on that side.

    Raises:
        FoldDetected: only with strict=True
        NoConvergence: eikonal residual above eik_tol on the samples
    """
    settings = settings or LegendrianSettings()
    if len(phase.jet) < 5:
        logger.warning(f"[LEGENDRIAN] continuing a jet of order {len(phase.jet) - 1} (< 4)")
    lo, hi = y_interval
    yc = phase.y_c
    h = settings.jet_handoff
    if not lo < yc < hi:
        raise InvalidArgument("y_interval must contain y_c")
    rhs = _rhs(phase.b)

    def fold_event(y, s):
        return 2.0 * abs(s[1]) - settings.fold_tol
    fold_event.terminal = True

    def side(end: float):
        if abs(end - yc) <= h:
            return None, end
        u0 = math.copysign(h, end - yc)
        start = [float(P.polyval(u0, phase.jet)), float(P.polyval(u0, P.polyder(phase.jet)))]
        sol = solve_ivp(rhs, (yc + u0, end), start, method="DOP853", rtol=settings.ode_rtol,
                        atol=settings.ode_atol, dense_output=True, events=fold_event)
        if sol.status == -1:
            raise NoConvergence(f"phase continuation failed: {sol.message}")
        reached = float(sol.t[-1])
        return sol, reached

    left, y_lo = side(lo)
    right, y_hi = side(hi)
    folds = tuple(y for y, want in ((y_lo, lo), (y_hi, hi)) if abs(y - want) > 1e-12)
    if folds:
        logger.warning(f"[LEGENDRIAN] fold detected, curve truncated",
                       extra={"details": {"label": phase.base.label, "branch": phase.branch, "at": list(folds)}})
        if strict:
            raise FoldDetected(f"curve ceases to be a graph at {folds}", {"at": list(folds)})

    curve = PhaseCurve(np.array([]), np.array([]), np.array([]), y_lo, y_hi, left, right, folds)
    continued = replace(phase, curve=curve, jet_handoff=h)
    ys = np.linspace(y_lo, y_hi, n_samples)
    phi, dphi, _ = evaluate_phase(continued, ys)
    curve = replace(curve, y=ys, phi=phi, dphi=dphi)
    continued = replace(continued, curve=curve)

    res = eikonal_residual(continued)
    if res > settings.eik_tol:
        raise NoConvergence(f"eikonal residual {res:.3e} exceeds eik_tol", {"residual": res})
    return continued


def evaluate_phase(phase: LegendrePhase, y) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (Phi, Phi', Phi'') at y: the jet inside jet_handoff (or everywhere when no
    curve is attached), the continued curve outside, with Phi'' from the
    eikonal ODE.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    u = y - phase.y_c
    c = phase.jet
    d1 = P.polyder(c)
    d2 = P.polyder(c, 2)
    phi = P.polyval(u, c)
    dphi = P.polyval(u, d1)
    ddphi = P.polyval(u, d2)
    curve = phase.curve
    if curve is None:
        return phi, dphi, ddphi

    outside = np.abs(u) > phase.jet_handoff
    if np.any(outside & ((y < curve.y_lo - 1e-12) | (y > curve.y_hi + 1e-12))):
        raise InvalidArgument("evaluation outside the continued curve")
    for sol, mask in ((curve.left, outside & (u < 0)), (curve.right, outside & (u > 0))):
        if sol is None or not np.any(mask):
            continue
        states = sol.sol(y[mask])
        phi[mask] = states[0]
        dphi[mask] = states[1]
        ddphi[mask] = -(phase.b.v0(y[mask], 1) + 2.0 * states[0] * states[1]) / (2.0 * states[1])
    return phi, dphi, ddphi


def eikonal_residual(phase: LegendrePhase, y=None) -> float:
    """max |Phi^2 + Phi'^2 + V0 - lambda| on the curve samples (or on y)."""
    if y is None:
        if phase.curve is None or phase.curve.y.size == 0:
            y = phase.y_c + np.linspace(-phase.jet_handoff, phase.jet_handoff, 41)
        else:
            y = phase.curve.y
    phi, dphi, _ = evaluate_phase(phase, y)
    return float(np.max(np.abs(phi ** 2 + dphi ** 2 + phase.b.v0(np.asarray(y)) - phase.base.lam)))


def jet_consistency(phase: LegendrePhase, window: float = 0.1, degree: int = 12,
                    max_order: int = 4, n: int = 241) -> np.ndarray:
    """
    Taylor coefficients recovered from the continued curve (outside the jet
    region) by a least-squares polynomial fit, minus the jet coefficients,
    for orders 0..max_order.
    """
    if phase.curve is None:
        raise InvalidArgument("phase has no continued curve")
    u = np.linspace(-window, window, n)
    u = u[np.abs(u) > phase.jet_handoff]
    phi, _, _ = evaluate_phase(phase, phase.y_c + u)
    scaled = P.polyfit(u / window, phi, degree)
    recovered = scaled[: max_order + 1] / window ** np.arange(max_order + 1)
    jet = np.zeros(max_order + 1)
    k = min(len(phase.jet), max_order + 1)
    jet[:k] = phase.jet[:k]
    return recovered - jet
