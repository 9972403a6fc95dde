"""
Boundary model: the boundary jet (V0, V1, circumference) of an order-zero
potential, its critical points and the spectral thresholds derived from them.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from scipy.optimize import brentq

from app.core.errors import NoConvergence, NotMorse, ProblemFileError
from app.schemas.config import BoundarySettings
from app.schemas.problem import ProblemFile

logger = logging.getLogger("radialiq.boundary_model")

# Offset of the scan grid in units of the spacing; keeps samples off symmetric roots
_SCAN_OFFSET = 0.3819660112501051


class CriticalKind(str, Enum):
    MINIMUM = "minimum"
    MAXIMUM = "maximum"


class EnergyRange(str, Enum):
    BELOW_KAPPA = "below_kappa"
    NEAR_MINIMUM = "near_minimum"
    HESSIAN_RANGE = "hessian_range"
    MIXED_RANGE = "mixed_range"
    ABOVE_THRESHOLDS = "above_thresholds"
    TRANSITION = "transition"


# ========== FOURIER JETS ==========

def _normalize_terms(terms: Iterable[Sequence[float]]) -> Tuple[Tuple[int, float, float], ...]:
    merged = {}
    for k, a, b in terms:
        k = int(k)
        a0, b0 = merged.get(k, (0.0, 0.0))
        merged[k] = (a0 + float(a), b0 + (0.0 if k == 0 else float(b)))
    return tuple((k, a, b) for k, (a, b) in sorted(merged.items()) if a != 0.0 or b != 0.0)


@dataclass(frozen=True)
class FourierJet:
    """A real finite Fourier series in theta = y / L with exact y-derivatives."""

    terms: Tuple[Tuple[int, float, float], ...]
    length_scale: float
    _k: np.ndarray = field(init=False, repr=False, compare=False)
    _c: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ks = np.array([t[0] for t in self.terms], dtype=float)
        # c_k = a_k - i b_k so that V = Re sum c_k e^{ik theta}
        cs = np.array([t[1] - 1j * t[2] for t in self.terms], dtype=complex)
        object.__setattr__(self, "_k", ks)
        object.__setattr__(self, "_c", cs)

    @property
    def max_mode(self) -> int:
        return int(self._k.max()) if self._k.size else 0

    @property
    def is_zero(self) -> bool:
        return len(self.terms) == 0

    def __call__(self, y, order: int = 0):
        """Value of the order-th y-derivative; accepts scalars or arrays."""
        y_arr = np.asarray(y, dtype=float)
        if self.is_zero:
            return np.zeros_like(y_arr) if y_arr.ndim else 0.0
        wave = (1j * self._k / self.length_scale) ** order * self._c
        phase = np.exp(1j * np.multiply.outer(y_arr / self.length_scale, self._k))
        out = np.real(phase @ wave)
        return out if y_arr.ndim else float(out)

    def scalar(self, y: float, order: int = 0) -> float:
        """Fast path for the integrator: plain float arithmetic."""
        total = 0.0
        L = self.length_scale
        shift = order * 0.5 * math.pi
        for k, a, b in self.terms:
            if k == 0:
                if order == 0:
                    total += a
                continue
            w = k / L
            ang = w * y + shift
            total += w ** order * (a * math.cos(ang) + b * math.sin(ang))
        return total

    def taylor(self, y0: float, order: int) -> np.ndarray:
        """Taylor coefficients d^m/dy^m V(y0) / m! for m = 0..order."""
        return np.array([self(y0, m) / math.factorial(m) for m in range(order + 1)])

    def mean(self) -> float:
        return sum(a for k, a, _ in self.terms if k == 0)

    def fourier_grid_coefficients(self, n: int) -> np.ndarray:
        """Coefficients in numpy FFT order for a grid of n points on [0, 2 pi L)."""
        out = np.zeros(n, dtype=complex)
        for k, a, b in self.terms:
            c = a - 1j * b
            if k == 0:
                out[0] += a
                continue
            out[k % n] += 0.5 * c
            out[(-k) % n] += 0.5 * np.conj(c)
        return out


# ========== DOMAIN TYPES ==========

@dataclass(frozen=True)
class BoundaryData:
    """Boundary jet of the potential: V0 = V|_Y, V1 = dV/dx at x=0, and the arclength."""

    v0_coeffs: Tuple[Tuple[int, float, float], ...]
    v1_coeffs: Tuple[Tuple[int, float, float], ...] = ()
    circumference: float = 2 * math.pi
    v0: FourierJet = field(init=False, repr=False, compare=False)
    v1: FourierJet = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.circumference > 0:
            raise ProblemFileError("circumference must be positive", {"circumference": self.circumference})
        v0c = _normalize_terms(self.v0_coeffs)
        v1c = _normalize_terms(self.v1_coeffs)
        object.__setattr__(self, "v0_coeffs", v0c)
        object.__setattr__(self, "v1_coeffs", v1c)
        scale = self.circumference / (2 * math.pi)
        object.__setattr__(self, "v0", FourierJet(v0c, scale))
        object.__setattr__(self, "v1", FourierJet(v1c, scale))

    @property
    def length_scale(self) -> float:
        return self.circumference / (2 * math.pi)

    @classmethod
    def from_problem(cls, problem: ProblemFile) -> "BoundaryData":
        return cls(tuple(problem.v0), tuple(problem.v1), problem.circumference)

    def to_problem(self, name: str = "") -> ProblemFile:
        return ProblemFile(v0=list(self.v0_coeffs), v1=list(self.v1_coeffs),
                           circumference=self.circumference, name=name)

    def shifted(self, c: float) -> "BoundaryData":
        """V0 + c."""
        return BoundaryData(self.v0_coeffs + ((0, c, 0.0),), self.v1_coeffs, self.circumference)

    def translated(self, d: float) -> "BoundaryData":
        """V0(y - d) and V1(y - d)."""
        def move(terms):
            out = []
            for k, a, b in terms:
                t = k * d / self.length_scale
                out.append((k, a * math.cos(t) - b * math.sin(t), a * math.sin(t) + b * math.cos(t)))
            return tuple(out)
        return BoundaryData(move(self.v0_coeffs), move(self.v1_coeffs), self.circumference)


@dataclass(frozen=True)
class CriticalPoint:
    y_c: float
    kind: CriticalKind
    value: float
    hessian: float
    v1: float


@dataclass(frozen=True)
class Thresholds:
    kappa: float
    k_sup: float
    cv: Tuple[float, ...]
    hess: Tuple[Tuple[CriticalPoint, float], ...]

    def hess_for(self, cp: CriticalPoint) -> float:
        for point, value in self.hess:
            if point == cp:
                return value
        raise KeyError(cp)

    @property
    def lambda_hess(self) -> float:
        """lambda_Hess at the global minimum (the transition point of the range report)."""
        point, value = min(self.hess, key=lambda item: item[0].value)
        return value


def load_problem(path: str) -> BoundaryData:
    """Read and validate a JSON problem file."""
    try:
        with open(path, "r") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ProblemFileError(f"Problem file not found: {path}", {"path": path})
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"Problem file is not valid JSON: {exc}", {"path": path})
    try:
        return BoundaryData.from_problem(ProblemFile.model_validate(raw))
    except ValidationError as exc:
        raise ProblemFileError("Invalid problem file", {"path": path, "errors": exc.errors(include_url=False)})


# ========== CRITICAL POINTS ==========

def _polish(b: BoundaryData, y: float, root_tol: float) -> float:
    for _ in range(50):
        d2 = b.v0(y, 2)
        if d2 == 0.0:
            break
        step = b.v0(y, 1) / d2
        y -= step
        if abs(step) <= root_tol:
            break
    return y


def find_critical_points(b: BoundaryData, settings: Optional[BoundarySettings] = None) -> List[CriticalPoint]:
    """
    All roots of V0' on the circle, sorted by position, alternating min/max.

    Raises:
        NotMorse: a root with |V0''| <= morse_tol, a degenerate touching root, or constant V0
        NoConvergence: isolated roots fail the alternation/count checks
    """
    settings = settings or BoundarySettings()
    period = b.circumference
    kmax = b.v0.max_mode
    if kmax == 0:
        raise NotMorse("V0 is constant", {"max_abs_dV0": 0.0})

    n = settings.scan_factor * kmax
    h = period / n
    ys = (np.arange(n) + _SCAN_OFFSET) * h
    d1 = b.v0(ys, 1)
    scale = float(np.max(np.abs(d1)))
    if scale <= settings.morse_tol:
        raise NotMorse("V0' vanishes identically", {"max_abs_dV0": scale})

    roots: List[float] = []
    d1_next = np.roll(d1, -1)
    for i in np.nonzero(np.sign(d1) != np.sign(d1_next))[0]:
        lo = ys[i]
        hi = ys[i + 1] if i + 1 < n else ys[0] + period
        if d1[i] == 0.0:
            root = lo
        else:
            try:
                root = brentq(lambda t: b.v0(t, 1), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            except ValueError as exc:
                raise NoConvergence(f"root bracketing failed near y={lo:.6g}", {"error": str(exc)})
        roots.append(_polish(b, root, settings.root_tol) % period)

    # Touching roots of V0' do not change sign; look for local minima of |V0'| near zero
    mag = np.abs(d1)
    local_min = (mag <= np.roll(mag, 1)) & (mag <= np.roll(mag, -1))
    sign_change = (np.sign(d1) != np.sign(d1_next)) | (np.sign(d1) != np.sign(np.roll(d1, 1)))
    for i in np.nonzero(local_min & ~sign_change)[0]:
        if mag[i] > 1e-3 * scale:
            continue
        lo, hi = ys[i] - h, ys[i] + h
        if np.sign(b.v0(lo, 2)) != np.sign(b.v0(hi, 2)):
            y_star = brentq(lambda t: b.v0(t, 2), lo, hi, xtol=1e-15)
        else:
            y_star = ys[i]
        if abs(b.v0(y_star, 1)) <= max(1e-10 * scale, settings.root_tol):
            raise NotMorse(f"degenerate critical point near y={y_star % period:.6g}",
                           {"y": y_star % period, "hessian": float(b.v0(y_star, 2))})

    roots.sort()
    unique: List[float] = []
    for r in roots:
        if unique and abs(r - unique[-1]) < 1e-10:
            continue
        unique.append(r)
    if len(unique) > 1 and period - unique[-1] + unique[0] < 1e-10:
        unique.pop()

    points: List[CriticalPoint] = []
    for y_c in unique:
        if period - y_c < 1e-12:
            y_c = 0.0
        hess = float(b.v0(y_c, 2))
        if abs(hess) <= settings.morse_tol:
            raise NotMorse(f"|V0''| <= morse_tol at y={y_c:.6g}", {"y": y_c, "hessian": hess})
        points.append(CriticalPoint(
            y_c=float(y_c),
            kind=CriticalKind.MINIMUM if hess > 0 else CriticalKind.MAXIMUM,
            value=float(b.v0(y_c)),
            hessian=hess,
            v1=float(b.v1(y_c)),
        ))

    kinds = [p.kind for p in points]
    n_min = kinds.count(CriticalKind.MINIMUM)
    if not points or n_min != len(points) - n_min:
        raise NoConvergence("critical points do not balance", {"count": len(points), "minima": n_min})
    for a, c in zip(kinds, kinds[1:] + kinds[:1]):
        if a == c:
            raise NoConvergence("critical points do not alternate", {"kinds": [k.value for k in kinds]})

    logger.debug(f"[BOUNDARY] {len(points)} critical points", extra={"details": {"y": [p.y_c for p in points]}})
    return points


# ========== THRESHOLDS ==========

def thresholds(b: BoundaryData, settings: Optional[BoundarySettings] = None) -> Thresholds:
    """kappa, K, the critical values and lambda_Hess = V(z) + 2 V''(z) per minimum."""
    points = find_critical_points(b, settings)
    minima = [p for p in points if p.kind == CriticalKind.MINIMUM]
    maxima = [p for p in points if p.kind == CriticalKind.MAXIMUM]
    return Thresholds(
        kappa=min(p.value for p in minima),
        k_sup=max(p.value for p in maxima),
        cv=tuple(sorted(p.value for p in points)),
        hess=tuple((p, p.value + 2.0 * p.hessian) for p in minima),
    )


def energy_range(th: Thresholds, lam: float, tol: float = 1e-9) -> EnergyRange:
    """Place lambda in one of the four non-transition intervals."""
    lh, K = th.lambda_hess, th.k_sup
    if lam < th.kappa - tol:
        return EnergyRange.BELOW_KAPPA
    if any(abs(lam - c) <= tol for c in th.cv) or abs(lam - lh) <= tol:
        return EnergyRange.TRANSITION
    if lam < min(lh, K):
        return EnergyRange.NEAR_MINIMUM
    if lh < lam < K:
        return EnergyRange.HESSIAN_RANGE
    if K < lam < lh:
        return EnergyRange.MIXED_RANGE
    return EnergyRange.ABOVE_THRESHOLDS


def range_report(th: Thresholds) -> List[Tuple[str, float, float]]:
    """The intervals of the four-case report that actually occur, as (name, lo, hi)."""
    lh, K, kappa = th.lambda_hess, th.k_sup, th.kappa
    report = [(EnergyRange.NEAR_MINIMUM.value, kappa, min(lh, K))]
    if lh < K:
        report.append((EnergyRange.HESSIAN_RANGE.value, lh, K))
    elif K < lh:
        report.append((EnergyRange.MIXED_RANGE.value, K, lh))
    report.append((EnergyRange.ABOVE_THRESHOLDS.value, max(lh, K), math.inf))
    return report
