"""
Model operator on the collar [0, x_max) x circle and the grid functions it acts on.

P_model = (x^2 D_x)^2 + i x^3 D_x + x^2 D_y^2 + V0(y) + x V1(y)
        = -x^2 (theta^2 + d_y^2) + V0(y) + x V1(y),     theta = x d_x.

Fields are stored as amplitudes w with u = exp(i Phi(y) / x) w; the residual is
evaluated in the same frame through the conjugated operator

    e^{-i Phi/x} (P - lam) e^{i Phi/x} w
        = E w + x [2i Phi theta w - i Phi w - 2i Phi' d_y w - i Phi'' w + V1 w]
              + x^2 [-theta^2 w - d_y^2 w],     E = Phi^2 + Phi'^2 + V0 - lam.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import stats

from app.core.constants import TOOL_VERSION, schema_tag
from app.core.errors import InvalidArgument, UnresolvedOscillation
from app.schemas.config import ExpansionSettings
from app.services.boundary_model import BoundaryData
from app.services.legendrian import LegendrePhase, evaluate_phase

logger = logging.getLogger("radialiq.eigenfunction_models")

# Phase increment between neighbouring samples above which a field counts as unresolved (8 per period)
MAX_PHASE_STEP = math.pi / 4


# ========== CHARTS ==========

class ChartKind(str, Enum):
    POLAR = "polar"
    BLOWUP = "blowup"


@dataclass(frozen=True)
class Chart:
    """
    Coordinates of the second grid axis.

    polar:  the boundary coordinate y itself, periodic.
    blowup: Y = (y - y_c) / x^rho on a finite window around y_c.
    """

    kind: ChartKind = ChartKind.POLAR
    y_c: float = 0.0
    rho: float = 0.0

    @classmethod
    def polar(cls) -> "Chart":
        return cls(ChartKind.POLAR)

    @classmethod
    def blowup(cls, y_c: float, rho: float) -> "Chart":
        return cls(ChartKind.BLOWUP, float(y_c), float(rho))

    @property
    def periodic(self) -> bool:
        return self.kind == ChartKind.POLAR

    def physical_y(self, x: np.ndarray, coords: np.ndarray) -> np.ndarray:
        if self.periodic:
            return np.broadcast_to(coords, (x.size, coords.size)).copy()
        return self.y_c + np.outer(x ** self.rho, coords)

    def offset(self, x: np.ndarray, coords: np.ndarray, circumference: float) -> np.ndarray:
        """u = y - y_c on the grid, wrapped to [-P/2, P/2) for polar charts."""
        if self.periodic:
            u = coords - self.y_c
            u = (u + 0.5 * circumference) % circumference - 0.5 * circumference
            return np.broadcast_to(u, (x.size, coords.size)).copy()
        return np.outer(x ** self.rho, coords)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "y_c": self.y_c, "rho": self.rho}


# ========== PHASE FACTORS ==========

@dataclass(frozen=True)
class ConstantPhase:
    """Phi = nu (centers)."""

    nu: float

    def __call__(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float)
        return np.full_like(y, self.nu), np.zeros_like(y), np.zeros_like(y)

    def describe(self) -> Dict[str, Any]:
        return {"type": "constant", "nu": self.nu}


@dataclass(frozen=True)
class QuadraticPhase:
    """Phi = nu + c2 (y - y_c)^2, the exact quadratic phase at a degenerate center."""

    nu: float
    y_c: float
    c2: float

    def __call__(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        u = np.asarray(y, dtype=float) - self.y_c
        return self.nu + self.c2 * u * u, 2.0 * self.c2 * u, np.full_like(u, 2.0 * self.c2)

    def describe(self) -> Dict[str, Any]:
        return {"type": "quadratic", "nu": self.nu, "y_c": self.y_c, "c2": self.c2}


@dataclass(frozen=True)
class LegendrePhaseFactor:
    """A Legendre phase, jet or continued curve."""

    phase: LegendrePhase

    def __call__(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float)
        phi, dphi, ddphi = evaluate_phase(self.phase, y.ravel())
        return phi.reshape(y.shape), dphi.reshape(y.shape), ddphi.reshape(y.shape)

    def describe(self) -> Dict[str, Any]:
        return {
            "type": "legendre",
            "base": self.phase.base.label,
            "branch": self.phase.branch,
            "continued": self.phase.curve is not None,
            "jet": [float(c) for c in self.phase.jet],
        }


@dataclass(frozen=True)
class ConjugatePhase:
    """-Phi: the phase of the complex conjugate field."""

    inner: Any

    def __call__(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        phi, dphi, ddphi = self.inner(y)
        return -phi, -dphi, -ddphi

    def describe(self) -> Dict[str, Any]:
        return {"type": "conjugate", "of": self.inner.describe()}


# ========== GRIDS ==========

@dataclass(frozen=True)
class CollarGrid:
    """
    Samples of a field on a log-uniform x grid times a chart coordinate.
    values[i, j] is the amplitude at (x[i], coords[j]).
    """

    x: np.ndarray
    coords: np.ndarray
    values: np.ndarray
    b: BoundaryData = field(repr=False)
    lam: float
    chart: Chart = field(default_factory=Chart)
    phase: Optional[Any] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.x.ndim != 1 or self.coords.ndim != 1:
            raise InvalidArgument("grid axes must be one-dimensional")
        if self.values.shape != (self.x.size, self.coords.size):
            raise InvalidArgument(f"values shape {self.values.shape} does not match grid")
        if np.any(self.x <= 0) or np.any(np.diff(self.x) <= 0):
            raise InvalidArgument("x samples must be positive and increasing")
        if np.any(np.diff(self.coords) <= 0):
            raise InvalidArgument("grid spacings must be positive")

    @property
    def s(self) -> np.ndarray:
        return np.log(self.x)

    @property
    def ds(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def dcoord(self) -> float:
        return float(self.coords[1] - self.coords[0])

    @property
    def periodic(self) -> bool:
        return self.chart.periodic

    def physical_y(self) -> np.ndarray:
        return self.chart.physical_y(self.x, self.coords)

    def with_values(self, values: np.ndarray, **changes) -> "CollarGrid":
        return replace(self, values=np.asarray(values, dtype=complex), **changes)

    def field_values(self) -> np.ndarray:
        """Full field u = exp(i Phi / x) w."""
        if self.phase is None:
            return self.values
        phi, _, _ = self.phase(self.physical_y())
        return np.exp(1j * phi / self.x[:, None]) * self.values

    def header(self) -> Dict[str, Any]:
        return {
            "schema": schema_tag("field"),
            "tool_version": TOOL_VERSION,
            "n_x": int(self.x.size),
            "n_y": int(self.coords.size),
            "x_min": float(self.x[0]),
            "x_max": float(self.x[-1]),
            "coord_min": float(self.coords[0]),
            "coord_max": float(self.coords[-1]),
            "chart": self.chart.to_dict(),
            "lambda": self.lam,
            "phase": None if self.phase is None else self.phase.describe(),
            "meta": self.meta,
        }


def _log_axis(n_x: int, x_min: float, x_max: float) -> np.ndarray:
    if not 0 < x_min < x_max:
        raise InvalidArgument("need 0 < x_min < x_max")
    return np.exp(np.linspace(math.log(x_min), math.log(x_max), n_x))


def polar_grid(b: BoundaryData, lam: float, n_x: int, n_y: int,
               x_min: float, x_max: float) -> CollarGrid:
    """Zero field on log-uniform x times the full periodic circle."""
    x = _log_axis(n_x, x_min, x_max)
    y = np.arange(n_y) * (b.circumference / n_y)
    return CollarGrid(x, y, np.zeros((n_x, n_y), dtype=complex), b, lam, Chart.polar())


def chart_grid(b: BoundaryData, lam: float, y_c: float, rho: float, n_x: int, n_y: int,
               x_min: float, x_max: float, y_half: float) -> CollarGrid:
    """Zero field on log-uniform x times Y in [-y_half, y_half], y = y_c + x^rho Y."""
    x = _log_axis(n_x, x_min, x_max)
    Y = np.linspace(-y_half, y_half, n_y)
    return CollarGrid(x, Y, np.zeros((n_x, n_y), dtype=complex), b, lam, Chart.blowup(y_c, rho))


def chart_grid_from_settings(b: BoundaryData, lam: float, y_c: float, rho: float,
                             settings: Optional[ExpansionSettings] = None,
                             y_half: Optional[float] = None) -> CollarGrid:
    settings = settings or ExpansionSettings()
    return chart_grid(b, lam, y_c, rho, settings.n_x, settings.n_y, settings.x_min, settings.x_max,
                      y_half if y_half is not None else settings.y_half_width)


# ========== DIFFERENCES ==========

def fd_derivative(F: np.ndarray, h: float, axis: int) -> np.ndarray:
    """4th-order central first derivative; the two samples at each end are NaN."""
    F = np.moveaxis(np.asarray(F, dtype=complex), axis, 0)
    out = np.full(F.shape, np.nan + 0j)
    out[2:-2] = (F[:-4] - 8.0 * F[1:-3] + 8.0 * F[3:-1] - F[4:]) / (12.0 * h)
    return np.moveaxis(out, 0, axis)


def spectral_derivative(F: np.ndarray, period: float, axis: int) -> np.ndarray:
    n = F.shape[axis]
    k = 2j * math.pi * np.fft.fftfreq(n, d=period / n)
    if n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * F.ndim
    shape[axis] = n
    return np.fft.ifft(k.reshape(shape) * np.fft.fft(F, axis=axis), axis=axis)


# ========== MODEL OPERATOR ==========

@dataclass(frozen=True)
class ModelOperator:
    b: BoundaryData
    lam: float

    def symbol(self, y, nu, mu):
        """Principal symbol at x = 0: nu^2 + mu^2 + V0(y)."""
        return np.asarray(nu) ** 2 + np.asarray(mu) ** 2 + self.b.v0(y)

    def _d_coord(self, grid: CollarGrid, F: np.ndarray) -> np.ndarray:
        if grid.periodic:
            return spectral_derivative(F, self.b.circumference, axis=1)
        return fd_derivative(F, grid.dcoord, axis=1)

    def apply(self, grid: CollarGrid) -> np.ndarray:
        """
        e^{-i Phi/x} (P_model - lam) u for u = e^{i Phi/x} w, on the grid.
        Samples whose stencils leave the grid are NaN.
        """
        w = grid.values
        x = grid.x[:, None]
        rho = 0.0 if grid.periodic else grid.chart.rho
        coord = grid.coords[None, :]
        scale = x ** (-rho)
        y = grid.physical_y()

        def theta(F):
            out = fd_derivative(F, grid.ds, axis=0)
            if rho:
                out = out - rho * coord * self._d_coord(grid, F)
            return out

        def d_y(F):
            return scale * self._d_coord(grid, F)

        t1 = theta(w)
        dy1 = d_y(w)
        second = -theta(t1) - d_y(dy1)
        v0 = self.b.v0(y)
        v1 = self.b.v1(y)
        if grid.phase is None:
            return (v0 - self.lam) * w + x * v1 * w + x * x * second

        phi, dphi, ddphi = grid.phase(y)
        eik = phi ** 2 + dphi ** 2 + v0 - self.lam
        bracket = 2j * phi * t1 - 1j * phi * w - 2j * dphi * dy1 - 1j * ddphi * w + v1 * w
        return eik * w + x * bracket + x * x * second


# ========== RESIDUALS ==========

@dataclass(frozen=True)
class ResidualReport:
    x: np.ndarray
    shell_norm: np.ndarray
    slope: float
    intercept: float
    stderr: float
    band: Tuple[float, float]
    fit_range: Tuple[float, float]
    n_fit: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "band95": list(self.band),
            "fit_range": list(self.fit_range),
            "n_fit": self.n_fit,
            "shells": [[float(a), float(b)] for a, b in zip(self.x, self.shell_norm) if np.isfinite(b)],
        }


def check_resolution(grid: CollarGrid, max_step: float = MAX_PHASE_STEP, max_fraction: float = 0.01) -> None:
    """
    Raise UnresolvedOscillation when more than max_fraction of neighbouring
    sample pairs (where the field is not negligible) turn by more than max_step.
    """
    w = grid.values
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if scale == 0.0:
        return
    live = np.abs(w) > 1e-6 * scale
    pairs = [(w[1:, :], w[:-1, :], live[1:, :] & live[:-1, :]),
             (w[:, 1:], w[:, :-1], live[:, 1:] & live[:, :-1])]
    if grid.periodic:
        pairs.append((w[:, :1], w[:, -1:], live[:, :1] & live[:, -1:]))
    for a, b, mask in pairs:
        if not np.any(mask):
            continue
        turn = np.abs(np.angle(a[mask] * np.conj(b[mask])))
        fraction = float(np.mean(turn > max_step))
        if fraction > max_fraction:
            raise UnresolvedOscillation(
                f"{fraction:.1%} of sample pairs turn by more than {max_step:.3f} rad",
                {"fraction": fraction, "max_turn": float(turn.max())},
            )


def shell_norms(grid: CollarGrid, values: np.ndarray) -> np.ndarray:
    """l2 norm over the chart coordinate, per x shell; NaN where stencils are incomplete."""
    finite = np.all(np.isfinite(values), axis=0)
    rows = np.all(np.isfinite(values[:, finite]), axis=1)
    out = np.full(grid.x.size, np.nan)
    out[rows] = np.sqrt(np.sum(np.abs(values[rows][:, finite]) ** 2, axis=1) * grid.dcoord)
    return out


def fit_log_slope(x: np.ndarray, norms: np.ndarray,
                  fit_range: Optional[Tuple[float, float]] = None) -> Tuple[float, float, float, Tuple[float, float], Tuple[float, float], int]:
    lo, hi = fit_range or (float(x[0]), float(x[-1]))
    keep = np.isfinite(norms) & (norms > 0) & (x >= lo) & (x <= hi)
    if np.count_nonzero(keep) < 3:
        raise InvalidArgument("fewer than three shells with a nonzero residual in the fit range")
    fit = stats.linregress(np.log(x[keep]), np.log(norms[keep]))
    n = int(np.count_nonzero(keep))
    half = float(stats.t.ppf(0.975, n - 2) * fit.stderr)
    return (float(fit.slope), float(fit.intercept), float(fit.stderr),
            (float(fit.slope) - half, float(fit.slope) + half), (lo, hi), n)


def residual(grid: CollarGrid, fit_range: Optional[Tuple[float, float]] = None) -> ResidualReport:
    """
    Per-shell l2 norm of (P_model - lam) u and its least-squares log-log slope.

    Raises:
        UnresolvedOscillation: fewer than 8 samples per local oscillation
    """
    check_resolution(grid)
    res = ModelOperator(grid.b, grid.lam).apply(grid)
    norms = shell_norms(grid, res)
    slope, intercept, stderr, band, used, n = fit_log_slope(grid.x, norms, fit_range)
    logger.debug(f"[EXPAND] residual slope {slope:.4f} +/- {stderr:.2e}",
                 extra={"details": {"n_fit": n, "fit_range": list(used)}})
    return ResidualReport(grid.x, norms, slope, intercept, stderr, band, used, n)


def envelope_exponent(grid: CollarGrid, fit_range: Optional[Tuple[float, float]] = None,
                      field: bool = True) -> float:
    """Log-log slope of the per-shell sup of |u| (or of |w|)."""
    data = np.abs(grid.field_values() if field else grid.values)
    sup = np.max(data, axis=1)
    slope, *_ = fit_log_slope(grid.x, sup, fit_range)
    return slope


# ========== FIELD BLOCKS ==========

def write_field_block(grid: CollarGrid, path: str, full_field: bool = False) -> Dict[str, Any]:
    """
    One JSON header line, then n_x * n_y (re, im) pairs of little-endian f64,
    row-major with the chart coordinate varying fastest.
    """
    header = grid.header()
    header["values"] = "field" if full_field else "amplitude"
    header["layout"] = "json-line + <f8 (re, im) pairs, row-major, y fastest"
    header["x"] = [float(v) for v in grid.x]
    header["coords"] = [float(v) for v in grid.coords]
    data = grid.field_values() if full_field else grid.values
    pairs = np.empty(data.shape + (2,), dtype="<f8")
    pairs[..., 0] = data.real
    pairs[..., 1] = data.imag
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode() + b"\n")
        f.write(pairs.tobytes(order="C"))
    return header


def read_field_block(path: str) -> Tuple[Dict[str, Any], np.ndarray]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        raw = np.frombuffer(f.read(), dtype="<f8")
    pairs = raw.reshape(header["n_x"], header["n_y"], 2)
    return header, pairs[..., 0] + 1j * pairs[..., 1]


def write_field_csv(grid: CollarGrid, path: str, full_field: bool = False) -> None:
    data = grid.field_values() if full_field else grid.values
    xs = np.repeat(grid.x, grid.coords.size)
    cs = np.tile(grid.coords, grid.x.size)
    table = np.column_stack([xs, cs, data.real.ravel(), data.imag.ravel()])
    np.savetxt(path, table, delimiter=",", header="x,coord,re,im", comments="", fmt="%.17g")
