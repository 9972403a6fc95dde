"""
Saddle expansions.

Near an outgoing saddle q write u = e^{i Phi/x} x^beta W with Phi the Legendre
phase of branch b (curvature rho = r_b) and beta = (1 - rho)/2 + i V1(y_c)/(2 nu).
The conjugated operator is then

    x^{-beta-1} e^{-i Phi/x} (P - lam) e^{i Phi/x} x^beta W = E/x W + B W + x X W,
    B = 2i Phi (theta + beta) - i Phi - 2i Phi' d_y - i Phi'' + V1,
    X = -(theta + beta)^2 - d_y^2,

whose principal part on x^a u^m is 2i nu (a + rho m). Outgoing models v_n start
from (u x^{-r1})^n (branch 1), incoming models w_n from (u x^{-r2})^n (branch 2);
corrections are solved term by term in a generalized power series
sum c_{j,m} x^{j - n rho} u^m.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline, RectBivariateSpline

from app.core.errors import CharacteristicEscape, InvalidArgument, NoConvergence, ResonantExponent, WrongKind
from app.schemas.config import ClassicalSettings, ExpansionSettings
from app.services.boundary_model import BoundaryData
from app.services.classical import RadialKind, RadialPoint
from app.services.eigenfunction_models.operator import (
    CollarGrid,
    LegendrePhaseFactor,
    chart_grid,
    fd_derivative,
    spectral_derivative,
)
from app.services.legendrian import LegendrePhase, phase_jet

logger = logging.getLogger("radialiq.eigenfunction_models.saddle")

Key = Tuple[int, int, int]


class SaddleDirection(str, Enum):
    OUTGOING = "outgoing"
    INCOMING = "incoming"

    @property
    def branch(self) -> int:
        return 1 if self == SaddleDirection.OUTGOING else 2


# ========== GENERALIZED POWER SERIES ==========

@dataclass(frozen=True)
class GeneralizedSeries:
    """
    sum c[(p, q, m)] x^{p + q rho} u^m with exponents kept as exact lattice
    pairs (p, q); only rho itself is floating point.
    """

    rho: float
    coeffs: Dict[Key, complex] = field(default_factory=dict)

    def exponent(self, key: Key) -> float:
        return key[0] + key[1] * self.rho

    def __len__(self) -> int:
        return len(self.coeffs)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.coeffs.values())

    def max_abs(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def keys_sorted(self) -> List[Key]:
        return sorted(self.coeffs, key=lambda k: (self.exponent(k), k[2]))

    def evaluate(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Values at broadcastable x and u arrays."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        groups: Dict[Tuple[int, int], Dict[int, complex]] = {}
        for (p, q, m), c in self.coeffs.items():
            groups.setdefault((p, q), {})[m] = c
        out = np.zeros(np.broadcast(x, u).shape, dtype=complex)
        for (p, q), terms in groups.items():
            poly = np.zeros(max(terms) + 1, dtype=complex)
            for m, c in terms.items():
                poly[m] = c
            out = out + x ** (p + q * self.rho) * np.polynomial.polynomial.polyval(u, poly)
        return out

    def to_list(self) -> List[List[float]]:
        return [[p, q, m, c.real, c.imag] for (p, q, m), c in
                ((k, complex(self.coeffs[k])) for k in self.keys_sorted())]


def apply_model_operator(series: GeneralizedSeries, nu: float) -> GeneralizedSeries:
    """
    P0~ = x T with T = -2 nu (theta + rho u d_u). On x^{p + q rho} u^m the
    factor is -2 nu (p + rho (q + m)); p = 0, q + m = 0 is an exact zero.
    """
    out: Dict[Key, complex] = {}
    for (p, q, m), c in series.coeffs.items():
        if p == 0 and q + m == 0:
            continue
        value = -2.0 * nu * (p + series.rho * (q + m)) * c
        if value != 0:
            out[(p + 1, q, m)] = value
    return GeneralizedSeries(series.rho, out)


def kernel_monomial(n: int, rho: float) -> GeneralizedSeries:
    """(u x^{-rho})^n."""
    return GeneralizedSeries(rho, {(0, -n, n): 1.0 + 0j})


# ========== POWER SERIES IN u ==========

def _pad(c: Sequence[complex], order: int) -> np.ndarray:
    out = np.zeros(order + 1, dtype=complex)
    c = np.asarray(c, dtype=complex)[: order + 1]
    out[: c.size] = c
    return out


def _mul(a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    return _pad(np.convolve(a, b), order)


def _inv(c: np.ndarray, order: int) -> np.ndarray:
    c = _pad(c, order)
    if c[0] == 0:
        raise ZeroDivisionError("series with zero constant term")
    out = np.zeros(order + 1, dtype=complex)
    out[0] = 1.0 / c[0]
    for k in range(1, order + 1):
        out[k] = -np.dot(c[1: k + 1], out[k - 1:: -1][:k]) / c[0]
    return out


def _exp(f: np.ndarray, order: int) -> np.ndarray:
    """exp of a series with f[0] = 0."""
    f = _pad(f, order)
    out = np.zeros(order + 1, dtype=complex)
    out[0] = 1.0
    for k in range(1, order + 1):
        j = np.arange(1, k + 1)
        out[k] = np.dot(j * f[1: k + 1], out[k - 1:: -1][:k]) / k
    return out


def _derivative(c: np.ndarray) -> np.ndarray:
    return np.arange(1, c.size) * c[1:] if c.size > 1 else np.zeros(1, dtype=complex)


@dataclass(frozen=True)
class ConjugationData:
    """
    Jets at y_c of the data conjugating B to its normal form:
    B = 2i Phi [theta + g(u) d_u - beta(u)], g = -Phi'/Phi,
    beta(u) = (Phi + Phi'')/(2 Phi) + i V1/(2 Phi),
    normal-form coordinate u b(u) with g d(u b)/du = rho u b,
    integrating factor f with f' = -i (beta(u) - beta(0)) / g(u).
    """

    branch: int
    rho: float
    beta0: complex
    beta_jet: np.ndarray
    g_jet: np.ndarray
    b_jet: np.ndarray
    f_jet: np.ndarray

    def level_zero(self, n: int, degree: int) -> np.ndarray:
        """Taylor coefficients of e^{i f(u)} (u b(u))^n up to u^degree."""
        ub_n = np.zeros(degree + 1, dtype=complex)
        if n <= degree:
            bn = np.ones(1, dtype=complex)
            for _ in range(n):
                bn = _mul(bn, self.b_jet, degree)
            ub_n[n:] = bn[: degree + 1 - n]
        return _mul(_exp(1j * self.f_jet, degree), ub_n, degree)

    def to_dict(self) -> Dict[str, Any]:
        def cplx(arr):
            return [[complex(v).real, complex(v).imag] for v in arr]
        return {"branch": self.branch, "rho": self.rho,
                "beta": [self.beta0.real, self.beta0.imag],
                "a_jet": cplx(self.g_jet), "b_jet": cplx(self.b_jet), "f_jet": cplx(self.f_jet)}


def conjugation_data(phase: LegendrePhase, v1_taylor: np.ndarray, order: int) -> ConjugationData:
    """
    Raises:
        NoConvergence: the jet does not reproduce beta_0 = (1 - rho)/2 + i V1/(2 nu)
    """
    rho = phase.curvature
    nu = phase.nu_t
    K = order
    c = _pad(phase.jet, K + 2)
    inv_phi = _inv(c, K + 2)
    dphi = _pad(_derivative(c), K + 2)
    ddphi = _pad(_derivative(_derivative(c)), K + 2)
    g = -_mul(dphi, inv_phi, K + 1)
    beta = 0.5 * _mul(c + ddphi, inv_phi, K + 1) + 0.5j * _mul(_pad(v1_taylor, K + 2), inv_phi, K + 1)

    e = np.zeros(K + 2, dtype=complex)
    e[1] = 1.0
    for m in range(2, K + 2):
        acc = sum(g[i] * (m - i + 1) * e[m - i + 1] for i in range(2, m + 1))
        e[m] = -acc / (rho * (m - 1))
    b_jet = e[1:]

    h = beta[1:]
    g_red = g[1:]
    fprime = -1j * _mul(h, _inv(g_red, K), K)
    f = np.zeros(K + 1, dtype=complex)
    f[1:] = fprime[:K] / np.arange(1, K + 1)
    beta0 = complex(beta[0])
    expected = complex((1.0 - rho) / 2.0, v1_taylor[0] / (2.0 * nu))
    if abs(beta0 - expected) >= 1e-9 * max(1.0, abs(beta0)):
        raise NoConvergence("phase jet is not centred on the saddle: beta_0 disagrees with (1 - rho)/2",
                            {"beta0": [beta0.real, beta0.imag], "expected": [expected.real, expected.imag]})
    return ConjugationData(phase.branch, rho, beta0, beta, g, b_jet, f)


# ========== SERIES SOLVE ==========

@dataclass(frozen=True)
class SaddleModel:
    n: int
    series: GeneralizedSeries
    leftover: GeneralizedSeries
    flags: Tuple[Dict[str, Any], ...] = ()

    def level(self, j: int) -> Dict[int, complex]:
        return {m: c for (p, _, m), c in self.series.coeffs.items() if p == j}


class _Bracket:
    """Coefficients of B acting on x^a u^m' and landing on degree m' + d."""

    def __init__(self, jet: np.ndarray, v1_taylor: np.ndarray, beta: complex, nu: float, rho: float):
        self.phi = jet
        self.w = v1_taylor
        self.beta = beta
        self.nu = nu
        self.rho = rho

    def _phi(self, k: int) -> float:
        return float(self.phi[k]) if 0 <= k < len(self.phi) else 0.0

    def _w(self, k: int) -> float:
        return float(self.w[k]) if 0 <= k < len(self.w) else 0.0

    def coef(self, a: float, mp: int, d: int) -> complex:
        ph, ph2 = self._phi(d), self._phi(d + 2)
        return ((2j * (a + self.beta) - 1j) * ph + self._w(d)
                - 2j * mp * (d + 2) * ph2 - 1j * (d + 2) * (d + 1) * ph2)

    def diagonal(self, j: int, m: int, n: int) -> complex:
        # exact: 2i nu (a + rho m) with a = j - n rho
        return 2j * self.nu * (j + self.rho * (m - n))


def _apply_bracket(levels: List[Dict[int, complex]], n: int, br: _Bracket, degree_cap: int) -> Dict[Tuple[int, int], complex]:
    """(B + x X) applied to sum_j x^{j - n rho} levels[j], as {(level, degree): coeff}."""
    out: Dict[Tuple[int, int], complex] = {}
    for j in range(len(levels) + 1):
        a = j - n * br.rho
        cur = levels[j] if j < len(levels) else {}
        for mp, c in cur.items():
            for d in range(0, degree_cap - mp + 1):
                val = br.diagonal(j, mp, n) if d == 0 else br.coef(a, mp, d)
                if val != 0:
                    out[(j, mp + d)] = out.get((j, mp + d), 0j) + val * c
        if j >= 1:
            ap = j - 1 - n * br.rho
            for mp, c in levels[j - 1].items():
                out[(j, mp)] = out.get((j, mp), 0j) - (ap + br.beta) ** 2 * c
                if mp >= 2:
                    out[(j, mp - 2)] = out.get((j, mp - 2), 0j) - mp * (mp - 1) * c
    return out


def _solve_model(n: int, br: _Bracket, order: int, degree: int, resonance_tol: float,
                 strict: bool) -> SaddleModel:
    levels: List[Dict[int, complex]] = []
    flags: List[Dict[str, Any]] = []
    for j in range(order + 1):
        a = j - n * br.rho
        xterm: Dict[int, complex] = {}
        if j >= 1:
            ap = j - 1 - n * br.rho
            for mp, c in levels[j - 1].items():
                xterm[mp] = xterm.get(mp, 0j) - (ap + br.beta) ** 2 * c
                if mp >= 2:
                    xterm[mp - 2] = xterm.get(mp - 2, 0j) - mp * (mp - 1) * c
        level: Dict[int, complex] = {}
        start = n if j == 0 else max(0, n - 2 * j)
        resonant = None
        for m in range(start, degree + 1):
            if j == 0 and m == n:
                level[m] = 1.0 + 0j
                continue
            rhs = xterm.get(m, 0j)
            for mp, c in level.items():
                if mp < m:
                    rhs += br.coef(a, mp, m - mp) * c
            exponent = j + br.rho * (m - n)
            if abs(exponent) <= resonance_tol * max(1.0, j + abs(br.rho * (m - n))):
                if rhs == 0:
                    level[m] = 0j
                    continue
                resonant = exponent
                flags.append({"level": j, "degree": m, "exponent": exponent})
                break
            level[m] = -rhs / br.diagonal(j, m, n)
        if resonant is not None:
            if strict:
                raise ResonantExponent(resonant, details={"n": n, "level": j})
            logger.warning(f"[EXPAND] saddle model n={n} truncated at resonant level {j}",
                           extra={"details": {"exponent": resonant}})
            break
        levels.append(level)

    series = GeneralizedSeries(br.rho, {(j, -n, m): c for j, lv in enumerate(levels) for m, c in lv.items()})
    applied = _apply_bracket(levels, n, br, degree + 2)
    scale = max(1.0, series.max_abs())
    leftover = {(j, -n, m): c for (j, m), c in applied.items()
                if abs(c) > 1e-12 * scale and (j >= len(levels) or m > degree)}
    return SaddleModel(n, series, GeneralizedSeries(br.rho, leftover), tuple(flags))


def coefficient_residual(model: SaddleModel, series: "SaddleSeries") -> GeneralizedSeries:
    """(B + x X) W_n restricted to the solved range; zero up to rounding."""
    br = series.bracket()
    levels = [model.level(j) for j in range(1 + max((k[0] for k in model.series.coeffs), default=0))]
    applied = _apply_bracket(levels, model.n, br, series.degree)
    return GeneralizedSeries(series.rho, {(j, -model.n, m): c for (j, m), c in applied.items()
                                          if j < len(levels) and m <= series.degree})


@dataclass(frozen=True)
class SaddleSeries:
    q: RadialPoint
    direction: SaddleDirection
    rho: float
    beta: complex
    phase: LegendrePhase
    v1_taylor: np.ndarray
    models: Tuple[SaddleModel, ...]
    conj: ConjugationData
    order: int
    degree: int
    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    @property
    def nu(self) -> float:
        return self.q.nu_t

    def bracket(self) -> _Bracket:
        return _Bracket(self.phase.jet, self.v1_taylor, self.beta, self.nu, self.rho)

    def with_coeffs(self, coeffs: Sequence[complex]) -> "SaddleSeries":
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.size > len(self.models):
            raise InvalidArgument(f"{coeffs.size} coefficients for {len(self.models)} models")
        return replace(self, coeffs=coeffs)

    def leading_exponent(self, n: int, chart_rho: float) -> float:
        """Exponent of |u_n| in a chart u = x^chart_rho Y."""
        return self.beta.real + n * (chart_rho - self.rho)

    def predicted_gap(self, n: int, chart_rho: float) -> float:
        """
        First correction exponent of the residual over its leading order x^{sigma+1}:
        from the unsolved terms of the series and from the eikonal defect of the jet.
        """
        model = self.models[n]
        gaps = [j + chart_rho * (m - n) for (j, _, m) in model.leftover.coeffs]
        gaps.append(chart_rho * len(self.phase.jet) - 1.0)
        return min(gaps)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "saddle",
            "label": self.q.label,
            "direction": self.direction.value,
            "rho": self.rho,
            "beta": [self.beta.real, self.beta.imag],
            "order": self.order,
            "degree": self.degree,
            "coeffs": [[c.real, c.imag] for c in self.coeffs],
            "conjugation": self.conj.to_dict(),
            "models": [{"n": m.n, "terms": m.series.to_list(), "flags": list(m.flags)} for m in self.models],
        }


def saddle_models(q: RadialPoint, b: BoundaryData, direction: Union[SaddleDirection, str], n_max: int,
                  order: Optional[int] = None, settings: Optional[ExpansionSettings] = None,
                  classical: Optional[ClassicalSettings] = None, strict: bool = False) -> SaddleSeries:
    """
    Generalized power series for v_n (outgoing, branch 1) or w_n (incoming,
    branch 2), n = 0..n_max, with `order` x-corrections and u-degree up to
    saddle_y_degree.

    Raises:
        WrongKind: q is not an outgoing saddle
        ResonantExponent: only with strict=True; otherwise the term is flagged
            and the series truncated at that level
    """
    settings = settings or ExpansionSettings()
    classical = classical or ClassicalSettings()
    direction = SaddleDirection(direction)
    if q.kind != RadialKind.SADDLE or not q.outgoing:
        raise WrongKind(f"{q.label} is not an outgoing saddle", {"kind": q.kind.value})
    order = settings.saddle_order if order is None else order
    degree = max(settings.saddle_y_degree, n_max)
    phase = phase_jet(q, direction.branch, b, degree + 3, classical)
    rho = phase.curvature
    nu = q.nu_t
    v1 = b.v1.taylor(q.y_c, degree + 2)
    beta = complex((1.0 - rho) / 2.0, v1[0] / (2.0 * nu))
    br = _Bracket(phase.jet, v1, beta, nu, rho)
    models = tuple(_solve_model(n, br, order, degree, classical.resonance_tol, strict) for n in range(n_max + 1))
    conj = conjugation_data(phase, v1, degree)
    logger.info(f"[EXPAND] saddle {direction.value} models n<={n_max} at {q.label}",
                extra={"details": {"rho": rho, "beta": [beta.real, beta.imag], "order": order}})
    coeffs = np.zeros(n_max + 1, dtype=complex)
    coeffs[0] = 1.0
    return SaddleSeries(q, direction, rho, beta, phase, v1, models, conj, order, degree, coeffs)


def saddle_grid(series: SaddleSeries, b: BoundaryData, settings: Optional[ExpansionSettings] = None,
                chart_rho: float = 0.5, y_half: float = 2.0) -> CollarGrid:
    settings = settings or ExpansionSettings()
    return chart_grid(b, series.q.lam, series.q.y_c, chart_rho, settings.n_x, settings.n_y,
                      settings.x_min, settings.x_max, y_half)


def build_saddle_eigenfunction(series: SaddleSeries, grid: CollarGrid) -> CollarGrid:
    """x^beta sum_n a_n W_n on the grid (amplitude frame, jet phase factored)."""
    u = grid.chart.offset(grid.x, grid.coords, grid.b.circumference)
    x = grid.x[:, None]
    total = np.zeros(u.shape, dtype=complex)
    for a, model in zip(series.coeffs, series.models):
        if a != 0:
            total += a * model.series.evaluate(x, u)
    values = np.exp(series.beta * np.log(x)) * total
    nz = [n for n, a in enumerate(series.coeffs) if a != 0]
    chart_rho = 0.0 if grid.periodic else grid.chart.rho
    meta = {**grid.meta, "kind": "saddle", "label": series.q.label, "direction": series.direction.value,
            "rho": series.rho, "beta": [series.beta.real, series.beta.imag],
            "leading_exponent": min((series.leading_exponent(n, chart_rho) for n in nz), default=None),
            "modes": nz}
    return grid.with_values(values, phase=LegendrePhaseFactor(series.phase), meta=meta)


# ========== TRANSPORT ==========

@dataclass(frozen=True)
class TransportResult:
    solution: CollarGrid
    defect: float
    ok: bool


class _Sampler:
    """Cubic tensor-spline sampler of a grid function in (s, chart coordinate)."""

    PAD = 4

    def __init__(self, grid: CollarGrid, values: np.ndarray):
        coords = grid.coords
        if grid.periodic:
            P = grid.b.circumference
            k = self.PAD
            coords = np.concatenate([coords[-k:] - P, coords, coords[:k] + P])
            values = np.concatenate([values[:, -k:], values, values[:, :k]], axis=1)
        self.re = RectBivariateSpline(grid.s, coords, values.real, kx=3, ky=3)
        self.im = RectBivariateSpline(grid.s, coords, values.imag, kx=3, ky=3)

    def __call__(self, s: np.ndarray, c: np.ndarray) -> np.ndarray:
        return self.re.ev(s, c) + 1j * self.im.ev(s, c)


def _line_sampler(grid: CollarGrid, values: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    coords = grid.coords
    if grid.periodic:
        P = grid.b.circumference
        coords = np.append(coords, coords[0] + P)
        values = np.append(values, values[0])
        re = CubicSpline(coords, values.real, bc_type="periodic")
        im = CubicSpline(coords, values.imag, bc_type="periodic")
    else:
        re = CubicSpline(coords, values.real)
        im = CubicSpline(coords, values.imag)
    return lambda c: re(c) + 1j * im(c)


def transport_defect(v: CollarGrid, f: np.ndarray, r: float, nu: float) -> float:
    """sup |-2 nu (theta + r u d_u) v - f| over samples with complete stencils."""
    u = v.chart.offset(v.x, v.coords, v.b.circumference)
    theta = fd_derivative(v.values, v.ds, axis=0)
    if v.periodic:
        du = spectral_derivative(v.values, v.b.circumference, axis=1)
    else:
        du = fd_derivative(v.values, v.dcoord, axis=1)
    Tv = -2.0 * nu * (theta + r * u * du)
    diff = np.abs(Tv - f)
    return float(np.nanmax(diff)) if np.any(np.isfinite(diff)) else 0.0


def transport_solve(f: CollarGrid, r: float, x0: float,
                    boundary: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]],
                    nu: float, settings: Optional[ExpansionSettings] = None) -> TransportResult:
    """
    Solve x^{-1} P0~ v = f, i.e. -2 nu (theta + r u d_u) v = f, by integrating
    along the characteristics u x^{-r} = const:

        v(x, u) = -(2 nu)^{-1} int_{x0}^{x} f(t, u (t/x)^r) dt/t + v(x0, u (x0/x)^r).

    f lives on a polar grid (u = y - y_c, wrapped) or on a chart with rho = 0;
    interpolation is cubic in both directions and the s-integral is composite
    Simpson on the grid nodes and midpoints.

    Raises:
        CharacteristicEscape: a characteristic leaves a non-periodic window
    """
    settings = settings or ExpansionSettings()
    if r == 0:
        raise InvalidArgument("r must be nonzero")
    if not f.periodic and f.chart.rho != 0.0:
        raise InvalidArgument("transport_solve needs a polar grid or a chart with rho = 0")
    x, s = f.x, f.s
    i0 = int(np.argmin(np.abs(x - x0)))
    if abs(x[i0] - x0) > 1e-12 * x0:
        raise InvalidArgument(f"x0={x0} is not a grid node")

    u_row = f.chart.offset(x[:1], f.coords, f.b.circumference)[0]
    P = f.b.circumference
    lo_c, hi_c = float(f.coords[0]), float(f.coords[-1])

    def to_coord(u: np.ndarray) -> np.ndarray:
        if f.periodic:
            return (f.chart.y_c + u) % P
        if np.any(u < lo_c - 1e-12) or np.any(u > hi_c + 1e-12):
            raise CharacteristicEscape("characteristic leaves the y-window",
                                       {"window": [lo_c, hi_c], "reached": [float(u.min()), float(u.max())]})
        return np.clip(u, lo_c, hi_c)

    if callable(boundary):
        b_vals = np.asarray(boundary(f.coords), dtype=complex)
    else:
        b_vals = np.asarray(boundary, dtype=complex)
    b_line = _line_sampler(f, b_vals)
    source = None if not np.any(f.values) else _Sampler(f, f.values)

    v = np.zeros_like(f.values)
    for i in range(x.size):
        v[i] = b_line(to_coord(u_row * (x0 / x[i]) ** r))
        if source is None or i == i0:
            continue
        a, bnd = sorted((i0, i))
        nodes = s[a: bnd + 1]
        fine = np.empty(2 * nodes.size - 1)
        fine[0::2] = nodes
        fine[1::2] = 0.5 * (nodes[:-1] + nodes[1:])
        scale = np.exp(r * (fine - s[i]))
        coords = to_coord(np.outer(scale, u_row))
        vals = source(np.repeat(fine, u_row.size), coords.ravel()).reshape(coords.shape)
        integral = simpson(vals, x=fine, axis=0)
        if i < i0:
            integral = -integral
        v[i] += -integral / (2.0 * nu)

    solution = f.with_values(v, phase=None, meta={**f.meta, "kind": "transport", "r": r, "x0": x0})
    defect = transport_defect(solution, f.values, r, nu)
    ok = defect <= settings.transport_tol * max(1.0, float(np.max(np.abs(f.values))) if f.values.size else 1.0)
    if not ok:
        logger.warning(f"[EXPAND] transport defect {defect:.3e} above transport_tol",
                       extra={"details": {"defect": defect, "r": r}})
    return TransportResult(solution, defect, ok)


def require_transport(result: TransportResult) -> TransportResult:
    if not result.ok:
        raise NoConvergence(f"transport defect {result.defect:.3e}", {"defect": result.defect})
    return result
