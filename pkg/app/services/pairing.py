"""
Green pairing of eigenfunctions, mode traces at minima, saddle Gram matrices
and the S-matrix.

The pairing of two fields on the collar is the commutator flux

    B(u1, u2) = -i lim_{r -> 0} < [P, chi_r] u1, u2 >,

with chi_r a smooth cutoff in s = log x switching on above x = r. For
outgoing fields it reduces to the front-face formula
B = 2 sum_q sqrt(lam - V0(y_c)) int M+u1 conj(M+u2) dY.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_triangular
from scipy.special import expit, gamma

from app.core.errors import FormMismatch, InvalidArgument, MixedEnergy, NoConvergence, SingularDiagonal, WrongKind
from app.schemas.config import NumericsConfig, PairingSettings
from app.services.boundary_model import BoundaryData, CriticalKind
from app.services.classical import RadialKind, RadialPoint, radial_points
from app.services.eigenfunction_models.center import (
    build_center_eigenfunction,
    center_modes,
    conjugate_expansion,
)
from app.services.eigenfunction_models.operator import (
    CollarGrid,
    ConstantPhase,
    fd_derivative,
    spectral_derivative,
)
from app.services.eigenfunction_models.profiles import HermiteProfile, ZeroProfile
from app.services.eigenfunction_models.saddle import SaddleSeries, build_saddle_eigenfunction
from app.services.eigenfunction_models.sink import (
    SinkExpansion,
    build_sink_eigenfunction,
    conjugate_sink,
    sink_beta,
    sink_expansion,
)
from app.services.legendrian import evaluate_phase

logger = logging.getLogger("radialiq.pairing")


class PairingMethod(str, Enum):
    MODE_FORMULA = "mode_formula"
    FLUX_LIMIT = "flux_limit"
    MODE_ARITHMETIC = "mode_arithmetic"


class TraceKind(str, Enum):
    CENTER = "center"
    SINK = "sink"


@dataclass(frozen=True)
class PairingResult:
    value: complex
    method: PairingMethod
    estimated_error: float
    scales: Tuple[float, ...] = ()
    samples: Tuple[complex, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": [self.value.real, self.value.imag],
            "method": self.method.value,
            "estimated_error": self.estimated_error,
            "scales": list(self.scales),
            "samples": [[v.real, v.imag] for v in self.samples],
        }


@dataclass(frozen=True)
class ModeTrace:
    """
    Front-face data of an eigenfunction at a minimum: oscillator coefficients
    gamma_j at a center, the profile u0 sampled on Y at a sink. The density on
    the front face is dY for both normalizations used here.
    """

    q: RadialPoint
    kind: TraceKind
    trace: np.ndarray
    Y: Optional[np.ndarray] = None
    incoming: bool = False
    density: float = 1.0
    fit_residual: float = 0.0

    @property
    def weight(self) -> float:
        """sqrt(lam - V0(y_c))."""
        return abs(self.q.nu_t)

    @property
    def lam(self) -> float:
        return self.q.lam

    def to_dict(self) -> Dict[str, Any]:
        out = {
            "label": self.q.label,
            "kind": self.kind.value,
            "weight": self.weight,
            "incoming": self.incoming,
            "fit_residual": self.fit_residual,
            "trace": [[complex(v).real, complex(v).imag] for v in self.trace],
        }
        if self.Y is not None:
            out["Y"] = [float(v) for v in self.Y]
        return out


# ========== MODE FORMULA ==========

def _as_traces(t: Union[ModeTrace, Sequence[ModeTrace]]) -> List[ModeTrace]:
    return [t] if isinstance(t, ModeTrace) else list(t)


def _front_face_integral(t1: ModeTrace, t2: ModeTrace) -> Tuple[complex, float]:
    Y = t1.Y
    other = t2.trace
    if t2.Y is None or Y is None:
        raise FormMismatch("sink traces need their Y samples")
    if t2.Y.shape != Y.shape or not np.allclose(t2.Y, Y, rtol=0.0, atol=1e-14):
        re = CubicSpline(t2.Y, other.real)
        im = CubicSpline(t2.Y, other.imag)
        inside = (Y >= t2.Y[0]) & (Y <= t2.Y[-1])
        other = np.where(inside, re(Y) + 1j * im(Y), 0.0)
    integrand = t1.trace * np.conj(other)
    full = complex(trapezoid(integrand, Y))
    half = complex(trapezoid(integrand[::2], Y[::2]))
    return full, abs(full - half) / 3.0


def pair_modes(t1: Union[ModeTrace, Sequence[ModeTrace]],
               t2: Union[ModeTrace, Sequence[ModeTrace]]) -> PairingResult:
    """
    B(u1, u2) = 2 sum_q sqrt(lam - V0(y_c)) int M+u1 conj(M+u2) over the
    minima present in both trace lists (a minimum missing on one side has zero
    trace there).

    Raises:
        MixedEnergy: traces at different lambda
    """
    first, second = _as_traces(t1), _as_traces(t2)
    lams = [t.lam for t in first + second]
    if lams and max(lams) - min(lams) > 1e-12 * max(1.0, abs(lams[0])):
        raise MixedEnergy("traces belong to different energies", {"lambdas": sorted(set(lams))})
    if any(t.incoming for t in first + second):
        raise InvalidArgument("pair_modes pairs outgoing traces")

    partner = {t.q.label: t for t in second}
    total = 0j
    error = 0.0
    for t in first:
        o = partner.get(t.q.label)
        if o is None:
            continue
        if o.kind != t.kind:
            raise FormMismatch(f"{t.kind.value} trace paired with {o.kind.value} trace", {"label": t.q.label})
        if t.kind == TraceKind.CENTER:
            n = min(t.trace.size, o.trace.size)
            value = complex(np.sum(t.trace[:n] * np.conj(o.trace[:n])))
            err = 0.0
        else:
            value, err = _front_face_integral(t, o)
        total += 2.0 * t.weight * t.density * value
        error += 2.0 * t.weight * t.density * err
    return PairingResult(total, PairingMethod.MODE_FORMULA, error)


# ========== FLUX LIMIT ==========

def cutoff_profile(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    C-infinity step chi(t) = 1 / (1 + e^{g(t)}), g = 1/t - 1/(1 - t): zero for
    t <= 0, one for t >= 1. Returns chi and its first two t-derivatives.
    """
    t = np.asarray(t, dtype=float)
    chi = np.where(t >= 1.0, 1.0, 0.0)
    d1 = np.zeros_like(t)
    d2 = np.zeros_like(t)
    ramp = (t > 0.0) & (t < 1.0)
    if np.any(ramp):
        tt = t[ramp]
        g = 1.0 / tt - 1.0 / (1.0 - tt)
        g1 = -1.0 / tt ** 2 - 1.0 / (1.0 - tt) ** 2
        g2 = 2.0 / tt ** 3 - 2.0 / (1.0 - tt) ** 3
        c = expit(-g)
        c1 = -c * (1.0 - c) * g1
        chi[ramp] = c
        d1[ramp] = c1
        d2[ramp] = -c1 * (1.0 - 2.0 * c) * g1 - c * (1.0 - c) * g2
    return chi, d1, d2


def y_window(inner: float, outer: float) -> Callable[[CollarGrid], np.ndarray]:
    """Flux window equal to one for |coord| <= inner and zero for |coord| >= outer."""
    if not 0 <= inner < outer:
        raise InvalidArgument("y_window needs 0 <= inner < outer")

    def window(grid: CollarGrid) -> np.ndarray:
        chi, _, _ = cutoff_profile((np.abs(grid.coords) - inner) / (outer - inner))
        return (1.0 - chi)[None, :]
    return window


def _check_same_grid(f1: CollarGrid, f2: CollarGrid) -> None:
    if (f1.values.shape != f2.values.shape or f1.chart != f2.chart
            or not np.array_equal(f1.x, f2.x) or not np.array_equal(f1.coords, f2.coords)):
        raise InvalidArgument("pair_flux needs both fields on the same grid")


def _phase_values(grid: CollarGrid, y: np.ndarray) -> np.ndarray:
    if grid.phase is None:
        return np.zeros(y.shape)
    phi, _, _ = grid.phase(y)
    return phi


def _richardson(values: Sequence[complex], ratio: float, exponent: float) -> Tuple[complex, float]:
    """Extrapolate v(r) = B + C r^exponent over scales r, ratio r, ratio^2 r, ..."""
    if exponent == 0:
        return values[0], abs(values[0] - values[1])
    f = ratio ** exponent
    ext = [(f * values[k] - values[k + 1]) / (f - 1.0) for k in range(len(values) - 1)]
    if len(ext) == 1:
        return ext[0], abs(ext[0] - values[0])
    return ext[0], max(abs(e - ext[0]) for e in ext[1:])


def pair_flux(f1: CollarGrid, f2: CollarGrid, settings: Optional[PairingSettings] = None,
              window: Optional[Callable[[CollarGrid], np.ndarray]] = None,
              exponent: Optional[float] = None, strict: bool = True) -> PairingResult:
    """
    Commutator flux

        B(r) = i int int (chi_r'' w1 + 2 chi_r' D_s w1) conj(w2) e^{i(Phi1 - Phi2)/x} ds dy,
        D_s w = theta w - i (Phi/x) w,

    at flux_scales cutoff scales r_k = x_min e^{flux_width} flux_ratio^k,
    extrapolated to r -> 0 (error ~ r^exponent, default richardson_order).
    `window(grid)` multiplies the integrand (an array broadcastable to the values).

    Raises:
        MixedEnergy: the fields belong to different energies
        NoConvergence: extrapolates from different scale pairs disagree by more than flux_tol
    """
    settings = settings or PairingSettings()
    _check_same_grid(f1, f2)
    if abs(f1.lam - f2.lam) > 1e-12 * max(1.0, abs(f1.lam)):
        raise MixedEnergy("fields belong to different energies", {"lambdas": [f1.lam, f2.lam]})
    exponent = settings.richardson_order if exponent is None else exponent

    x = f1.x[:, None]
    s = f1.s
    y = f1.physical_y()
    rho = 0.0 if f1.periodic else f1.chart.rho
    phi1 = _phase_values(f1, y)
    phi2 = _phase_values(f2, y)
    w1, w2 = f1.values, f2.values

    if f1.periodic:
        d_coord = spectral_derivative(w1, f1.b.circumference, axis=1)
    else:
        d_coord = fd_derivative(w1, f1.dcoord, axis=1)
    theta = fd_derivative(w1, f1.ds, axis=0)
    if rho:
        theta = theta - rho * f1.coords[None, :] * d_coord
    ds_w1 = theta - 1j * (phi1 / x) * w1

    weight = np.conj(w2) * np.exp(1j * (phi1 - phi2) / x) * x ** rho
    if window is not None:
        weight = weight * window(f1)
    if f1.periodic:
        # rectangle rule over the full period
        shell0 = np.sum(w1 * weight, axis=1) * f1.dcoord
        shell1 = np.sum(ds_w1 * weight, axis=1) * f1.dcoord
    else:
        shell0 = trapezoid(w1 * weight, f1.coords, axis=1)
        shell1 = trapezoid(ds_w1 * weight, f1.coords, axis=1)

    width = settings.flux_width
    step = math.log(settings.flux_ratio)
    s_first = s[0] + width
    s_last = s_first + (settings.flux_scales - 1) * step + width
    if s_last > s[-3]:
        raise InvalidArgument(f"collar [{f1.x[0]:.3g}, {f1.x[-1]:.3g}] too short for {settings.flux_scales} cutoff scales")

    scales: List[float] = []
    samples: List[complex] = []
    for k in range(settings.flux_scales):
        s_r = s_first + k * step
        _, c1, c2 = cutoff_profile((s - s_r) / width)
        c1, c2 = c1 / width, c2 / width ** 2
        live = (c1 != 0) | (c2 != 0)
        integrand = np.zeros(s.size, dtype=complex)
        integrand[live] = c2[live] * shell0[live] + 2.0 * c1[live] * shell1[live]
        if not np.all(np.isfinite(integrand)):
            raise InvalidArgument("cutoff ramp reaches samples without complete stencils")
        scales.append(math.exp(s_r))
        samples.append(complex(1j * trapezoid(integrand, s)))

    value, spread = _richardson(samples, settings.flux_ratio, exponent)
    result = PairingResult(value, PairingMethod.FLUX_LIMIT, float(spread), tuple(scales), tuple(samples))
    logger.debug(f"[PAIRING] flux limit {value:.6g} spread {spread:.2e}",
                 extra={"details": {"scales": scales, "exponent": exponent}})
    if strict and spread > settings.flux_tol * max(abs(value), 1.0):
        raise NoConvergence(f"flux sequence spread {spread:.3e} exceeds flux_tol",
                            {"spread": spread, "value": [value.real, value.imag]})
    return result


# ========== SADDLE GRAM AND BIORTHOGONALIZATION ==========

def fresnel_moment(k: int, kappa: float) -> complex:
    """int e^{i kappa Z^2} Z^k dZ for kappa > 0, as an oscillatory integral."""
    if k % 2:
        return 0j
    p = k // 2 + 0.5
    return complex(gamma(p) * kappa ** (-p) * np.exp(0.5j * math.pi * p))


def saddle_gram_modes(outgoing: SaddleSeries, incoming: SaddleSeries, count: Optional[int] = None,
                      tol: float = 1e-9) -> np.ndarray:
    """
    G[n, m] = B~(v_n, w_m) as the x^0 coefficient of the leading flux
    2 nu int e^{i kappa Z^2} v_n conj(w_m) dZ, Z = u / sqrt(x),
    kappa = nu (r2 - r1) / 2. Entries with n > m decay and those with n < m
    have no x^0 term for generic r1.
    """
    if outgoing.q.label != incoming.q.label:
        raise InvalidArgument("outgoing and incoming series must sit at the same saddle")
    count = min(len(outgoing.models), len(incoming.models)) if count is None else count
    nu = outgoing.nu
    ro, ri = outgoing.rho, incoming.rho
    kappa = 0.5 * nu * (ri - ro)
    G = np.zeros((count, count), dtype=complex)
    for n in range(count):
        terms_n = outgoing.models[n].series.coeffs
        for m in range(count):
            total = 0j
            for (j1, q1, m1), c1 in terms_n.items():
                for (j2, q2, m2), c2 in incoming.models[m].series.coeffs.items():
                    e = j1 + j2 + q1 * ro + q2 * ri + 0.5 * (m1 + m2)
                    if abs(e) <= tol and (m1 + m2) % 2 == 0:
                        total += c1 * np.conj(c2) * fresnel_moment(m1 + m2, kappa)
            G[n, m] = 2.0 * nu * total
    return G


def saddle_fields(series: SaddleSeries, grid: CollarGrid, count: int) -> List[CollarGrid]:
    """The single-model fields x^beta W_n, n < count, on a chart grid."""
    fields = []
    for n in range(count):
        e = np.zeros(count, dtype=complex)
        e[n] = 1.0
        fields.append(build_saddle_eigenfunction(series.with_coeffs(e), grid))
    return fields


def saddle_gram_flux(outgoing: Sequence[CollarGrid], incoming: Sequence[CollarGrid], delta: float,
                     settings: Optional[PairingSettings] = None,
                     window: Optional[Callable[[CollarGrid], np.ndarray]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Flux measurement of B~(u_n, u~_m) for n >= m (entries above the diagonal
    diverge as r -> 0 and are left NaN). Lower entries are extrapolated with
    their leading exponent delta (n - m), delta = r2 - 1/2.
    """
    settings = settings or PairingSettings()
    count = min(len(outgoing), len(incoming))
    G = np.full((count, count), np.nan + 0j)
    spread = np.full((count, count), np.nan)
    for n in range(count):
        for m in range(n + 1):
            exponent = settings.richardson_order if n == m else delta * (n - m)
            res = pair_flux(outgoing[n], incoming[m], settings, window=window, exponent=exponent, strict=False)
            G[n, m] = res.value
            spread[n, m] = res.estimated_error
    return G, spread


@dataclass(frozen=True)
class Biorthogonalization:
    """
    T with renormalized incoming models w'_m = sum_k T[k, m] w_k, so that
    B~(u_n, w'_m) = sum_k conj(T[k, m]) G[n, k] = delta_nm.
    """

    transform: np.ndarray
    gram: np.ndarray
    gram_after: np.ndarray
    lower_defect: float
    identity_defect: float
    incoming: Tuple[SaddleSeries, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        def cm(a):
            return [[[complex(v).real, complex(v).imag] for v in row] for row in a]
        return {
            "transform": cm(self.transform),
            "gram": cm(self.gram),
            "lower_defect": self.lower_defect,
            "identity_defect": self.identity_defect,
        }


def biorthogonal_transform(gram: np.ndarray, tol: float = 1e-8) -> Biorthogonalization:
    """
    Invert the upper-triangular part of the Gram matrix (entries below the
    diagonal vanish in the limit and are reported as lower_defect).

    Raises:
        SingularDiagonal: some |G[n, n]| <= tol * max |G|
    """
    gram = np.asarray(gram, dtype=complex)
    count = gram.shape[0]
    upper = np.triu(gram)
    scale = float(np.max(np.abs(upper))) if count else 0.0
    diag = np.abs(np.diag(upper))
    bad = np.flatnonzero(diag <= tol * max(scale, 1e-300))
    if bad.size:
        raise SingularDiagonal(f"B~(u_n, u~_n) vanishes for n = {int(bad[0])}",
                               {"n": int(bad[0]), "diagonal": [float(d) for d in diag]})
    inverse = solve_triangular(upper, np.eye(count, dtype=complex), lower=False)
    transform = np.conj(inverse)
    after = upper @ np.conj(transform)
    lower = np.tril(gram, -1)
    lower_defect = float(np.nanmax(np.abs(lower))) if count > 1 else 0.0
    identity_defect = float(np.max(np.abs(after - np.eye(count))))
    return Biorthogonalization(transform, gram, after, lower_defect, identity_defect)


def biorthogonalize(outgoing: SaddleSeries, incoming: SaddleSeries, gram: Optional[np.ndarray] = None,
                    settings: Optional[PairingSettings] = None) -> Biorthogonalization:
    """
    Renormalize the incoming saddle models inductively against the outgoing
    ones; the Gram matrix defaults to the mode-arithmetic one.

    Raises:
        SingularDiagonal: a diagonal pairing vanishes
    """
    settings = settings or PairingSettings()
    gram = saddle_gram_modes(outgoing, incoming) if gram is None else gram
    result = biorthogonal_transform(gram, settings.biorth_tol)
    renormalized = tuple(incoming.with_coeffs(result.transform[:, m]) for m in range(result.transform.shape[1]))
    if result.identity_defect > settings.biorth_tol:
        logger.warning(f"[PAIRING] biorthogonalization defect {result.identity_defect:.2e}")
    return Biorthogonalization(result.transform, result.gram, result.gram_after, result.lower_defect,
                               result.identity_defect, renormalized)


# ========== TRACE EXTRACTION ==========

def _shell_indices(grid: CollarGrid, x_range: Optional[Tuple[float, float]]) -> np.ndarray:
    if x_range is None:
        lo = grid.x[0]
        x_range = (lo, lo * 10 ** 0.5)
    idx = np.flatnonzero((grid.x >= x_range[0] * (1 - 1e-12)) & (grid.x <= x_range[1] * (1 + 1e-12)))
    if idx.size == 0:
        raise InvalidArgument(f"no x shells in {x_range}")
    return idx


def _amplitude(grid: CollarGrid, rows: np.ndarray, phi: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """e^{-i Phi/x} u on the selected shells."""
    y = grid.physical_y()[rows]
    u = grid.field_values()[rows]
    return u * np.exp(-1j * phi(y) / grid.x[rows][:, None])


def _extrapolate(t: np.ndarray, data: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Fit data[k] = a + b t[k] per column; returns (a, b)."""
    if t.size < 3:
        return data.mean(axis=0), np.zeros(data.shape[1:], dtype=complex)
    design = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(design, data.reshape(t.size, -1), rcond=None)
    return coef[0].reshape(data.shape[1:]), coef[1].reshape(data.shape[1:])


def _center_trace(grid: CollarGrid, q: RadialPoint, rows: np.ndarray, count: int) -> Tuple[np.ndarray, float]:
    exp = center_modes(q, grid.b, count)
    nu = exp.nu
    if isinstance(grid.phase, ConstantPhase) and abs(grid.phase.nu - nu) < 1e-12:
        w = grid.values[rows]
    else:
        w = _amplitude(grid, rows, lambda y: np.full(y.shape, nu))
    x = grid.x[rows]
    u = grid.chart.offset(grid.x, grid.coords, grid.b.circumference)[rows]
    gammas = np.zeros((rows.size, count), dtype=complex)
    recon = np.zeros_like(w)
    for k in range(rows.size):
        Y = u[k] / math.sqrt(x[k])
        order = np.argsort(Y)
        Yk, wk = Y[order], w[k][order]
        modes = exp.modes(Yk, count)
        factor = np.exp((0.25 + 1j * exp.thetas[:count]) * math.log(x[k]))
        gammas[k] = trapezoid(wk[None, :] * np.conj(modes), Yk, axis=1) / factor
        recon[k][order] = np.tensordot(gammas[k] * factor, modes, axes=1)
    norm = float(np.linalg.norm(w))
    mismatch = float(np.linalg.norm(w - recon)) / norm if norm else 0.0
    trace, _ = _extrapolate(np.sqrt(x), gammas)
    return trace, mismatch


def _sink_trace(grid: CollarGrid, q: RadialPoint, rows: np.ndarray, exp: Optional[SinkExpansion],
                Y_out: Optional[np.ndarray]) -> Tuple[np.ndarray, np.ndarray, float]:
    r1 = q.r_real(1)
    beta = exp.beta if exp is not None else sink_beta(q, grid.b)
    gap = exp.first_gap if exp is not None else r1
    if exp is not None and exp.phase is not None:
        phase = exp.phase
    else:
        phase = sink_expansion(q, grid.b, ZeroProfile()).phase
    x = grid.x[rows]
    logx = np.log(x)[:, None]
    u = grid.chart.offset(grid.x, grid.coords, grid.b.circumference)[rows]
    covered = np.ones(u.shape, dtype=bool)
    if phase.curve is not None:
        y_abs = grid.physical_y()[rows]
        covered = (np.abs(u) <= phase.jet_handoff) | ((y_abs >= phase.curve.y_lo) & (y_abs <= phase.curve.y_hi))
    if not grid.periodic and not np.all(covered):
        raise InvalidArgument("chart grid reaches beyond the continued sink phase")
    y_phys = grid.physical_y()[rows]
    phi = np.zeros(u.shape)
    phi[covered] = evaluate_phase(phase, y_phys[covered])[0]
    w = np.where(covered, grid.field_values()[rows] * np.exp(-1j * phi / x[:, None]), 0.0)
    Y = u / (x ** r1)[:, None]
    w = w * np.exp(-beta * logx)
    if exp is not None and exp.resonant_order is not None:
        w = w * np.exp(1j * exp.resonant_c * Y ** exp.resonant_order * logx)
    if Y_out is None:
        Y_out = grid.coords if not grid.periodic and abs(grid.chart.rho - r1) < 1e-14 else np.linspace(-8.0, 8.0, 321)
    profiles = np.zeros((rows.size, Y_out.size), dtype=complex)
    for k in range(rows.size):
        order = np.argsort(Y[k])
        order = order[covered[k][order]]
        Yk, wk = Y[k][order], w[k][order]
        re, im = CubicSpline(Yk, wk.real), CubicSpline(Yk, wk.imag)
        inside = (Y_out >= Yk[0]) & (Y_out <= Yk[-1])
        profiles[k] = np.where(inside, re(Y_out) + 1j * im(Y_out), 0.0)
    trace, slope = _extrapolate(x ** gap, profiles)
    norm = float(np.linalg.norm(trace))
    drift = float(np.linalg.norm(np.outer(x ** gap, slope))) / (norm * math.sqrt(rows.size)) if norm else 0.0
    return trace, Y_out, drift


def extract_mode_trace(field: CollarGrid, q: RadialPoint, settings: Optional[PairingSettings] = None,
                       x_range: Optional[Tuple[float, float]] = None, count: int = 16,
                       expansion: Optional[SinkExpansion] = None, Y: Optional[np.ndarray] = None,
                       check: bool = True) -> ModeTrace:
    """
    M+ at an outgoing minimum. Centers: project e^{-i nu/x} x^{-1/4 - i theta_j} u
    onto v_j on each shell of x_range and extrapolate in sqrt(x). Sinks: divide
    by e^{i Phi/x} x^beta, resample on Y and extrapolate in x^{first gap}.

    Raises:
        FormMismatch: the field is not of the expansion form within fit_tol
        WrongKind: q is not a center or sink
    """
    settings = settings or PairingSettings()
    rows = _shell_indices(field, x_range)
    if q.kind == RadialKind.CENTER:
        trace, mismatch = _center_trace(field, q, rows, count)
        result = ModeTrace(q, TraceKind.CENTER, trace, fit_residual=mismatch)
    elif q.kind == RadialKind.SINK_OR_SOURCE:
        trace, Y_out, mismatch = _sink_trace(field, q, rows, expansion, Y)
        result = ModeTrace(q, TraceKind.SINK, trace, Y=Y_out, fit_residual=mismatch)
    else:
        raise WrongKind(f"no mode trace at a {q.kind.value}", {"label": q.label})
    if check and mismatch > settings.fit_tol:
        raise FormMismatch(f"field differs from the expansion form by {mismatch:.3e}",
                           {"label": q.label, "mismatch": mismatch, "fit_tol": settings.fit_tol})
    return result


def oscillator_basis(n: int, Y: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """First n normalized Hermite functions of frequency alpha on Y."""
    return HermiteProfile((), alpha).basis(Y, n)


# ========== S-MATRIX ==========

@dataclass(frozen=True)
class SMatrix:
    lam: float
    basis: Tuple[Dict[str, Any], ...]
    matrix: np.ndarray
    unitarity_defect: float
    columns: Tuple[Dict[str, Any], ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda": self.lam,
            "basis": list(self.basis),
            "matrix": [[[complex(v).real, complex(v).imag] for v in row] for row in self.matrix],
            "unitarity_defect": self.unitarity_defect,
            "columns": list(self.columns),
        }


def unitarity_defect(S: np.ndarray) -> float:
    """Spectral norm of S* S - I."""
    return float(np.linalg.norm(S.conj().T @ S - np.eye(S.shape[1]), 2)) if S.size else 0.0


def scattering_minima(b: BoundaryData, lam: float, config: NumericsConfig) -> List[RadialPoint]:
    """Outgoing radial points over the minima of V0, sorted by y_c."""
    points = [q for q in radial_points(b, lam, config.classical, config.boundary)
              if q.outgoing and q.crit.kind == CriticalKind.MINIMUM]
    for q in points:
        if q.kind not in (RadialKind.CENTER, RadialKind.SINK_OR_SOURCE):
            raise WrongKind(f"no S-matrix basis at a {q.kind.value}", {"label": q.label})
    return sorted(points, key=lambda q: q.y_c)


@dataclass(frozen=True)
class _Layout:
    """Collar regions of an S-matrix run, in s = log x."""

    ramp: Tuple[float, float]
    traces: Tuple[float, float]


def _layout(config: NumericsConfig) -> _Layout:
    o = config.oracle
    s_abs, s_max = math.log(o.x_abs), math.log(o.x_max)
    span = s_max - s_abs
    return _Layout(ramp=(s_abs + 0.5 * span, s_abs + 0.8 * span),
                   traces=(math.exp(s_abs + 0.12 * span), math.exp(s_abs + 0.4 * span)))


def _incoming_field(q: RadialPoint, j: int, grid: CollarGrid, config: NumericsConfig) -> CollarGrid:
    if q.kind == RadialKind.CENTER:
        exp = center_modes(q, grid.b, config.expansion.j_max)
        gammas = np.zeros(j + 1, dtype=complex)
        gammas[j] = 1.0
        built = build_center_eigenfunction(conjugate_expansion(exp.with_gammas(gammas)), grid, config.expansion)
    else:
        coeffs = np.zeros(j + 1)
        coeffs[j] = 1.0
        profile = HermiteProfile(tuple(coeffs), config.pairing.sink_basis_alpha)
        exp = sink_expansion(q, grid.b, profile, settings=config.legendrian)
        built = build_sink_eigenfunction(conjugate_sink(exp), grid)
    return built.with_values(built.field_values(), phase=None)


def _column_entries(sol_field: CollarGrid, minima: Sequence[RadialPoint], source: RadialPoint,
                    config: NumericsConfig, layout: _Layout) -> np.ndarray:
    j_s = config.pairing.j_s
    out = np.zeros(len(minima) * j_s, dtype=complex)
    for i, q in enumerate(minima):
        trace = extract_mode_trace(sol_field, q, config.pairing, x_range=layout.traces,
                                   count=max(j_s, 8), check=False)
        if trace.kind == TraceKind.CENTER:
            coeffs = trace.trace[:j_s]
        else:
            basis = oscillator_basis(j_s, trace.Y, config.pairing.sink_basis_alpha)
            coeffs = trapezoid(trace.trace[None, :] * basis, trace.Y, axis=1)
        out[i * j_s:(i + 1) * j_s] = math.sqrt(abs(q.nu_t) / abs(source.nu_t)) * coeffs
    return out


def assemble_smatrix(b: BoundaryData, lam: float, config: Optional[NumericsConfig] = None,
                     jobs: int = 1) -> SMatrix:
    """
    One oracle solve per incoming basis mode.

    The incoming model field enters through a cutoff, not as Dirichlet data at
    x_max. With chi equal to one near infinity and zero on the ramp's inner
    side, the total field is chi u_in + u_sc, where

        u_sc = R(lam + i0) x^2 (chi'' u_in + 2 chi' d_s u_in),  u_sc(x_max) = 0.

    This carries the same incoming data as imposing u_in at x_max, up to the
    model residual of u_in on the ramp, and the solve returns the outgoing part
    alone. Its traces at all minima fill the column.
    """
    from app.services import oracle

    config = config or NumericsConfig()
    minima = scattering_minima(b, lam, config)
    j_s = config.pairing.j_s
    grid = oracle.oracle_grid(b, lam, config.oracle)
    layout = _layout(config)
    s = grid.s
    chi, d1, d2 = cutoff_profile((s - layout.ramp[0]) / (layout.ramp[1] - layout.ramp[0]))
    width = layout.ramp[1] - layout.ramp[0]
    # one near infinity, zero at x_max
    chi, d1, d2 = 1.0 - chi, -d1 / width, -d2 / width ** 2
    x2 = (grid.x ** 2)[:, None]

    tasks = [(q, j) for q in minima for j in range(j_s)]

    def column(task: Tuple[RadialPoint, int]) -> Tuple[np.ndarray, Dict[str, Any]]:
        q, j = task
        u_in = _incoming_field(q, j, grid, config).values
        du = fd_derivative(u_in, grid.ds, axis=0)
        live = (d1 != 0) | (d2 != 0)
        f = np.zeros_like(u_in)
        f[live] = x2[live] * (d2[live, None] * u_in[live] + 2.0 * d1[live, None] * du[live])
        sol = oracle.solve(b, lam, grid.with_values(f), config.oracle)
        entries = _column_entries(sol.field, minima, q, config, layout)
        return entries, {"label": q.label, "mode": j, "iterations": sol.iterations, "residual": sol.residual}

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(column, tasks))

    S = np.column_stack([r[0] for r in results]) if results else np.zeros((0, 0), dtype=complex)
    basis = tuple({"label": q.label, "kind": q.kind.value, "modes": j_s} for q in minima)
    defect = unitarity_defect(S)
    logger.info(f"[PAIRING] S-matrix {S.shape[0]}x{S.shape[1]} at lambda={lam}",
                extra={"details": {"unitarity_defect": defect}})
    return SMatrix(lam, basis, S, defect, tuple(r[1] for r in results))
