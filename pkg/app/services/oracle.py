"""
Finite-difference resolvent on the collar, used as an independent check of the
expansions and to drive the S-matrix.

In s = log x the model equation (P - lam - i sigma) u = f reads

    -u'' + A(s) u = g,   A = -d_y^2 + x^{-2} (V0 + x V1 - lam - i sigma),   g = x^{-2} f.

The y direction is handled in the discrete Fourier basis (V acts by cyclic
convolution), the s direction by the fourth-order Numerov scheme

    (1/h^2) tridiag(-1, 2, -1) u + (1/12) tridiag(1, 10, 1) (A u - g) = 0.

sigma is eps plus a smooth absorbing ramp that is switched on below x_abs;
u vanishes at x_min and carries Dirichlet data at x_max.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import LinearOperator, gmres, splu

from app.core.errors import InsufficientRange, InvalidArgument, NoConvergence, NoLimit, ResolutionError
from app.core.metrics import MetricsTracker, Timer
from app.schemas.config import OracleSettings
from app.services.boundary_model import BoundaryData, FourierJet
from app.services.eigenfunction_models.operator import CollarGrid, fit_log_slope, polar_grid
from app.services.pairing import cutoff_profile

logger = logging.getLogger("radialiq.oracle")


# ========== GRID AND ABSORPTION ==========

def oracle_grid(b: BoundaryData, lam: float, settings: Optional[OracleSettings] = None) -> CollarGrid:
    """Zero field on the oracle's polar grid."""
    settings = settings or OracleSettings()
    return polar_grid(b, lam, settings.n_s, settings.n_y, settings.x_min, settings.x_max)


def default_eps(lam: float, settings: OracleSettings) -> float:
    return settings.eps_rel * max(abs(lam), 1.0)


def absorption(x: np.ndarray, lam: float, settings: OracleSettings, eps: Optional[float] = None) -> np.ndarray:
    """sigma(x) = eps + strength * max(|lam|, 1) * ramp, ramp 1 at x_min and 0 above x_abs."""
    eps = default_eps(lam, settings) if eps is None else eps
    s = np.log(x)
    s_min, s_abs = math.log(settings.x_min), math.log(settings.x_abs)
    chi, _, _ = cutoff_profile((s - s_min) / (s_abs - s_min))
    return eps + settings.absorber_strength * max(abs(lam), 1.0) * (1.0 - chi)


def max_frequency(b: BoundaryData, lam: float, n: int = 4096) -> float:
    """nu_max = sqrt(lam - min V0), the largest radial frequency on Sigma(lam)."""
    y = np.linspace(0.0, b.circumference, n, endpoint=False)
    return math.sqrt(max(lam - float(np.min(b.v0(y))), 0.0))


def check_grid(b: BoundaryData, lam: float, settings: OracleSettings) -> Dict[str, float]:
    """
    Points per wavelength in s at x_max and x_abs, and the y band limit.

    Raises:
        ResolutionError: either budget is below its minimum
    """
    nu = max_frequency(b, lam)
    h = (math.log(settings.x_max) - math.log(settings.x_min)) / (settings.n_s - 1)
    report = {"nu_max": nu, "ds": h}
    if nu == 0.0:
        return {**report, "ppw_x_max": math.inf, "ppw_x_abs": math.inf}
    ppw_max = 2.0 * math.pi * settings.x_max / (nu * h)
    ppw_abs = 2.0 * math.pi * settings.x_abs / (nu * h)
    k_nyquist = 0.5 * settings.n_y * 2.0 * math.pi / b.circumference
    report.update({"ppw_x_max": ppw_max, "ppw_x_abs": ppw_abs, "k_nyquist": k_nyquist,
                   "k_needed": nu / settings.x_abs})
    if ppw_max < settings.min_ppw:
        raise ResolutionError(f"{ppw_max:.2f} points per wavelength at x_max", report)
    if ppw_abs < settings.min_ppw_abs:
        raise ResolutionError(f"{ppw_abs:.2f} points per wavelength at x_abs", report)
    if k_nyquist < nu / settings.x_abs:
        raise ResolutionError(f"n_y={settings.n_y} does not resolve y-frequency {nu / settings.x_abs:.1f} at x_abs",
                              report)
    return report


# ========== ASSEMBLY ==========

def wavenumbers(n: int, circumference: float) -> np.ndarray:
    return 2.0 * math.pi * np.fft.fftfreq(n, d=circumference / n)


def coupling_matrix(jet: FourierJet, n: int) -> sp.csr_matrix:
    """Multiplication by the potential in FFT order: (V u)^_k = sum_m c_m u^_{k-m}."""
    c = jet.fourier_grid_coefficients(n)
    rows = np.arange(n)
    out = sp.csr_matrix((n, n), dtype=complex)
    for m in np.flatnonzero(np.abs(c) > 0):
        out = out + sp.csr_matrix((np.full(n, c[m]), (rows, (rows - m) % n)), shape=(n, n))
    return out


@dataclass(frozen=True)
class _System:
    """Interior Numerov system plus the pieces needed for its right-hand side."""

    matrix: sp.csc_matrix
    x: np.ndarray
    h: float
    sigma: np.ndarray
    n_y: int
    potential: Tuple[sp.csr_matrix, sp.csr_matrix]
    k2: np.ndarray

    def block(self, i: int, lam: float) -> sp.csr_matrix:
        """A at the grid point i."""
        xi = self.x[i]
        mv0, mv1 = self.potential
        return (sp.diags(self.k2) + (mv0 + xi * mv1) / xi ** 2
                - sp.identity(self.n_y, format="csr") * ((lam + 1j * self.sigma[i]) / xi ** 2))


def _numerov_stencils(m: int, h: float) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m), format="csr") / h ** 2
    N = sp.diags([1.0, 10.0, 1.0], [-1, 0, 1], shape=(m, m), format="csr") / 12.0
    return T, N


def assemble(b: BoundaryData, lam: float, x: np.ndarray, n_y: int, sigma: np.ndarray,
             couple: bool = True) -> _System:
    """
    Interior operator on the unknowns u[1:-1] (s-major, Fourier modes fastest).
    With couple=False the potential is replaced by its mean, which decouples
    the Fourier modes.
    """
    h = float(np.log(x[1]) - np.log(x[0]))
    m = x.size - 2
    xi = x[1:-1]
    identity = sp.identity(n_y, dtype=complex, format="csr")
    if couple:
        mv0, mv1 = coupling_matrix(b.v0, n_y), coupling_matrix(b.v1, n_y)
    else:
        mv0, mv1 = identity * b.v0.mean(), identity * b.v1.mean()
    k2 = wavenumbers(n_y, b.circumference) ** 2
    A = (sp.kron(sp.identity(m), sp.diags(k2))
         + sp.kron(sp.diags(xi ** -2.0), mv0)
         + sp.kron(sp.diags(1.0 / xi), mv1)
         - sp.kron(sp.diags(xi ** -2.0 * (lam + 1j * sigma[1:-1])), identity))
    T, N = _numerov_stencils(m, h)
    L = sp.kron(T, identity) + sp.kron(N, identity) @ A
    return _System(L.tocsc(), x, h, sigma, n_y, (mv0.tocsr(), mv1.tocsr()), k2)


def _rhs(system: _System, lam: float, f_hat: np.ndarray, boundary_hat: np.ndarray) -> np.ndarray:
    g = f_hat / (system.x ** 2)[:, None]
    rhs = (g[:-2] + 10.0 * g[1:-1] + g[2:]) / 12.0
    if np.any(boundary_hat):
        A_b = system.block(system.x.size - 1, lam)
        rhs[-1] -= -boundary_hat / system.h ** 2 + (A_b @ boundary_hat) / 12.0
    return rhs.ravel()


# ========== SOLVE ==========

@dataclass(frozen=True)
class FrequencyMap:
    """nu_hat(x, y) = -x d_s arg u by windowed FFT along s, NaN where |u| is negligible."""

    x: np.ndarray
    y: np.ndarray
    nu: np.ndarray

    def near(self, y_star: float, width: float, circumference: float,
             x_upper: Optional[float] = None) -> np.ndarray:
        d = np.abs((self.y - y_star + 0.5 * circumference) % circumference - 0.5 * circumference)
        rows = self.x <= (x_upper if x_upper is not None else self.x[-1])
        values = self.nu[np.ix_(rows, d <= width)]
        return values[np.isfinite(values)]

    def outgoing_fraction(self, nu_max: float, x_upper: float) -> float:
        """Share of finite cells below x_upper with nu_hat >= -0.1 nu_max."""
        values = self.nu[self.x <= x_upper]
        values = values[np.isfinite(values)]
        if values.size == 0:
            return 1.0
        return float(np.mean(values >= -0.1 * nu_max))

    def summary(self, nu_max: float, x_upper: float) -> Dict[str, Any]:
        finite = self.nu[np.isfinite(self.nu)]
        return {
            "blocks": int(self.x.size),
            "finite_cells": int(finite.size),
            "nu_min": float(finite.min()) if finite.size else None,
            "nu_max": float(finite.max()) if finite.size else None,
            "outgoing_fraction": self.outgoing_fraction(nu_max, x_upper),
        }


@dataclass(frozen=True)
class OracleSolution:
    field: CollarGrid
    eps: float
    solver: str
    iterations: int
    residual: float
    duration: float
    source_x: Optional[Tuple[float, float]]
    settings: OracleSettings
    frequency: Optional[FrequencyMap] = None

    def to_dict(self) -> Dict[str, Any]:
        nu = max_frequency(self.field.b, self.field.lam)
        return {
            "lambda": self.field.lam,
            "eps": self.eps,
            "solver": self.solver,
            "iterations": self.iterations,
            "residual": self.residual,
            "source_x": list(self.source_x) if self.source_x else None,
            "frequency_map": (self.frequency.summary(nu, self.settings.x_abs * 5.0)
                              if self.frequency is not None else None),
        }


def bump_source(grid: CollarGrid, x_range: Tuple[float, float],
                y_profile: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> CollarGrid:
    """
    Smooth compactly supported source: a C-infinity bump in s = log x that
    vanishes outside x_range, times y_profile(y) (one by default).
    """
    lo, hi = x_range
    if not 0 < lo < hi:
        raise InvalidArgument("source range needs 0 < x_lo < x_hi")
    t = (grid.s - math.log(lo)) / (math.log(hi) - math.log(lo))
    rise, _, _ = cutoff_profile(2.0 * t)
    fall, _, _ = cutoff_profile(2.0 * t - 1.0)
    bump = rise * (1.0 - fall)
    y = grid.physical_y()[0]
    shape = np.ones(y.shape) if y_profile is None else np.asarray(y_profile(y), dtype=complex)
    return grid.with_values(np.outer(bump, shape), phase=None, meta={**grid.meta, "kind": "source"})


def _source_range(f: CollarGrid, tol: float = 1e-14) -> Optional[Tuple[float, float]]:
    mag = np.max(np.abs(f.values), axis=1)
    scale = float(mag.max()) if mag.size else 0.0
    if scale == 0.0:
        return None
    live = np.flatnonzero(mag > tol * scale)
    return float(f.x[live[0]]), float(f.x[live[-1]])


def _check_source(f: CollarGrid, settings: OracleSettings) -> Optional[Tuple[float, float]]:
    if not f.periodic or f.values.shape != (settings.n_s, settings.n_y):
        raise InvalidArgument("the source must live on the oracle grid")
    if f.phase is not None:
        raise InvalidArgument("the source must be given as full field values")
    support = _source_range(f)
    if support is not None and support[0] < settings.x_abs:
        raise InvalidArgument(f"source reaches x={support[0]:.3g} inside the absorber (x_abs={settings.x_abs})")
    return support


def _krylov(system: _System, rhs: np.ndarray, b: BoundaryData, lam: float,
            settings: OracleSettings) -> Tuple[np.ndarray, int]:
    decoupled = assemble(b, lam, system.x, system.n_y, system.sigma, couple=False)
    lu = splu(decoupled.matrix)
    M = LinearOperator(system.matrix.shape, matvec=lu.solve, dtype=complex)
    count = [0]

    def tick(_):
        count[0] += 1

    u, info = gmres(system.matrix, rhs, rtol=settings.solver_tol, atol=0.0, restart=settings.restart,
                    maxiter=settings.max_iter, M=M, callback=tick, callback_type="pr_norm")
    if info != 0:
        raise NoConvergence(f"GMRES stopped after {count[0]} iterations (info={info})",
                            {"iterations": count[0], "info": int(info)})
    return u, count[0]


def solve(b: BoundaryData, lam: float, f: CollarGrid, settings: Optional[OracleSettings] = None,
          boundary: Optional[np.ndarray] = None, eps: Optional[float] = None,
          with_frequency: bool = True) -> OracleSolution:
    """
    Solve (P_model - lam - i sigma) u = f on the oracle grid with u(x_min) = 0
    and u(x_max) = boundary (zero by default).

    Raises:
        ResolutionError: the grid does not resolve the wavelength at x_max or x_abs
        NoConvergence: the Krylov solver did not reach solver_tol within max_iter
        InvalidArgument: f reaches into the absorber
    """
    settings = settings or OracleSettings()
    check_grid(b, lam, settings)
    support = _check_source(f, settings)
    eps = default_eps(lam, settings) if eps is None else eps
    x = f.x
    n_y = settings.n_y
    boundary_hat = np.zeros(n_y, dtype=complex) if boundary is None else np.fft.fft(np.asarray(boundary, dtype=complex))

    if support is None and not np.any(boundary_hat):
        field = f.with_values(np.zeros_like(f.values), meta={**f.meta, "kind": "oracle", "eps": eps})
        return OracleSolution(field, eps, "none", 0, 0.0, 0.0, None, settings,
                              frequency_map(field, settings.freq_window) if with_frequency else None)

    sigma = absorption(x, lam, settings, eps)
    with Timer() as timer:
        system = assemble(b, lam, x, n_y, sigma)
        rhs = _rhs(system, lam, np.fft.fft(f.values, axis=1), boundary_hat)
        unknowns = rhs.size
        method = settings.solver
        if method == "auto":
            method = "direct" if unknowns <= settings.direct_limit else "gmres"
        if method == "direct":
            interior = splu(system.matrix).solve(rhs)
            iterations = 0
        else:
            interior, iterations = _krylov(system, rhs, b, lam, settings)
    norm = float(np.linalg.norm(rhs))
    residual = float(np.linalg.norm(system.matrix @ interior - rhs)) / norm if norm else 0.0

    u_hat = np.zeros((x.size, n_y), dtype=complex)
    u_hat[1:-1] = interior.reshape(x.size - 2, n_y)
    u_hat[-1] = boundary_hat
    u = np.fft.ifft(u_hat, axis=1)
    field = f.with_values(u, meta={**f.meta, "kind": "oracle", "eps": eps})
    MetricsTracker.track_oracle_solve(method, timer.elapsed, iterations)
    logger.info(f"[ORACLE] {method} solve of {unknowns} unknowns in {timer.elapsed:.2f}s",
                extra={"details": {"iterations": iterations, "residual": residual, "eps": eps}})
    return OracleSolution(field, eps, method, iterations, residual, timer.elapsed, support, settings,
                          frequency_map(field, settings.freq_window) if with_frequency else None)


def solve_separable(b: BoundaryData, lam: float, f: CollarGrid, settings: Optional[OracleSettings] = None,
                    boundary: Optional[np.ndarray] = None, eps: Optional[float] = None) -> CollarGrid:
    """
    Mode-by-mode solve for y-independent V0 and V1: each Fourier mode is an
    independent banded boundary-value problem with the same Numerov stencil.
    """
    settings = settings or OracleSettings()
    if b.v0.max_mode or b.v1.max_mode:
        raise InvalidArgument("separable solve needs y-independent V0 and V1")
    eps = default_eps(lam, settings) if eps is None else eps
    x = f.x
    h = float(f.ds)
    sigma = absorption(x, lam, settings, eps)
    k2 = wavenumbers(settings.n_y, b.circumference) ** 2
    v0, v1 = b.v0.mean(), b.v1.mean()
    f_hat = np.fft.fft(f.values, axis=1)
    bd = np.zeros(settings.n_y, dtype=complex) if boundary is None else np.fft.fft(np.asarray(boundary, dtype=complex))
    g = f_hat / (x ** 2)[:, None]
    u_hat = np.zeros_like(f_hat)
    u_hat[-1] = bd
    m = x.size - 2
    for k in range(settings.n_y):
        a = k2[k] + (v0 + x * v1 - lam - 1j * sigma) / x ** 2
        ab = np.zeros((3, m), dtype=complex)
        ab[0, 1:] = -1.0 / h ** 2 + a[2:-1] / 12.0
        ab[1] = 2.0 / h ** 2 + 10.0 * a[1:-1] / 12.0
        ab[2, :-1] = -1.0 / h ** 2 + a[1:-2] / 12.0
        rhs = (g[:-2, k] + 10.0 * g[1:-1, k] + g[2:, k]) / 12.0
        rhs[-1] -= (-1.0 / h ** 2 + a[-1] / 12.0) * bd[k]
        u_hat[1:-1, k] = solve_banded((1, 1), ab, rhs)
    return f.with_values(np.fft.ifft(u_hat, axis=1), meta={**f.meta, "kind": "separable", "eps": eps})


# ========== DIAGNOSTICS ==========

def frequency_map(field: CollarGrid, window: int = 64, pad: int = 4, floor: float = 1e-8) -> FrequencyMap:
    """
    Hann-windowed FFT along s over blocks of `window` samples (half overlap),
    zero-padded by `pad`, with parabolic peak interpolation on log |F|.
    """
    u = field.field_values()
    n = field.x.size
    window = min(window, n)
    step = max(window // 2, 1)
    n_pad = pad * window
    taper = np.hanning(window)[:, None]
    bins = np.fft.fftfreq(n_pad) * n_pad
    dk = 2.0 * math.pi / (n_pad * field.ds)
    scale = float(np.max(np.abs(u))) if u.size else 0.0
    starts = list(range(0, n - window + 1, step))
    centers = np.empty(len(starts))
    nu = np.full((len(starts), u.shape[1]), np.nan)
    cols = np.arange(u.shape[1])
    for r, start in enumerate(starts):
        block = u[start:start + window]
        centers[r] = math.exp(float(np.mean(field.s[start:start + window])))
        spectrum = np.abs(np.fft.fft(block * taper, n=n_pad, axis=0))
        peak = np.argmax(spectrum, axis=0)
        a = np.log(spectrum[(peak - 1) % n_pad, cols] + 1e-300)
        c = np.log(spectrum[peak, cols] + 1e-300)
        d = np.log(spectrum[(peak + 1) % n_pad, cols] + 1e-300)
        curvature = a - 2.0 * c + d
        delta = np.where(curvature != 0, 0.5 * (a - d) / np.where(curvature != 0, curvature, 1.0), 0.0)
        k_s = (bins[peak] + delta) * dk
        live = np.max(np.abs(block), axis=0) > floor * scale
        nu[r, live] = -centers[r] * k_s[live]
    return FrequencyMap(centers, field.coords.copy(), nu)


@dataclass(frozen=True)
class DecayFit:
    y_star: float
    exponent: float
    stderr: float
    band: Tuple[float, float]
    x_range: Tuple[float, float]
    n_shells: int

    def to_dict(self) -> Dict[str, Any]:
        return {"y_star": self.y_star, "exponent": self.exponent, "stderr": self.stderr,
                "band95": list(self.band), "x_range": list(self.x_range), "n_shells": self.n_shells}


def measure_decay(sol: OracleSolution, y_star: float, y_window: float = 0.3,
                  x_range: Optional[Tuple[float, float]] = None) -> DecayFit:
    """
    Log-log slope of max |u| over |y - y_star| <= y_window, per x shell, between
    the absorber and the source.

    Raises:
        InsufficientRange: fewer than min_decades of x or a vanishing field
    """
    settings = sol.settings
    grid = sol.field
    if x_range is None:
        upper = sol.source_x[0] / 1.5 if sol.source_x else settings.x_max
        x_range = (2.0 * settings.x_abs, min(upper, settings.x_max))
    lo, hi = x_range
    decades = math.log10(hi / lo) if hi > lo else 0.0
    if decades < settings.min_decades:
        raise InsufficientRange(f"{decades:.2f} decades of x between absorber and source",
                                {"x_range": [lo, hi], "min_decades": settings.min_decades})
    P = grid.b.circumference
    d = np.abs((grid.coords - y_star + 0.5 * P) % P - 0.5 * P)
    columns = d <= y_window
    sup = np.max(np.abs(grid.field_values()[:, columns]), axis=1)
    rows = (grid.x >= lo) & (grid.x <= hi)
    if not np.any(sup[rows] > 0):
        raise InsufficientRange("field vanishes in the fit range", {"y_star": y_star})
    slope, _, stderr, band, used, n = fit_log_slope(grid.x, sup, (lo, hi))
    return DecayFit(y_star, slope, stderr, band, used, n)


@dataclass(frozen=True)
class ContinuationReport:
    eps: Tuple[float, ...]
    differences: Tuple[float, ...]
    monotone: bool
    extrapolated: CollarGrid
    solutions: Tuple[OracleSolution, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {"eps": list(self.eps), "differences": list(self.differences), "monotone": self.monotone}


def _default_sample_points(grid: CollarGrid, settings: OracleSettings) -> Tuple[np.ndarray, np.ndarray]:
    rows = np.flatnonzero(grid.x >= 2.0 * settings.x_abs)
    rows = rows[:: max(rows.size // 16, 1)]
    cols = np.arange(0, grid.coords.size, max(grid.coords.size // 8, 1))
    return rows, cols


def eps_continuation(b: BoundaryData, lam: float, f: CollarGrid, eps_list: Sequence[float],
                     settings: Optional[OracleSettings] = None,
                     sample_points: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                     jobs: int = 1) -> ContinuationReport:
    """
    Solve at each eps, report max differences at the sample points between consecutive eps
    and extrapolate linearly in eps to zero from the last two.

    Raises:
        NoLimit: the last difference is not smaller than the first
    """
    settings = settings or OracleSettings()
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3 or any(e <= 0 for e in eps_list) or any(a <= b_ for a, b_ in zip(eps_list, eps_list[1:])):
        raise InvalidArgument("eps_list needs at least three positive, strictly decreasing values")

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        solutions = list(pool.map(lambda e: solve(b, lam, f, settings, eps=e, with_frequency=False), eps_list))

    rows, cols = sample_points or _default_sample_points(f, settings)
    samples = [s.field.values[np.ix_(rows, cols)] for s in solutions]
    diffs = [float(np.max(np.abs(samples[k + 1] - samples[k]))) for k in range(len(samples) - 1)]
    scale = max(float(np.max(np.abs(samples[-1]))), 1e-300)
    vanishing = all(d <= 1e-14 * scale for d in diffs)
    monotone = vanishing or all(b_ < a for a, b_ in zip(diffs, diffs[1:]))
    if not monotone:
        logger.warning("[ORACLE] eps-continuation differences do not decrease",
                       extra={"details": {"eps": eps_list, "differences": diffs}})
    if not vanishing and diffs[-1] >= diffs[0]:
        raise NoLimit("sampled differences do not shrink as eps decreases",
                      {"eps": eps_list, "differences": diffs})

    e1, e2 = eps_list[-2], eps_list[-1]
    u1, u2 = solutions[-2].field.values, solutions[-1].field.values
    limit = (e1 * u2 - e2 * u1) / (e1 - e2)
    extrapolated = f.with_values(limit, meta={**f.meta, "kind": "oracle", "eps": 0.0})
    return ContinuationReport(tuple(eps_list), tuple(diffs), monotone, extrapolated, tuple(solutions))


def smallest_singular_value(b: BoundaryData, lam: float, settings: Optional[OracleSettings] = None,
                            eps: Optional[float] = None, iterations: int = 20, seed: int = 0) -> float:
    """Inverse iteration on L^* L with the sparse LU of the interior operator."""
    settings = settings or OracleSettings()
    grid = oracle_grid(b, lam, settings)
    system = assemble(b, lam, grid.x, settings.n_y, absorption(grid.x, lam, settings, eps))
    lu = splu(system.matrix)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(system.matrix.shape[0]) + 1j * rng.standard_normal(system.matrix.shape[0])
    v /= np.linalg.norm(v)
    for _ in range(iterations):
        w = lu.solve(lu.solve(v), trans="H")
        v = w / np.linalg.norm(w)
    sigma_min = float(np.linalg.norm(system.matrix @ v))
    logger.debug(f"[ORACLE] smallest singular value {sigma_min:.4e}")
    return sigma_min


def solve_many(b: BoundaryData, lam: float, sources: List[CollarGrid], settings: Optional[OracleSettings] = None,
               jobs: int = 1) -> List[OracleSolution]:
    """Independent solves in parallel, results in input order."""
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(lambda f: solve(b, lam, f, settings), sources))
