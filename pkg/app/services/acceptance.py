"""
Acceptance suite: property-based checks of the whole pipeline against the
values the theory predicts for V0 = cos(y / L).

Each criterion returns (passed, measured, message); exceptions are recorded
as status "error" and never abort the suite.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from app.core.constants import schema_tag
from app.core.errors import CriticalEnergy, InvalidArgument, RadialIQError
from app.core.logging import log_event
from app.core.metrics import MetricsTracker, Timer
from app.schemas.config import ExpansionSettings, NumericsConfig, OracleSettings
from app.schemas.results import AcceptanceTable, CriterionResult
from app.services import oracle
from app.services.boundary_model import BoundaryData, CriticalKind, find_critical_points, thresholds
from app.services.classical import (
    RadialKind,
    RadialPoint,
    classify,
    limit_statistics,
    morse_diagram,
    radial_points,
)
from app.services.eigenfunction_models.center import (
    build_center_eigenfunction,
    center_grid,
    center_modes,
    center_y_half,
    eigen_residual,
    mode_gram,
    mode_zero_count,
    predicted_residual_slope,
)
from app.services.eigenfunction_models.operator import chart_grid, residual
from app.services.eigenfunction_models.profiles import GaussianProfile
from app.services.eigenfunction_models.saddle import (
    build_saddle_eigenfunction,
    saddle_grid,
    saddle_models,
    transport_solve,
)
from app.services.eigenfunction_models.sink import (
    build_sink_eigenfunction,
    effective_gap,
    sink_expansion,
    sink_grid,
)
from app.services.legendrian import continue_phase, eikonal_residual, evaluate_phase, phase_jet
from app.services.manifest import to_jsonable
from app.services.pairing import (
    ModeTrace,
    TraceKind,
    assemble_smatrix,
    biorthogonalize,
    extract_mode_trace,
    pair_flux,
    pair_modes,
    saddle_fields,
    saddle_gram_flux,
    y_window,
)

logger = logging.getLogger("radialiq.acceptance")

Check = Tuple[bool, Dict[str, Any], str]


@dataclass(frozen=True)
class Criterion:
    id: int
    name: str
    tier: str
    target: str
    budget_s: float
    run: Callable[["SuiteContext"], Check]


@dataclass(frozen=True)
class SuiteContext:
    config: NumericsConfig
    jobs: int = 1

    @property
    def seed(self) -> int:
        return self.config.cli.seed


# ========== PROBLEMS ==========

def cos_problem(length: float = 1.0) -> BoundaryData:
    """V0 = cos(y / L) on a circle of arclength 2 pi L."""
    return BoundaryData(((1, 1.0, 0.0),), (), 2.0 * math.pi * length)


def constant_problem(value: float = -1.0) -> BoundaryData:
    return BoundaryData(((0, value, 0.0),), (), 2.0 * math.pi)


def outgoing_at(b: BoundaryData, lam: float, kind: CriticalKind, config: NumericsConfig) -> RadialPoint:
    for q in radial_points(b, lam, config.classical, config.boundary):
        if q.outgoing and q.crit.kind == kind:
            return q
    raise LookupError(f"no outgoing radial point over a {kind.value} at lambda={lam}")


# ========== CRITERIA ==========

def _classification(ctx: SuiteContext) -> Check:
    config = ctx.config
    delta = 2.0 * config.classical.cv_tol
    measured: Dict[str, Any] = {"transitions": []}
    ok = True
    for length in (0.5, 1.0, 2.0):
        b = cos_problem(length)
        th = thresholds(b, config.boundary)
        cp = next(c for c in find_critical_points(b, config.boundary) if c.kind == CriticalKind.MINIMUM)
        lh = th.hess_for(cp)
        kinds = {}
        for label, lam in (("below", lh - delta), ("at", lh), ("above", lh + delta)):
            try:
                kinds[label] = outgoing_at(b, lam, CriticalKind.MINIMUM, config).kind.value
            except CriticalEnergy:
                kinds[label] = None
        expected = {"below": RadialKind.CENTER.value, "above": RadialKind.SINK_OR_SOURCE.value,
                    "at": RadialKind.DEGENERATE_CENTER.value}
        good = all(kinds[k] == v for k, v in expected.items() if not (k == "at" and kinds[k] is None))
        ok = ok and good
        measured["transitions"].append({"L": length, "lambda_hess": lh, "kinds": kinds, "ok": good})

    critical = {length: find_critical_points(cos_problem(length), config.boundary) for length in (0.5, 1.0, 2.0)}
    rng = np.random.default_rng(ctx.seed)
    worst_sum = worst_prod = 0.0
    count = 0
    while count < 1000:
        length = float(rng.choice([0.5, 1.0, 2.0]))
        lam = float(rng.uniform(-0.99, 10.0))
        if any(abs(lam - cp.value) < 1e-6 for cp in critical[length]):
            continue
        for cp in critical[length]:
            if cp.value >= lam:
                continue
            q = classify(cp, lam, 1, config.classical)
            ratio = q.a / q.nu_t ** 2
            worst_sum = max(worst_sum, abs(q.r1 + q.r2 - 1.0))
            worst_prod = max(worst_prod, abs(q.r1 * q.r2 - ratio) / max(1.0, abs(ratio)))
        count += 1
    measured.update({"samples": count, "max_sum_error": worst_sum, "max_product_error": worst_prod})
    ok = ok and worst_sum <= 1e-12 and worst_prod <= 1e-12
    return ok, measured, ""


def _flow(ctx: SuiteContext) -> Check:
    config = ctx.config
    b = cos_problem(1.0)
    measured: Dict[str, Any] = {}
    ok = True
    for lam in (0.5, 5.0):
        stats = limit_statistics(b, lam, 1000, ctx.seed, config.classical, ctx.jobs)
        measured[f"lambda={lam}"] = stats
        ok = ok and (stats["max_energy_drift"] <= 1e-9 and stats["min_nu_increment"] >= -1e-8
                     and stats["capture_fraction"] >= 0.99)
    diagram = morse_diagram(b, 5.0, config.classical, ctx.jobs)
    saddle_to_sink = [e for e in diagram.edges if e[0].startswith("q_max+") and e[1].startswith("q_min+")]
    measured["edges"] = [list(e) for e in diagram.edges]
    ok = ok and bool(saddle_to_sink)
    return ok, measured, "" if saddle_to_sink else "no saddle -> sink edge at lambda=5"


def _eikonal(ctx: SuiteContext) -> Check:
    config = ctx.config
    b = cos_problem(1.0)
    q = outgoing_at(b, 5.0, CriticalKind.MAXIMUM, config)
    measured: Dict[str, Any] = {}
    ok = True
    for branch in (1, 2):
        jet = phase_jet(q, branch, b, config.legendrian.n_jet, config.classical)
        phase = continue_phase(jet, (q.y_c - 0.5, q.y_c + 0.5), config.legendrian)
        ys = q.y_c + np.linspace(-0.5, 0.5, 1001)
        res = eikonal_residual(phase, ys)
        curvature_error = abs(float(evaluate_phase(phase, q.y_c)[2][0]) + q.nu_t * q.r_real(branch))
        measured[f"branch{branch}"] = {"eikonal_residual": res, "curvature_error": curvature_error}
        ok = ok and res <= 1e-10 and curvature_error <= 1e-8
    return ok, measured, ""


def _center_modes(ctx: SuiteContext) -> Check:
    b = cos_problem(1.0)
    q = outgoing_at(b, 0.5, CriticalKind.MINIMUM, ctx.config)
    exp = center_modes(q, b, 11)
    Y = np.linspace(-18.0, 18.0, 18001)
    residuals = [eigen_residual(exp, j, Y) for j in range(11)]
    gram = mode_gram(exp, Y, 11)
    gram_error = float(np.max(np.abs(gram - np.eye(11))))
    zeros = [mode_zero_count(exp, j, Y) for j in range(11)]
    measured = {"alpha": exp.alpha, "max_eigen_residual": max(residuals), "gram_error": gram_error,
                "zero_counts": zeros}
    ok = max(residuals) <= 1e-6 and gram_error <= 1e-8 and zeros == list(range(11))
    return ok, measured, ""


def _residual_slopes(ctx: SuiteContext) -> Check:
    config = ctx.config
    settings = config.expansion.model_copy(update={"x_min": 1e-3, "x_max": 1e-1})
    fit = (1e-3, 1e-1)
    b = cos_problem(1.0)
    measured: Dict[str, Any] = {}

    q = outgoing_at(b, 0.5, CriticalKind.MINIMUM, config)
    exp = center_modes(q, b, settings.j_max).with_gammas([1.0, 0.5, 0.25])
    rep = residual(build_center_eigenfunction(exp, center_grid(exp, b, settings), settings), fit)
    measured["center"] = {"slope": rep.slope, "predicted": predicted_residual_slope(exp)}

    q = outgoing_at(b, 5.0, CriticalKind.MINIMUM, config)
    sink = sink_expansion(q, b, GaussianProfile(0.2), (q.y_c - 1.0, q.y_c + 1.0), config.legendrian)
    rep = residual(build_sink_eigenfunction(sink, sink_grid(sink, b, settings, y_half=1.0)), fit)
    measured["sink"] = {"slope": rep.slope, "predicted": sink.beta.real + 1.0 + effective_gap(sink, b)}

    q = outgoing_at(b, 5.0, CriticalKind.MAXIMUM, config)
    series = saddle_models(q, b, "outgoing", 2, settings=settings, classical=config.classical)
    rep = residual(build_saddle_eigenfunction(series, saddle_grid(series, b, settings)), fit)
    measured["saddle"] = {"slope": rep.slope,
                          "predicted": series.leading_exponent(0, 0.5) + 1.0 + series.predicted_gap(0, 0.5)}

    failing = [k for k, v in measured.items() if v["slope"] < v["predicted"] - 0.05]
    return not failing, measured, f"below prediction: {', '.join(failing)}" if failing else ""


def _transport(ctx: SuiteContext) -> Check:
    b = cos_problem(1.0)
    q = outgoing_at(b, 5.0, CriticalKind.MAXIMUM, ctx.config)
    nu, r = q.nu_t, q.r_real(2)
    grid = chart_grid(b, 5.0, q.y_c, 0.0, 1024, 512, 1e-3, 0.3, 1.0)
    x = grid.x[:, None]
    u = grid.coords[None, :]
    exact = x ** 2 * np.cos(u) + x * np.sin(u)
    f = -2.0 * nu * (2.0 * x ** 2 * np.cos(u) + x * np.sin(u) + r * u * (x * np.cos(u) - x ** 2 * np.sin(u)))
    x0 = float(grid.x[0])
    solved = transport_solve(grid.with_values(f), r, x0, exact[0], nu, ctx.config.expansion)
    manufactured = float(np.max(np.abs(solved.solution.values - exact)) / np.max(np.abs(exact)))

    def g(c):
        return np.exp(-c ** 2) * (1.0 + 0.5j * c)

    free = transport_solve(grid, r, x0, g, nu, ctx.config.expansion)
    kernel = float(np.max(np.abs(free.solution.values - g(u * (x0 / x) ** r))))
    measured = {"manufactured_error": manufactured, "kernel_error": kernel, "defect": solved.defect}
    return manufactured <= 1e-8 and kernel <= 1e-8, measured, ""


def _pairing(ctx: SuiteContext) -> Check:
    config = ctx.config
    b = cos_problem(1.0)
    rng = np.random.default_rng(ctx.seed)
    measured: Dict[str, Any] = {}

    q = outgoing_at(b, 0.5, CriticalKind.MINIMUM, config)
    base = center_modes(q, b, config.expansion.j_max)
    grid = chart_grid(b, 0.5, q.y_c, 0.5, 512, 512, 1e-6, 1e-2, center_y_half(base.with_gammas(np.ones(5))))
    errors, self_pairings = [], []
    for _ in range(5):
        g1 = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        g2 = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        f1 = build_center_eigenfunction(base.with_gammas(g1), grid, config.expansion)
        f2 = build_center_eigenfunction(base.with_gammas(g2), grid, config.expansion)
        flux = pair_flux(f1, f2, config.pairing, strict=False).value
        modes = pair_modes(ModeTrace(q, TraceKind.CENTER, g1), ModeTrace(q, TraceKind.CENTER, g2)).value
        errors.append(abs(flux - modes) / abs(modes))
        self_pairings.append(pair_flux(f1, f1, config.pairing, strict=False).value.real)
    measured["center"] = {"max_relative_error": max(errors), "min_self_pairing": min(self_pairings)}
    ok = max(errors) <= 1e-3 and min(self_pairings) >= 0.0

    q = outgoing_at(b, 5.0, CriticalKind.MAXIMUM, config)
    outgoing = saddle_models(q, b, "outgoing", 2, settings=config.expansion, classical=config.classical)
    incoming = saddle_models(q, b, "incoming", 2, settings=config.expansion, classical=config.classical)
    settings = ExpansionSettings(n_x=768, n_y=512, x_min=1e-5, x_max=1e-3)
    sgrid = saddle_grid(outgoing, b, settings, chart_rho=0.5, y_half=8.0)
    G, spread = saddle_gram_flux(saddle_fields(outgoing, sgrid, 3), saddle_fields(incoming, sgrid, 3),
                                 q.r_real(2) - 0.5, config.pairing, window=y_window(4.0, 7.0))
    lower = np.tril_indices(3, -1)
    excess = float(np.max(np.abs(G[lower]) - spread[lower]))
    bio = biorthogonalize(outgoing, incoming, settings=config.pairing)
    measured["saddle"] = {"lower_excess": excess, "identity_defect": bio.identity_defect,
                          "diagonal_flux": [[complex(v).real, complex(v).imag] for v in np.diag(G)]}
    ok = ok and excess <= 1e-6 and bio.identity_defect <= 1e-8
    return ok, measured, ""


def _round_trips(ctx: SuiteContext) -> Check:
    config = ctx.config
    b = cos_problem(1.0)
    rng = np.random.default_rng(ctx.seed + 1)
    settings = ExpansionSettings(n_x=64, n_y=1024, x_min=1e-4, x_max=1e-2)

    q = outgoing_at(b, 0.5, CriticalKind.MINIMUM, config)
    gammas = rng.standard_normal(9) + 1j * rng.standard_normal(9)
    exp = center_modes(q, b, settings.j_max).with_gammas(gammas)
    field = build_center_eigenfunction(exp, center_grid(exp, b, settings), settings)
    trace = extract_mode_trace(field, q, config.pairing, count=9)
    center_error = float(np.linalg.norm(trace.trace - gammas))

    q = outgoing_at(b, 5.0, CriticalKind.MINIMUM, config)
    profile = GaussianProfile(0.2)
    sink = sink_expansion(q, b, profile, (q.y_c - 1.0, q.y_c + 1.0), config.legendrian)
    field = build_sink_eigenfunction(sink, sink_grid(sink, b, settings.model_copy(update={"n_y": 512}), y_half=1.0))
    trace = extract_mode_trace(field, q, config.pairing, expansion=sink)
    sink_error = math.sqrt(float(trapezoid(np.abs(trace.trace - profile(trace.Y)) ** 2, trace.Y)))

    measured = {"center_l2_error": center_error, "sink_l2_error": sink_error}
    return center_error <= 1e-6 and sink_error <= 1e-6, measured, ""


def _oracle(ctx: SuiteContext) -> Check:
    config = ctx.config
    measured: Dict[str, Any] = {}

    flat = constant_problem(-1.0)
    small = OracleSettings(n_s=512, n_y=160, x_min=2e-3, x_max=1.0, x_abs=2e-2, solver="direct")
    grid = oracle.oracle_grid(flat, 1.0, small)
    source = oracle.bump_source(grid, (0.2, 0.6), lambda y: 1.0 + 0.5 * np.cos(y) + 0.25j * np.sin(2 * y))
    coupled = oracle.solve(flat, 1.0, source, small, with_frequency=False).field.values
    separable = oracle.solve_separable(flat, 1.0, source, small).values
    calibration = float(np.max(np.abs(coupled - separable)) / np.max(np.abs(separable)))
    report = oracle.eps_continuation(flat, 1.0, source, [4e-2, 2e-2, 1e-2], small, jobs=ctx.jobs)
    measured["calibration_error"] = calibration
    measured["continuation"] = report.to_dict()

    b = cos_problem(1.0)
    settings = config.oracle
    grid = oracle.oracle_grid(b, 5.0, settings)
    sol = oracle.solve(b, 5.0, oracle.bump_source(grid, (0.25, 0.7)), settings)
    near = sol.frequency.near(math.pi, 0.3, b.circumference, x_upper=0.1)
    peak = float(np.median(near)) if near.size else math.nan
    saddle = outgoing_at(b, 5.0, CriticalKind.MAXIMUM, config)
    decay = oracle.measure_decay(sol, saddle.y_c)
    prediction = 0.5 * saddle.r_real(2)
    measured.update({"frequency_near_minimum": peak, "expected_frequency": math.sqrt(6.0),
                     "decay": decay.to_dict(), "decay_prediction": prediction})

    ok = (calibration <= 1e-6 and report.monotone
          and abs(peak - math.sqrt(6.0)) <= 0.1 * math.sqrt(6.0)
          and decay.exponent >= 0.85 * prediction)
    return ok, measured, ""


def _smatrix(ctx: SuiteContext) -> Check:
    config = ctx.config
    b = cos_problem(1.0)
    single = config.model_copy(update={"pairing": config.pairing.model_copy(update={"j_s": 1})})
    S1 = assemble_smatrix(b, 0.5, single, ctx.jobs)
    modulus = float(abs(S1.matrix[0, 0]))

    multi = config.model_copy(update={"pairing": config.pairing.model_copy(update={"j_s": 4})})
    coarse = assemble_smatrix(b, 5.0, multi, ctx.jobs)
    finer = multi.model_copy(update={"oracle": multi.oracle.model_copy(update={"n_s": 2 * multi.oracle.n_s})})
    fine = assemble_smatrix(b, 5.0, finer, ctx.jobs)
    measured = {"single_modulus": modulus, "multi_shape": list(coarse.matrix.shape),
                "defect_coarse": coarse.unitarity_defect, "defect_fine": fine.unitarity_defect}
    ok = (abs(modulus - 1.0) <= 5e-2 and coarse.matrix.shape == (4, 4)
          and fine.unitarity_defect <= 5e-2 and fine.unitarity_defect < coarse.unitarity_defect)
    return ok, measured, ""


CRITERIA: Tuple[Criterion, ...] = (
    Criterion(1, "classification sweep", "fast", "transition at lambda_Hess +/- 1e-9; r1+r2=1, r1 r2=a/nu^2 to 1e-12", 5.0, _classification),
    Criterion(2, "flow invariants", "full", "drift <= 1e-9, nu non-decreasing, capture >= 99%, saddle->sink edge", 60.0, _flow),
    Criterion(3, "eikonal", "fast", "residual <= 1e-10 on |y| <= 0.5, Phi''(0) = -nu r to 1e-8", 5.0, _eikonal),
    Criterion(4, "center modes", "fast", "Q residual <= 1e-6, Gram = I to 1e-8, j sign changes", 5.0, _center_modes),
    Criterion(5, "expansion residual slopes", "full", "slope >= leading + 1 + gap - 0.05", 120.0, _residual_slopes),
    Criterion(6, "transport oracle", "fast", "manufactured and kernel recovery to 1e-8", 30.0, _transport),
    Criterion(7, "pairing consistency", "fast", "flux vs modes 1e-3, B(u,u) >= 0, Gram upper-triangular, biorth 1e-8", 120.0, _pairing),
    Criterion(8, "round trips", "fast", "center (j <= 8) and sink traces to 1e-6 L2", 30.0, _round_trips),
    Criterion(9, "oracle calibration", "full", "separable 1e-6, frequency sqrt(6) +/- 10%, decay >= 0.85 r2/2, monotone eps", 600.0, _oracle),
    Criterion(10, "S-matrix", "full", "|S| = 1 +/- 5e-2; 4x4 unitarity defect <= 5e-2 and decreasing", 1800.0, _smatrix),
)


def select(tier: str, only: Optional[Sequence[int]] = None) -> List[Criterion]:
    if tier not in ("fast", "full"):
        raise InvalidArgument(f"unknown tier {tier!r}")
    chosen = [c for c in CRITERIA if tier == "full" or c.tier == "fast"]
    if only:
        unknown = set(only) - {c.id for c in CRITERIA}
        if unknown:
            raise InvalidArgument(f"unknown criteria {sorted(unknown)}")
        chosen = [c for c in chosen if c.id in set(only)]
    return chosen


def run_criterion(criterion: Criterion, ctx: SuiteContext) -> CriterionResult:
    measured: Dict[str, Any] = {}
    message = ""
    with Timer() as timer:
        try:
            passed, measured, message = criterion.run(ctx)
            status = "pass" if passed else "fail"
        except (RadialIQError, ValueError, LookupError) as exc:
            status = "error"
            measured = exc.to_dict() if isinstance(exc, RadialIQError) else {"error": type(exc).__name__}
            message = str(exc)
    if status == "pass" and timer.elapsed > criterion.budget_s:
        status = "fail"
        message = f"runtime {timer.elapsed:.1f}s over budget {criterion.budget_s:.0f}s"
    MetricsTracker.track_criterion(str(criterion.id), status)
    if status != "pass":
        log_event("criterion_failed", target=str(criterion.id),
                  details={"name": criterion.name, "status": status, "message": message}, level="WARNING")
    return CriterionResult(id=criterion.id, name=criterion.name, tier=criterion.tier, status=status,
                           target=criterion.target, measured=_plain(measured), message=message,
                           duration_s=round(timer.elapsed, 3))


def run_suite(tier: str, config: Optional[NumericsConfig] = None, jobs: int = 1,
              only: Optional[Sequence[int]] = None) -> AcceptanceTable:
    """Run the selected criteria in id order."""
    ctx = SuiteContext(config or NumericsConfig(), jobs)
    results = []
    for criterion in select(tier, only):
        logger.info(f"[ACCEPT] criterion {criterion.id}: {criterion.name}")
        results.append(run_criterion(criterion, ctx))
    return AcceptanceTable(schema=schema_tag("acceptance"), tier=tier, results=results)


def _plain(measured: Dict[str, Any]) -> Dict[str, Any]:
    return to_jsonable(measured)
