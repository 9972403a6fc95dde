"""
radialiq command line.

    radialiq classify --problem cos.json --lambda 5
    radialiq accept --tier fast

Every command writes result.json and manifest.json under --out-dir and prints
the result document on stdout. Domain failures print a JSON error on stderr.
"""

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from app.config import (
    DEFAULT_OUT_DIR,
    EXIT_ACCEPTANCE_FAILED,
    EXIT_NUMERICAL_FAILURE,
    EXIT_OK,
    EXIT_USAGE,
    METRICS_ENABLED,
    METRICS_FILE,
)
from app.core.constants import TOOL_VERSION
from app.core.errors import InvalidArgument, RadialIQError
from app.core.logging import log_command_event, logger, set_level
from app.core.metrics import MetricsTracker, Timer, write_metrics
from app.schemas.config import NumericsConfig, load_config
from app.schemas.results import CommandResult, ErrorDocument
from app.services import acceptance, boundary_model, classical, legendrian, oracle, pairing
from app.services.boundary_model import BoundaryData, CriticalKind
from app.services.eigenfunction_models import center, saddle, sink, threshold
from app.services.eigenfunction_models.operator import (
    CollarGrid,
    chart_grid,
    chart_grid_from_settings,
    residual,
    write_field_block,
)
from app.services.eigenfunction_models.profiles import GaussianProfile, profile_from_dict
from app.services.manifest import OutputWriter, build_manifest, canonical_json, to_jsonable, write_manifest


@dataclass
class Context:
    args: argparse.Namespace
    config: NumericsConfig
    writer: OutputWriter

    @property
    def jobs(self) -> int:
        return self.config.cli.jobs

    def problem(self) -> BoundaryData:
        return boundary_model.load_problem(self.args.problem)


@dataclass
class Outcome:
    data: Dict[str, Any]
    exit_code: int = EXIT_OK
    text: Optional[str] = None


# ========== ARGUMENT PARSING ==========

def _override(text: str) -> Tuple[str, Any]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), yaml.safe_load(raw)


def _complex_list(text: str) -> List[complex]:
    """'1,0.5+0.25j,-1j' -> [1, 0.5+0.25j, -1j]"""
    try:
        return [complex(part.replace(" ", "")) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of complex numbers: {text!r}")


def _profile(text: str):
    try:
        return profile_from_dict(json.loads(text))
    except (json.JSONDecodeError, InvalidArgument) as exc:
        raise argparse.ArgumentTypeError(f"invalid profile: {exc}")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=DEFAULT_OUT_DIR)
    common.add_argument("--config", default=None, help="YAML numerics preset (default presets/numerics.yaml)")
    common.add_argument("--set", dest="overrides", action="append", type=_override, default=[],
                        metavar="KEY=VALUE", help="dotted config override, e.g. oracle.eps_rel=5e-3")
    common.add_argument("--jobs", type=int, default=None)
    common.add_argument("--metrics-file", default=None)
    common.add_argument("--plot", action="store_true", help="also write gnuplot scripts for CSV outputs")
    common.add_argument("--verbose", action="store_true")
    return common


def _problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", required=True, help="problem JSON (V0, V1 Fourier terms)")
    p.add_argument("--lambda", dest="lam", type=float, required=True)


def _expansion_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=["center", "sink", "threshold", "saddle"], required=True)
    p.add_argument("--gammas", type=_complex_list, default=None,
                   help="center coefficients gamma_j, or saddle coefficients a_n")
    p.add_argument("--profile", type=_profile, default=None, help='e.g. {"type": "gaussian", "width": 0.2}')
    p.add_argument("--n-max", type=int, default=2)
    p.add_argument("--direction", choices=["outgoing", "incoming"], default="outgoing")
    p.add_argument("--y-half", type=float, default=None)
    p.add_argument("--y-interval", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--incoming", action="store_true", help="conjugate center/sink/threshold expansions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radialiq",
                                     description="Microlocal scattering numerics for order-zero potentials.")
    parser.add_argument("--version", action="version", version=f"radialiq {TOOL_VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()

    p = sub.add_parser("classify", parents=[common], help="critical points, thresholds and radial points")
    _problem_args(p)
    p.add_argument("--sweep", type=float, nargs=3, default=None, metavar=("START", "STOP", "COUNT"))

    p = sub.add_parser("flow", parents=[common], help="bicharacteristics from random starts on Sigma(lambda)")
    _problem_args(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("morse", parents=[common], help="Morse DAG of outgoing radial points")
    _problem_args(p)

    p = sub.add_parser("eikonal", parents=[common], help="Legendre phase through a radial point")
    _problem_args(p)
    p.add_argument("--at", choices=["max", "min"], default="max")
    p.add_argument("--branch", type=int, choices=[1, 2], default=2)
    p.add_argument("--y-interval", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--samples", type=int, default=401)

    p = sub.add_parser("expand", parents=[common], help="build a microlocal eigenfunction model")
    _problem_args(p)
    _expansion_args(p)
    p.add_argument("--full-field", action="store_true", help="store u instead of the amplitude w")

    p = sub.add_parser("residual", parents=[common], help="residual slope of a built model")
    _problem_args(p)
    _expansion_args(p)
    p.add_argument("--fit-range", type=float, nargs=2, default=None, metavar=("X_LO", "X_HI"))

    p = sub.add_parser("pair", parents=[common], help="Green pairing of built fields")
    _problem_args(p)
    p.add_argument("--kind", choices=["center", "saddle"], required=True)
    p.add_argument("--gammas", type=_complex_list, default=[1.0])
    p.add_argument("--gammas2", type=_complex_list, default=None)
    p.add_argument("--n-max", type=int, default=2)

    p = sub.add_parser("smatrix", parents=[common], help="scattering matrix from oracle solves")
    _problem_args(p)

    p = sub.add_parser("oracle-solve", parents=[common], help="limiting-absorption solve on the collar")
    _problem_args(p)
    p.add_argument("--source-x", type=float, nargs=2, default=(0.25, 0.7), metavar=("X_LO", "X_HI"))
    p.add_argument("--source-mode", type=int, default=0, help="Fourier mode of the source in y")
    p.add_argument("--decay-y", type=float, default=None)
    p.add_argument("--eps-list", type=float, nargs="+", default=None)
    p.add_argument("--full-field", action="store_true")

    p = sub.add_parser("accept", parents=[common], help="run the acceptance suite")
    p.add_argument("--tier", choices=["fast", "full"], default="fast")
    p.add_argument("--only", type=int, nargs="+", default=None)
    return parser


# ========== HELPERS ==========

def _outgoing(b: BoundaryData, lam: float, kind: CriticalKind, config: NumericsConfig) -> classical.RadialPoint:
    try:
        return acceptance.outgoing_at(b, lam, kind, config)
    except LookupError as exc:
        raise InvalidArgument(str(exc), {"lambda": lam, "kind": kind.value})


def _maybe_plot(ctx: Context, name: str, csv_name: str, x_col: int, y_cols: Sequence[int],
                title: str, logscale: str = "") -> None:
    if ctx.args.plot:
        ctx.writer.write_plot(name, csv_name, x_col, y_cols, title, logscale)


def _build_field(ctx: Context, b: BoundaryData) -> Tuple[CollarGrid, Dict[str, Any], Optional[float]]:
    """Built field, its expansion data and the predicted residual slope (if known)."""
    args, config = ctx.args, ctx.config
    lam = args.lam
    settings = config.expansion

    if args.kind == "saddle":
        q = _outgoing(b, lam, CriticalKind.MAXIMUM, config)
        series = saddle.saddle_models(q, b, args.direction, args.n_max, settings=settings,
                                      classical=config.classical)
        if args.gammas:
            series = series.with_coeffs(args.gammas)
        grid = saddle.saddle_grid(series, b, settings, y_half=args.y_half or 2.0)
        field = saddle.build_saddle_eigenfunction(series, grid)
        n = next((i for i, a in enumerate(series.coeffs) if a != 0), 0)
        predicted = series.leading_exponent(n, 0.5) + 1.0 + series.predicted_gap(n, 0.5)
        return field, series.to_dict(), predicted

    q = _outgoing(b, lam, CriticalKind.MINIMUM, config)
    profile = args.profile or GaussianProfile(0.2)
    if args.kind == "center":
        exp = center.center_modes(q, b, settings.j_max).with_gammas(args.gammas or [1.0])
        if args.incoming:
            exp = center.conjugate_expansion(exp)
        field = center.build_center_eigenfunction(exp, center.center_grid(exp, b, settings), settings)
        return field, exp.to_dict(), center.predicted_residual_slope(exp)
    if args.kind == "sink":
        interval = tuple(args.y_interval) if args.y_interval else None
        exp = sink.sink_expansion(q, b, profile, interval, config.legendrian)
        if args.incoming:
            exp = sink.conjugate_sink(exp)
        field = sink.build_sink_eigenfunction(exp, sink.sink_grid(exp, b, settings, args.y_half))
        return field, exp.to_dict(), exp.beta.real + 1.0 + sink.effective_gap(exp, b)
    exp = threshold.threshold_expansion(q, b, profile)
    if args.incoming:
        exp = threshold.conjugate_threshold(exp)
    grid = chart_grid_from_settings(b, lam, q.y_c, 0.5, settings, args.y_half)
    return threshold.build_threshold_eigenfunction(exp, grid), exp.to_dict(), None


# ========== COMMANDS ==========

def cmd_classify(ctx: Context) -> Outcome:
    b = ctx.problem()
    lam = ctx.args.lam
    cfg = ctx.config
    points = boundary_model.find_critical_points(b, cfg.boundary)
    th = boundary_model.thresholds(b, cfg.boundary)
    data: Dict[str, Any] = {
        "critical_points": [{"y": p.y_c, "kind": p.kind.value, "value": p.value, "hessian": p.hessian}
                            for p in points],
        "thresholds": {"kappa": th.kappa, "K": th.k_sup, "critical_values": list(th.cv),
                       "lambda_hess": [{"y": p.y_c, "value": v} for p, v in th.hess]},
        "range_report": [{"range": name, "lo": lo, "hi": hi if math.isfinite(hi) else None}
                         for name, lo, hi in boundary_model.range_report(th)],
        "energy_range": boundary_model.energy_range(th, lam, cfg.classical.cv_tol).value,
        "radial_points": [q.to_dict() for q in classical.radial_points(b, lam, cfg.classical, cfg.boundary)],
    }
    if ctx.args.sweep:
        start, stop, count = ctx.args.sweep
        sweep = classical.classify_sweep(b, np.linspace(start, stop, int(count)), cfg.classical)
        rows = [(lam_k, q.label, q.kind.value, q.r1.real, q.r1.imag, q.r2.real, q.r2.imag)
                for lam_k, qs in sweep for q in qs if q.outgoing]
        ctx.writer.write_csv("sweep.csv", ["lambda", "label", "kind", "r1_re", "r1_im", "r2_re", "r2_im"], rows)
        _maybe_plot(ctx, "sweep.gp", "sweep.csv", 1, [4, 6], "exponents of outgoing radial points")
        data["sweep"] = {"energies": len(sweep), "rows": len(rows)}
    return Outcome(data)


def cmd_flow(ctx: Context) -> Outcome:
    b = ctx.problem()
    lam = ctx.args.lam
    seed = ctx.config.cli.seed
    starts = classical.sample_sigma(b, lam, ctx.args.n, seed)
    results = classical.integrate_many(b, lam, starts, ctx.config.classical, ctx.jobs)
    rows = [(k, t, p.y, p.nu, p.mu) for k, r in enumerate(results) for t, p in r.samples]
    ctx.writer.write_csv("trajectories.csv", ["id", "t", "y", "nu", "mu"], rows)
    _maybe_plot(ctx, "trajectories.gp", "trajectories.csv", 3, [4], "bicharacteristics (y, nu)")
    data = classical.trajectory_statistics(lam, results)
    data["seed"] = seed
    data["trajectories"] = [{"id": k, "status": r.status.value, "steps": r.steps,
                             "energy_drift": r.energy_drift,
                             "alpha_limit": r.alpha_limit.label if r.alpha_limit else None,
                             "omega_limit": r.omega_limit.label if r.omega_limit else None}
                            for k, r in enumerate(results)]
    return Outcome(data)


def cmd_morse(ctx: Context) -> Outcome:
    b = ctx.problem()
    diagram = classical.morse_diagram(b, ctx.args.lam, ctx.config.classical, ctx.jobs)
    ctx.writer.write_text("morse.dot", classical.to_dot(diagram))
    return Outcome({
        "nodes": [q.to_dict() for q in diagram.nodes],
        "edges": [list(e) for e in diagram.edges],
        "filtration": [list(level) for level in diagram.filtration],
        "a_min": diagram.a_min,
        "unresolved": list(diagram.unresolved),
    })


def cmd_eikonal(ctx: Context) -> Outcome:
    b = ctx.problem()
    args, cfg = ctx.args, ctx.config
    kind = CriticalKind.MAXIMUM if args.at == "max" else CriticalKind.MINIMUM
    q = _outgoing(b, args.lam, kind, cfg)
    jet = legendrian.phase_jet(q, args.branch, b, cfg.legendrian.n_jet, cfg.classical)
    lo, hi = args.y_interval or (q.y_c - 0.5, q.y_c + 0.5)
    phase = legendrian.continue_phase(jet, (lo, hi), cfg.legendrian)
    y_lo, y_hi = (phase.curve.y_lo, phase.curve.y_hi) if phase.curve is not None else (lo, hi)
    ys = np.linspace(y_lo, y_hi, args.samples)
    phi, dphi, ddphi = legendrian.evaluate_phase(phase, ys)
    ctx.writer.write_csv("phase.csv", ["y", "phi", "dphi", "ddphi"], zip(ys, phi, dphi, ddphi))
    _maybe_plot(ctx, "phase.gp", "phase.csv", 1, [2, 3], f"Legendre phase at {q.label}")
    return Outcome({
        "label": q.label,
        "branch": args.branch,
        "jet": list(phase.jet),
        "curvature": phase.curvature,
        "y_range": [y_lo, y_hi],
        "truncated": bool(y_lo > lo + 1e-12 or y_hi < hi - 1e-12),
        "folds": list(phase.curve.folds) if phase.curve is not None else [],
        "eikonal_residual": legendrian.eikonal_residual(phase, ys),
    })


def cmd_expand(ctx: Context) -> Outcome:
    b = ctx.problem()
    field, expansion, _ = _build_field(ctx, b)
    header = write_field_block(field, ctx.writer.register("field.bin"), ctx.args.full_field)
    header.pop("x", None)
    header.pop("coords", None)
    return Outcome({"expansion": expansion, "field": header})


def cmd_residual(ctx: Context) -> Outcome:
    b = ctx.problem()
    field, expansion, predicted = _build_field(ctx, b)
    fit = tuple(ctx.args.fit_range) if ctx.args.fit_range else None
    rep = residual(field, fit)
    ctx.writer.write_csv("residual.csv", ["x", "shell_norm"], zip(rep.x, rep.shell_norm))
    _maybe_plot(ctx, "residual.gp", "residual.csv", 1, [2], "residual shell norms", logscale="xy")
    data = rep.to_dict()
    data.update({"expansion": expansion, "predicted_slope": predicted})
    return Outcome(data)


def cmd_pair(ctx: Context) -> Outcome:
    b = ctx.problem()
    args, cfg = ctx.args, ctx.config
    if args.kind == "center":
        q = _outgoing(b, args.lam, CriticalKind.MINIMUM, cfg)
        g1 = args.gammas
        g2 = args.gammas2 or g1
        base = center.center_modes(q, b, cfg.expansion.j_max)
        count = max(len(g1), len(g2))
        grid = chart_grid(b, args.lam, q.y_c, 0.5, cfg.expansion.n_x, max(cfg.expansion.n_y, 512), 1e-6, 1e-2,
                          center.center_y_half(base.with_gammas(np.ones(count))))
        f1 = center.build_center_eigenfunction(base.with_gammas(g1), grid, cfg.expansion)
        f2 = center.build_center_eigenfunction(base.with_gammas(g2), grid, cfg.expansion)
        flux = pairing.pair_flux(f1, f2, cfg.pairing, strict=False)
        modes = pairing.pair_modes(pairing.ModeTrace(q, pairing.TraceKind.CENTER, np.asarray(g1)),
                                   pairing.ModeTrace(q, pairing.TraceKind.CENTER, np.asarray(g2)))
        return Outcome({"label": q.label, "flux": flux.to_dict(), "modes": modes.to_dict(),
                        "relative_difference": abs(flux.value - modes.value) / max(abs(modes.value), 1e-300)})

    q = _outgoing(b, args.lam, CriticalKind.MAXIMUM, cfg)
    outgoing = saddle.saddle_models(q, b, "outgoing", args.n_max, settings=cfg.expansion, classical=cfg.classical)
    incoming = saddle.saddle_models(q, b, "incoming", args.n_max, settings=cfg.expansion, classical=cfg.classical)
    bio = pairing.biorthogonalize(outgoing, incoming, settings=cfg.pairing)
    settings = cfg.expansion.model_copy(update={"x_min": 1e-5, "x_max": 1e-3, "n_y": max(cfg.expansion.n_y, 512)})
    grid = saddle.saddle_grid(outgoing, b, settings, chart_rho=0.5, y_half=8.0)
    count = args.n_max + 1
    flux, spread = pairing.saddle_gram_flux(pairing.saddle_fields(outgoing, grid, count),
                                            pairing.saddle_fields(incoming, grid, count),
                                            q.r_real(2) - 0.5, cfg.pairing, window=pairing.y_window(4.0, 7.0))
    return Outcome({"label": q.label, "biorthogonalization": bio.to_dict(),
                    "flux_gram": flux, "flux_spread": spread})


def cmd_smatrix(ctx: Context) -> Outcome:
    b = ctx.problem()
    S = pairing.assemble_smatrix(b, ctx.args.lam, ctx.config, ctx.jobs)
    rows = [(i, j, v.real, v.imag) for (i, j), v in np.ndenumerate(S.matrix)]
    ctx.writer.write_csv("smatrix.csv", ["row", "col", "re", "im"], rows)
    return Outcome(S.to_dict())


def cmd_oracle_solve(ctx: Context) -> Outcome:
    b = ctx.problem()
    args, cfg = ctx.args, ctx.config
    grid = oracle.oracle_grid(b, args.lam, cfg.oracle)
    k = args.source_mode
    circumference = b.circumference
    source = oracle.bump_source(grid, tuple(args.source_x),
                                lambda y: np.exp(2j * math.pi * k * y / circumference))
    sol = oracle.solve(b, args.lam, source, cfg.oracle)
    MetricsTracker.track_oracle_solve(sol.solver, sol.duration, sol.iterations)
    write_field_block(sol.field, ctx.writer.register("field.bin"), args.full_field)
    data = sol.to_dict()
    if args.decay_y is not None:
        data["decay"] = oracle.measure_decay(sol, args.decay_y).to_dict()
    if args.eps_list:
        data["continuation"] = oracle.eps_continuation(b, args.lam, source, args.eps_list, cfg.oracle,
                                                       jobs=ctx.jobs).to_dict()
    return Outcome(data)


def cmd_accept(ctx: Context) -> Outcome:
    table = acceptance.run_suite(ctx.args.tier, ctx.config, ctx.jobs, ctx.args.only)
    ctx.writer.write_json("acceptance.json", table.dump())
    return Outcome(table.dump(), EXIT_OK if table.passed else EXIT_ACCEPTANCE_FAILED, table.render())


COMMANDS: Dict[str, Callable[[Context], Outcome]] = {
    "classify": cmd_classify,
    "flow": cmd_flow,
    "morse": cmd_morse,
    "eikonal": cmd_eikonal,
    "expand": cmd_expand,
    "residual": cmd_residual,
    "pair": cmd_pair,
    "smatrix": cmd_smatrix,
    "oracle-solve": cmd_oracle_solve,
    "accept": cmd_accept,
}


# ========== DISPATCH ==========

def _resolve_config(args: argparse.Namespace) -> NumericsConfig:
    overrides = dict(args.overrides)
    if args.jobs is not None:
        overrides["cli.jobs"] = args.jobs
    if getattr(args, "seed", None) is not None:
        overrides["cli.seed"] = args.seed
    return load_config(args.config, overrides)


def _inputs(args: argparse.Namespace) -> List[str]:
    return [p for p in (getattr(args, "problem", None), args.config) if p]


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.verbose:
        set_level(logging.DEBUG)

    writer: Optional[OutputWriter] = None
    config: Optional[NumericsConfig] = None
    exit_code, status, error_code = EXIT_OK, "ok", None
    with Timer() as timer:
        try:
            config = _resolve_config(args)
            writer = OutputWriter(args.out_dir)
            outcome = COMMANDS[args.command](Context(args, config, writer))
            result = CommandResult.build(args.command, config.config_hash(), to_jsonable(outcome.data),
                                         getattr(args, "problem", None), getattr(args, "lam", None))
            writer.write_json("result.json", result.dump())
            sys.stdout.write(outcome.text if outcome.text is not None else canonical_json(result.dump()))
            exit_code = outcome.exit_code
            if exit_code != EXIT_OK:
                status = "failed"
        except RadialIQError as exc:
            payload = exc.to_dict()
            error_code = payload["error"]
            sys.stderr.write(json.dumps(ErrorDocument.from_error(payload).dump(), default=str) + "\n")
            exit_code, status = EXIT_NUMERICAL_FAILURE, "error"
            MetricsTracker.track_error(error_code)

    if writer is not None and config is not None:
        manifest = build_manifest(args.command, argv, config, writer, _inputs(args), timer.elapsed,
                                  "ok" if status == "ok" or exit_code == EXIT_ACCEPTANCE_FAILED else "error")
        write_manifest(writer, manifest)

    MetricsTracker.track_command(args.command, status, timer.elapsed)
    log_command_event(args.command, status, timer.elapsed, error_code)
    if METRICS_ENABLED:
        write_metrics(args.metrics_file or METRICS_FILE)
    logger.debug(f"[CLI] {args.command} exited with {exit_code}")
    return exit_code


def main() -> int:
    return dispatch()


if __name__ == "__main__":
    raise SystemExit(main())
