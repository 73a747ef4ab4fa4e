#!/usr/bin/env python3
"""
CLI for the Bernoulli free boundary solver.

Usage:
    python -m app.cli.freebound solve --config configs/published.cfg --out runs/published
    python -m app.cli.freebound verify-fem
    python -m app.cli.freebound grad-check --config configs/published.cfg --directions 3 --t 1e-3
    python -m app.cli.freebound study-symmetry --config configs/published.cfg
    python -m app.cli.freebound study-monotonicity --a 0.129 0.2
    python -m app.cli.freebound study-asymptotics --a 0.5 1 2 4 --b-window 0.25 --homothety
    python -m app.cli.freebound study-penalization --eps 0.1 0.05 0.01

Examples:
    # Reproduce the published run with SVG snapshots every 10 iterates
    python -m app.cli.freebound solve --config configs/published.cfg --snapshot-stride 10

    # Same run with eps halved after each convergence, dumping the final fields
    python -m app.cli.freebound solve --config configs/published.cfg --continuation --dump-fields

Every command writes its artifacts under --out (default: the config's
output_dir). On failure a failure.json record is written there and the exit
status is 1.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from pydantic import BaseModel

from app.application.reports import FailureRecord, GradientCheckReport, SolveSummary, StudyReport, VerificationReport
from app.application.shape_optimizer import DomainEvaluation, ShapeOptimizer, solve_config
from app.application.studies import (
    require_passed,
    study_asymptotics,
    study_monotonicity,
    study_penalization,
    study_symmetry,
)
from app.application.verification import gradient_check, verify_fem
from app.config import RunConfig, load_config, settings
from app.domain.entities import OptimizerState
from app.domain.exceptions import ConfigError, DomainError, OptimizationFailedError, StudyAssertionError
from app.infrastructure import exporters
from app.version import __version__

logger = logging.getLogger("app.cli.freebound")


class IterationContextFilter(logging.Filter):
    """Prefix every record with the running subcommand"""

    def __init__(self, command: str = ""):
        super().__init__()
        self.command = command

    def filter(self, record):
        if self.command and not getattr(record, "_command_tagged", False):
            record.msg = f"[{self.command}] {record.msg}"
            record._command_tagged = True
        return True


def configure_logging(command: str, level: Optional[str] = None) -> IterationContextFilter:
    logging.basicConfig(
        level=getattr(logging, (level or settings.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    context = IterationContextFilter(command)
    for handler in logging.root.handlers:
        handler.addFilter(context)
    return context


# ============================================
# Helpers
# ============================================

def _load(args) -> RunConfig:
    config = load_config(args.config)
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "snapshot_stride", None) is not None:
        changes["snapshot_stride"] = args.snapshot_stride
    return config.with_changes(**changes) if changes else config


def _out_dir(args, config: RunConfig) -> Path:
    out = Path(args.out or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    args.resolved_out = out
    return out


def _summary_text(summary: SolveSummary) -> str:
    lines = [
        f"freebound {summary.version}",
        f"status            {summary.status}",
        f"iterations        {summary.iterations}",
        f"stages            {summary.stages}",
        f"eps               {summary.eps:.6g}",
        f"J_eps initial     {summary.j_eps_initial:.6e}",
        f"J_eps final       {summary.j_eps_final:.6e}",
        f"misfit initial    {summary.misfit_initial:.6e}",
        f"misfit final      {summary.misfit_final:.6e}",
        f"kappa final       {summary.kappa_final:.6f}",
        f"convex final      {'yes' if summary.convex_final else 'no'}",
    ]
    return "\n".join(lines) + "\n"


def _report_failures(report: BaseModel) -> List[str]:
    if isinstance(report, VerificationReport):
        return [s.name for s in report.failures]
    if isinstance(report, StudyReport):
        return [a.name for a in report.assertions if not a.passed]
    if isinstance(report, GradientCheckReport):
        return [f"direction {r.direction}" for r in report.rows if r.relative_error > report.tolerance]
    return []


def write_failure(out: Path, command: str, error: DomainError) -> Path:
    """failure.json with the error, and the last accepted control points when there are any"""
    record = FailureRecord(command=command, error_type=type(error).__name__, message=str(error))
    if isinstance(error, ConfigError):
        record.line = error.line
        record.key = error.key
    if isinstance(error, StudyAssertionError) and error.report is not None:
        record.failures = _report_failures(error.report)
    state = getattr(error, "state", None)
    if isinstance(state, OptimizerState):
        record.iterate = state.iterate
        record.status = state.status
        snapshot = exporters.write_control_points(out / "failure_control_points.csv", state.polygon)
        record.snapshot = str(snapshot)
    return exporters.write_json(out / "failure.json", record)


# ============================================
# Commands
# ============================================

def cmd_solve(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    logger.info(f"🚀 freebound {__version__}: solve m={config.m} eps={config.eps} h={config.target_h} -> {out}")

    initial = {}
    misfit = ShapeOptimizer.from_config(config).unpenalized_misfit

    def on_iterate(state: OptimizerState, ev: DomainEvaluation) -> None:
        if not initial:
            initial["j_eps"] = ev.j_eps
            initial["misfit"] = misfit(ev)
            exporters.write_boundary(out / "boundary_initial.csv", ev.boundary)
            exporters.write_svg(out / "boundary_initial.svg", ev.boundary, "initial")
            exporters.write_control_points(out / "control_points_initial.csv", ev.polygon)
        stride = config.snapshot_stride
        if stride and state.iterate % stride == 0:
            name = f"iter_{state.iterate:04d}_eps_{state.eps:.4g}.svg"
            exporters.write_svg(out / "snapshots" / name, ev.boundary, f"l={state.iterate}")

    try:
        outcome = solve_config(config, continuation=args.continuation, on_iterate=on_iterate)
    except OptimizationFailedError as e:
        if e.state is not None:
            exporters.write_iterations(out / "iterations.csv", e.state.history)
        raise

    for stage, state in enumerate(outcome.stages):
        name = "iterations.csv" if stage == 0 else f"iterations_stage{stage}.csv"
        exporters.write_iterations(out / name, state.history)

    ev = outcome.evaluation
    state = outcome.state
    exporters.write_boundary(out / "boundary_final.csv", ev.boundary)
    exporters.write_svg(out / "boundary_final.svg", ev.boundary, "final")
    exporters.write_control_points(out / "control_points_final.csv", state.polygon)
    if args.dump_mesh:
        exporters.write_mesh(out / "mesh_final.txt", ev.mesh)
    if args.dump_fields:
        grad = outcome.optimizer.gradient(ev)
        for field in (ev.u1, ev.u2eps, grad.p1, grad.p2):
            exporters.write_field(out / f"field_{field.name}.csv", field)

    summary = SolveSummary(
        version=__version__,
        status=state.status,
        iterations=sum(s.iterate for s in outcome.stages),
        j_eps_initial=initial["j_eps"],
        j_eps_final=state.j_eps,
        misfit_initial=initial["misfit"],
        misfit_final=outcome.optimizer.unpenalized_misfit(ev),
        kappa_final=state.history[-1].kappa_extent,
        convex_final=ev.convexity.convex,
        eps=outcome.optimizer.penalty.eps,
        stages=len(outcome.stages),
    )
    exporters.write_json(out / "summary.json", summary)
    text = _summary_text(summary)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    logger.info(f"✅ Solve finished: {summary.status} after {summary.iterations} iterations")
    return 0


def cmd_verify_fem(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    report = verify_fem(config)
    exporters.write_json(out / "verify_fem.json", report)
    for suite in report.suites:
        print(f"{'PASS' if suite.passed else 'FAIL'}  {suite.name:<24} {suite.value:.3e}  (threshold {suite.threshold:.1e})")
    if not report.passed:
        raise StudyAssertionError(
            f"{len(report.failures)} FEM suite(s) failed: {', '.join(s.name for s in report.failures)}",
            report=report,
        )
    return 0


def cmd_grad_check(args) -> int:
    config = _load(args)
    out = _out_dir(args, config)
    report = gradient_check(config, args.directions, args.t, mesh_h=args.mesh_h)
    exporters.write_json(out / "grad_check.json", report)
    exporters.write_csv(
        out / "grad_check.csv",
        ("direction", "center", "width", "analytic", "finite_difference", "relative_error"),
        ((r.direction, r.center, r.width, r.analytic, r.finite_difference, r.relative_error) for r in report.rows),
    )
    for r in report.rows:
        print(f"{r.direction:>3}  analytic={r.analytic: .6e}  fd={r.finite_difference: .6e}  rel={r.relative_error:.3e}")
    if not report.passed:
        raise StudyAssertionError(
            f"Relative error {report.worst_error:.3e} exceeds {report.tolerance}", report=report
        )
    return 0


def _finish_study(out: Path, report: StudyReport) -> int:
    exporters.write_json(out / f"study_{report.study}.json", report)
    keys = sorted({k for r in report.records for k in r.observables})
    exporters.write_csv(
        out / f"study_{report.study}.csv",
        ("parameter", "status", *keys),
        ((r.parameter, r.status, *(r.observables.get(k, float("nan")) for k in keys)) for r in report.records),
    )
    for r in report.records:
        if r.profile:
            exporters.write_csv(
                out / f"profile_{report.study}_{r.parameter:g}.csv",
                ("x2", "psi"),
                zip(r.profile_grid, r.profile),
            )
    for a in report.assertions:
        print(f"{'PASS' if a.passed else 'FAIL'}  {a.name:<20} {a.detail}")
    require_passed(report)
    return 0


def cmd_study_symmetry(args) -> int:
    config = _load(args)
    return _finish_study(_out_dir(args, config), study_symmetry(config, continuation=args.continuation))


def cmd_study_monotonicity(args) -> int:
    config = _load(args)
    return _finish_study(_out_dir(args, config), study_monotonicity(config, args.a))


def cmd_study_asymptotics(args) -> int:
    config = _load(args)
    report = study_asymptotics(config, args.a, args.b_window, homothety=args.homothety)
    return _finish_study(_out_dir(args, config), report)


def cmd_study_penalization(args) -> int:
    config = _load(args)
    return _finish_study(_out_dir(args, config), study_penalization(config, args.eps))


COMMANDS = {
    "solve": cmd_solve,
    "verify-fem": cmd_verify_fem,
    "grad-check": cmd_grad_check,
    "study-symmetry": cmd_study_symmetry,
    "study-monotonicity": cmd_study_monotonicity,
    "study-asymptotics": cmd_study_asymptotics,
    "study-penalization": cmd_study_penalization,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freebound",
        description='Bernoulli free boundary solver',
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='key = value config file (default: published configuration)')
    common.add_argument('--out', help='Output directory (default: output_dir of the config)')
    common.add_argument('--seed', type=int, help='Seed for randomized checks')
    common.add_argument('--log-level', help='Overrides LOG_LEVEL')

    subparsers = parser.add_subparsers(dest='command', help='Command to execute')

    # Solve command
    solve_parser = subparsers.add_parser('solve', parents=[common], help='Run the shape optimizer')
    solve_parser.add_argument('--dump-mesh', action='store_true', help='Write the final mesh as text')
    solve_parser.add_argument('--dump-fields', action='store_true', help='Write u1, u2eps, p1, p2 on the final mesh')
    solve_parser.add_argument('--snapshot-stride', type=int, help='SVG snapshot every N iterates (0 = off)')
    solve_parser.add_argument('--continuation', action='store_true', help='Halve eps and restart after convergence')

    # Verification commands
    subparsers.add_parser('verify-fem', parents=[common], help='Run the FEM verification suites')
    grad_parser = subparsers.add_parser('grad-check', parents=[common], help='Shape gradient against finite differences')
    grad_parser.add_argument('--directions', type=int, help='Number of random bump velocities')
    grad_parser.add_argument('--t', type=float, help='Finite difference step')
    grad_parser.add_argument('--mesh-h', type=float, help='Mesh size (default: target_h of the config)')

    # Study commands
    symmetry_parser = subparsers.add_parser('study-symmetry', parents=[common], help='Reflection symmetry of the solution')
    symmetry_parser.add_argument('--continuation', action='store_true', help='Solve with eps continuation')

    mono_parser = subparsers.add_parser('study-monotonicity', parents=[common], help='Omega_a inside Omega_b for a < b')
    mono_parser.add_argument('--a', type=float, nargs='+', default=[0.129, 0.2], help='Increasing K half-lengths')

    asym_parser = subparsers.add_parser('study-asymptotics', parents=[common], help='Flattening toward the strip')
    asym_parser.add_argument('--a', type=float, nargs='+', default=[0.5, 1.0, 2.0, 4.0], help='Increasing K half-lengths')
    asym_parser.add_argument('--b-window', type=float, default=0.25, help='Half-width of the flatness window')
    asym_parser.add_argument('--homothety', action='store_true', help='Cross-check each a with the rescaled problem')

    pen_parser = subparsers.add_parser('study-penalization', parents=[common], help='u2eps against u2 as eps decreases')
    pen_parser.add_argument('--eps', type=float, nargs='+', default=[0.1, 0.05, 0.01], help='Decreasing eps values')

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 1

    configure_logging(args.command, args.log_level)
    try:
        return COMMANDS[args.command](args)
    except DomainError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        out = getattr(args, "resolved_out", None) or Path(args.out or settings.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = write_failure(out, args.command, e)
        print(f"[ERROR] {e} (details in {path})", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
