"""mfc: batch front door (audit, solve, check, simulate)."""

from __future__ import annotations

import argparse
import sys
from typing import Any, Dict, Mapping, Optional, Sequence

from rich.console import Console
from rich.table import Table

from congestion_mfc.exception.custom_exception import (
    AuditFailedError,
    ConfigError,
    MeanFieldControlException,
)
from congestion_mfc.logger import GLOBAL_LOGGER as log
from congestion_mfc.logger.custom_logger import configure_logging
from congestion_mfc.orchestrator.run_orchestrator import RunOrchestrator

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

console = Console()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfc", description="Congestion mean field control runs")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="run config YAML")
    common.add_argument("--out", default=None, help="output root for run directories")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--max-iters", type=int, default=None)
    common.add_argument("--tol-gap", type=float, default=None)
    common.add_argument("--log-level", default=None)

    sub.add_parser("audit", parents=[common], help="check the model assumptions")
    sub.add_parser("solve", parents=[common], help="audit, solve and certify")
    for name, text in (
        ("check", "re-certify the field files of a run"),
        ("simulate", "particle cross-check of a solved run"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--run", required=True, help="run directory written by solve")
    return parser


def _summary(title: str, rows: Mapping[str, Any]) -> Table:
    table = Table(title=title)
    table.add_column("quantity")
    table.add_column("value", justify="right")
    for key, value in rows.items():
        if isinstance(value, float):
            value = f"{value:.6e}"
        table.add_row(key, str(value))
    return table


def _orchestrator(args: argparse.Namespace) -> RunOrchestrator:
    overrides = dict(out=args.out, seed=args.seed, max_iters=args.max_iters, tol_gap=args.tol_gap)
    run = getattr(args, "run", None)
    if run is not None and args.config is None:
        return RunOrchestrator.from_run_dir(run, **overrides)
    return RunOrchestrator(config_path=args.config, **overrides)


def cmd_audit(args: argparse.Namespace) -> int:
    report = _orchestrator(args).run_audit()
    rows: Dict[str, Any] = {"passed": report.passed, "C1": report.C1, "C2": report.C2, "C3": report.C3}
    for v in report.violations:
        rows[v.assumption] = f"measured={v.measured:.3e} bound={v.bound:.3e}"
    console.print(_summary("audit", rows))
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_solve(args: argparse.Namespace) -> int:
    orchestrator = _orchestrator(args)
    artifacts = orchestrator.run_solve()
    report = artifacts.report
    console.print(
        _summary(
            "solve",
            {
                "run_dir": artifacts.run_dir,
                "converged": report.converged,
                "certified": artifacts.certified,
                "iterations": report.iterations,
                "gap": report.final_gap,
                "rel_gap": report.final_rel_gap,
                "fp_residual": report.fp_residual,
                "wall_time_s": report.wall_time,
            },
        )
    )
    history = report.gap_frame()
    if not history.empty:
        console.print(history.tail(5).to_markdown(index=False))

    if orchestrator.config.mckv.enabled:
        stats = orchestrator.run_simulate(artifacts.run_dir)
        console.print(_summary("particles", stats))
    return EXIT_OK if artifacts.success else EXIT_FAILED


def cmd_check(args: argparse.Namespace) -> int:
    certificate = _orchestrator(args).run_check(args.run)
    rows: Dict[str, Any] = {"passed": certificate.passed, "gap": certificate.gap}
    rows.update({f"clause.{k}": v for k, v in certificate.clauses.items()})
    console.print(_summary("check", rows))
    return EXIT_OK if certificate.passed else EXIT_FAILED


def cmd_simulate(args: argparse.Namespace) -> int:
    stats = _orchestrator(args).run_simulate(args.run)
    console.print(_summary("particles", stats))
    return EXIT_OK


COMMANDS = {
    "audit": cmd_audit,
    "solve": cmd_solve,
    "check": cmd_check,
    "simulate": cmd_simulate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        console.print(f"[red]config error[/red] {e.error_message}")
        return EXIT_CONFIG
    except AuditFailedError as e:
        console.print(f"[red]audit failed[/red] {e.error_message}")
        return EXIT_FAILED
    except MeanFieldControlException as e:
        log.error("Run failed | command=%s | error=%s", args.command, e.error_message)
        console.print(f"[red]run failed[/red] {e.error_message}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
