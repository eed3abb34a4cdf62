"""
Command-line entry point.

    python -m src.cli solve graph.json --method flow --method bp0
    python -m src.cli threshold 2 1 1 1 --tol 1e-3 --simulate 20000 5
    python -m src.cli cdn scenario.json
    python -m src.cli lln servers.json contents.json 20000 10 --seed 7

The first stdout line is the resolved configuration, even when the run fails, then CSV.
Logs go to stderr.
Exit codes: 0 success, 1 an agreement check failed, 2 input or run error.
"""
import argparse
import sys
from contextlib import nullcontext
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO, Tuple

from dotenv import load_dotenv

from src.apps import load_scenario
from src.config import TOLERANCES, RuntimeSettings
from src.errors import CapallocError
from src.experiment_runner import ExperimentRunner
from src.graph import load_graph
from src.limits import load_law
from src.models import (
    CdnRecord, CuckooParams, LlnRecord, OccupancyRecord, RunConfig, RunReport, SolveRecord, ThresholdRecord
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2

# (report, record types to print)
Handled = Tuple[RunReport, List[type]]
Runner = Callable[[argparse.Namespace, ExperimentRunner, int], Handled]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capalloc", description="Maximum capacitated allocations")
    parser.add_argument("--jobs", type=int, default=None, help="Worker processes (default: CAPALLOC_JOBS, then CPU count)")
    parser.add_argument("--output", type=str, default=None, help="Write the report here instead of stdout")
    parser.add_argument("--quiet", action="store_true", help="Do not echo logs to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="Maximum allocation of one graph file")
    solve.add_argument("graph", help="Graph file")
    solve.add_argument("--method", action="append", choices=["flow", "bp0", "bp", "enum", "leaf"],
                       help="Repeatable; default flow")
    solve.add_argument("--lambda", dest="lam", type=float, default=1.0, help="Fugacity for --method bp")

    threshold = sub.add_parser("threshold", help="(k,l,r)-orientability threshold of h-uniform hypergraphs")
    for name in ("h", "k", "l", "r"):
        threshold.add_argument(name, type=int)
    threshold.add_argument("--tol", type=float, default=1e-3, help="Bisection width")
    threshold.add_argument("--simulate", type=int, nargs=2, metavar=("N", "TRIALS"), default=None,
                           help="Also simulate the transition on N-vertex hypergraphs")
    threshold.add_argument("--seed", type=int, default=None)

    cdn = sub.add_parser("cdn", help="Asymptotic absorbed load of a CDN scenario")
    cdn.add_argument("scenario", help="Scenario file")

    lln = sub.add_parser("lln", help="Empirical M(G)/|A| against the limit")
    lln.add_argument("phi_a", help="Law file for side A")
    lln.add_argument("phi_b", help="Law file for side B")
    lln.add_argument("n_a", type=int)
    lln.add_argument("trials", type=int)
    lln.add_argument("--seed", type=int, default=None)
    return parser


def _write_tables(out: TextIO, report: RunReport, record_types: Sequence[type]):
    for i, record_type in enumerate(record_types):
        if i:
            out.write("\n")
        rows = [row for row in report.rows if isinstance(row, record_type)]
        out.write(RunReport(rows=rows, success=report.success).to_csv(record_type) + "\n")


def _exit_code(report: RunReport) -> int:
    if not report.success:
        return EXIT_ERROR
    return EXIT_OK if report.checks_passed else EXIT_CHECK_FAILED


def solve_params(args: argparse.Namespace) -> Dict[str, Any]:
    return {"graph": args.graph, "methods": args.method or ["flow"], "lambda": args.lam}


def cmd_solve(args: argparse.Namespace, runner: ExperimentRunner, seed: int) -> Handled:
    report = runner.run_solve(load_graph(args.graph), args.method or ["flow"], args.lam)
    return report, [SolveRecord, OccupancyRecord]


def threshold_params(args: argparse.Namespace) -> Dict[str, Any]:
    return {"h": args.h, "k": args.k, "l": args.l, "r": args.r, "tol": args.tol, "simulate": args.simulate}


def cmd_threshold(args: argparse.Namespace, runner: ExperimentRunner, seed: int) -> Handled:
    p = CuckooParams(h=args.h, k=args.k, l=args.l, r=args.r).check()
    simulate = tuple(args.simulate) if args.simulate else None
    report = runner.run_threshold(p, tol=args.tol, simulate=simulate, seed=seed)
    return report, [ThresholdRecord]


def cdn_params(args: argparse.Namespace) -> Dict[str, Any]:
    return {"scenario": args.scenario}


def cmd_cdn(args: argparse.Namespace, runner: ExperimentRunner, seed: int) -> Handled:
    return runner.run_cdn(load_scenario(args.scenario)), [CdnRecord]


def lln_params(args: argparse.Namespace) -> Dict[str, Any]:
    return {"phi_a": args.phi_a, "phi_b": args.phi_b, "n_a": args.n_a, "trials": args.trials}


def cmd_lln(args: argparse.Namespace, runner: ExperimentRunner, seed: int) -> Handled:
    report = runner.run_lln(load_law(args.phi_a), load_law(args.phi_b), args.n_a, args.trials, seed=seed)
    return report, [LlnRecord]


COMMANDS: Dict[str, Tuple[Callable[[argparse.Namespace], Dict[str, Any]], Runner]] = {
    "solve": (solve_params, cmd_solve),
    "threshold": (threshold_params, cmd_threshold),
    "cdn": (cdn_params, cmd_cdn),
    "lln": (lln_params, cmd_lln),
}


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    settings = RuntimeSettings.from_env()
    jobs = settings.resolve_jobs(args.jobs)
    runner = ExperimentRunner(settings.environment, jobs=jobs, echo=not args.quiet)
    seed = getattr(args, "seed", None)
    seed = settings.seed if seed is None else seed

    params_of, run = COMMANDS[args.command]
    config = RunConfig(command=args.command, params=params_of(args), seed=seed, jobs=jobs,
                       environment=settings.environment, tolerances=TOLERANCES, output=args.output)
    sink = open(args.output, "w", encoding="utf-8") if args.output else nullcontext(sys.stdout)
    with sink as out:
        # written before the run, so failed runs keep it too
        out.write(config.to_record() + "\n")
        try:
            report, record_types = run(args, runner, seed)
        except (CapallocError, ValueError) as e:
            runner.logger.log_error_with_context(e, f"{args.command} input")
            print(f"error: {e}", file=sys.stderr)
            return EXIT_ERROR

        if not report.success:
            print(f"error: {report.error_message}", file=sys.stderr)
            return EXIT_ERROR
        _write_tables(out, report, record_types)
    return _exit_code(report)


if __name__ == "__main__":
    sys.exit(main())
