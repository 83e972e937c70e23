"""Command line interface for batch planning runs.

Exit codes: 0 on success, 2 when the scenario file does not parse or
validate, 3 when a solver fails to converge (the report is still
written when one exists).
"""

import argparse
import sys
from pathlib import Path

from .allocation import AllocationError
from .pipeline import (
    DEFAULT_PERIODS,
    PipelineError,
    SolveSettings,
    emit,
    run_baseline,
    run_optimize,
    run_plan,
    run_relaxed,
    run_sweep,
)
from .scenarios import ScenarioError, load_scenario

VERBS = {
    "solve-relaxed": run_relaxed,
    "plan": run_plan,
    "optimize": run_optimize,
    "baseline": run_baseline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uavwpcn",
        description="UAV trajectory and wireless power/information "
                    "scheduling for max-min uplink throughput")
    sub = parser.add_subparsers(dest="verb", required=True)
    descriptions = {
        "solve-relaxed": "global optimum of the relaxed problem "
                         "(multi-location hovering)",
        "plan": "successive hover-and-fly trajectory and its allocation",
        "optimize": "plan followed by alternating convex refinement",
        "baseline": "best static hovering position",
        "sweep": "all four methods over a grid of flight periods",
    }
    for verb, text in descriptions.items():
        cmd = sub.add_parser(verb, help=text)
        cmd.add_argument("--scenario", required=True,
                         help="scenario file (JSON or TOML) or a shipped "
                              "layout name")
        cmd.add_argument("--out", default="out",
                         help="output directory root (default: out)")
        cmd.add_argument("--seed", type=int, default=0,
                         help="seed for randomized tour restarts")
        cmd.add_argument("--slots", type=int, default=None,
                         help="slot count for the refinement grid")
        cmd.add_argument("--tol", type=float, default=None,
                         help="dual solver stopping tolerance")
        cmd.add_argument("--grid", type=float, default=None,
                         help="spatial search grid step in meters")
        if verb == "sweep":
            cmd.add_argument(
                "--periods",
                default=",".join(f"{t:g}" for t in DEFAULT_PERIODS),
                help="comma-separated flight periods in seconds")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scn = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    settings = SolveSettings(seed=args.seed, tol=args.tol,
                             grid_step=args.grid, num_slots=args.slots)
    try:
        if args.verb == "sweep":
            try:
                periods = [float(tok) for tok in args.periods.split(",")
                           if tok.strip()]
            except ValueError:
                print(f"scenario error: malformed --periods value: "
                      f"{args.periods}", file=sys.stderr)
                return 2
            if not periods:
                print("scenario error: --periods is empty", file=sys.stderr)
                return 2
            result = run_sweep(scn, periods, settings)
        else:
            result = VERBS[args.verb](scn, settings)
    except (AllocationError, PipelineError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    outdir = emit(Path(args.out), scn, result)
    print(f"{result.report.method}: R = "
          f"{result.report.common_throughput:.6f} bps/Hz -> {outdir}")
    if not result.report.converged:
        print("warning: solver stopped before reaching its tolerance; "
              "report written", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
