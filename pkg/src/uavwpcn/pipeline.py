"""End-to-end solver pipelines behind the CLI verbs.

Each run_* function executes one method on a scenario, validates any
emitted plan against the core checks, and returns a RunResult bundling
the deterministic report with the bulky artifacts (trajectory, schedule,
traces) and wall-clock timing. emit() writes everything to the standard
out/<scenario>/<method>/ layout.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import cvxpy
import numpy as np
import scipy

from . import figures, reporting
from .allocation import SlotSpec, solve_hover_fly_allocation, solve_slot_allocation
from .dualsolve import DualSolveOptions, HoveringSolution, solve_relaxed
from .model import Schedule, Trajectory, evaluate_schedule
from .planner import (
    build_hover_and_fly,
    discretize_flight,
    discretize_trajectory,
    plan_tour,
    scale_trajectory,
    slot_schedule,
    static_hover_search,
    tour_trajectory,
)
from .reporting import RunReport, throughput_dict
from .scenarios import canonical_dict, scenario_digest
from .scp import SCPOptions, alternating_optimize

DEFAULT_PERIODS = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0)


class PipelineError(RuntimeError):
    """A produced plan failed the core validator."""


@dataclass(frozen=True)
class SolveSettings:
    """CLI-level knobs shared by all verbs."""

    seed: int = 0
    tol: float | None = None
    grid_step: float | None = None
    num_slots: int | None = None


@dataclass
class RunResult:
    report: RunReport
    timing: dict
    trajectory: Trajectory | None = None
    schedule: Schedule | None = None
    hovering: HoveringSolution | None = None
    trace: list | None = None
    trace_fields: tuple | None = None
    trace_plot_key: str | None = None
    hover_points: np.ndarray | None = None
    sweep_rows: list | None = None


def _dual_options(settings: SolveSettings) -> DualSolveOptions:
    kwargs = {}
    if settings.tol is not None:
        kwargs["tol"] = settings.tol
    if settings.grid_step is not None:
        kwargs["grid_step"] = settings.grid_step
    return DualSolveOptions(**kwargs)


def _gate(scn, traj, sched):
    """Core validator: structural checks plus honest re-evaluation.

    Every plan leaving the pipeline goes through here before a report
    can be written.
    """
    problems = traj.validate(scn) + sched.validate(scn, traj)
    if problems:
        raise PipelineError("; ".join(problems))
    tp = evaluate_schedule(scn, traj, sched)
    if not tp.neutrality_ok:
        raise PipelineError("schedule violates energy neutrality")
    return tp


def _base_report(scn, settings, method, **kwargs) -> RunReport:
    return RunReport(method=method, scenario=canonical_dict(scn),
                     scenario_digest=scenario_digest(scn),
                     seed=settings.seed, **kwargs)


def run_relaxed(scn, settings: SolveSettings | None = None) -> RunResult:
    settings = settings or SolveSettings()
    t0 = time.perf_counter()
    hovering, diag = solve_relaxed(scn, _dual_options(settings))
    elapsed = time.perf_counter() - t0
    trace = diag.pop("trace")
    report = _base_report(
        scn, settings, "relaxed",
        common_throughput=hovering.common_throughput,
        converged=bool(diag["dual"]["converged"]),
        solution=hovering.as_dict(),
        diagnostics={
            "dual_bound": diag["dual_bound"],
            "dual_iterations": diag["dual"]["iterations"],
            "duals": diag["duals"],
            "equalization_residual": diag["equalization_residual"],
            "num_wpt_locations": diag["num_wpt_locations"],
        })
    return RunResult(report=report, timing={"solve_s": elapsed},
                     hovering=hovering, trace=trace,
                     trace_fields=("iteration", "g", "best_g", "residual"),
                     trace_plot_key="best_g",
                     hover_points=hovering.hover_points())


def _plan_from_relaxed(scn, settings, hovering, diag):
    """Table-driven planning: TSP over hover points, then either the
    hover-and-fly allocation or the scaled trajectory when the period
    cannot cover the full tour."""
    points = hovering.hover_points()
    tour = plan_tour(points, seed=settings.seed)
    t_fly = tour.flight_time(scn.vmax)
    if t_fly <= scn.period * (1 + 1e-12):
        flight = discretize_flight(tour, scn.vmax)
        alloc = solve_hover_fly_allocation(scn, hovering.wpt_locations, flight.slot_spec())
        traj, sched = build_hover_and_fly(scn, flight, alloc)
        branch = "hover-and-fly"
    else:
        q_fix, _ = static_hover_search(scn, settings.grid_step)
        traj = scale_trajectory(tour_trajectory(tour, scn.vmax),
                                q_fix, scn.period / t_fly)
        slots = discretize_trajectory(traj)
        alloc = solve_slot_allocation(scn, slots.positions, slots.durations)
        sched = slot_schedule(slots, alloc)
        branch = "scaled"
    tp = _gate(scn, traj, sched)
    solution = {
        "branch": branch,
        "flight_time_s": t_fly,
        "tour_order": tour.order.tolist(),
        "num_hover_points": int(points.shape[0]),
        "num_slots": int(sched.start.shape[0]),
    }
    diagnostics = {
        "allocation_objective": alloc.common_throughput,
        "relaxed_dual_bound": diag["dual_bound"],
        "relaxed_equalization_residual": diag["equalization_residual"],
        "num_wpt_locations": diag["num_wpt_locations"],
    }
    return traj, sched, tp, solution, diagnostics


def run_plan(scn, settings: SolveSettings | None = None) -> RunResult:
    settings = settings or SolveSettings()
    t0 = time.perf_counter()
    hovering, diag = solve_relaxed(scn, _dual_options(settings))
    traj, sched, tp, solution, diagnostics = _plan_from_relaxed(
        scn, settings, hovering, diag)
    elapsed = time.perf_counter() - t0
    report = _base_report(
        scn, settings, "hover-fly",
        common_throughput=tp.common_throughput,
        converged=bool(diag["dual"]["converged"]),
        solution=solution, throughput=throughput_dict(tp),
        diagnostics=diagnostics)
    return RunResult(report=report, timing={"solve_s": elapsed},
                     trajectory=traj, schedule=sched, trace=diag["trace"],
                     trace_fields=("iteration", "g", "best_g", "residual"),
                     trace_plot_key="best_g",
                     hover_points=hovering.hover_points())


def run_optimize(scn, settings: SolveSettings | None = None) -> RunResult:
    """Hover-and-fly plan as the starting point, then alternating
    refinement; keeps whichever plan evaluates better."""
    settings = settings or SolveSettings()
    t0 = time.perf_counter()
    hovering, diag = solve_relaxed(scn, _dual_options(settings))
    plan_traj, plan_sched, plan_tp, _, _ = _plan_from_relaxed(
        scn, settings, hovering, diag)
    opts = SCPOptions(num_slots=settings.num_slots)
    result = alternating_optimize(scn, plan_traj, opts)
    scp_traj, scp_sched = result.to_plan(scn)
    scp_tp = _gate(scn, scp_traj, scp_sched)
    if scp_tp.common_throughput >= plan_tp.common_throughput:
        kept, traj, sched, tp = "scp", scp_traj, scp_sched, scp_tp
    else:
        kept, traj, sched, tp = "plan", plan_traj, plan_sched, plan_tp
    elapsed = time.perf_counter() - t0
    report = _base_report(
        scn, settings, "scp",
        common_throughput=tp.common_throughput,
        converged=bool(result.converged and diag["dual"]["converged"]),
        solution={
            "kept": kept,
            "num_slots": int(result.slots.num_slots),
            "iterations": result.iterations,
        },
        throughput=throughput_dict(tp),
        diagnostics={
            "plan_objective": plan_tp.common_throughput,
            "scp_objective": scp_tp.common_throughput,
            "scp_converged": bool(result.converged),
            "relaxed_dual_bound": diag["dual_bound"],
        })
    return RunResult(report=report, timing={"solve_s": elapsed},
                     trajectory=traj, schedule=sched, trace=result.trace,
                     trace_fields=("iteration", "objective", "step_norm"),
                     trace_plot_key="objective",
                     hover_points=hovering.hover_points())


def run_baseline(scn, settings: SolveSettings | None = None) -> RunResult:
    settings = settings or SolveSettings()
    t0 = time.perf_counter()
    position, alloc = static_hover_search(scn, settings.grid_step)
    slots = SlotSpec(positions=position[None, :],
                     durations=np.array([scn.period]))
    sched = slot_schedule(slots, alloc)
    traj = Trajectory(times=np.array([0.0, scn.period]),
                      points=np.vstack([position, position]))
    tp = _gate(scn, traj, sched)
    elapsed = time.perf_counter() - t0
    report = _base_report(
        scn, settings, "static",
        common_throughput=tp.common_throughput,
        converged=True,
        solution={"position_m": position.tolist()},
        throughput=throughput_dict(tp),
        diagnostics={"allocation_objective": alloc.common_throughput})
    return RunResult(report=report, timing={"solve_s": elapsed},
                     trajectory=traj, schedule=sched)


_SWEEP_RUNNERS = {
    "static": run_baseline,
    "hover-fly": run_plan,
    "scp": run_optimize,
    "relaxed": run_relaxed,
}


def _sweep_point(scn, period, settings):
    """All four methods at one period; independent unit of sweep work."""
    scn_t = scn.with_period(period)
    rows = []
    for method, runner in _SWEEP_RUNNERS.items():
        res = runner(scn_t, settings)
        rows.append({"method": method, "period": period,
                     "throughput": res.report.common_throughput,
                     "converged": res.report.converged,
                     "solve_s": res.timing["solve_s"]})
    return rows


def run_sweep(scn, periods=DEFAULT_PERIODS,
              settings: SolveSettings | None = None,
              max_workers: int | None = None) -> RunResult:
    """Throughput-versus-period table over all four methods.

    Periods are independent solves and run in a worker pool; rows come
    back sorted so the emitted table does not depend on scheduling.
    """
    settings = settings or SolveSettings()
    periods = sorted(float(t) for t in periods)
    t0 = time.perf_counter()
    rows = []
    if max_workers is None or max_workers > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(_sweep_point, scn, t, settings)
                       for t in periods]
            for future in futures:
                rows.extend(future.result())
    else:
        for t in periods:
            rows.extend(_sweep_point(scn, t, settings))
    elapsed = time.perf_counter() - t0
    rows.sort(key=lambda r: (r["period"],
                             reporting.METHOD_ORDER.index(r["method"])))
    converged = all(r["converged"] for r in rows)
    report = _base_report(
        scn, settings, "sweep",
        common_throughput=max(r["throughput"] for r in rows),
        converged=converged,
        solution={"periods": list(periods),
                  "methods": list(reporting.METHOD_ORDER)},
        diagnostics={"rows": [{k: r[k] for k in
                               ("method", "period", "throughput", "converged")}
                              for r in rows]})
    return RunResult(report=report, timing={"solve_s": elapsed},
                     sweep_rows=rows)


def emit(outdir: Path, scn, result: RunResult) -> Path:
    """Write the standard artifact set for one run and return its dir."""
    method_dir = Path(outdir) / scn.name / result.report.method
    method_dir.mkdir(parents=True, exist_ok=True)
    reporting.write_report(method_dir, result.report)
    if result.hovering is not None:
        reporting.write_hover_locations_csv(method_dir, result.hovering)
        figures.plot_hover_locations(method_dir / "hover_locations.png",
                                     scn, result.hovering)
    if result.trajectory is not None:
        reporting.write_trajectory_csv(method_dir, result.trajectory)
        figures.plot_trajectory(method_dir / "trajectory.png", scn,
                                result.trajectory, result.hover_points)
    if result.schedule is not None:
        reporting.write_schedule_json(method_dir, result.schedule)
    if result.trace is not None:
        reporting.write_trace_csv(method_dir, result.trace,
                                  result.trace_fields)
        ykey = result.trace_plot_key
        figures.plot_convergence(method_dir / "convergence.png", result.trace,
                                 ykey, ykey, f"{scn.name}: {ykey} per iteration")
    if result.sweep_rows is not None:
        reporting.write_sweep_csv(method_dir, result.sweep_rows)
        figures.plot_sweep(method_dir / "sweep.png", result.sweep_rows)
    reporting.write_json(method_dir / "meta.json", {
        "timing": result.timing,
        "versions": {"numpy": np.__version__, "scipy": scipy.__version__,
                     "cvxpy": cvxpy.__version__},
    })
    return method_dir
