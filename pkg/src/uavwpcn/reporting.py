"""Artifact emission: deterministic report JSON plus CSV/JSON sidecars.

Everything written here must be reproducible byte for byte from the
same scenario and seed, so wall-clock timing and library versions go to
a separate meta.json that is excluded from the determinism contract.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Schedule, ThroughputReport, Trajectory


def _plain(obj):
    """Recursively convert numpy scalars/arrays for json.dumps."""
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


@dataclass
class RunReport:
    """Deterministic summary of one solver run.

    solution holds the method-specific payload (hovering locations or a
    trajectory digest); bulky per-slot data lives in the CSV/JSON
    sidecars next to the report.
    """

    method: str
    scenario: dict
    scenario_digest: str
    seed: int
    common_throughput: float
    converged: bool
    solution: dict = field(default_factory=dict)
    throughput: dict | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _plain({
            "method": self.method,
            "scenario": self.scenario,
            "scenario_digest": self.scenario_digest,
            "seed": self.seed,
            "common_throughput_bps_hz": self.common_throughput,
            "converged": self.converged,
            "solution": self.solution,
            "throughput": self.throughput,
            "diagnostics": self.diagnostics,
        })


def throughput_dict(report: ThroughputReport) -> dict:
    return {
        "harvested_j": report.harvested.tolist(),
        "consumed_j": report.consumed.tolist(),
        "rates_bps_hz": report.rates.tolist(),
        "common_throughput_bps_hz": report.common_throughput,
        "neutrality_ok": bool(report.neutrality_ok),
    }


def write_json(path: Path, doc: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n")


def write_report(outdir: Path, report: RunReport) -> Path:
    path = Path(outdir) / "report.json"
    write_json(path, report.to_dict())
    return path


def _write_rows(path: Path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_trajectory_csv(outdir: Path, traj: Trajectory) -> Path:
    """Waypoint list (t, x, y); the path is linear between rows."""
    path = Path(outdir) / "trajectory.csv"
    rows = [(repr(float(t)), repr(float(x)), repr(float(y)))
            for t, (x, y) in zip(traj.times, traj.points)]
    _write_rows(path, ("t_s", "x_m", "y_m"), rows)
    return path


def write_schedule_json(outdir: Path, sched: Schedule) -> Path:
    path = Path(outdir) / "schedule.json"
    write_json(path, {
        "start_s": sched.start,
        "duration_s": sched.duration,
        "position_m": sched.position,
        "wpt_duration_s": sched.wpt_duration,
        "wit_durations_s": sched.wit_durations,
        "uplink_powers_w": sched.uplink_powers,
    })
    return path


def write_trace_csv(outdir: Path, rows, fields) -> Path:
    """Generic iteration trace; missing keys become empty cells."""
    path = Path(outdir) / "trace.csv"
    formatted = []
    for row in rows:
        out = []
        for key in fields:
            value = row.get(key, "")
            if isinstance(value, float):
                value = repr(value)
            out.append(value)
        formatted.append(out)
    _write_rows(path, fields, formatted)
    return path


def write_hover_locations_csv(outdir: Path, hovering) -> Path:
    """Hovering locations with dwell shares: WPT rows then WIT rows."""
    path = Path(outdir) / "hover_locations.csv"
    rows = []
    for (x, y), dur in zip(hovering.wpt_locations, hovering.wpt_durations):
        rows.append(("wpt", repr(float(x)), repr(float(y)),
                     repr(float(dur)), ""))
    for (x, y), dur, pw in zip(hovering.wit_positions,
                               hovering.wit_durations, hovering.wit_powers):
        rows.append(("wit", repr(float(x)), repr(float(y)),
                     repr(float(dur)), repr(float(pw))))
    _write_rows(path, ("kind", "x_m", "y_m", "duration_s", "power_w"), rows)
    return path


METHOD_ORDER = ("static", "hover-fly", "scp", "relaxed")


def write_sweep_csv(outdir: Path, rows) -> Path:
    """Long-format sweep table: one (method, T, R) row per solve."""
    path = Path(outdir) / "sweep.csv"
    ordered = sorted(rows, key=lambda r: (r["period"],
                                          METHOD_ORDER.index(r["method"])))
    _write_rows(path, ("method", "T_s", "R_bps_hz"),
                [(r["method"], repr(float(r["period"])),
                  repr(float(r["throughput"]))) for r in ordered])
    return path
