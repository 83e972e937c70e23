"""UAV-enabled wireless powered communication network planner.

Plans UAV trajectories and downlink-WPT/uplink-WIT schedules that
maximize the minimum uplink throughput across ground users: the relaxed
multi-location-hovering optimum via Lagrangian duality, a hover-and-fly
heuristic with convex resource allocation, an SCP-based local
refinement, and a static-hovering baseline.
"""

from .model import (
    Scenario,
    Schedule,
    ThroughputReport,
    Tolerances,
    Trajectory,
    channel_gain,
    evaluate_schedule,
    harvested_power,
    instantaneous_rate,
)
from .scenarios import load_scenario, load_shipped, scenario_digest

__version__ = "0.1.0"

__all__ = [
    "Scenario", "Schedule", "ThroughputReport", "Tolerances", "Trajectory",
    "channel_gain", "evaluate_schedule", "harvested_power",
    "instantaneous_rate", "load_scenario", "load_shipped", "scenario_digest",
    "__version__",
]
