"""Successive convex refinement of a discretized trajectory.

The period is cut into N equal slots with one UAV position per slot.
Alternates two monotone steps: (a) exact convex time/energy allocation
for fixed positions, and (b) a trajectory update for fixed allocation
where the nonconvex rate and harvest terms are replaced by global
concave minorizers, first-order tangents in the squared horizontal
distance S = ||q - w||^2. Both rate and harvest are convex in S, so the
tangents lower-bound them everywhere and are tight at the reference:
each accepted step cannot decrease the true objective. A safeguard
rejects steps that fail the true-objective check numerically, so the
reported trace is non-decreasing by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .allocation import (
    REDUCED_ACCURACY,
    AllocationSolution,
    SlotSpec,
    _energy_scale,
    solve_clarabel,
    solve_slot_allocation,
)
from .model import LN2, Scenario, Schedule, Trajectory, channel_gain, slot_rate
from .planner import slot_schedule

DEFAULT_SCP_SLOT_SECONDS = 0.2
MIN_SLOTS = 10


@dataclass(frozen=True)
class SCPOptions:
    max_iters: int = 50
    rel_tol: float = 1e-4
    num_slots: int | None = None
    max_slot: float = DEFAULT_SCP_SLOT_SECONDS


@dataclass(frozen=True)
class SCPResult:
    slots: SlotSpec
    alloc: AllocationSolution
    trace: list
    iterations: int
    converged: bool

    @property
    def common_throughput(self) -> float:
        return self.alloc.common_throughput

    def to_plan(self, scn: Scenario):
        """Trajectory through the slot positions (held at the ends) and
        the matching schedule."""
        n = self.slots.num_slots
        delta = self.slots.durations[0]
        mids = (np.arange(n) + 0.5) * delta
        times = np.concatenate([[0.0], mids, [scn.period]])
        pts = np.vstack([self.slots.positions[0],
                         self.slots.positions,
                         self.slots.positions[-1]])
        traj = Trajectory(times=times, points=pts)
        return traj, slot_schedule(self.slots, self.alloc)


def rate_surrogate(s, s_ref, tau, power, scn: Scenario):
    """Concave-in-S lower bound on the slot rate, tight at s_ref.

    The true rate tau * log2(1 + power * gamma / (H^2 + s)) is convex
    in s, so its tangent at s_ref minorizes it globally.
    """
    s = np.asarray(s, dtype=float)
    s_ref = np.asarray(s_ref, dtype=float)
    tau = np.asarray(tau, dtype=float)
    power = np.asarray(power, dtype=float)
    a = scn.altitude ** 2 + s_ref
    gq = scn.gamma * power
    value = tau * np.log2(1.0 + gq / a)
    slope = tau * gq / (LN2 * (a * a + gq * a))
    return value - slope * (s - s_ref)


def energy_surrogate(s, s_ref, tau0, scn: Scenario):
    """Concave-in-S lower bound on the energy harvested in a slot,
    tight at s_ref (tangent of the convex tau0*eta*P*beta0/(H^2+s))."""
    s = np.asarray(s, dtype=float)
    s_ref = np.asarray(s_ref, dtype=float)
    tau0 = np.asarray(tau0, dtype=float)
    a = scn.altitude ** 2 + s_ref
    coef = tau0 * scn.eta * scn.p * scn.beta0
    return coef * (1.0 / a - (s - s_ref) / (a * a))


_TRAJ_CACHE: dict = {}


def clear_trajectory_cache():
    _TRAJ_CACHE.clear()


def _compiled_trajectory_step(n: int, users: np.ndarray):
    # user positions are baked in as constants so the parametrization
    # stays DPP (slope * squared-distance would otherwise multiply two
    # parameter expressions) and repeat solves reuse the compilation
    key = (n, users.shape[0], users.tobytes())
    cached = _TRAJ_CACHE.get(key)
    if cached is not None:
        return cached
    K = users.shape[0]
    q = cp.Variable((n, 2))
    r_common = cp.Variable()
    params = {
        "rate_slope": cp.Parameter((n, K), nonneg=True),
        "rate_const": cp.Parameter(K),
        "harvest_slope": cp.Parameter((n, K), nonneg=True),
        "harvest_const": cp.Parameter(K),
        "consumed": cp.Parameter(K, nonneg=True),
        "step_limit": cp.Parameter(nonneg=True),
        "period": cp.Parameter(nonneg=True),
    }
    constraints = []
    for k in range(K):
        # tile the user position: broadcasting constants against the
        # variable falls back to a slower canonicalization backend
        sq = cp.sum(cp.square(q - np.tile(users[k], (n, 1))), axis=1)
        rate_k = params["rate_const"][k] - cp.sum(
            cp.multiply(params["rate_slope"][:, k], sq))
        harvest_k = params["harvest_const"][k] - cp.sum(
            cp.multiply(params["harvest_slope"][:, k], sq))
        constraints.append(rate_k >= r_common * params["period"])
        constraints.append(params["consumed"][k] <= harvest_k)
    if n > 1:
        constraints.append(
            cp.norm(q[1:] - q[:-1], axis=1) <= params["step_limit"])
    problem = cp.Problem(cp.Maximize(r_common), constraints)
    compiled = (problem, q, r_common, params)
    _TRAJ_CACHE[key] = compiled
    return compiled


def _fixed_allocation_objective(scn: Scenario, positions: np.ndarray,
                                alloc: AllocationSolution):
    """True worst-user rate for the given positions with the allocation
    frozen; None when the frozen allocation breaks energy neutrality."""
    gains = channel_gain(scn, positions)  # (N, K)
    harvested = scn.eta * scn.p * alloc.slot_wpt_durations @ gains
    energy = alloc.slot_wit_durations * alloc.slot_powers
    consumed = energy.sum(axis=0)
    if np.any(consumed > harvested * (1 + 1e-9) + 1e-18):
        return None
    rates = slot_rate(alloc.slot_wit_durations, gains / scn.sigma2, energy)
    return float(rates.sum(axis=0).min() / scn.period)


def trajectory_step(scn: Scenario, slots: SlotSpec,
                    alloc: AllocationSolution):
    """One surrogate trajectory update for a frozen allocation.

    Returns (new_positions, status) where status is "accepted",
    "rejected" (true objective did not improve), or "failed" (solver
    error); on rejection or failure the reference positions come back
    unchanged.
    """
    n, K = slots.num_slots, scn.num_users
    q_ref = slots.positions
    delta = float(slots.durations[0])
    s_ref = ((q_ref[:, None, :] - scn.users[None, :, :]) ** 2).sum(axis=2)
    a = scn.altitude ** 2 + s_ref
    gq = scn.gamma * alloc.slot_powers
    rate_val = alloc.slot_wit_durations * np.log2(1.0 + gq / a)
    rate_slope = alloc.slot_wit_durations * gq / (LN2 * (a * a + gq * a))
    hcoef = alloc.slot_wpt_durations[:, None] * scn.eta * scn.p * scn.beta0
    harvest_val = hcoef / a
    harvest_slope = hcoef / (a * a)
    problem, q, r_common, params = _compiled_trajectory_step(n, scn.users)
    params["rate_slope"].value = rate_slope
    params["rate_const"].value = (rate_val + rate_slope * s_ref).sum(axis=0)
    # energy rows scaled to peak-harvest units, as in the allocator
    escale = _energy_scale(scn)
    params["harvest_slope"].value = harvest_slope / escale
    params["harvest_const"].value = (
        (harvest_val + harvest_slope * s_ref).sum(axis=0) / escale)
    params["consumed"].value = (
        (alloc.slot_wit_durations * alloc.slot_powers).sum(axis=0) / escale)
    params["step_limit"].value = scn.vmax * delta
    params["period"].value = scn.period
    solved = False
    try:
        solve_clarabel(problem)
        solved = problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
    except cp.error.SolverError:
        pass
    if not solved:
        # parametrized canonicalization can stall the solver on extreme
        # inputs; a fresh expansion with constants usually recovers, and
        # a stalled nearly-converged step is still worth evaluating
        try:
            solve_clarabel(problem, ignore_dpp=True, **REDUCED_ACCURACY)
        except cp.error.SolverError:
            return q_ref, "failed"
        if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return q_ref, "failed"
    if q.value is None:
        return q_ref, "failed"
    q_new = np.asarray(q.value, dtype=float)
    before = _fixed_allocation_objective(scn, q_ref, alloc)
    after = _fixed_allocation_objective(scn, q_new, alloc)
    if after is None or (before is not None and after < before):
        return q_ref, "rejected"
    return q_new, "accepted"


def resample_trajectory(scn: Scenario, traj: Trajectory,
                        opts: SCPOptions) -> SlotSpec:
    """Uniform slot grid over the period with positions sampled at the
    slot midpoints of the initial trajectory (midpoint sampling keeps
    per-slot motion within the speed budget)."""
    if abs(traj.duration - scn.period) > scn.tol.structural * scn.period:
        raise ValueError("initial trajectory must span the period")
    if opts.num_slots is not None:
        n = int(opts.num_slots)
        if n < 1:
            raise ValueError("need at least one slot")
    else:
        n = max(MIN_SLOTS, int(np.ceil(scn.period / opts.max_slot - 1e-12)))
    delta = scn.period / n
    mids = (np.arange(n) + 0.5) * delta
    return SlotSpec(positions=traj.position_at(mids),
                    durations=np.full(n, delta))


def alternating_optimize(scn: Scenario, init: Trajectory,
                         opts: SCPOptions | None = None) -> SCPResult:
    """Alternate exact allocation and surrogate trajectory steps.

    Stops when the relative improvement of the allocation objective
    falls below rel_tol or after max_iters iterations. The trace holds
    one row per allocation solve, starting with the allocation on the
    resampled initial trajectory, and is non-decreasing.
    """
    opts = opts or SCPOptions()
    slots = resample_trajectory(scn, init, opts)
    alloc = solve_slot_allocation(scn, slots.positions, slots.durations)
    trace = [{"iteration": 0, "objective": alloc.common_throughput,
              "step_norm": 0.0, "trajectory_step": "init"}]
    converged = False
    for it in range(1, opts.max_iters + 1):
        q_new, status = trajectory_step(scn, slots, alloc)
        if status == "accepted":
            cand_slots = SlotSpec(positions=q_new, durations=slots.durations)
        else:
            cand_slots = slots
        step_norm = float(np.linalg.norm(cand_slots.positions - slots.positions))
        alloc_new = solve_slot_allocation(scn, cand_slots.positions,
                                          cand_slots.durations)
        prev = trace[-1]["objective"]
        if alloc_new.common_throughput < prev:
            # numerics exhausted: keep the previous state and stop
            trace.append({"iteration": it, "objective": prev,
                          "step_norm": 0.0, "trajectory_step": "exhausted"})
            converged = True
            break
        slots, alloc = cand_slots, alloc_new
        trace.append({"iteration": it, "objective": alloc.common_throughput,
                      "step_norm": step_norm, "trajectory_step": status})
        if alloc.common_throughput <= prev * (1.0 + opts.rel_tol):
            converged = True
            break
    return SCPResult(slots=slots, alloc=alloc, trace=trace,
                     iterations=len(trace) - 1, converged=converged)
