"""Convex time and energy allocation for a fixed UAV motion plan.

One solver covers the three allocation problems that appear across the
pipeline, all instances of the same convex program:

- hover-and-fly: variable-duration WPT hovering points and per-user
  hovering slots sharing the leftover hover budget, plus fixed-duration
  TDMA slots along the flight path;
- per-slot allocation for a discretized trajectory (no hover budget);
- static hovering (a single fixed slot spanning the whole period).

Uplink rates are handled in perspective form, tau * log2(1 + c * e /
tau) with e the transmit energy, which is jointly concave in (tau, e),
so the whole program is convex (exponential cone). Compiled problems
are cached per shape and re-solved with updated parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import cvxpy as cp
import numpy as np

from .model import LN2, Scenario, channel_gain, slot_rate

DURATION_EPS = 1e-9


class AllocationError(RuntimeError):
    """Raised when the convex allocation solver fails."""


@dataclass(frozen=True)
class SlotSpec:
    """Fixed-duration TDMA slots pinned to given UAV positions."""

    positions: np.ndarray
    durations: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        dur = np.asarray(self.durations, dtype=float).reshape(-1)
        if dur.shape[0] != pos.shape[0]:
            raise ValueError("one duration per slot position required")
        if np.any(dur < 0) or not np.all(np.isfinite(dur)):
            raise ValueError("slot durations must be finite and nonnegative")
        if not np.all(np.isfinite(pos)):
            raise ValueError("slot positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "durations", dur)

    @property
    def num_slots(self) -> int:
        return self.durations.shape[0]

    @property
    def total_duration(self) -> float:
        return float(self.durations.sum())

    @staticmethod
    def empty() -> "SlotSpec":
        return SlotSpec(positions=np.zeros((0, 2)), durations=np.zeros(0))


@dataclass(frozen=True)
class AllocationSolution:
    """Cleaned optimum of the time/energy allocation.

    Durations tile exactly, the hover budget is met exactly, and every
    user's consumed energy is at most its harvested energy; the common
    throughput is recomputed from the cleaned numbers rather than
    echoed from the solver.
    """

    wpt_durations: np.ndarray
    wit_hover_durations: np.ndarray
    wit_hover_powers: np.ndarray
    slot_wpt_durations: np.ndarray
    slot_wit_durations: np.ndarray
    slot_powers: np.ndarray
    rates: np.ndarray
    harvested: np.ndarray
    consumed: np.ndarray
    common_throughput: float
    solver_value: float
    status: str


_PROBLEM_CACHE: dict = {}


def clear_problem_cache():
    _PROBLEM_CACHE.clear()


def _compiled_problem(omega: int, num_users: int, num_slots: int,
                      with_user_hover: bool):
    key = (omega, num_users, num_slots, with_user_hover)
    cached = _PROBLEM_CACHE.get(key)
    if cached is not None:
        return cached
    K, N = num_users, num_slots
    params = {
        "period": cp.Parameter(nonneg=True),
        "budget": cp.Parameter(nonneg=True),
    }
    # energy variables are the dimensionless products SNR*time
    # (e_snr = gain/sigma2 * energy): the exponential cones then carry
    # no data at all and the wide-ranging channel coefficients end up
    # in affine rows only, where they equilibrate well
    rate_terms = []
    harvest_terms = []
    consumed_terms = []
    hover_time_terms = []
    var = {}
    constraints = []
    r_common = cp.Variable()
    if omega:
        tau_w = cp.Variable(omega, nonneg=True)
        params["wpt_harvest"] = cp.Parameter((omega, K), nonneg=True)
        harvest_terms.append(tau_w @ params["wpt_harvest"])
        hover_time_terms.append(cp.sum(tau_w))
        var["tau_w"] = tau_w
    if with_user_hover:
        sigma = cp.Variable(K, nonneg=True)
        e_hover = cp.Variable(K, nonneg=True)
        params["own_inv_coeff"] = cp.Parameter(K, nonneg=True)
        rate_terms.append(-cp.rel_entr(sigma, sigma + e_hover) / LN2)
        consumed_terms.append(cp.multiply(params["own_inv_coeff"], e_hover))
        hover_time_terms.append(cp.sum(sigma))
        var["sigma"] = sigma
        var["e_hover"] = e_hover
    if N:
        tau0 = cp.Variable(N, nonneg=True)
        tau = cp.Variable((N, K), nonneg=True)
        e = cp.Variable((N, K), nonneg=True)
        params["slot_harvest"] = cp.Parameter((N, K), nonneg=True)
        params["slot_inv_coeff"] = cp.Parameter((N, K), nonneg=True)
        params["slot_durations"] = cp.Parameter(N, nonneg=True)
        rate_terms.append(-cp.sum(cp.rel_entr(tau, tau + e), axis=0) / LN2)
        harvest_terms.append(tau0 @ params["slot_harvest"])
        consumed_terms.append(
            cp.sum(cp.multiply(params["slot_inv_coeff"], e), axis=0))
        constraints.append(tau0 + cp.sum(tau, axis=1) == params["slot_durations"])
        var["tau0"] = tau0
        var["tau"] = tau
        var["e"] = e
    if not rate_terms:
        raise ValueError("allocation needs uplink opportunities")
    if not harvest_terms:
        raise ValueError("allocation needs downlink opportunities")
    if hover_time_terms:
        constraints.append(sum(hover_time_terms) == params["budget"])
    constraints.append(
        sum(rate_terms) >= r_common * params["period"])
    constraints.append(
        sum(consumed_terms) <= sum(harvest_terms))
    problem = cp.Problem(cp.Maximize(r_common), constraints)
    compiled = (problem, r_common, var, params)
    _PROBLEM_CACHE[key] = compiled
    return compiled


def solve_hover_and_slots(scn: Scenario, wpt_points: np.ndarray,
                          slots: SlotSpec, hover_budget: float,
                          with_user_hover: bool = True) -> AllocationSolution:
    """Maximize the common throughput for the given motion plan.

    wpt_points get variable charging durations and the K user positions
    get variable transmit durations (when with_user_hover), together
    consuming hover_budget seconds; slots are fixed-duration TDMA slots
    at fixed positions. Total airtime is hover_budget plus the slot
    durations and must equal the scenario period.
    """
    wpt_points = np.asarray(wpt_points, dtype=float).reshape(-1, 2)
    omega = wpt_points.shape[0]
    K = scn.num_users
    N = slots.num_slots
    if hover_budget < -1e-9:
        raise ValueError("hover budget must be nonnegative")
    hover_budget = max(hover_budget, 0.0)
    if omega == 0 and not with_user_hover and hover_budget > 0:
        raise ValueError("positive hover budget without hover points")
    total = hover_budget + slots.total_duration
    if abs(total - scn.period) > scn.tol.structural * scn.period:
        raise ValueError("hover budget and slot durations must tile the period")
    problem, r_common, var, params = _compiled_problem(
        omega, K, N, with_user_hover)
    # the neutrality row is additionally measured in units of the peak
    # harvest power so its entries sit near 1
    escale = _energy_scale(scn)
    params["period"].value = scn.period
    params["budget"].value = hover_budget
    if omega:
        params["wpt_harvest"].value = (
            scn.eta * scn.p * channel_gain(scn, wpt_points) / escale)
    if with_user_hover:
        own = np.array([channel_gain(scn, scn.users[k], k) for k in range(K)])
        params["own_inv_coeff"].value = scn.sigma2 / own / escale
    if N:
        slot_gains = channel_gain(scn, slots.positions)  # (N, K)
        params["slot_harvest"].value = scn.eta * scn.p * slot_gains / escale
        params["slot_inv_coeff"].value = scn.sigma2 / slot_gains / escale
        params["slot_durations"].value = slots.durations
    _solve_with_fallback(problem)
    sol = _clean_solution(scn, wpt_points, slots, hover_budget,
                          with_user_hover, problem, r_common, var)
    if sol.status == cp.OPTIMAL_INACCURATE and omega and hover_budget > 0:
        sol = _polish_trace_dwells(scn, wpt_points, slots, hover_budget,
                                   with_user_hover, sol)
    return sol


def _energy_scale(scn: Scenario) -> float:
    """Peak harvest power (W): the natural unit for energy variables."""
    return scn.eta * scn.p * scn.beta0 / scn.altitude ** 2


def _polish_trace_dwells(scn, wpt_points, slots, hover_budget,
                         with_user_hover, sol) -> AllocationSolution:
    """Re-solve without charging points that received only trace dwell.

    A reduced-accuracy solve leaves spurious mass on hovering durations
    that a fully converged one would pin at zero.  Restricting those
    points out and re-solving usually recovers full accuracy; the
    better of the two cleaned solutions is kept, with zeros spliced
    back in so durations stay aligned with the caller's point list.
    """
    keep = sol.wpt_durations > 1e-3 * hover_budget
    if keep.all():
        return sol
    restricted = solve_hover_and_slots(scn, wpt_points[keep], slots,
                                       hover_budget, with_user_hover)
    slack = 1e-9 * max(1.0, sol.common_throughput)
    if restricted.common_throughput < sol.common_throughput - slack:
        return sol
    durations = np.zeros(sol.wpt_durations.shape[0])
    durations[keep] = restricted.wpt_durations
    return replace(restricted, wpt_durations=durations)


# Acceptance thresholds for stalled-but-nearly-converged solves: the
# solver checks these only when it cannot make further progress toward
# its full 1e-8 accuracy, so clean instances are unaffected.  Accepted
# points are repaired to exact feasibility downstream.
REDUCED_ACCURACY = {
    "reduced_tol_gap_abs": 1e-3,
    "reduced_tol_gap_rel": 1e-3,
    "reduced_tol_feas": 1e-3,
}


def solve_clarabel(problem, **kwargs) -> None:
    """Solve with CLARABEL, silencing the inaccurate-solution warning;
    callers inspect the status and repair inaccurate points anyway.

    Warm starts are disabled: re-solving a cached problem through the
    solver's data-update path miscarries when a parameter change alters
    the canonicalized sparsity pattern (entries that were exactly zero
    stay dropped), which yields confidently wrong results.
    """
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Solution may be inaccurate")
        problem.solve(solver=cp.CLARABEL, warm_start=False, **kwargs)


def _solve_with_fallback(problem) -> None:
    """Solve the cached parametrized problem, retrying with a fresh
    canonicalization when it fails.

    The reduced parametrized form occasionally loses enough precision
    for the solver to stall on extreme parameter values; re-expanding
    the parameters as constants (ignore_dpp) fixes those cases.  The
    retry also accepts reduced-accuracy results, for ill-conditioned
    instances where the interior point stalls short of full precision.
    """
    try:
        solve_clarabel(problem)
        if problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return
    except cp.error.SolverError:
        pass
    try:
        solve_clarabel(problem, ignore_dpp=True, **REDUCED_ACCURACY)
    except cp.error.SolverError as exc:
        raise AllocationError(f"allocation solver failed: {exc}") from exc
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise AllocationError(f"allocation solver status {problem.status}")


def _value(var, key, shape):
    v = var.get(key)
    if v is None or v.value is None:
        return np.zeros(shape)
    return np.maximum(np.asarray(v.value, dtype=float).reshape(shape), 0.0)


def _clean_solution(scn, wpt_points, slots, hover_budget, with_user_hover,
                    problem, r_common, var) -> AllocationSolution:
    K = scn.num_users
    N = slots.num_slots
    omega = wpt_points.shape[0]
    own = np.array([channel_gain(scn, scn.users[k], k) for k in range(K)])
    slot_gains = channel_gain(scn, slots.positions) if N else None
    tau_w = _value(var, "tau_w", omega)
    sigma = _value(var, "sigma", K)
    tau0 = _value(var, "tau0", N)
    tau = _value(var, "tau", (N, K))
    # solver energies are SNR*time products; convert back to Joules
    e_hover = _value(var, "e_hover", K) * scn.sigma2 / own
    e = _value(var, "e", (N, K))
    if N:
        e = e * scn.sigma2 / slot_gains

    # retile every fixed slot exactly, padding slack into the WPT share
    if N:
        used = tau.sum(axis=1)
        over = used > slots.durations
        if np.any(over):
            scale = np.where(used > 0, slots.durations / np.maximum(used, 1e-300), 0.0)
            tau[over] *= scale[over, None]
        tau0 = slots.durations - tau.sum(axis=1)
        tau0 = np.maximum(tau0, 0.0)

    # meet the hover budget exactly
    hover_total = tau_w.sum() + sigma.sum()
    if hover_budget > 0:
        if hover_total > 0:
            factor = hover_budget / hover_total
            tau_w *= factor
            sigma *= factor
        elif omega:
            tau_w[0] = hover_budget
        else:
            sigma[0] = hover_budget
    else:
        tau_w[:] = 0.0
        sigma[:] = 0.0
        e_hover[:] = 0.0

    # drop unusable energy, then enforce neutrality by scaling down
    e[tau <= DURATION_EPS] = 0.0
    e_hover[sigma <= DURATION_EPS] = 0.0
    harvested = np.zeros(K)
    if omega:
        harvested += scn.eta * scn.p * tau_w @ channel_gain(scn, wpt_points)
    if N:
        harvested += scn.eta * scn.p * tau0 @ slot_gains
    consumed = e_hover + e.sum(axis=0)
    hot = consumed > harvested
    if np.any(hot):
        factor = np.where(hot, harvested / np.maximum(consumed, 1e-300), 1.0)
        e_hover *= factor
        e *= factor[None, :]
        consumed = e_hover + e.sum(axis=0)

    rates = slot_rate(sigma, own / scn.sigma2, e_hover)
    if N:
        rates = rates + slot_rate(tau, slot_gains / scn.sigma2, e).sum(axis=0)
    rates = rates / scn.period

    hover_powers = np.where(sigma > DURATION_EPS, e_hover / np.maximum(sigma, 1e-300), 0.0)
    slot_powers = np.where(tau > DURATION_EPS, e / np.maximum(tau, 1e-300), 0.0)
    return AllocationSolution(
        wpt_durations=tau_w,
        wit_hover_durations=sigma,
        wit_hover_powers=hover_powers,
        slot_wpt_durations=tau0,
        slot_wit_durations=tau,
        slot_powers=slot_powers,
        rates=rates,
        harvested=harvested,
        consumed=consumed,
        common_throughput=float(rates.min()),
        solver_value=float(r_common.value) if r_common.value is not None else 0.0,
        status=problem.status,
    )


def solve_hover_fly_allocation(scn: Scenario, wpt_points: np.ndarray,
             slots: SlotSpec) -> AllocationSolution:
    """Hover-and-fly allocation: the leftover period after flying is
    the hover budget shared by WPT points and per-user slots."""
    budget = scn.period - slots.total_duration
    if budget < -scn.tol.structural * scn.period:
        raise ValueError("flight takes longer than the period")
    return solve_hover_and_slots(scn, wpt_points, slots,
                                 max(budget, 0.0), with_user_hover=True)


def solve_slot_allocation(scn: Scenario, positions: np.ndarray,
                          durations: np.ndarray) -> AllocationSolution:
    """Per-slot TDMA allocation for a fully discretized trajectory."""
    slots = SlotSpec(positions=positions, durations=durations)
    return solve_hover_and_slots(scn, np.zeros((0, 2)), slots, 0.0,
                                 with_user_hover=False)


def solve_static(scn: Scenario, position) -> AllocationSolution:
    """Static hovering: one TDMA slot of duration T at a fixed spot."""
    position = np.asarray(position, dtype=float).reshape(2)
    return solve_slot_allocation(scn, position[None, :],
                                 np.array([scn.period]))
