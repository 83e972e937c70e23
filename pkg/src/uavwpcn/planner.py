"""Hover-and-fly trajectory planning.

Orders the hovering locations (WPT points plus user positions) by the
shortest open path: exact Held-Karp dynamic programming with free
endpoints up to 16 points, seeded nearest-neighbor + 2-opt restarts
beyond. The flight legs then run at full speed and get discretized into
short fixed-duration TDMA slots; the leftover period is the hover
budget for the convex allocator. When the period cannot even cover the
flight, the whole path shrinks toward an anchor so the time budget is
met at unchanged leg speeds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .allocation import AllocationSolution, SlotSpec, solve_static
from .model import Scenario, Schedule, Trajectory

EXACT_TSP_LIMIT = 16
DEFAULT_SLOT_SECONDS = 0.05
SKIP_HOVER_SECONDS = 1e-12


@dataclass(frozen=True)
class TourPlan:
    """Visit order for a set of hover points.

    points holds the locations in visit order; order maps back into the
    caller's array (points = original[order]).
    """

    points: np.ndarray
    order: np.ndarray

    @property
    def num_points(self) -> int:
        return self.points.shape[0]

    @property
    def leg_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    @property
    def total_length(self) -> float:
        return float(self.leg_lengths.sum())

    def flight_time(self, vmax: float) -> float:
        return self.total_length / vmax


@dataclass(frozen=True)
class FlightPlan:
    """Per-leg discretized flight: midpoint positions and durations of
    the fixed TDMA slots, leg by leg in tour order."""

    tour: TourPlan
    vmax: float
    slot_positions: np.ndarray
    slot_durations: np.ndarray
    slots_per_leg: np.ndarray

    @property
    def flight_time(self) -> float:
        return float(self.slot_durations.sum())

    def slot_spec(self) -> SlotSpec:
        return SlotSpec(positions=self.slot_positions,
                        durations=self.slot_durations)


def _pairwise(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def _held_karp_path(dist: np.ndarray) -> np.ndarray:
    """Exact shortest Hamiltonian path with free endpoints.

    Equivalent to closing the tour through a dummy node at zero
    distance from everything; implemented directly as a DP over
    (visited set, endpoint)."""
    m = dist.shape[0]
    full = 1 << m
    dp = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=np.int8)
    idx = np.arange(m)
    for j in range(m):
        dp[1 << j, j] = 0.0
    for mask in range(1, full):
        row = dp[mask]
        inside = idx[(mask >> idx) & 1 == 1]
        outside = idx[(mask >> idx) & 1 == 0]
        if outside.size == 0 or not np.any(np.isfinite(row[inside])):
            continue
        sub = row[inside][:, None] + dist[np.ix_(inside, outside)]
        pick = np.argmin(sub, axis=0)
        val = sub[pick, np.arange(outside.size)]
        tmask = mask | (1 << outside)
        better = val < dp[tmask, outside]
        dp[tmask[better], outside[better]] = val[better]
        parent[tmask[better], outside[better]] = inside[pick[better]]
    end = int(np.argmin(dp[full - 1]))
    path = [end]
    mask = full - 1
    while parent[mask, path[-1]] >= 0:
        nxt = int(parent[mask, path[-1]])
        mask ^= 1 << path[-1]
        path.append(nxt)
    path.reverse()
    return np.array(path, dtype=int)


def _path_length(dist: np.ndarray, path: np.ndarray) -> float:
    return float(dist[path[:-1], path[1:]].sum())


def _two_opt(dist: np.ndarray, path: np.ndarray) -> np.ndarray:
    """2-opt descent on the open path (reversal deltas treat the free
    endpoints as edges of zero cost)."""
    m = path.size
    best = path.copy()
    improved = True
    while improved:
        improved = False
        for i in range(m - 1):
            left = dist[best[i - 1], best[i]] if i > 0 else 0.0
            for j in range(i + 1, m):
                right = dist[best[j], best[j + 1]] if j + 1 < m else 0.0
                new_left = dist[best[i - 1], best[j]] if i > 0 else 0.0
                new_right = dist[best[i], best[j + 1]] if j + 1 < m else 0.0
                delta = new_left + new_right - left - right
                if delta < -1e-12:
                    best[i:j + 1] = best[i:j + 1][::-1]
                    improved = True
                    left = dist[best[i - 1], best[i]] if i > 0 else 0.0
    return best


def _heuristic_path(dist: np.ndarray, restarts: int, seed: int) -> np.ndarray:
    m = dist.shape[0]
    rng = np.random.default_rng(seed)
    best, best_len = None, np.inf
    for trial in range(restarts):
        if trial < m:
            # nearest neighbor from each start before random restarts
            path = [trial]
            todo = set(range(m)) - {trial}
            while todo:
                last = path[-1]
                nxt = min(todo, key=lambda k: (dist[last, k], k))
                path.append(nxt)
                todo.remove(nxt)
            path = np.array(path, dtype=int)
        else:
            path = rng.permutation(m)
        path = _two_opt(dist, path)
        length = _path_length(dist, path)
        if length < best_len - 1e-12:
            best, best_len = path, length
    return best


def plan_tour(points: np.ndarray, seed: int = 0, restarts: int = 50) -> TourPlan:
    """Shortest visit order over the hover points, endpoints free.

    Exact below EXACT_TSP_LIMIT points; otherwise nearest-neighbor
    starts plus seeded random restarts, each polished with 2-opt. Of
    the two traversal directions the lexicographically smaller index
    sequence is returned.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    m = pts.shape[0]
    if m == 0:
        raise ValueError("need at least one hover point")
    if m == 1:
        return TourPlan(points=pts.copy(), order=np.array([0]))
    dist = _pairwise(pts)
    if m <= EXACT_TSP_LIMIT:
        path = _held_karp_path(dist)
    else:
        path = _heuristic_path(dist, restarts, seed)
    if tuple(path[::-1]) < tuple(path):
        path = path[::-1]
    return TourPlan(points=pts[path], order=path)


def discretize_flight(tour: TourPlan, vmax: float,
                      max_slot: float = DEFAULT_SLOT_SECONDS) -> FlightPlan:
    """Cut each constant-speed leg into equal slots of at most max_slot
    seconds; slot positions are the midpoints of the traversed pieces.

    Zero-length legs produce no slots.
    """
    if vmax <= 0:
        raise ValueError("vmax must be positive")
    if max_slot <= 0:
        raise ValueError("max_slot must be positive")
    positions, durations, counts = [], [], []
    for i, length in enumerate(tour.leg_lengths):
        if length <= 0:
            counts.append(0)
            continue
        leg_time = length / vmax
        n = max(1, int(np.ceil(leg_time / max_slot - 1e-12)))
        frac = (np.arange(n) + 0.5) / n
        a, b = tour.points[i], tour.points[i + 1]
        positions.append(a + frac[:, None] * (b - a))
        durations.append(np.full(n, leg_time / n))
        counts.append(n)
    if positions:
        slot_positions = np.vstack(positions)
        slot_durations = np.concatenate(durations)
    else:
        slot_positions = np.zeros((0, 2))
        slot_durations = np.zeros(0)
    return FlightPlan(tour=tour, vmax=vmax, slot_positions=slot_positions,
                      slot_durations=slot_durations,
                      slots_per_leg=np.array(counts, dtype=int))


def hover_durations_in_tour_order(flight: FlightPlan,
                                  alloc: AllocationSolution) -> np.ndarray:
    """Map the allocator's per-point dwell times onto the visit order.

    The tour is planned over the stacked array [WPT points; users], so
    order values below Omega are charging points and the rest index the
    users.
    """
    omega = alloc.wpt_durations.shape[0]
    out = np.empty(flight.tour.num_points)
    for i, idx in enumerate(flight.tour.order):
        if idx < omega:
            out[i] = alloc.wpt_durations[idx]
        else:
            out[i] = alloc.wit_hover_durations[idx - omega]
    return out


def build_hover_and_fly(scn: Scenario, flight: FlightPlan,
                        alloc: AllocationSolution):
    """Assemble the hover-and-fly Trajectory and matching Schedule.

    The UAV dwells at each tour point for its allocated duration (zero
    dwells are skipped) and flies each leg at full speed; flight slots
    carry the allocator's TDMA split. Hover plus flight time must tile
    the period. Hover points and users are identified by tour position:
    WPT points first, then one entry per user, matching the stacking
    used to build the tour.
    """
    tour = flight.tour
    m = tour.num_points
    omega = alloc.wpt_durations.shape[0]
    hover_durations = hover_durations_in_tour_order(flight, alloc)
    total = hover_durations.sum() + flight.flight_time
    if abs(total - scn.period) > scn.tol.structural * scn.period + 1e-12:
        raise ValueError("hover plus flight time must tile the period")
    times = [0.0]
    waypoints = [tour.points[0]]
    slots = []
    t = 0.0
    slot_cursor = 0
    K = scn.num_users
    for i in range(m):
        dwell = hover_durations[i]
        if dwell > SKIP_HOVER_SECONDS:
            wpt = 0.0
            wits = np.zeros(K)
            powers = np.zeros(K)
            if tour.order[i] < omega:
                wpt = dwell
            else:
                k = int(tour.order[i] - omega)
                wits[k] = dwell
                powers[k] = alloc.wit_hover_powers[k]
            slots.append((dwell, tour.points[i], wpt, wits, powers))
            t += dwell
            times.append(t)
            waypoints.append(tour.points[i])
        if i < m - 1:
            n = flight.slots_per_leg[i]
            for j in range(n):
                idx = slot_cursor + j
                dur = flight.slot_durations[idx]
                slots.append((dur, flight.slot_positions[idx],
                              alloc.slot_wpt_durations[idx],
                              alloc.slot_wit_durations[idx],
                              alloc.slot_powers[idx]))
                t += dur
            slot_cursor += n
            if n:
                times.append(t)
                waypoints.append(tour.points[i + 1])
    times = np.asarray(times)
    if abs(times[-1] - scn.period) <= scn.tol.structural * scn.period + 1e-9:
        times[-1] = scn.period
    traj = Trajectory(times=times, points=np.asarray(waypoints))
    durs = np.array([s[0] for s in slots])
    # pin slot boundaries to the cumulative sum so the tiling is exact
    if durs.sum() != scn.period and abs(durs.sum() - scn.period) <= 1e-9 * scn.period:
        durs[-1] += scn.period - durs.sum()
    starts = np.concatenate([[0.0], np.cumsum(durs)])[:-1]
    sched = Schedule(
        start=starts,
        duration=durs,
        position=np.array([s[1] for s in slots]),
        wpt_duration=np.array([s[2] for s in slots]),
        wit_durations=np.array([s[3] for s in slots]),
        uplink_powers=np.array([s[4] for s in slots]),
    )
    return traj, sched


def tour_trajectory(tour: TourPlan, vmax: float) -> Trajectory:
    """Pure-flight trajectory through the tour at full speed (duration
    is the flight time, independent of any scenario period)."""
    lengths = tour.leg_lengths
    if float(lengths.sum()) <= 0:
        raise ValueError("tour has no extent to fly")
    keep = lengths > 0
    times = np.concatenate([[0.0], np.cumsum(lengths[keep] / vmax)])
    pts = np.vstack([tour.points[0], tour.points[1:][keep]])
    return Trajectory(times=times, points=pts)


def discretize_trajectory(traj: Trajectory, max_slot: float = DEFAULT_SLOT_SECONDS):
    """Uniform slotting of an arbitrary trajectory: N equal slots of at
    most max_slot seconds, positions sampled at the slot midpoints."""
    if max_slot <= 0:
        raise ValueError("max_slot must be positive")
    duration = traj.duration
    n = max(1, int(np.ceil(duration / max_slot - 1e-12)))
    delta = duration / n
    mids = (np.arange(n) + 0.5) * delta
    return SlotSpec(positions=traj.position_at(mids),
                    durations=np.full(n, delta))


def slot_schedule(slots: SlotSpec, alloc: AllocationSolution) -> Schedule:
    """Schedule for a slots-only plan (no hovering budget)."""
    durs = slots.durations.copy()
    starts = np.concatenate([[0.0], np.cumsum(durs)])[:-1]
    return Schedule(start=starts, duration=durs, position=slots.positions,
                    wpt_duration=alloc.slot_wpt_durations,
                    wit_durations=alloc.slot_wit_durations,
                    uplink_powers=alloc.slot_powers)


def scale_trajectory(traj: Trajectory, anchor, factor: float) -> Trajectory:
    """Shrink a trajectory in time and space toward an anchor point.

    Times scale by factor and every waypoint moves to factor * p +
    (1 - factor) * anchor, which preserves all leg speeds exactly; used
    when the period is too short to fly the full tour.
    """
    if not 0 < factor <= 1:
        raise ValueError("factor must be in (0, 1]")
    anchor = np.asarray(anchor, dtype=float).reshape(2)
    return Trajectory(times=traj.times * factor,
                      points=factor * traj.points + (1 - factor) * anchor)


def static_hover_search(scn: Scenario, grid_step: float | None = None):
    """Best single hovering position for the no-motion baseline.

    Coarse grid over the user bounding box (the max-min throughput
    landscape can be multimodal), then local polish of the best cell.
    Returns (position, AllocationSolution at that position).
    """
    lo, hi = scn.bounding_box()
    span = float(np.max(hi - lo))
    step = grid_step if grid_step is not None else max(0.5, span / 40.0)
    axes = []
    for i in range(2):
        extent = hi[i] - lo[i]
        n = max(int(round(extent / step)) + 1, 1)
        axes.append(np.linspace(lo[i], hi[i], n))
    best_r, best_q = -np.inf, None
    for x in axes[0]:
        for y in axes[1]:
            r = solve_static(scn, [x, y]).common_throughput
            if r > best_r:
                best_r, best_q = r, np.array([x, y])
    free = [i for i in range(2) if hi[i] - lo[i] > 0]
    if free:
        def negative(z):
            q = best_q.copy()
            q[free] = z
            return -solve_static(scn, q).common_throughput

        res = minimize(negative, best_q[free], method="Nelder-Mead",
                       bounds=[(lo[i], hi[i]) for i in free],
                       options={"xatol": 1e-4, "fatol": 1e-10, "maxfev": 200})
        if -res.fun >= best_r:
            best_q[free] = res.x
    sol = solve_static(scn, best_q)
    return best_q, sol
