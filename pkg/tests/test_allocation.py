"""Tests for the convex time/energy allocator.

Oracles: symmetric instances reduce the allocation to one scalar (the
charging duration), scanned on a dense grid; invariances (slot order,
slot merging, budget monotonicity) follow from the problem structure
and are checked against re-solves. Tags as in test_dual.
"""

import math

import numpy as np
import pytest

from uavwpcn import Scenario, channel_gain
from uavwpcn.allocation import (
    AllocationError,
    SlotSpec,
    clear_problem_cache,
    solve_hover_and_slots,
    solve_hover_fly_allocation,
    solve_slot_allocation,
    solve_static,
)

LN2 = math.log(2.0)


def make_scenario(users, period=10.0, vmax=10.0):
    return Scenario(
        users=np.asarray(users, dtype=float),
        altitude=5.0, beta0=1e-3, sigma2=1e-11, eta=0.5, p=10.0,
        vmax=vmax, period=period, name="alloc")


def static_two_phase_oracle(scn, position, k=0, grid=20001):
    """[DERIVED] single user, fixed spot: charge tau0 then spend all the
    energy in the remaining time; scan tau0."""
    h = channel_gain(scn, np.asarray(position, dtype=float), k)
    tau0 = np.linspace(0.0, scn.period, grid)[1:-1]
    wit = scn.period - tau0
    energy = scn.eta * scn.p * h * tau0
    rates = wit * np.log2(1.0 + (energy / wit) * h / scn.sigma2) / scn.period
    return float(rates.max())


class TestStatic:
    def test_single_user_matches_two_phase_scan(self):
        # [DERIVED] oracle above, user right below the UAV
        scn = make_scenario([[0.0, 0.0]])
        sol = solve_static(scn, [0.0, 0.0])
        oracle = static_two_phase_oracle(scn, [0.0, 0.0])
        assert sol.common_throughput == pytest.approx(oracle, rel=1e-5)
        assert sol.status in ("optimal", "optimal_inaccurate")

    def test_single_user_offset_position(self):
        # [DERIVED] same reduction with a 4 m horizontal offset
        scn = make_scenario([[0.0, 0.0]])
        sol = solve_static(scn, [4.0, 0.0])
        oracle = static_two_phase_oracle(scn, [4.0, 0.0])
        assert sol.common_throughput == pytest.approx(oracle, rel=1e-5)

    def test_symmetric_pair_midpoint(self):
        # [DERIVED] two users at +/-3, UAV between them: by symmetry the
        # transmit time splits evenly; scan the charging duration
        scn = make_scenario([[-3.0, 0.0], [3.0, 0.0]])
        sol = solve_static(scn, [0.0, 0.0])
        h = channel_gain(scn, np.array([0.0, 0.0]), 0)
        tau0 = np.linspace(0.0, scn.period, 40001)[1:-1]
        per_user = (scn.period - tau0) / 2
        energy = scn.eta * scn.p * h * tau0
        rates = per_user * np.log2(1.0 + (energy / per_user) * h / scn.sigma2)
        oracle = float(rates.max()) / scn.period
        assert sol.common_throughput == pytest.approx(oracle, rel=1e-5)
        wits = sol.slot_wit_durations[0]
        assert wits[0] == pytest.approx(wits[1], rel=1e-4)

    def test_closer_position_never_worse(self):
        # [DERIVED] moving the static spot onto the lone user dominates
        scn = make_scenario([[2.0, 1.0]])
        on_user = solve_static(scn, [2.0, 1.0]).common_throughput
        off_user = solve_static(scn, [0.0, 0.0]).common_throughput
        assert on_user >= off_user - 1e-9


class TestSlotAllocation:
    def test_slot_order_invariance(self):
        # [TRIVIAL] slots do not interact except through sums
        scn = make_scenario([[-4.0, 0.0], [4.0, 2.0]], period=6.0)
        pos = np.array([[-4.0, 0.0], [0.0, 0.0], [4.0, 2.0]])
        dur = np.array([2.0, 1.0, 3.0])
        a = solve_slot_allocation(scn, pos, dur)
        perm = [2, 0, 1]
        b = solve_slot_allocation(scn, pos[perm], dur[perm])
        assert a.common_throughput == pytest.approx(b.common_throughput, rel=1e-7)

    def test_slot_merging_invariance(self):
        # [DERIVED] two slots at the same spot equal one slot of the
        # combined duration (time sharing within a slot is free)
        scn = make_scenario([[-4.0, 0.0], [4.0, 2.0]], period=6.0)
        merged = solve_slot_allocation(
            scn, np.array([[1.0, 0.5], [-2.0, 1.0]]), np.array([4.0, 2.0]))
        split = solve_slot_allocation(
            scn, np.array([[1.0, 0.5], [1.0, 0.5], [-2.0, 1.0]]),
            np.array([2.5, 1.5, 2.0]))
        assert merged.common_throughput == pytest.approx(
            split.common_throughput, rel=1e-6)

    def test_tiling_and_neutrality_exact(self):
        # [TRIVIAL] cleaned output tiles each slot exactly and respects
        # per-user energy neutrality with no tolerance
        scn = make_scenario([[-5.0, 0.0], [5.0, 0.0], [0.0, 4.0]], period=8.0)
        pos = np.array([[-3.0, 0.0], [0.0, 1.0], [3.0, 0.0], [0.0, 3.0]])
        dur = np.array([2.0, 2.0, 2.0, 2.0])
        sol = solve_slot_allocation(scn, pos, dur)
        tiled = sol.slot_wpt_durations + sol.slot_wit_durations.sum(axis=1)
        np.testing.assert_allclose(tiled, dur, rtol=0, atol=1e-12)
        assert np.all(sol.consumed <= sol.harvested + 1e-18)
        assert sol.common_throughput > 0

    def test_reported_rate_is_worst_user(self):
        # [TRIVIAL]
        scn = make_scenario([[-5.0, 0.0], [1.0, 0.0]], period=5.0)
        sol = solve_slot_allocation(
            scn, np.array([[0.0, 0.0]]), np.array([5.0]))
        assert sol.common_throughput == pytest.approx(sol.rates.min(), rel=1e-12)

    def test_max_min_equalizes_rates(self):
        # [DERIVED] with positive powers everywhere the optimum cannot
        # leave one user strictly ahead, else time would be reassigned
        scn = make_scenario([[-4.0, 0.0], [4.0, 0.0]], period=6.0)
        pos = np.array([[-2.0, 0.0], [2.0, 0.0]])
        sol = solve_slot_allocation(scn, pos, np.array([3.0, 3.0]))
        assert sol.rates[0] == pytest.approx(sol.rates[1], rel=1e-4)

    def test_zero_duration_slot_tolerated(self):
        # [TRIVIAL]
        scn = make_scenario([[0.0, 0.0]], period=4.0)
        sol = solve_slot_allocation(
            scn, np.array([[0.0, 0.0], [1.0, 0.0]]), np.array([4.0, 0.0]))
        assert sol.slot_wpt_durations[1] == 0.0
        assert np.all(sol.slot_wit_durations[1] == 0.0)
        assert sol.common_throughput > 0


class TestHoverAndSlots:
    def test_zero_hover_budget_still_serves_users(self):
        # [TRIVIAL] T equal to the flight time leaves nothing to hover;
        # throughput comes from the flight slots alone
        scn = make_scenario([[-2.0, 0.0], [2.0, 0.0]], period=4.0)
        slots = SlotSpec(
            positions=np.array([[-1.5, 0.0], [-0.5, 0.0], [0.5, 0.0], [1.5, 0.0]]),
            durations=np.full(4, 1.0))
        sol = solve_hover_fly_allocation(scn, np.array([[0.0, 0.0]]), slots)
        assert sol.wpt_durations.sum() + sol.wit_hover_durations.sum() == \
            pytest.approx(0.0, abs=1e-12)
        assert sol.common_throughput > 0

    def test_flight_longer_than_period_rejected(self):
        scn = make_scenario([[-2.0, 0.0], [2.0, 0.0]], period=1.0)
        slots = SlotSpec(positions=np.array([[0.0, 0.0]]), durations=np.array([2.0]))
        with pytest.raises(ValueError):
            solve_hover_fly_allocation(scn, np.array([[0.0, 0.0]]), slots)

    def test_hover_budget_monotone(self):
        # [DERIVED] stretching the period (same flight slots) can only
        # help: the old allocation stays feasible with idle charging
        scn6 = make_scenario([[-3.0, 0.0], [3.0, 0.0]], period=6.0)
        scn9 = scn6.with_period(9.0)
        slots = SlotSpec(
            positions=np.array([[-1.0, 0.0], [1.0, 0.0]]),
            durations=np.array([1.0, 1.0]))
        pts = np.array([[0.0, 0.0]])
        r6 = solve_hover_fly_allocation(scn6, pts, slots).common_throughput * 6.0
        r9 = solve_hover_fly_allocation(scn9, pts, slots).common_throughput * 9.0
        assert r9 >= r6 * (1 - 1e-7)

    def test_symmetric_plan_balances_users(self):
        # [DERIVED] mirror-symmetric plan: equal hover transmit times
        scn = make_scenario([[-5.0, 0.0], [5.0, 0.0]], period=10.0)
        slots = SlotSpec(
            positions=np.array([[-4.0, 0.0], [0.0, 0.0], [4.0, 0.0]]),
            durations=np.array([0.5, 0.5, 0.5]))
        pts = np.array([[-4.5509, 0.0], [4.5509, 0.0]])
        sol = solve_hover_fly_allocation(scn, pts, slots)
        assert sol.wit_hover_durations[0] == pytest.approx(
            sol.wit_hover_durations[1], rel=1e-3)
        assert sol.wpt_durations[0] == pytest.approx(sol.wpt_durations[1], rel=1e-2)
        total = (sol.wpt_durations.sum() + sol.wit_hover_durations.sum()
                 + slots.total_duration)
        assert total == pytest.approx(scn.period, rel=1e-12)

    def test_budget_without_hover_points_rejected(self):
        scn = make_scenario([[0.0, 0.0]], period=4.0)
        slots = SlotSpec(positions=np.array([[0.0, 0.0]]), durations=np.array([2.0]))
        with pytest.raises(ValueError):
            solve_hover_and_slots(scn, np.zeros((0, 2)), slots, 2.0,
                                  with_user_hover=False)

    def test_mismatched_tiling_rejected(self):
        scn = make_scenario([[0.0, 0.0]], period=4.0)
        slots = SlotSpec(positions=np.array([[0.0, 0.0]]), durations=np.array([1.0]))
        with pytest.raises(ValueError):
            solve_hover_and_slots(scn, np.array([[0.0, 0.0]]), slots, 1.0)


class TestCacheReuse:
    def test_cached_problem_matches_fresh_solve(self):
        # [DERIVED] same shapes, different data: the parametrized
        # re-solve must agree with a cold compile
        users_a = [[-4.0, 0.0], [4.0, 0.0]]
        users_b = [[-1.0, 2.0], [3.0, -1.0]]
        pos = np.array([[0.0, 0.0], [1.0, 1.0]])
        dur = np.array([3.0, 3.0])
        clear_problem_cache()
        first = solve_slot_allocation(make_scenario(users_a, period=6.0), pos, dur)
        warm = solve_slot_allocation(make_scenario(users_b, period=6.0), pos, dur)
        clear_problem_cache()
        cold = solve_slot_allocation(make_scenario(users_b, period=6.0), pos, dur)
        assert warm.common_throughput == pytest.approx(
            cold.common_throughput, rel=1e-7)
        assert first.common_throughput != pytest.approx(
            warm.common_throughput, rel=1e-3)

    def test_solver_value_close_to_recompute(self):
        # [TRIVIAL] honest recomputation tracks the solver objective
        scn = make_scenario([[-5.0, 0.0], [5.0, 0.0]], period=10.0)
        sol = solve_static(scn, [0.0, 0.0])
        assert sol.common_throughput == pytest.approx(sol.solver_value, rel=1e-5)


class TestRandomizedFeasibility:
    def test_random_plans_always_clean(self):
        # [DERIVED] seeded random geometries: output always tiles, is
        # neutral, and never beats the per-user charging upper bound
        rng = np.random.default_rng(3)
        for _ in range(10):
            K = int(rng.integers(1, 4))
            users = rng.uniform(-8, 8, size=(K, 2))
            scn = make_scenario(users, period=float(rng.uniform(4, 12)))
            n = int(rng.integers(1, 5))
            pos = rng.uniform(-8, 8, size=(n, 2))
            frac = rng.uniform(0.2, 0.8)
            dur = rng.uniform(0.5, 1.0, size=n)
            dur *= frac * scn.period / dur.sum()
            pts = rng.uniform(-8, 8, size=(int(rng.integers(1, 3)), 2))
            sol = solve_hover_and_slots(scn, pts, SlotSpec(positions=pos, durations=dur),
                                        scn.period - dur.sum())
            assert np.all(sol.consumed <= sol.harvested + 1e-18)
            tiled = sol.slot_wpt_durations + sol.slot_wit_durations.sum(axis=1)
            np.testing.assert_allclose(tiled, dur, rtol=0, atol=1e-12)
            hover = sol.wpt_durations.sum() + sol.wit_hover_durations.sum()
            assert hover == pytest.approx(scn.period - dur.sum(), abs=1e-9)
            assert sol.common_throughput >= 0
