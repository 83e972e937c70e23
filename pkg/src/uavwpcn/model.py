"""Physical and information-theoretic model for a UAV-served wireless
powered communication network.

A single rotary-wing UAV at fixed altitude charges K ground users over
the downlink (wireless power transfer, WPT) and collects their uplink
data (wireless information transfer, WIT) under TDMA. Channel gains
follow the free-space path-loss law, harvested power is linear in the
received RF power, and every user is bound by an energy-neutrality
constraint over the flight period: uplink transmit energy cannot exceed
harvested energy.

All quantities are in linear SI units (meters, seconds, Watts); rates
are spectral efficiencies in bps/Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LN2 = np.log(2.0)


@dataclass(frozen=True)
class Tolerances:
    """Shared numeric tolerances.

    structural: relative tolerance for bookkeeping identities that hold
        by construction (slot tiling, duration sums, speed bounds).
    physical: relative tolerance for solver-produced physical
        constraints (energy neutrality, rate equalization).
    """

    structural: float = 1e-9
    physical: float = 1e-6


DEFAULT_TOL = Tolerances()


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance.

    Args:
        users: (K, 2) horizontal user coordinates w_k in meters.
        altitude: UAV flight altitude H > 0 in meters.
        beta0: channel power gain at 1 m reference distance (linear).
        sigma2: receiver noise power in Watts.
        eta: RF-to-DC conversion efficiency, in (0, 1].
        p: UAV downlink transmit power in Watts.
        vmax: maximum UAV speed in m/s.
        period: flight period T in seconds.
    """

    users: np.ndarray
    altitude: float
    beta0: float
    sigma2: float
    eta: float
    p: float
    vmax: float
    period: float
    name: str = "scenario"
    tol: Tolerances = field(default=DEFAULT_TOL)

    def __post_init__(self):
        users = np.atleast_2d(np.asarray(self.users, dtype=float))
        if users.ndim != 2 or users.shape[1] != 2 or users.shape[0] < 1:
            raise ValueError("users must be a (K, 2) array with K >= 1")
        if not np.all(np.isfinite(users)):
            raise ValueError("user coordinates must be finite")
        object.__setattr__(self, "users", users)
        for label, value in [
            ("altitude", self.altitude),
            ("beta0", self.beta0),
            ("sigma2", self.sigma2),
            ("p", self.p),
            ("vmax", self.vmax),
            ("period", self.period),
        ]:
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{label} must be positive and finite")
        if not (0 < self.eta <= 1):
            raise ValueError("eta must lie in (0, 1]")
        if not np.isfinite(self.beta0 / self.sigma2):
            raise ValueError("gamma = beta0/sigma2 must be finite")

    @property
    def num_users(self) -> int:
        return self.users.shape[0]

    @property
    def gamma(self) -> float:
        """Reference SNR beta0 / sigma2 at 1 m per unit transmit power."""
        return self.beta0 / self.sigma2

    def with_period(self, period: float) -> "Scenario":
        return Scenario(self.users, self.altitude, self.beta0, self.sigma2,
                        self.eta, self.p, self.vmax, float(period),
                        name=self.name, tol=self.tol)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box of the user positions (lo, hi)."""
        return self.users.min(axis=0), self.users.max(axis=0)


def channel_gain(scn: Scenario, q, k: int | None = None):
    """Free-space channel power gain between the UAV at q and user k.

    Args:
        scn: scenario constants.
        q: UAV horizontal position, shape (2,) or (N, 2).
        k: user index; None evaluates all users at once.

    Returns:
        beta0 / (||q - w_k||^2 + H^2). Scalar for a single position and
        user, otherwise an array broadcast over positions/users.
    """
    q = np.asarray(q, dtype=float)
    if k is not None:
        if not (0 <= k < scn.num_users):
            raise IndexError(f"user index {k} out of range")
        w = scn.users[k]
        d2 = np.sum((q - w) ** 2, axis=-1)
        return scn.beta0 / (d2 + scn.altitude ** 2)
    diff = q[..., None, :] - scn.users  # (..., K, 2)
    d2 = np.sum(diff ** 2, axis=-1)
    return scn.beta0 / (d2 + scn.altitude ** 2)


def harvested_power(scn: Scenario, q, k: int | None = None):
    """Harvested DC power eta * P * h_k(q) at user k while the UAV
    transmits in WPT mode from position q (Watts)."""
    return scn.eta * scn.p * channel_gain(scn, q, k)


def instantaneous_rate(scn: Scenario, q, k: int, qk: float):
    """Uplink spectral efficiency of user k transmitting at power qk.

    Returns log2(1 + qk * gamma / (||q - w_k||^2 + H^2)) in bps/Hz.
    """
    if np.any(np.asarray(qk) < 0):
        raise ValueError("uplink power must be nonnegative")
    return np.log2(1.0 + np.asarray(qk) * channel_gain(scn, q, k) / scn.sigma2)


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear UAV path: positions (N, 2) at strictly
    increasing times (N,) spanning [0, T]. Equal consecutive positions
    are hover segments."""

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        p = np.atleast_2d(np.asarray(self.points, dtype=float))
        if p.shape != (t.size, 2):
            raise ValueError("points must be (N, 2) matching times")
        if t.size < 2:
            raise ValueError("a trajectory needs at least two waypoints")
        if np.any(np.diff(t) <= 0):
            raise ValueError("waypoint times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def leg_speeds(self) -> np.ndarray:
        dt = np.diff(self.times)
        dist = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return dist / dt

    def position_at(self, t) -> np.ndarray:
        """Linear interpolation of the path at time(s) t."""
        t = np.asarray(t, dtype=float)
        x = np.interp(t, self.times, self.points[:, 0])
        y = np.interp(t, self.times, self.points[:, 1])
        return np.stack([x, y], axis=-1)

    def validate(self, scn: Scenario) -> list[str]:
        """Structural checks against the scenario; returns violations."""
        tol = scn.tol.structural
        problems = []
        if abs(self.times[0]) > tol * max(scn.period, 1.0):
            problems.append("trajectory must start at t=0")
        if abs(self.times[-1] - scn.period) > tol * max(scn.period, 1.0):
            problems.append("trajectory must end at t=T")
        speeds = self.leg_speeds()
        if np.any(speeds > scn.vmax * (1.0 + tol)):
            worst = float(speeds.max())
            problems.append(f"speed bound exceeded: {worst:.6g} m/s")
        return problems


@dataclass(frozen=True)
class Schedule:
    """Per-slot TDMA transmission plan.

    Arrays over N slots: start (N,), duration (N,), position (N, 2) of
    the UAV, wpt_duration (N,) for the downlink sub-slot, and per-user
    wit_durations (N, K) / uplink_powers (N, K) in Watts. Sub-slot
    durations must tile each slot: tau0 + sum_k tau_k = duration.
    """

    start: np.ndarray
    duration: np.ndarray
    position: np.ndarray
    wpt_duration: np.ndarray
    wit_durations: np.ndarray
    uplink_powers: np.ndarray

    def __post_init__(self):
        start = np.asarray(self.start, dtype=float).reshape(-1)
        n = start.size
        duration = np.asarray(self.duration, dtype=float).reshape(n)
        position = np.asarray(self.position, dtype=float).reshape(n, 2)
        tau0 = np.asarray(self.wpt_duration, dtype=float).reshape(n)
        tau = np.atleast_2d(np.asarray(self.wit_durations, dtype=float))
        power = np.atleast_2d(np.asarray(self.uplink_powers, dtype=float))
        if tau.shape[0] != n or power.shape != tau.shape:
            raise ValueError("wit_durations/uplink_powers must be (N, K)")
        if np.any(duration <= 0):
            raise ValueError("slot durations must be positive")
        if np.any(tau0 < 0) or np.any(tau < 0) or np.any(power < 0):
            raise ValueError("durations and powers must be nonnegative")
        for name, arr in [("start", start), ("duration", duration),
                          ("position", position), ("wpt_duration", tau0),
                          ("wit_durations", tau), ("uplink_powers", power)]:
            object.__setattr__(self, name, arr)

    @property
    def num_slots(self) -> int:
        return self.start.size

    @property
    def num_users(self) -> int:
        return self.wit_durations.shape[1]

    def midpoints(self) -> np.ndarray:
        return self.start + 0.5 * self.duration

    def validate(self, scn: Scenario, traj: Trajectory | None = None) -> list[str]:
        """Check slot tiling of [0, T], sub-slot tiling, and (optionally)
        consistency of slot positions with a trajectory."""
        tol = scn.tol.structural
        scale = max(scn.period, 1.0)
        problems = []
        if abs(self.start[0]) > tol * scale:
            problems.append("first slot must start at t=0")
        ends = self.start + self.duration
        if self.num_slots > 1 and np.any(
                np.abs(ends[:-1] - self.start[1:]) > tol * scale):
            problems.append("slots must tile the period without gaps")
        if abs(ends[-1] - scn.period) > tol * scale:
            problems.append("last slot must end at t=T")
        split = self.wpt_duration + self.wit_durations.sum(axis=1)
        if np.any(np.abs(split - self.duration) > tol * np.maximum(self.duration, tol)):
            problems.append("sub-slot durations must sum to the slot duration")
        if traj is not None:
            ref = traj.position_at(self.midpoints())
            drift = np.linalg.norm(self.position - ref, axis=1)
            # within a slot the UAV can move at most vmax * duration / 2
            # away from the midpoint position
            allowed = scn.vmax * self.duration / 2.0 * (1.0 + tol) + 1e-9
            if np.any(drift > allowed):
                problems.append("slot positions inconsistent with trajectory")
        return problems


@dataclass(frozen=True)
class ThroughputReport:
    """Per-user energy and rate accounting for one period.

    harvested/consumed are Joules, rates are average bps/Hz over the
    period, and common_throughput = min_k rates (the max-min objective).
    """

    harvested: np.ndarray
    consumed: np.ndarray
    rates: np.ndarray
    common_throughput: float
    neutrality_ok: bool

    def as_dict(self) -> dict:
        return {
            "harvested_j": self.harvested.tolist(),
            "consumed_j": self.consumed.tolist(),
            "rates_bps_hz": self.rates.tolist(),
            "common_throughput_bps_hz": self.common_throughput,
            "neutrality_ok": bool(self.neutrality_ok),
        }


def slot_rate(tau, coeff, energy):
    """Perspective-form slot rate tau * log2(1 + coeff * energy / tau).

    Continuous extension at tau = 0 is 0 when energy = 0; positive
    energy pushed through a zero-duration sub-slot would need infinite
    power and is rejected.
    """
    tau = np.asarray(tau, dtype=float)
    energy = np.asarray(energy, dtype=float)
    coeff = np.asarray(coeff, dtype=float)
    if np.any((tau <= 0) & (energy > 0)):
        raise ValueError("positive energy in a zero-duration sub-slot")
    out = np.zeros(np.broadcast(tau, coeff, energy).shape)
    mask = tau > 0
    if np.any(mask):
        t = np.broadcast_to(tau, out.shape)[mask]
        c = np.broadcast_to(coeff, out.shape)[mask]
        e = np.broadcast_to(energy, out.shape)[mask]
        out[mask] = t * np.log2(1.0 + c * e / t)
    if out.ndim == 0:
        return float(out)
    return out


def evaluate_schedule(scn: Scenario, traj: Trajectory, sched: Schedule) -> ThroughputReport:
    """Account one period of a trajectory/schedule pair.

    Harvested energy, consumed energy, and average rate per user are
    accumulated slot by slot with the UAV position taken from the
    schedule (validated against the trajectory at slot midpoints).
    Raises on structural violations; energy-neutrality violations are
    reported via the neutrality_ok flag instead, at the physical
    tolerance.
    """
    problems = traj.validate(scn) + sched.validate(scn, traj)
    if problems:
        raise ValueError("; ".join(problems))
    if sched.num_users != scn.num_users:
        raise ValueError("schedule user count does not match scenario")
    gains = channel_gain(scn, sched.position)  # (N, K)
    harvested = scn.eta * scn.p * (gains * sched.wpt_duration[:, None]).sum(axis=0)
    consumed = (sched.wit_durations * sched.uplink_powers).sum(axis=0)
    per_slot = slot_rate(sched.wit_durations, gains / scn.sigma2,
                         sched.wit_durations * sched.uplink_powers)
    rates = per_slot.sum(axis=0) / scn.period
    tol = scn.tol.physical
    ok = bool(np.all(consumed <= harvested * (1.0 + tol) + 1e-18))
    return ThroughputReport(
        harvested=harvested,
        consumed=consumed,
        rates=rates,
        common_throughput=float(rates.min()),
        neutrality_ok=ok,
    )
