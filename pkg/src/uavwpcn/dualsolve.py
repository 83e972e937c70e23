"""Global solution of the speed-relaxed max-min throughput problem via
Lagrangian duality.

With the speed constraint dropped, strong duality holds (time-sharing
condition). The dual function decomposes per time instant into K+1
candidate modes: downlink WPT at the maximizer of
phi(q, mu) = sum_k eta*P*mu_k*h_k(q), or uplink WIT for one user k at
w_k with the KKT closed-form power. The dual is minimized with the
ellipsoid method over (lambda, mu) reduced by sum_k lambda_k = 1, and
the primal multi-location-hovering solution is recovered by a small
time-sharing LP over the hovering durations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .model import LN2, Scenario, channel_gain

MU_FLOOR = 1e-9

# candidate grid points whose phi falls within this relative tolerance of
# the maximum are treated as (potential) additional hovering locations
ARGMAX_REL_TOL = 1e-6


@dataclass(frozen=True)
class DualVariables:
    """Dual weights lambda (rate constraints) and prices mu (energy)."""

    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        mu = np.asarray(self.mu, dtype=float).reshape(lam.shape)
        if abs(lam.sum() - 1.0) > 1e-9:
            raise ValueError("lambda must sum to 1")
        if np.any(lam < -1e-12):
            raise ValueError("lambda must be nonnegative")
        if np.any(mu < MU_FLOOR * (1 - 1e-12)):
            raise ValueError("mu must stay above the positive floor")
        object.__setattr__(self, "lam", np.maximum(lam, 0.0))
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True)
class SubproblemSolution:
    """Best single-instant transmission mode under given duals.

    mode is "wpt" (UAV charges everyone from the phi-maximizer) or
    "wit" (user `user` transmits from below the UAV at w_k).
    """

    mode: str
    user: int | None
    position: np.ndarray
    power: float
    objective: float
    phi_star: float
    phi_users: np.ndarray


@dataclass(frozen=True)
class HoveringSolution:
    """Multi-location-hovering optimum of the relaxed problem.

    The UAV time-shares Omega WPT hovering points (durations tau) and
    the K user positions (durations sigma, uplink powers q_up); R is the
    resulting common throughput in bps/Hz.
    """

    wpt_locations: np.ndarray
    wpt_durations: np.ndarray
    wit_positions: np.ndarray
    wit_durations: np.ndarray
    wit_powers: np.ndarray
    common_throughput: float

    @property
    def num_wpt(self) -> int:
        return self.wpt_locations.shape[0]

    def hover_points(self) -> np.ndarray:
        """All Omega + K hovering locations, WPT points first."""
        return np.vstack([self.wpt_locations, self.wit_positions])

    def as_dict(self) -> dict:
        return {
            "wpt_locations": self.wpt_locations.tolist(),
            "wpt_durations_s": self.wpt_durations.tolist(),
            "wit_positions": self.wit_positions.tolist(),
            "wit_durations_s": self.wit_durations.tolist(),
            "wit_powers_w": self.wit_powers.tolist(),
            "common_throughput_bps_hz": self.common_throughput,
        }


@dataclass
class EllipsoidState:
    """Localizer ellipsoid {x : (x-c)^T A^{-1} (x-c) <= 1} in the
    reduced dual space (lambda_1..lambda_{K-1}, mu_1..mu_K)."""

    center: np.ndarray
    shape: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class DualSolveOptions:
    tol: float = 1e-7
    max_iters: int | None = None
    grid_step: float | None = None


def phi(scn: Scenario, q, mu) -> float | np.ndarray:
    """Weighted harvest-rate objective sum_k eta*P*mu_k*h_k(q)."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("mu must be nonnegative")
    gains = channel_gain(scn, q)  # (..., K)
    return scn.eta * scn.p * gains @ mu


def default_grid_step(scn: Scenario) -> float:
    lo, hi = scn.bounding_box()
    span = float(np.max(hi - lo))
    return max(0.1, span / 400.0)


def _search_grid(scn: Scenario, step: float):
    """Lexicographically ordered grid over the user bounding box and the
    per-user channel gains on it, cached on the scenario instance."""
    cache = getattr(scn, "_grid_cache", None)
    if cache is not None and cache[0] == step:
        return cache[1], cache[2]
    lo, hi = scn.bounding_box()
    axes = []
    for i in range(2):
        span = hi[i] - lo[i]
        n = max(int(round(span / step)) + 1, 1)
        axes.append(np.linspace(lo[i], hi[i], n))
    xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    gains = channel_gain(scn, pts)  # (npts, K)
    object.__setattr__(scn, "_grid_cache", (step, pts, gains))
    return pts, gains


def _refine_peak(scn: Scenario, mu, start: np.ndarray) -> np.ndarray:
    """Local ascent of phi from a grid peak, constrained to the user box.

    phi is smooth with a cheap analytic gradient, so projected
    quasi-Newton converges in a handful of iterations even when the
    coarse argmax lands on the box boundary (the true peak is always
    interior along any axis with positive span).
    """
    lo, hi = scn.bounding_box()
    free = [i for i in range(2) if hi[i] - lo[i] > 0]
    if not free:
        return start.copy()
    weights = scn.eta * scn.p * np.asarray(mu, dtype=float) * scn.beta0
    users = scn.users
    h2 = scn.altitude ** 2

    def negphi_and_grad(z):
        q = start.copy()
        q[free] = z
        d = q - users  # (K, 2)
        denom = (d * d).sum(axis=1) + h2
        val = (weights / denom).sum()
        grad = -2.0 * ((weights / denom ** 2)[:, None] * d).sum(axis=0)
        return -val, -grad[free]

    res = minimize(negphi_and_grad, start[free], jac=True, method="L-BFGS-B",
                   bounds=[(lo[i], hi[i]) for i in free],
                   options={"ftol": 1e-15, "gtol": 0.0, "maxiter": 200})
    out = start.copy()
    out[free] = res.x
    return out


def search_wpt_locations(scn: Scenario, mu,
                         grid_step: float | None = None) -> np.ndarray:
    """Find all maximizers of phi over the user bounding box.

    Coarse grid scan, then grid points within ARGMAX_REL_TOL of the
    maximum are clustered (merge radius 10 grid steps), each cluster is
    refined by local ascent, and near-duplicate refined peaks are
    merged. Returns the (Omega, 2) locations sorted lexicographically.
    """
    step = grid_step if grid_step is not None else default_grid_step(scn)
    pts, gains = _search_grid(scn, step)
    weights = scn.eta * scn.p * np.asarray(mu, dtype=float)
    if np.any(weights < 0):
        raise ValueError("mu must be nonnegative")
    values = gains @ weights
    vmax = values.max()
    cand = np.flatnonzero(values >= vmax * (1.0 - ARGMAX_REL_TOL))
    order = cand[np.argsort(-values[cand], kind="stable")]
    merge_radius = 10.0 * step
    centers: list[np.ndarray] = []
    for idx in order:
        p = pts[idx]
        if all(np.linalg.norm(p - c) >= merge_radius for c in centers):
            centers.append(p)
    refined = [_refine_peak(scn, mu, c) for c in centers]
    # distinct grid clusters can ascend to the same true peak
    unique: list[np.ndarray] = []
    for p in refined:
        if all(np.linalg.norm(p - u) > 1e-3 for u in unique):
            unique.append(p)
    out = np.array(sorted(unique, key=tuple))
    return out


def optimal_uplink_power(scn: Scenario, lam_k: float, mu_k: float) -> float:
    """KKT closed-form WIT power (lam/(T mu ln2) - H^2/gamma)^+."""
    if mu_k < MU_FLOOR * (1 - 1e-12):
        raise ValueError("mu below the positive floor")
    return max(lam_k / (scn.period * mu_k * LN2) - scn.altitude ** 2 / scn.gamma, 0.0)


def _phi_users(scn: Scenario, lam: np.ndarray, mu: np.ndarray,
               powers: np.ndarray) -> np.ndarray:
    """WIT-mode objectives varphi_k(w_k, Q_k) for all users."""
    gains = channel_gain(scn, scn.users)  # (K, K)
    own = np.diagonal(gains)
    rates = np.log2(1.0 + powers * own / scn.sigma2)
    return lam / scn.period * rates - mu * powers


def solve_subproblem(scn: Scenario, duals: DualVariables,
                     wpt_point: np.ndarray | None = None,
                     phi_star: float | None = None) -> SubproblemSolution:
    """Pick the best single-instant mode under the duals.

    The WPT candidate hovers at the phi-maximizer; the WIT candidate
    for user k hovers at w_k with the closed-form power. Ties go to
    WPT. The WPT argmax may be passed in to avoid re-searching.
    """
    if wpt_point is None:
        wpt_point = search_wpt_locations(scn, duals.mu)[0]
    if phi_star is None:
        phi_star = float(phi(scn, wpt_point, duals.mu))
    powers = np.array([optimal_uplink_power(scn, l, m)
                       for l, m in zip(duals.lam, duals.mu)])
    phi_users = _phi_users(scn, duals.lam, duals.mu, powers)
    k_star = int(np.argmax(phi_users))
    if phi_star >= phi_users[k_star]:
        return SubproblemSolution(
            mode="wpt", user=None, position=np.asarray(wpt_point, dtype=float),
            power=0.0, objective=phi_star, phi_star=phi_star,
            phi_users=phi_users)
    return SubproblemSolution(
        mode="wit", user=k_star, position=scn.users[k_star].copy(),
        power=float(powers[k_star]), objective=float(phi_users[k_star]),
        phi_star=phi_star, phi_users=phi_users)


def dual_value_and_subgradient(scn: Scenario, duals: DualVariables,
                               wpt_point: np.ndarray | None = None,
                               phi_star: float | None = None):
    """Dual function value g and a subgradient in the full 2K space.

    g integrates the best per-instant mode over the period (the
    subproblems are identical across t), so g = T * max(phi*, max_k
    varphi_k). Subgradient entries are the achieved per-user rates (for
    lambda) and harvested-minus-consumed energies (for mu) at the
    chosen mode.
    """
    sol = solve_subproblem(scn, duals, wpt_point, phi_star)
    K = scn.num_users
    sub = np.zeros(2 * K)
    if sol.mode == "wpt":
        harvest = scn.eta * scn.p * channel_gain(scn, sol.position)  # (K,)
        sub[K:] = scn.period * harvest
    else:
        k = sol.user
        gain = channel_gain(scn, scn.users[k], k)
        sub[k] = np.log2(1.0 + sol.power * gain / scn.sigma2)
        sub[K + k] = -scn.period * sol.power
    g = scn.period * sol.objective
    return g, sub, sol


def _equalization_residual(sol: SubproblemSolution) -> float:
    values = np.append(sol.phi_users, sol.phi_star)
    top = np.max(np.abs(values))
    if top <= 0:
        return 0.0
    return float((values.max() - values.min()) / top)


def _initial_duals(scn: Scenario) -> tuple[np.ndarray, float]:
    centroid = scn.users.mean(axis=0)
    h_bar = float(np.mean(channel_gain(scn, centroid)))
    mu0 = 1.0 / (scn.period * scn.eta * scn.p * h_bar)
    lam0 = np.full(scn.num_users, 1.0 / scn.num_users)
    return lam0, mu0


def _duals_from_reduced(x: np.ndarray, K: int) -> DualVariables:
    lam = np.empty(K)
    lam[:K - 1] = x[:K - 1]
    lam[K - 1] = 1.0 - x[:K - 1].sum()
    return DualVariables(lam=lam, mu=x[K - 1:].copy())


def _solve_dual_1d(scn: Scenario, opts: DualSolveOptions):
    """K=1 degenerate case: lambda=1 and a 1-D convex dual in mu, solved
    by subgradient-sign bisection (the ellipsoid update needs n >= 2)."""
    _, mu0 = _initial_duals(scn)
    lo, hi = MU_FLOOR, max(1e6 * mu0, 1e3 * MU_FLOOR)
    best_g, best_x = np.inf, hi
    trace = []
    max_iters = opts.max_iters or 200
    for it in range(max_iters):
        mid = 0.5 * (lo + hi)
        duals = DualVariables(lam=np.array([1.0]), mu=np.array([mid]))
        g, sub, sol = dual_value_and_subgradient(scn, duals)
        if g < best_g:
            best_g, best_x = g, mid
        trace.append({"iteration": it, "g": g, "best_g": best_g,
                      "residual": _equalization_residual(sol), "cut": "objective"})
        if sub[1] > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= opts.tol * max(abs(best_x), MU_FLOOR):
            break
    duals = DualVariables(lam=np.array([1.0]), mu=np.array([best_x]))
    info = {"converged": hi - lo <= opts.tol * max(abs(best_x), MU_FLOOR),
            "iterations": len(trace), "best_g": best_g}
    return duals, trace, info


def solve_dual(scn: Scenario, opts: DualSolveOptions | None = None):
    """Minimize the dual with the ellipsoid method.

    Works in the reduced space (lambda_1..lambda_{K-1}, mu_1..mu_K)
    with lambda_K eliminated; candidate centers violating lambda >= 0,
    sum lambda <= 1, or mu >= floor get feasibility cuts, otherwise an
    objective cut from the subgradient. Stops when sqrt(s^T A s)
    certifies a relative objective gap below tol.

    Returns (best DualVariables, per-iteration trace, info dict).
    """
    opts = opts or DualSolveOptions()
    step = opts.grid_step if opts.grid_step is not None else default_grid_step(scn)
    K = scn.num_users
    if K == 1:
        return _solve_dual_1d(scn, opts)
    n = 2 * K - 1
    lam0, mu0 = _initial_duals(scn)
    x = np.concatenate([lam0[:K - 1], np.full(K, mu0)])
    radii = np.concatenate([np.full(K - 1, 1.0), np.full(K, 1e3 * mu0)])
    state = EllipsoidState(center=x, shape=np.diag((radii * np.sqrt(n)) ** 2))
    max_iters = opts.max_iters or max(3000, 800 * n)
    best_g, best_duals = np.inf, None
    trace = []
    converged = False
    pts, gains = _search_grid(scn, step)
    eta_p = scn.eta * scn.p
    own_gain = np.array([channel_gain(scn, scn.users[k], k) for k in range(K)])
    h2_over_gamma = scn.altitude ** 2 / scn.gamma
    for it in range(max_iters):
        x = state.center
        lam_head = x[:K - 1]
        mu = x[K - 1:]
        cut = np.zeros(n)
        g = None
        residual = None
        if np.any(lam_head < 0):
            cut[int(np.argmin(lam_head))] = -1.0
            kind = "feasibility"
        elif lam_head.sum() > 1.0:
            cut[:K - 1] = 1.0
            kind = "feasibility"
        elif np.any(mu < MU_FLOOR):
            cut[K - 1 + int(np.argmin(mu))] = -1.0
            kind = "feasibility"
        else:
            # evaluate the dual restricted to grid WPT candidates; the
            # cut is a valid subgradient of that (lower) convex model,
            # and the best duals get an exact re-evaluation at the end
            duals = _duals_from_reduced(x, K)
            lam = duals.lam
            values = gains @ (eta_p * mu)
            idx = int(np.argmax(values))
            phi_star = float(values[idx])
            powers = np.maximum(lam / (scn.period * mu * LN2) - h2_over_gamma, 0.0)
            user_rates = np.log2(1.0 + powers * own_gain / scn.sigma2)
            phi_users = lam / scn.period * user_rates - mu * powers
            k_star = int(np.argmax(phi_users))
            sub = np.zeros(2 * K)
            if phi_star >= phi_users[k_star]:
                g = scn.period * phi_star
                sub[K:] = scn.period * eta_p * gains[idx]
            else:
                g = scn.period * float(phi_users[k_star])
                sub[k_star] = user_rates[k_star]
                sub[K + k_star] = -scn.period * powers[k_star]
            vals = np.append(phi_users, phi_star)
            scale = np.max(np.abs(vals))
            residual = float((vals.max() - vals.min()) / scale) if scale > 0 else 0.0
            if g < best_g:
                best_g, best_duals = g, duals
            cut[:K - 1] = sub[:K - 1] - sub[K - 1]
            cut[K - 1:] = sub[K:]
            kind = "objective"
        Acut = state.shape @ cut
        denom2 = float(cut @ Acut)
        if denom2 <= 0:
            break
        denom = np.sqrt(denom2)
        trace.append({"iteration": it, "g": g, "best_g": best_g if np.isfinite(best_g) else None,
                      "residual": residual, "cut": kind})
        if kind == "objective" and denom <= opts.tol * max(abs(best_g), 1e-9):
            converged = True
            break
        state.center = x - Acut / ((n + 1) * denom)
        state.shape = (n * n / (n * n - 1.0)) * (
            state.shape - (2.0 / (n + 1)) * np.outer(Acut, Acut) / denom2)
        state.shape = 0.5 * (state.shape + state.shape.T)
        state.iteration = it + 1
        if not np.all(np.isfinite(state.shape)):
            break
    if best_duals is None:
        best_duals = _duals_from_reduced(
            np.concatenate([lam0[:K - 1], np.maximum(np.full(K, mu0), MU_FLOOR)]), K)
    g_exact, _, _ = dual_value_and_subgradient(scn, best_duals)
    info = {"converged": converged, "iterations": len(trace),
            "best_g": float(g_exact)}
    return best_duals, trace, info


def time_sharing_lp(scn: Scenario, wpt_locations: np.ndarray,
                    powers: np.ndarray) -> HoveringSolution:
    """Optimal hovering durations given WPT locations and WIT powers.

    Solves max R subject to per-user rate floors, per-user energy
    neutrality against the WPT harvest, and total duration T; a plain
    LP in (tau, sigma, R). All uplink powers zero degenerates to R=0
    with the whole period parked on WPT.
    """
    wpt_locations = np.atleast_2d(np.asarray(wpt_locations, dtype=float))
    powers = np.asarray(powers, dtype=float).reshape(-1)
    K = scn.num_users
    omega = wpt_locations.shape[0]
    if omega < 1:
        raise ValueError("need at least one WPT location")
    if np.any(powers < 0):
        raise ValueError("powers must be nonnegative")
    own_gain = np.array([channel_gain(scn, scn.users[k], k) for k in range(K)])
    rates = np.log2(1.0 + powers * own_gain / scn.sigma2)  # per-second rates
    harvest = scn.eta * scn.p * channel_gain(scn, wpt_locations)  # (omega, K)
    if np.all(powers <= 0):
        tau = np.zeros(omega)
        tau[0] = scn.period
        return HoveringSolution(
            wpt_locations=wpt_locations, wpt_durations=tau,
            wit_positions=scn.users.copy(), wit_durations=np.zeros(K),
            wit_powers=powers, common_throughput=0.0)
    # variables: [tau_1..tau_omega, sigma_1..sigma_K, R]
    nvar = omega + K + 1
    c = np.zeros(nvar)
    c[-1] = -1.0
    a_ub = np.zeros((2 * K, nvar))
    b_ub = np.zeros(2 * K)
    for k in range(K):
        # R - sigma_k * rate_k / T <= 0
        a_ub[k, omega + k] = -rates[k] / scn.period
        a_ub[k, -1] = 1.0
        # sigma_k * Q_k - sum_w tau_w * harvest_wk <= 0
        a_ub[K + k, omega + k] = powers[k]
        a_ub[K + k, :omega] = -harvest[:, k]
    a_eq = np.zeros((1, nvar))
    a_eq[0, :omega + K] = 1.0
    b_eq = [scn.period]
    bounds = [(0.0, None)] * (omega + K) + [(0.0, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"time-sharing LP failed: {res.message}")
    tau = np.maximum(res.x[:omega], 0.0)
    sigma = np.maximum(res.x[omega:omega + K], 0.0)
    achieved = sigma * rates / scn.period
    return HoveringSolution(
        wpt_locations=wpt_locations, wpt_durations=tau,
        wit_positions=scn.users.copy(), wit_durations=sigma,
        wit_powers=powers, common_throughput=float(achieved.min()))


def solve_relaxed(scn: Scenario, opts: DualSolveOptions | None = None):
    """End-to-end relaxed solve: dual optimum, WPT argmax set, KKT
    powers, then the time-sharing LP.

    Returns (HoveringSolution, diagnostics dict). Diagnostics include
    the equalization residual across the Omega + K hovering objectives,
    the dual trace, and the dual upper bound.
    """
    opts = opts or DualSolveOptions()
    duals, trace, info = solve_dual(scn, opts)
    step = opts.grid_step if opts.grid_step is not None else default_grid_step(scn)
    locations = search_wpt_locations(scn, duals.mu, step)
    powers = np.array([optimal_uplink_power(scn, l, m)
                       for l, m in zip(duals.lam, duals.mu)])
    hovering = time_sharing_lp(scn, locations, powers)
    phi_wpt = np.array([phi(scn, qbar, duals.mu) for qbar in locations])
    phi_wit = _phi_users(scn, duals.lam, duals.mu, powers)
    values = np.concatenate([phi_wpt, phi_wit])
    scale = np.max(np.abs(values))
    residual = float((values.max() - values.min()) / scale) if scale > 0 else 0.0
    diagnostics = {
        "dual": info,
        "duals": {"lam": duals.lam.tolist(), "mu": duals.mu.tolist()},
        "equalization_residual": residual,
        "num_wpt_locations": int(locations.shape[0]),
        "dual_bound": info["best_g"],
        "trace": trace,
    }
    return hovering, diagnostics
