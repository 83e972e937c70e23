"""Figure rendering for emitted artifacts (headless matplotlib)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model import Scenario, Trajectory


def _new_axes(title):
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    ax.set_title(title)
    return fig, ax


def _draw_users(ax, scn: Scenario):
    ax.scatter(scn.users[:, 0], scn.users[:, 1], marker="^", s=70,
               color="tab:red", zorder=3, label="users")


def _finish(fig, ax, path):
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_hover_locations(path, scn: Scenario, hovering) -> Path:
    """Users plus the WPT/WIT hovering points, sized by dwell share."""
    fig, ax = _new_axes(f"{scn.name}: multi-location hovering")
    _draw_users(ax, scn)
    total = hovering.wpt_durations.sum() + hovering.wit_durations.sum()
    if hovering.num_wpt:
        size = 40 + 260 * hovering.wpt_durations / max(total, 1e-12)
        ax.scatter(hovering.wpt_locations[:, 0], hovering.wpt_locations[:, 1],
                   s=size, color="tab:blue", zorder=4, label="WPT hover")
    size = 40 + 260 * hovering.wit_durations / max(total, 1e-12)
    ax.scatter(hovering.wit_positions[:, 0], hovering.wit_positions[:, 1],
               s=size, facecolors="none", edgecolors="tab:green", zorder=4,
               label="WIT hover")
    return _finish(fig, ax, path)


def plot_trajectory(path, scn: Scenario, traj: Trajectory,
                    hover_points=None) -> Path:
    fig, ax = _new_axes(f"{scn.name}: trajectory (T={scn.period:g} s)")
    _draw_users(ax, scn)
    ax.plot(traj.points[:, 0], traj.points[:, 1], "-o", color="tab:blue",
            markersize=3, linewidth=1.2, label="UAV path")
    if hover_points is not None and len(hover_points):
        pts = np.asarray(hover_points, dtype=float)
        ax.scatter(pts[:, 0], pts[:, 1], s=60, facecolors="none",
                   edgecolors="tab:purple", zorder=4, label="hover points")
    return _finish(fig, ax, path)


def plot_convergence(path, rows, ykey, ylabel, title) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = [row["iteration"] for row in rows if row.get(ykey) is not None]
    ys = [row[ykey] for row in rows if row.get(ykey) is not None]
    ax.plot(xs, ys, "-", color="tab:blue")
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_sweep(path, rows) -> Path:
    """Common throughput versus flight period, one curve per method."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    methods = []
    for row in rows:
        if row["method"] not in methods:
            methods.append(row["method"])
    for method in methods:
        pts = sorted((r["period"], r["throughput"]) for r in rows
                     if r["method"] == method)
        ax.plot([p for p, _ in pts], [v for _, v in pts], "-o",
                markersize=4, label=method)
    ax.set_xlabel("flight period T (s)")
    ax.set_ylabel("common throughput (bps/Hz)")
    ax.set_xscale("log", base=2)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path
