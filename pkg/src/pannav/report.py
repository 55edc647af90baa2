"""Figures written next to a run's delimited outputs (Agg backend, PNG files)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DECISION_COLORS = {"Switch": "tab:green", "Keep": "tab:gray", "Stop": "tab:red", "NoPath": "black"}


def _extent(gmap):
    x0, y0 = gmap.origin
    rows, cols = gmap.shape
    return (x0, x0 + cols * gmap.resolution, y0, y0 + rows * gmap.resolution)


def plot_layers(gmap, registry, ax_class=None, ax_cost=None):
    """Merged class layer (known cells only) and the finite part of the cost layer."""
    ext = _extent(gmap)
    if ax_class is not None:
        merged = np.ma.masked_equal(gmap.merged_class.astype(float), 0)
        ax_class.imshow(merged, origin="lower", extent=ext, cmap="tab20", interpolation="nearest")
        occ = np.ma.masked_equal(gmap.occupancy.astype(float), 0)
        ax_class.imshow(occ, origin="lower", extent=ext, cmap="Greys", alpha=0.35, vmin=0, vmax=1, interpolation="nearest")
        ax_class.set_title("merged classes (grey: occupied)")
    if ax_cost is not None:
        cost = np.ma.masked_invalid(np.where(np.isfinite(gmap.cost), gmap.cost, np.nan))
        im = ax_cost.imshow(cost, origin="lower", extent=ext, cmap="viridis", interpolation="nearest")
        plt.colorbar(im, ax=ax_cost, fraction=0.046, label="traverse cost")
        ax_cost.set_title("cost (blank: occupied)")


def render_map(gmap, registry, path, robot_path=None, trajectory=None, goal=None, title=None):
    fig, (a, b) = plt.subplots(1, 2, figsize=(12, 5.5))
    plot_layers(gmap, registry, a, b)
    for ax in (a, b):
        if robot_path is not None and len(robot_path):
            ax.plot(robot_path[:, 0], robot_path[:, 1], color="white", lw=2.0, label="driven")
            ax.plot(robot_path[:, 0], robot_path[:, 1], color="black", lw=0.8)
        if trajectory is not None:
            ax.plot(trajectory.waypoints[:, 0], trajectory.waypoints[:, 1], color="tab:orange", lw=1.2, label="last plan")
        if goal is not None:
            ax.plot([goal[0]], [goal[1]], marker="*", color="gold", markeredgecolor="black", ms=14, ls="none", label="goal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal")
    a.legend(loc="upper left", fontsize=8)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def render_costs(cycles, path, title=None):
    """Candidate and remaining cost per planning cycle, colored by decision."""
    fig, ax = plt.subplots(figsize=(9, 4))
    if cycles:
        t = np.array([c["time"] for c in cycles], dtype=float)

        def finite(key):
            v = np.array([float(c[key]) for c in cycles])
            return np.where(np.isfinite(v), v, np.nan)

        ax.plot(t, finite("remaining_cost"), color="tab:blue", lw=1.2, label="remaining")
        ax.plot(t, finite("candidate_cost"), color="tab:orange", lw=0.8, ls="--", label="candidate")
        top = np.nanmax(np.r_[finite("remaining_cost"), finite("candidate_cost"), 1.0])
        for kind, color in DECISION_COLORS.items():
            sel = [i for i, c in enumerate(cycles) if c["decision"] == kind]
            if sel:
                ax.scatter(t[sel], np.full(len(sel), top * 1.05), color=color, s=14, label=kind)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("cost")
    if cycles:
        ax.legend(fontsize=8, ncol=3)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def render_run(out, cfg, result):
    """``map.png`` and ``costs.png`` for a finished run."""
    out = Path(out)
    m = result.metrics
    last = result.trajectories[-1][1] if result.trajectories else None
    state = "goal reached" if m.goal_reached else f"ended by {m.terminated_by}"
    clearance = "n/a" if not math.isfinite(m.min_clearance) else f"{m.min_clearance:.2f} m"
    title = f"{cfg.name} seed {cfg.seed}: {state}, {m.violations} violations, min clearance {clearance}"
    render_map(result.gmap, cfg.registry, out / "map.png", result.robot_path, last, cfg.goal, title)
    render_costs(m.cycles, out / "costs.png", title)
    return [out / "map.png", out / "costs.png"]
