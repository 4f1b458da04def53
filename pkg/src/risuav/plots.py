"""SVG figures for runs and sweeps (matplotlib, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path, seed=0):
    # fixed hash salt and no date: identical inputs give identical bytes
    with matplotlib.rc_context({"svg.hashsalt": f"risuav-{seed}", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_trajectory(cfg, initial, state, path, seed=0, title=None):
    """Map view: nodes, initial and optimised paths, silent slots crossed."""
    fig, ax = plt.subplots(figsize=(6, 6))
    W = cfg.user_array
    ax.scatter(W[:, 0], W[:, 1], marker="^", s=70, c="tab:blue", label="users", zorder=3)
    for k, (x, y) in enumerate(W):
        ax.annotate(f"U{k + 1}", (x, y), textcoords="offset points", xytext=(5, 5))
    ax.scatter(*cfg.bs_pos, marker="s", s=70, c="tab:green", label="BS", zorder=3)
    ax.scatter(*cfg.eve_pos, marker="*", s=140, c="tab:red", label="Eve", zorder=3)
    p0 = initial.points
    ax.plot(p0[:, 0], p0[:, 1], "--", c="0.6", lw=1, label="initial")
    p = state.trajectory.points
    ax.plot(p[:, 0], p[:, 1], "-o", c="k", ms=4, lw=1.2, label="optimised")
    silent = ~(state.allocation.assoc > 0.5).any(axis=0)
    q = state.trajectory.slot_positions()
    if silent.any():
        ax.scatter(q[silent, 0], q[silent, 1], marker="x", s=80, c="tab:red",
                   label="silent slot", zorder=4)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.grid(alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    _save(fig, path, seed)


def plot_convergence(series, path, seed=0, ylabel="secrecy EE (bits/s/Hz/W)"):
    """``series`` maps a label to its per-iteration Gamma values."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, g in series.items():
        g = np.asarray(g, dtype=float)
        ax.plot(np.arange(len(g)), g, "-o", ms=3, label=label)
    ax.set_xlabel("outer iteration")
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path, seed)


def plot_sweep(axis_label, values, series, path, seed=0, log=True):
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, g in series.items():
        g = np.asarray(g, dtype=float)
        ok = np.isfinite(g) & (g > 0) if log else np.isfinite(g)
        ax.plot(np.asarray(values)[ok], g[ok], "-o", ms=4, label=label)
    if log:
        ax.set_yscale("log")
    ax.set_xlabel(axis_label)
    ax.set_ylabel("secrecy EE (bits/s/Hz/W)")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    _save(fig, path, seed)
