"""Figure rendering for the report path (headless, files only)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_trajectory", "render_error"]


def render_trajectory(trace, scenario, path) -> None:
    """Planar path of the first two state components in original coordinates,
    with start and target markers."""
    desired = scenario.desired_state[:2]
    pos = trace.states[:, :2] + desired
    finite = np.isfinite(pos).all(axis=1)
    pos = pos[finite]
    fig, ax = plt.subplots(figsize=(6, 5))
    if len(pos):
        ax.plot(pos[:, 0], pos[:, 1], lw=1.2, color="tab:blue")
        ax.plot(pos[0, 0], pos[0, 1], "*", ms=12, color="tab:red", label="start")
    ax.plot(desired[0], desired[1], "^", ms=10, color="tab:green", label="target")
    ax.set_xlabel("position 1")
    ax.set_ylabel("position 2")
    title = scenario.name + (" (diverged)" if trace.diverged else "")
    ax.set_title(title)
    ax.legend(loc="best")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_error(trace, scenario, path) -> None:
    """Tracking-error magnitude per step, log scale."""
    err = trace.errors.copy()
    err[~np.isfinite(err)] = np.nan
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(np.arange(len(err)), np.maximum(err, 1e-12), lw=1.0, color="tab:blue")
    ax.axhline(
        scenario.stabilization_threshold, color="tab:red", ls="--", lw=0.8, label="threshold"
    )
    ax.set_xlabel("step")
    ax.set_ylabel("position error")
    ax.set_title(scenario.name + (" (diverged)" if trace.diverged else ""))
    ax.legend(loc="best")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
