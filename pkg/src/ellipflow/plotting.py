"""Static SVG figures for trajectories, sweeps and Lyapunov runs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp so identical inputs give identical files
matplotlib.rcParams["svg.hashsalt"] = "ellipflow"
_METADATA = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_METADATA)
    plt.close(fig)
    return path


def plot_trajectory(traj, path, log_scale=False):
    """Scale factors a_i(t) against t."""
    n = traj.spec.dimension
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(n):
        ax.plot(traj.times, traj.states[:, i], label=f"$a_{{{i + 1}}}$")
    if log_scale:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("scale factor")
    ax.set_title(f"system {traj.spec.system.value}, N={n}, theta={traj.spec.theta:g}, xi={traj.spec.xi:g}")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_lyapunov(result, path):
    """Running exponent estimates after each re-orthonormalisation."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for j in range(result.history.shape[1]):
        ax.plot(result.times, result.history[:, j], label=f"$\\lambda_{{{j + 1}}}$")
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("averaging time")
    ax.set_ylabel("running estimate")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep(reports, path):
    """Detected blowup time against the predicted bound, for runs that have both."""
    pairs = [
        (r.theorem_bound, r.classification.t_star)
        for r in reports
        if r.theorem_bound is not None and r.classification.t_star is not None
    ]
    fig, ax = plt.subplots(figsize=(5, 5))
    if pairs:
        bound, t_star = np.array(pairs).T
        ax.scatter(bound, t_star, s=12)
        top = float(max(bound.max(), t_star.max()))
        ax.plot([0.0, top], [0.0, top], "k--", lw=0.8, label="t* = T")
        ax.legend()
    ax.set_xlabel("predicted bound T")
    ax.set_ylabel("detected blowup time t*")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)
