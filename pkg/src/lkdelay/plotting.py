"""Matplotlib figures for closed-loop runs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .ddesim import Trajectory  # noqa: E402

__all__ = ["plot_states", "plot_lyapunov"]


def plot_states(traj: Trajectory, path, title: str = "closed-loop states") -> None:
    """States ``x_i(t)`` against time, written as PNG."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0), dpi=120)
    for i in range(traj.x.shape[1]):
        ax.plot(traj.times, traj.x[:, i], lw=1.2, label=f"$x_{{{i + 1}}}$")
    ax.axhline(0.0, color="0.6", lw=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    ax.set_title(title)
    ax.set_xlim(traj.times[0], traj.times[-1])
    ax.legend(ncol=min(traj.x.shape[1], 6), fontsize="small", frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_lyapunov(times, V, path, title: str = "Lyapunov functional") -> None:
    """``V(t)`` on a log axis, written as PNG."""
    fig, ax = plt.subplots(figsize=(7.0, 3.2), dpi=120)
    V = np.asarray(V, dtype=float)
    ax.semilogy(times, np.maximum(V, np.finfo(float).tiny), lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel("V")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
