"""PNG figures for closed-loop traces and benchmark reports.

Uses the non-interactive Agg backend; figures are written to files only.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bench import BenchReport  # noqa: E402
from .sim import ClosedLoopTrace  # noqa: E402

__all__ = ["plot_trace", "plot_bench"]


def plot_trace(trace: ClosedLoopTrace, path, title: str | None = None) -> Path:
    """States against their references, inputs, solve times and iterations."""
    path = Path(path)
    t = np.array([r.t for r in trace.rows])
    X = trace.states
    U = trace.inputs
    Xr = np.array([r.x_r for r in trace.rows])

    fig, axes = plt.subplots(4, 1, figsize=(7, 9), sharex=True)
    ax = axes[0]
    for i in range(X.shape[1]):
        line, = ax.plot(t, X[:, i], label=f"x{i}")
        ax.plot(t, Xr[:, i], ls="--", color=line.get_color(), lw=0.8)
    ax.set_ylabel("state")
    ax.legend(loc="best", fontsize="small", ncol=min(4, X.shape[1]))

    ax = axes[1]
    for i in range(U.shape[1]):
        ax.step(t, U[:, i], where="post", label=f"u{i}")
    ax.set_ylabel("input")
    ax.legend(loc="best", fontsize="small")

    axes[2].plot(t, 1e3 * trace.solve_times, "k.-", lw=0.8)
    axes[2].set_ylabel("solve time [ms]")
    axes[3].plot(t, trace.iterations, "k.-", lw=0.8)
    axes[3].set_ylabel("iterations")
    axes[3].set_xlabel("step")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_bench(report: BenchReport, path) -> Path:
    """Split-cone / band ratios against the number of polygon sides."""
    path = Path(path)
    sides = [r["sides"] for r in report.ratios]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sides, [r["time_ratio"] for r in report.ratios], "b-", marker="o", ms=3,
            label="computation time")
    ax.plot(sides, [r["iter_ratio"] for r in report.ratios], "r--", marker="s", ms=3,
            label="iterations")
    ax.plot(sides, [r["time_per_iter_ratio"] for r in report.ratios], "g:", marker="^", ms=3,
            label="time per iteration")
    ax.axhline(1.0, color="0.6", lw=0.6)
    ax.set_xlabel("polygon sides l")
    ax.set_ylabel("split cones / band")
    ax.legend(loc="best", fontsize="small")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
