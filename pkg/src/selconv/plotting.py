"""Report figures. Uses the non-interactive Agg backend and only writes files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_bench(rows: list[dict], path) -> None:
    """Median wall time per stage against node count, log-log."""
    stages = sorted({r["stage"] for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for stage in stages:
        pts = sorted((r["nodes"], r["median_s"]) for r in rows if r["stage"] == stage)
        if pts:
            n, t = zip(*pts)
            ax.plot(n, t, marker="o", label=stage)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("nodes")
    ax.set_ylabel("median wall time [s]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_deviations(names: list[str], deviations, tolerances, path) -> None:
    """Horizontal bars of max-abs deviation per check with its tolerance marked."""
    dev = np.maximum(np.asarray(deviations, dtype=float), 1e-12)
    tol = np.asarray(tolerances, dtype=float)
    y = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7, max(3.0, 0.18 * len(names) + 1)))
    colors = np.where(dev <= tol, "tab:blue", "tab:red")
    ax.barh(y, dev, color=colors)
    ax.scatter(tol, y, marker="|", color="black", s=60, label="tolerance")
    ax.set_yticks(y)
    ax.set_yticklabels(names, fontsize=6)
    ax.set_xscale("log")
    ax.set_xlabel("max |graph - reference|")
    ax.invert_yaxis()
    ax.legend(frameon=False, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
