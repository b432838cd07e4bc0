"""Figure rendering for batch and sweep reports.

Everything renders through the Agg backend straight to files; figures sit
next to the delimited output they visualize.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .results import ResultRecord


def save_batch_figure(records: list[ResultRecord], path: str | Path) -> Path:
    """Distribution of the final perceptibility metrics over a batch."""
    path = Path(path)
    succ = [r for r in records if r.success]
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
    panels = [
        ("d_hausdorff", "Hausdorff"),
        ("d_chamfer", "Chamfer"),
        ("d_norm", "L2 norm"),
    ]
    for ax, (key, label) in zip(axes, panels):
        vals = [getattr(r, key) for r in succ]
        if vals:
            ax.hist(vals, bins=min(12, max(3, len(vals) // 2)), color="#4878a8",
                    edgecolor="black", linewidth=0.5)
        ax.set_xlabel(label)
        ax.set_ylabel("runs")
    fig.suptitle(f"final distance distributions ({len(succ)}/{len(records)} successful)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_sweep_figure(rows: list[dict], x_field: str, path: str | Path) -> Path:
    """Median distance metrics as a function of one swept parameter."""
    path = Path(path)
    xs = [row[x_field] for row in rows]
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for key, label, marker in [
        ("median_combined", "combined", "o"),
        ("median_d_norm", "L2 norm", "s"),
        ("median_d_hausdorff", "Hausdorff", "^"),
    ]:
        if all(key in row for row in rows):
            ax.plot(xs, [row[key] for row in rows], marker=marker, label=label)
    ax.set_xlabel(x_field)
    ax.set_ylabel("median distance")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_trace_figure(distances: list[float], path: str | Path) -> Path:
    """Combined distance of the working boundary cloud across walk rounds."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.2, 3.2))
    ax.plot(np.arange(1, len(distances) + 1), distances, lw=1.0)
    ax.set_xlabel("round")
    ax.set_ylabel("combined distance")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
