"""Figure rendering for report outputs: metric bars and premise-grid heatmaps.

Figures are written next to the delimited reports; everything here
consumes the same rows the TSV writers receive.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from ontocloze.reasoning import PREMISE_MODES


def memorizing_figure(rows: Sequence[Mapping], path: str | Path,
                      metrics: Sequence[str] = ("R@1", "R@5", "MRR", "MRR_a")) -> None:
    """Grouped bars: one group per subtask, one bar per metric."""
    subtasks = [row["subtask"] for row in rows]
    x = np.arange(len(subtasks))
    width = 0.8 / len(metrics)
    fig, ax = plt.subplots(figsize=(1.8 * len(subtasks) + 2, 3.6))
    for i, metric in enumerate(metrics):
        values = [float(row.get(metric, 0.0)) for row in rows]
        ax.bar(x + (i - (len(metrics) - 1) / 2) * width, values, width, label=metric)
    ax.set_xticks(x)
    ax.set_xticklabels(subtasks)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def reasoning_grid_figure(cells_by_rule: Mapping[str, Mapping[tuple[str, str], Mapping | None]],
                          path: str | Path, metric: str = "MRR") -> None:
    """One 3x3 heatmap per rule plus a macro-average panel."""
    names = list(cells_by_rule)
    n = len(names)
    cols = min(4, max(n, 1))
    rows_n = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows_n, cols, figsize=(3.2 * cols, 3.0 * rows_n), squeeze=False)
    for index, name in enumerate(names):
        ax = axes[index // cols][index % cols]
        grid = np.full((3, 3), np.nan)
        for i, m1 in enumerate(PREMISE_MODES):
            for j, m2 in enumerate(PREMISE_MODES):
                cell = cells_by_rule[name].get((m1, m2))
                if cell is not None:
                    grid[i][j] = cell[metric]
        image = ax.imshow(grid, vmin=0.0, vmax=1.0, cmap="viridis")
        ax.set_xticks(range(3), PREMISE_MODES)
        ax.set_yticks(range(3), PREMISE_MODES)
        ax.set_xlabel("P2")
        ax.set_ylabel("P1")
        ax.set_title(f"{name} ({metric})", fontsize=10)
        for i in range(3):
            for j in range(3):
                if not np.isnan(grid[i][j]):
                    ax.text(j, i, f"{grid[i][j]:.2f}", ha="center", va="center",
                            color="white", fontsize=8)
        fig.colorbar(image, ax=ax, fraction=0.046)
    for index in range(n, rows_n * cols):
        axes[index // cols][index % cols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
