"""Figure rendering for sweep grids, size searches, and CA volumes.

Everything draws through the Agg backend straight to files; nothing
here opens a window, so the functions are safe on headless machines
and inside test runs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def failure_grid(rows: list[dict], path, title: str | None = None) -> None:
    """Heatmap of failure percentage over an (R, I) grid.

    ``rows`` are sweep result dicts for a single task/rule group;
    missing cells render blank.
    """
    if not rows:
        raise ValueError("no rows to plot")
    r_vals = sorted({d["r"] for d in rows})
    i_vals = sorted({d["i"] for d in rows})
    grid = np.full((len(i_vals), len(r_vals)), np.nan)
    for d in rows:
        grid[i_vals.index(d["i"]), r_vals.index(d["r"])] = d["fail_pct"]
    fig, ax = plt.subplots(figsize=(1.1 * len(r_vals) + 2.2,
                                    0.8 * len(i_vals) + 1.8))
    im = ax.imshow(grid, cmap="RdYlGn_r", vmin=0.0, vmax=100.0, aspect="auto")
    ax.set_xticks(range(len(r_vals)), [str(v) for v in r_vals])
    ax.set_yticks(range(len(i_vals)), [str(v) for v in i_vals])
    ax.set_xlabel("mappings R")
    ax.set_ylabel("iterations I")
    for (yi, xi), v in np.ndenumerate(grid):
        if not np.isnan(v):
            ax.text(xi, yi, f"{v:.0f}", ha="center", va="center", fontsize=9,
                    color="black")
    if title is None:
        d = rows[0]
        title = f"{d['task']} rule {d['rule']} t0={d['t0']}: failure %"
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="failure %")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def minsize_curve(points: list[tuple[str, int | None]], path,
                  title: str = "minimal reservoir size") -> None:
    """Bar chart of minimal R*I per task variant.

    ``points`` pairs a label with the found product; variants where the
    search failed are drawn as hatched full-height bars.
    """
    if not points:
        raise ValueError("no points to plot")
    labels = [p[0] for p in points]
    vals = [p[1] for p in points]
    top = max((v for v in vals if v is not None), default=1)
    fig, ax = plt.subplots(figsize=(1.2 * len(points) + 2.0, 3.6))
    for x, v in enumerate(vals):
        if v is None:
            ax.bar(x, top * 1.2, color="none", edgecolor="tab:red", hatch="//")
        else:
            ax.bar(x, v, color="tab:blue")
            ax.text(x, v, str(v), ha="center", va="bottom", fontsize=9)
    ax.set_xticks(range(len(labels)), labels)
    ax.set_ylabel("R * I")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def spacetime(volume: np.ndarray, path, title: str | None = None) -> None:
    """Space-time diagram of a 1D evolution: rows are iterations."""
    vol = np.asarray(volume)
    if vol.ndim != 2:
        raise ValueError("spacetime takes a (steps, cells) volume")
    fig, ax = plt.subplots(figsize=(min(12.0, 0.06 * vol.shape[1] + 2.0),
                                    min(8.0, 0.06 * vol.shape[0] + 1.5)))
    ax.imshow(vol, cmap="binary", interpolation="nearest", aspect="auto")
    ax.set_xlabel("cell")
    ax.set_ylabel("iteration")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
