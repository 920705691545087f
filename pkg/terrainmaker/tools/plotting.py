# -*- coding: utf-8 -*-
"""

A set of useful little plotting functions using
matplotlib. Only the master rank draws.

"""
import matplotlib.pyplot as plt
import numpy as np

from terrainmaker.gridmap import MultiLayerGrid
from terrainmaker.parallel import is_master
from terrainmaker.trajectory import Trajectory


def _finish(fig, savefigname, show):
    if savefigname:
        fig.savefig(savefigname, dpi=150, bbox_inches="tight")
    if show:
        plt.show()
    else:
        plt.close(fig)


def plot_grid_map(grid, layer="elevation", ax=None, cmap=None, vmin=None, vmax=None,
                  title="", savefigname="", show=False):
    """Image of one layer of a grid map in world coordinates (unknown cells blank).

    :param grid: Grid map (or an object with a ``grid`` attribute).
    :type grid: :class:`MultiLayerGrid`
    :param layer: Layer to draw.
    :type layer: str

    """
    if not is_master():
        return None
    grid = getattr(grid, "grid", grid)
    assert isinstance(grid, MultiLayerGrid), "plot_grid_map - 'grid' should be an instance of MultiLayerGrid"

    g = grid.geometry
    lo, hi = g.min_corner, g.max_corner
    if ax is None:
        fig, ax = plt.subplots()
    else:
        fig = ax.figure
    if cmap is None:
        cmap = "RdYlGn" if layer.startswith("traversability") else "viridis"
    values = np.ma.masked_invalid(grid[layer])
    im = ax.imshow(values, origin="lower", extent=(lo[0], hi[0], lo[1], hi[1]), cmap=cmap, vmin=vmin, vmax=vmax,
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label=layer)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal")
    ax.set_title(title or layer)
    _finish(fig, savefigname, show)
    return fig


def plot_trajectories(trajectories, labels=None, ax=None, title="", savefigname="", show=False):
    """Top view of several trajectories."""
    if not is_master():
        return None
    if ax is None:
        fig, ax = plt.subplots()
    else:
        fig = ax.figure
    labels = labels or [f"trajectory {i}" for i in range(len(trajectories))]
    for traj, label in zip(trajectories, labels):
        assert isinstance(traj, Trajectory), "plot_trajectories - items should be instances of Trajectory"
        p = traj.positions
        ax.plot(p[:, 0], p[:, 1], label=label, linewidth=1)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_aspect("equal")
    ax.legend()
    ax.set_title(title)
    _finish(fig, savefigname, show)
    return fig


def plot_fscore_sweep(reports, ax=None, title="", savefigname="", show=False):
    """F-score against threshold for each named :class:`ClassificationReport`."""
    if not is_master():
        return None
    if ax is None:
        fig, ax = plt.subplots()
    else:
        fig = ax.figure
    for name, report in reports.items():
        ax.plot(report.thresholds, report.f_score, marker="o", markersize=3, label=name)
    ax.set_xlabel("threshold")
    ax.set_ylabel("F-score")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True)
    ax.legend()
    ax.set_title(title)
    _finish(fig, savefigname, show)
    return fig
