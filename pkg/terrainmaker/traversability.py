"""
Traversability from step height.

A cell's score is driven by the largest height difference to any known cell
within the stride radius ``s*``:

    h_max = max_j |h_j - h_i|,    t = 1 - min(h_max / h*, 1)

so 1 means steppable and 0 means a step taller than the nominal step height
``h*``. A plane-fit baseline based on surface normals is provided for
comparison, together with precision/recall/F-score evaluation against
labeled ground truth.

"""
import abc
import csv
import logging
from dataclasses import dataclass
from typing import List

import numpy as np

from terrainmaker.exceptions import (ConfigError, DegenerateLabelsError, MisalignedGridError,
                                     UnknownCellError)
from terrainmaker.gridmap import MultiLayerGrid

logger = logging.getLogger(__name__)

# Scores within this distance of a threshold count as reaching it.
SCORE_EPS = 1e-9


@dataclass
class TraversabilityParams:
    stride_radius: float = 0.20
    step_height: float = 0.20
    min_support: int = 3
    treat_unknown_as_untraversable: bool = False

    def __post_init__(self):
        if not self.stride_radius > 0:
            raise ConfigError(f"TraversabilityParams - 'stride_radius' must be > 0, got {self.stride_radius}")
        if not self.step_height > 0:
            raise ConfigError(f"TraversabilityParams - 'step_height' must be > 0, got {self.step_height}")
        if self.min_support < 1:
            raise ConfigError(f"TraversabilityParams - 'min_support' must be >= 1, got {self.min_support}")


class TraversabilityMap:
    """Per-cell scores in ``[0, 1]`` (``NaN`` = unknown) aligned with a terrain grid."""

    def __init__(self, grid, method=""):
        assert isinstance(grid, MultiLayerGrid), \
            "TraversabilityMap - 'grid' should be an instance of MultiLayerGrid"
        self._grid = grid
        self._method = method

    @property
    def grid(self):
        return self._grid

    @property
    def scores(self):
        return self._grid["traversability"]

    @property
    def method(self):
        return self._method

    @property
    def geometry(self):
        return self._grid.geometry

    def __str__(self):
        s = self.scores
        known = np.isfinite(s)
        mean = s[known].mean() if known.any() else float("nan")
        return f"TraversabilityMap ({self._method}): {int(known.sum())} scored cells, mean score {mean:.3f}"


@dataclass
class ClassificationReport:
    thresholds: List[float]
    precision: List[float]
    recall: List[float]
    f_score: List[float]
    best_threshold: float
    best_f: float

    def write_csv(self, filename):
        with open(filename, "w", newline="") as fid:
            writer = csv.writer(fid)
            writer.writerow(["threshold", "precision", "recall", "f"])
            for row in zip(self.thresholds, self.precision, self.recall, self.f_score):
                writer.writerow([f"{v:.6f}" for v in row])


class TraversabilityAnalyzer(metaclass=abc.ABCMeta):
    """Turns a terrain grid (or fused room map) into a :class:`TraversabilityMap`."""

    name = ""

    def score(self, room):
        grid = _grid_of(room)
        scores = self._score_elevation(grid)
        grid.add_layer("traversability", scores)
        logger.info("%s - scored %d of %d known cells", type(self).__name__,
                    int(np.isfinite(scores).sum()), int(grid.known_mask().sum()))
        return TraversabilityMap(grid, self.name)

    @abc.abstractmethod
    def _score_elevation(self, grid):
        raise NotImplementedError('derived class must define method _score_elevation')


def _grid_of(room):
    grid = getattr(room, "grid", room)
    assert isinstance(grid, MultiLayerGrid), \
        "traversability - expected a MultiLayerGrid or an object with a 'grid' attribute"
    return grid


def traversability_score(h_max, h_star):
    """``1 - min(h_max / h_star, 1)``; works elementwise on arrays."""
    return 1.0 - np.minimum(np.asarray(h_max, dtype=float) / h_star, 1.0)


def max_height_diff(grid, cell, stride_radius, min_support=1):
    """Largest ``|h_j - h_i|`` over known cells within ``stride_radius`` of ``cell``.

    Unknown neighbors are ignored; the cell itself counts toward support.
    Returns ``NaN`` when fewer than ``min_support`` known cells are in reach.

    :raises UnknownCellError: if ``cell`` has no height.
    """
    grid = _grid_of(grid)
    H = grid.elevation
    hi = H[cell[0], cell[1]]
    if not np.isfinite(hi):
        raise UnknownCellError(f"max_height_diff - cell {tuple(cell)} has unknown height")
    hood = grid.geometry.cells_within_radius(cell, stride_radius)
    vals = np.array([H[c.row, c.col] for c in hood.members])
    vals = vals[np.isfinite(vals)]
    if vals.shape[0] < min_support:
        return float("nan")
    return float(np.max(np.abs(vals - hi)))


def _shifted(padded, pad, dr, dc, shape):
    return padded[pad + dr:pad + dr + shape[0], pad + dc:pad + dc + shape[1]]


def max_height_diff_map(grid, stride_radius):
    """Per-cell ``(h_max, support, hole)`` arrays for the whole elevation layer.

    ``support`` counts known cells in reach (the cell included) and ``hole``
    flags cells with an unknown in-grid neighbor. ``h_max`` is ``NaN`` where
    the cell itself is unknown.
    """
    H = grid.elevation
    offsets = grid.geometry.radius_offsets(stride_radius)
    pad = int(np.abs(offsets).max()) if offsets.size else 0
    padded = np.pad(H, pad, constant_values=np.nan)
    in_grid = np.pad(np.ones(H.shape, dtype=bool), pad, constant_values=False)

    h_max = np.zeros(H.shape)
    support = np.zeros(H.shape, dtype=int)
    hole = np.zeros(H.shape, dtype=bool)
    for dr, dc in offsets:
        nb = _shifted(padded, pad, dr, dc, H.shape)
        known = np.isfinite(nb)
        h_max = np.fmax(h_max, np.where(known, np.abs(nb - H), np.nan))
        support += known
        hole |= _shifted(in_grid, pad, dr, dc, H.shape) & ~known
    h_max[~np.isfinite(H)] = np.nan
    return h_max, support, hole


def step_height_scores(grid, params):
    """Vectorized scores of every cell of ``grid``'s elevation layer."""
    H = grid.elevation
    h_max, support, hole = max_height_diff_map(grid, params.stride_radius)
    t = traversability_score(np.nan_to_num(h_max), params.step_height)
    if params.treat_unknown_as_untraversable:
        t = np.where(hole, 0.0, t)
    valid = np.isfinite(H) & (support >= params.min_support)
    return np.where(valid, t, np.nan)


def score_map(room, params=None):
    """Step-height traversability of a room map (or any terrain grid).

    Fills the ``traversability`` layer and returns it as a :class:`TraversabilityMap`.
    """
    from terrainmaker.ta_extensions import StepHeight
    return StepHeight(params or TraversabilityParams()).score(room)


def normals_scores(grid, fit_radius=0.10, max_slope=np.deg2rad(45.0)):
    """Plane-fit slope scores ``1 - min(theta / max_slope, 1)`` for every cell.

    The plane ``z = a x + b y + c`` is fitted by least squares to the known
    cells within ``fit_radius``; fewer than three cells or collinear
    neighborhoods leave the cell unknown.
    """
    H = grid.elevation
    res = grid.geometry.resolution
    offsets = grid.geometry.radius_offsets(fit_radius)
    pad = int(np.abs(offsets).max()) if offsets.size else 0
    padded = np.pad(H, pad, constant_values=np.nan)

    S = {k: np.zeros(H.shape) for k in ("n", "x", "y", "z", "xx", "xy", "yy", "xz", "yz")}
    for dr, dc in offsets:
        nb = _shifted(padded, pad, dr, dc, H.shape)
        known = np.isfinite(nb)
        x, y = dc * res, dr * res
        z = np.where(known, nb - np.nan_to_num(H), 0.0)
        w = known.astype(float)
        S["n"] += w
        S["x"] += w * x
        S["y"] += w * y
        S["z"] += z
        S["xx"] += w * x * x
        S["xy"] += w * x * y
        S["yy"] += w * y * y
        S["xz"] += z * x
        S["yz"] += z * y

    n = np.maximum(S["n"], 1.0)
    cxx = S["xx"] - S["x"]**2 / n
    cyy = S["yy"] - S["y"]**2 / n
    cxy = S["xy"] - S["x"] * S["y"] / n
    det = cxx * cyy - cxy**2
    ok = np.isfinite(H) & (S["n"] >= 3) & (det > 1e-9 * res**4 * n**2)

    scores = np.full(H.shape, np.nan)
    if not ok.any():
        return scores
    M = np.stack([np.stack([S["xx"][ok], S["xy"][ok], S["x"][ok]], axis=-1),
                  np.stack([S["xy"][ok], S["yy"][ok], S["y"][ok]], axis=-1),
                  np.stack([S["x"][ok], S["y"][ok], S["n"][ok]], axis=-1)], axis=1)
    rhs = np.stack([S["xz"][ok], S["yz"][ok], S["z"][ok]], axis=-1)
    coef = np.linalg.solve(M, rhs[..., None])[..., 0]
    theta = np.arctan(np.hypot(coef[:, 0], coef[:, 1]))
    scores[ok] = 1.0 - np.minimum(theta / max_slope, 1.0)
    return scores


def normals_baseline(room, fit_radius=0.10, max_slope=np.deg2rad(45.0)):
    """Surface-normal baseline traversability of a room map."""
    from terrainmaker.ta_extensions import SurfaceNormals
    return SurfaceNormals(fit_radius, max_slope).score(room)


def evaluate_classification(pred, labels, thresholds=None):
    """Precision, recall and F-score of ``pred >= threshold`` against binary labels.

    Traversable cells are the positive class. Cells with an unknown label
    (``NaN``) are left out; an unknown score is never positive, so every
    method is scored on the same cells.

    :raises MisalignedGridError: if shapes differ.
    :raises DegenerateLabelsError: unless both classes occur among evaluated cells.
    """
    scores = pred.scores if isinstance(pred, TraversabilityMap) else np.asarray(pred, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if scores.shape != labels.shape:
        raise MisalignedGridError(f"evaluate_classification - prediction {scores.shape} and labels "
                                  f"{labels.shape} are not aligned")
    if thresholds is None:
        thresholds = np.round(np.linspace(0.0, 1.0, 21), 10)
    valid = np.isfinite(labels)
    s = np.where(np.isfinite(scores), scores, -np.inf)[valid]
    truth = labels[valid] > 0.5
    if truth.all() or not truth.any():
        raise DegenerateLabelsError("evaluate_classification - labels need both traversable and untraversable cells")

    P, R, F = [], [], []
    for tau in thresholds:
        positive = s >= tau - SCORE_EPS
        tp = int(np.sum(positive & truth))
        fp = int(np.sum(positive & ~truth))
        fn = int(np.sum(~positive & truth))
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn)
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        P.append(p)
        R.append(r)
        F.append(f)
    best = int(np.argmax(F))
    return ClassificationReport([float(t) for t in thresholds], P, R, F, float(thresholds[best]), F[best])
