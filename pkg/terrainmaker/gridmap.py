from collections import namedtuple
from dataclasses import dataclass, field
from typing import List

import numpy as np

from terrainmaker.exceptions import (DataError, EmptyIntersectionError,
                                     MisalignedGridError, OutOfBoundsError)

# Tolerance (in cells) used when snapping world coordinates onto the lattice.
_CELL_EPS = 1e-9

CellIndex = namedtuple("CellIndex", ["row", "col"])


@dataclass(frozen=True)
class GridGeometry:
    """Placement of a regular grid in a horizontal frame.

    Rows run along ``y`` and columns along ``x``; ``origin`` is the
    position of the *center* of cell ``(0, 0)``.

    :param resolution: Cell side length in meters.
    :type resolution: float > 0
    :param origin: ``(x, y)`` of the center of cell ``(0, 0)``.
    :type origin: tuple
    :param rows: Number of rows.
    :type rows: int >= 1
    :param cols: Number of columns.
    :type cols: int >= 1

    """
    resolution: float
    origin: tuple
    rows: int
    cols: int

    def __post_init__(self):
        if not self.resolution > 0:
            raise DataError(f"GridGeometry - resolution must be > 0, got {self.resolution}")
        if self.rows < 1 or self.cols < 1:
            raise DataError(f"GridGeometry - rows/cols must be >= 1, got {self.rows}x{self.cols}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "cols", int(self.cols))

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def min_corner(self):
        """Lower-left corner of the covered rectangle."""
        h = self.resolution / 2
        return np.array([self.origin[0] - h, self.origin[1] - h])

    @property
    def max_corner(self):
        """Upper-right corner of the covered rectangle."""
        h = self.resolution / 2
        return np.array([self.origin[0] + (self.cols - 1) * self.resolution + h,
                         self.origin[1] + (self.rows - 1) * self.resolution + h])

    def contains(self, p):
        lo, hi = self.min_corner, self.max_corner
        tol = _CELL_EPS * self.resolution
        return bool(lo[0] - tol <= p[0] <= hi[0] + tol and lo[1] - tol <= p[1] <= hi[1] + tol)

    def contains_cell(self, c):
        return 0 <= c[0] < self.rows and 0 <= c[1] < self.cols

    def world_to_cell(self, p):
        """Index of the cell whose center is nearest to ``p``.

        Exact halfway points go to the lower index.

        :raises OutOfBoundsError: if ``p`` is outside the covered rectangle.
        """
        if not self.contains(p):
            raise OutOfBoundsError(f"GridGeometry.world_to_cell - point {tuple(p)} outside grid coverage")
        col = _round_half_down((p[0] - self.origin[0]) / self.resolution)
        row = _round_half_down((p[1] - self.origin[1]) / self.resolution)
        return CellIndex(min(max(row, 0), self.rows - 1), min(max(col, 0), self.cols - 1))

    def world_to_cells(self, xy):
        """Vectorized nearest-cell lookup.

        Returns ``(rows, cols, inside)``; indices of points outside the grid
        are meaningless and flagged by ``inside == False``.
        """
        xy = np.asarray(xy, dtype=float)
        cols = np.ceil((xy[:, 0] - self.origin[0]) / self.resolution - 0.5 - _CELL_EPS).astype(np.int64)
        rows = np.ceil((xy[:, 1] - self.origin[1]) / self.resolution - 0.5 - _CELL_EPS).astype(np.int64)
        inside = (rows >= 0) & (rows < self.rows) & (cols >= 0) & (cols < self.cols)
        return rows, cols, inside

    def cell_to_world(self, c):
        """Center of cell ``c`` as an ``(x, y)`` array.

        :raises OutOfBoundsError: if ``c`` is not a valid index.
        """
        if not self.contains_cell(c):
            raise OutOfBoundsError(f"GridGeometry.cell_to_world - cell {tuple(c)} outside {self.rows}x{self.cols} grid")
        return np.array([self.origin[0] + c[1] * self.resolution,
                         self.origin[1] + c[0] * self.resolution])

    def cell_centers(self):
        """Arrays ``(X, Y)`` of shape ``(rows, cols)`` with every cell center."""
        xs = self.origin[0] + np.arange(self.cols) * self.resolution
        ys = self.origin[1] + np.arange(self.rows) * self.resolution
        return np.meshgrid(xs, ys)

    def radius_offsets(self, r):
        """Integer ``(drow, dcol)`` offsets whose center distance is ``<= r``, row-major."""
        if r < 0:
            raise DataError(f"GridGeometry.radius_offsets - radius must be >= 0, got {r}")
        rc = r / self.resolution
        n = int(np.floor(rc + _CELL_EPS))
        d = np.arange(-n, n + 1)
        dr, dc = np.meshgrid(d, d, indexing="ij")
        keep = dr**2 + dc**2 <= rc**2 + _CELL_EPS
        return np.stack([dr[keep], dc[keep]], axis=1)

    def cells_within_radius(self, center, r):
        """In-bounds cells whose centers lie within ``r`` meters of ``center``'s center.

        The center cell itself is always a member.
        """
        if not self.contains_cell(center):
            raise OutOfBoundsError(f"GridGeometry.cells_within_radius - cell {tuple(center)} outside grid")
        members = []
        for dr, dc in self.radius_offsets(r):
            c = CellIndex(int(center[0] + dr), int(center[1] + dc))
            if self.contains_cell(c):
                members.append(c)
        return CellNeighborhood(CellIndex(*center), float(r), members)

    def cell_offset(self, other):
        """``(drow, dcol)`` such that cell ``(0, 0)`` of ``other`` is cell ``(drow, dcol)`` of ``self``.

        :raises MisalignedGridError: when the two lattices do not coincide.
        """
        if not np.isclose(self.resolution, other.resolution, rtol=0, atol=1e-12):
            raise MisalignedGridError("GridGeometry.cell_offset - resolutions differ")
        f = (np.asarray(other.origin) - np.asarray(self.origin)) / self.resolution
        k = np.round(f)
        if np.any(np.abs(f - k) > 1e-6):
            raise MisalignedGridError(f"GridGeometry.cell_offset - origins {other.origin} and {self.origin} "
                                      "are not on a common lattice")
        return int(k[1]), int(k[0])

    def same_as(self, other):
        return (self.shape == other.shape
                and np.isclose(self.resolution, other.resolution, rtol=0, atol=1e-12)
                and np.allclose(self.origin, other.origin, rtol=0, atol=1e-9))


def _round_half_down(v):
    return int(np.ceil(v - 0.5 - _CELL_EPS))


def lattice_geometry(resolution, min_xy, max_xy):
    """Smallest geometry on the global lattice ``k * resolution`` whose cells
    hold the nearest centers of ``min_xy`` and ``max_xy``."""
    lo = np.ceil(np.asarray(min_xy, dtype=float) / resolution - 0.5 - _CELL_EPS)
    hi = np.ceil(np.asarray(max_xy, dtype=float) / resolution - 0.5 - _CELL_EPS)
    cols = int(hi[0] - lo[0]) + 1
    rows = int(hi[1] - lo[1]) + 1
    return GridGeometry(resolution, (lo[0] * resolution, lo[1] * resolution),
                        max(rows, 1), max(cols, 1))


@dataclass
class CellNeighborhood:
    center: CellIndex
    radius: float
    members: List[CellIndex] = field(default_factory=list)

    def __len__(self):
        return len(self.members)


class MultiLayerGrid:
    """A stack of named 2.5D layers sharing one :class:`GridGeometry`.

    Unknown cells hold ``NaN``. An ``elevation`` layer always exists.

    :param geometry: Placement of the grid.
    :type geometry: :class:`GridGeometry`
    :param frame: Frame the grid is expressed in (``odom``, ``map`` or ``room-local``).
    :type frame: str

    Example::

        g = GridGeometry(0.02, (0., 0.), 100, 100)
        grid = MultiLayerGrid(g, frame="odom")
        grid.add_layer("variance")
        grid["elevation"][10, 20] = 0.15

    """

    FRAMES = ("odom", "map", "room-local")

    def __init__(self, geometry, frame="odom", layers=None):
        assert isinstance(geometry, GridGeometry), \
            "MultiLayerGrid - 'geometry' should be an instance of GridGeometry"
        if frame not in self.FRAMES:
            raise DataError(f"MultiLayerGrid - unknown frame '{frame}', expected one of {self.FRAMES}")
        self._geometry = geometry
        self._frame = frame
        self._layers = {}
        self.add_layer("elevation")
        for name, values in (layers or {}).items():
            self.add_layer(name, values)

    def add_layer(self, name, values=None):
        """Add (or replace) layer ``name``. Missing ``values`` means all unknown."""
        if values is None:
            values = np.full(self._geometry.shape, np.nan)
        else:
            values = np.array(values, dtype=float).reshape(self._geometry.shape)
        self._layers[name] = values
        return values

    def has_layer(self, name):
        return name in self._layers

    def remove_layer(self, name):
        if name == "elevation":
            raise DataError("MultiLayerGrid.remove_layer - the elevation layer cannot be removed")
        del self._layers[name]

    def __getitem__(self, name):
        return self._layers[name]

    def __contains__(self, name):
        return name in self._layers

    @property
    def geometry(self):
        return self._geometry

    @property
    def frame(self):
        return self._frame

    @property
    def layer_names(self):
        return list(self._layers.keys())

    @property
    def elevation(self):
        return self._layers["elevation"]

    def value_at(self, cell, layer="elevation"):
        if not self._geometry.contains_cell(cell):
            raise OutOfBoundsError(f"MultiLayerGrid.value_at - cell {tuple(cell)} outside grid")
        return float(self._layers[layer][cell[0], cell[1]])

    def copy(self, frame=None):
        out = MultiLayerGrid(self._geometry, frame or self._frame)
        for name, values in self._layers.items():
            out.add_layer(name, values.copy())
        return out

    def known_mask(self, layer="elevation"):
        return np.isfinite(self._layers[layer])

    def crop(self, min_corner, max_corner):
        """Sub-grid covering the window ``[min_corner, max_corner]``.

        Corners are clipped to the grid and snapped to their nearest cell;
        values (unknowns included) are copied, never interpolated.

        :raises EmptyIntersectionError: when the window misses the grid.
        """
        g = self._geometry
        lo = np.asarray(min_corner, dtype=float)
        hi = np.asarray(max_corner, dtype=float)
        if np.any(lo > hi):
            raise DataError(f"MultiLayerGrid.crop - corners not ordered: {lo} > {hi}")
        glo, ghi = g.min_corner, g.max_corner
        if np.any(hi < glo) or np.any(lo > ghi):
            raise EmptyIntersectionError("MultiLayerGrid.crop - window does not intersect the grid")
        lo = np.clip(lo, glo, ghi)
        hi = np.clip(hi, glo, ghi)
        r0, c0 = g.world_to_cell(lo)
        r1, c1 = g.world_to_cell(hi)
        geometry = GridGeometry(g.resolution,
                                (g.origin[0] + c0 * g.resolution, g.origin[1] + r0 * g.resolution),
                                r1 - r0 + 1, c1 - c0 + 1)
        out = MultiLayerGrid(geometry, self._frame)
        for name, values in self._layers.items():
            out.add_layer(name, values[r0:r1 + 1, c0:c1 + 1].copy())
        return out

    def paste(self, other, layer="elevation"):
        """Copy known values of ``other[layer]`` into this grid where the lattices overlap."""
        dr, dc = self._geometry.cell_offset(other.geometry)
        src = other[layer]
        dst = self._layers.setdefault(layer, np.full(self._geometry.shape, np.nan))
        r0, c0 = max(dr, 0), max(dc, 0)
        r1 = min(dr + other.geometry.rows, self._geometry.rows)
        c1 = min(dc + other.geometry.cols, self._geometry.cols)
        if r0 >= r1 or c0 >= c1:
            return
        block = src[r0 - dr:r1 - dr, c0 - dc:c1 - dc]
        known = np.isfinite(block)
        dst[r0:r1, c0:c1][known] = block[known]

    def __str__(self):
        g = self._geometry
        rep = f"MultiLayerGrid ({self._frame}) {g.rows}x{g.cols} @ {g.resolution} m, origin {g.origin}\n"
        rep += " Layer            | known  | min      | max\n"
        for name, values in self._layers.items():
            known = np.isfinite(values)
            if known.any():
                rep += f" {name:16s} | {known.sum():6d} | {values[known].min():8.3f} | {values[known].max():8.3f}\n"
            else:
                rep += f" {name:16s} | {0:6d} | {'-':>8s} | {'-':>8s}\n"
        return rep
