"""
Room-based median fusion of node submaps.

Each submap is re-anchored with its node's optimized pose, re-rasterized on
the global map lattice, and all submaps of one room instance are merged by
taking, per cell, the median of the known heights.

"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import List

import numpy as np

from terrainmaker import se3
from terrainmaker.exceptions import EmptyInputError, MissingPoseError, ResolutionMismatchError
from terrainmaker.gridmap import GridGeometry, MultiLayerGrid, lattice_geometry
from terrainmaker.parallel import map_round_robin
from terrainmaker.posegraph import PoseGraph, RoomInstance

logger = logging.getLogger(__name__)


@dataclass
class RoomTerrainMap:
    """Fused terrain of one room instance, in the map frame.

    Layers: ``elevation`` (median height), ``support_count`` (number of
    contributing submaps, 0 where unknown) and ``traversability``.
    """
    room: RoomInstance
    grid: MultiLayerGrid
    node_ids: List[int] = field(default_factory=list)

    @property
    def class_name(self):
        return self.room.class_name

    @property
    def instance_id(self):
        return self.room.instance_id

    def metadata(self):
        return {"instance_id": int(self.room.instance_id), "class": self.room.class_name,
                "node_ids": [int(i) for i in self.node_ids]}


def transform_submap(submap, optimized_node_pose):
    """Re-anchor a submap with its node's optimized pose.

    Every known cell ``(x, y, h)`` is moved by
    ``optimized_pose @ inv(capture_pose)`` and scattered to the nearest cell of
    a map-frame grid at the same resolution. When several source cells land in
    one target cell, the one whose moved center is nearest the target center
    wins.

    :raises MissingPoseError: if no optimized pose is given.
    """
    if optimized_node_pose is None:
        raise MissingPoseError(f"transform_submap - no optimized pose for node {submap.capture_node}")
    T = se3.check_pose(optimized_node_pose) @ se3.inverse(submap.capture_pose)
    src = submap.grid
    g = src.geometry

    X, Y = g.cell_centers()
    H = src.elevation
    # Footprint of the whole source grid so aligned inputs keep their shape.
    corners = np.array([[X.min(), Y.min(), 0.0], [X.max(), Y.min(), 0.0],
                        [X.min(), Y.max(), 0.0], [X.max(), Y.max(), 0.0]])
    moved_corners = se3.transform_points(T, corners)
    geometry = lattice_geometry(g.resolution, moved_corners[:, :2].min(axis=0), moved_corners[:, :2].max(axis=0))
    out = MultiLayerGrid(geometry, frame="map")
    extra = [name for name in src.layer_names if name != "elevation"]
    for name in extra:
        out.add_layer(name)

    known = np.isfinite(H)
    if not known.any():
        return out
    pts = np.stack([X[known], Y[known], H[known]], axis=1)
    moved = se3.transform_points(T, pts)
    rows, cols, inside = geometry.world_to_cells(moved[:, :2])
    rows, cols, moved = rows[inside], cols[inside], moved[inside]
    flat = rows * geometry.cols + cols
    centers = np.stack([geometry.origin[0] + cols * g.resolution, geometry.origin[1] + rows * g.resolution], axis=1)
    dist = np.sum((moved[:, :2] - centers)**2, axis=1)
    order = np.lexsort((dist, flat))
    first = np.r_[True, np.diff(flat[order]) != 0]
    pick = order[first]

    out.elevation.reshape(-1)[flat[pick]] = moved[pick, 2]
    src_idx = np.flatnonzero(known.reshape(-1))[inside][pick]
    for name in extra:
        out[name].reshape(-1)[flat[pick]] = src[name].reshape(-1)[src_idx]
    return out


def _union_geometry(geometries):
    res = geometries[0].resolution
    lo = np.min([g.origin for g in geometries], axis=0)
    hi = np.max([np.asarray(g.origin) + res * np.array([g.cols - 1, g.rows - 1]) for g in geometries], axis=0)
    cols = int(round((hi[0] - lo[0]) / res)) + 1
    rows = int(round((hi[1] - lo[1]) / res)) + 1
    return GridGeometry(res, tuple(lo), rows, cols)


def fuse_room(grids, room=None, node_ids=None):
    """Median fusion of map-frame grids into one :class:`RoomTerrainMap`.

    The output covers the union of the inputs. Per cell, the fused height is
    the median of the known input heights (mean of the two middle values for
    an even count) and ``support_count`` is the number of known inputs.

    :raises EmptyInputError: for an empty list.
    :raises ResolutionMismatchError: when resolutions differ.
    :raises MisalignedGridError: when the inputs are not on a common lattice.
    """
    grids = list(grids)
    if not grids:
        raise EmptyInputError("fuse_room - no submaps to fuse")
    res = grids[0].geometry.resolution
    for grid in grids[1:]:
        if not np.isclose(grid.geometry.resolution, res, rtol=0, atol=1e-12):
            raise ResolutionMismatchError(f"fuse_room - resolutions {res} and {grid.geometry.resolution} differ")

    geometry = _union_geometry([grid.geometry for grid in grids])
    stack = np.full((len(grids),) + geometry.shape, np.nan)
    for k, grid in enumerate(grids):
        dr, dc = geometry.cell_offset(grid.geometry)
        stack[k, dr:dr + grid.geometry.rows, dc:dc + grid.geometry.cols] = grid.elevation

    support = np.isfinite(stack).sum(axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        merged = np.nanmedian(stack, axis=0)

    out = MultiLayerGrid(geometry, frame="map")
    out.add_layer("elevation", merged)
    out.add_layer("support_count", support.astype(float))
    out.add_layer("traversability")
    return RoomTerrainMap(room or RoomInstance(0, ""), out, list(node_ids or []))


def _fuse_instance(graph, room, node_ids):
    grids = [transform_submap(graph.get_node_by_id(i).submap, graph.get_node_by_id(i).pose)
             for i in node_ids]
    return fuse_room(grids, room, node_ids)


def fuse_all_rooms(graph, floor_separation=1.5, margin=0.0):
    """One :class:`RoomTerrainMap` per room instance of an optimized, labeled graph.

    Room instances without any attached submap are skipped with a warning.
    """
    assert isinstance(graph, PoseGraph), "fuse_all_rooms - 'graph' should be an instance of PoseGraph"
    jobs = []
    for room, ids in graph.group_nodes_by_room(floor_separation, margin).items():
        with_submap = [i for i in ids if graph.get_node_by_id(i).submap is not None]
        if not with_submap:
            logger.warning("fuse_all_rooms - room instance %d (%s) has no submaps, skipped",
                           room.instance_id, room.class_name)
            continue
        jobs.append((room, with_submap))

    maps = map_round_robin(lambda job: _fuse_instance(graph, *job), jobs)
    for m in maps:
        logger.info("fuse_all_rooms - room %d (%s): %d submaps, %d known cells", m.instance_id,
                    m.class_name, len(m.node_ids), int(m.grid.known_mask().sum()))
    return maps
