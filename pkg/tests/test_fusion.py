import numpy as np
import pytest

from terrainmaker import se3
from terrainmaker.exceptions import EmptyInputError, MissingPoseError, ResolutionMismatchError
from terrainmaker.fusion import fuse_all_rooms, fuse_room, transform_submap
from terrainmaker.gridmap import GridGeometry, MultiLayerGrid
from terrainmaker.posegraph import PoseGraph, RoomInstance
from terrainmaker.submap import Submap


def sort_median_oracle(stack):
    ordered = np.sort(stack, axis=0)
    count = np.isfinite(stack).sum(axis=0)
    lo = np.maximum((count - 1) // 2, 0)[None]
    hi = (count // 2)[None]
    with np.errstate(invalid="ignore"):
        pick = (np.take_along_axis(ordered, lo, 0)[0] + np.take_along_axis(ordered, hi, 0)[0]) / 2
    return np.where(count > 0, pick, np.nan)


def random_stack(rng, res=0.1):
    grids, placed = [], []
    for _ in range(rng.integers(1, 11)):
        rows, cols = rng.integers(1, 51, size=2)
        r0, c0 = rng.integers(-10, 10, size=2)
        H = rng.normal(size=(rows, cols))
        H[rng.random((rows, cols)) < 0.3] = np.nan
        grid = MultiLayerGrid(GridGeometry(res, (c0 * res, r0 * res), rows, cols), frame="map")
        grid.add_layer("elevation", H)
        grids.append(grid)
        placed.append((r0, c0, H))
    return grids, placed


def test_fuse_room_matches_sort_median_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        grids, placed = random_stack(rng)
        rmin = min(p[0] for p in placed)
        cmin = min(p[1] for p in placed)
        rmax = max(p[0] + p[2].shape[0] for p in placed)
        cmax = max(p[1] + p[2].shape[1] for p in placed)
        stack = np.full((len(placed), rmax - rmin, cmax - cmin), np.nan)
        for k, (r0, c0, H) in enumerate(placed):
            stack[k, r0 - rmin:r0 - rmin + H.shape[0], c0 - cmin:c0 - cmin + H.shape[1]] = H

        fused = fuse_room(grids)
        assert fused.grid.geometry.shape == stack.shape[1:]
        np.testing.assert_array_equal(fused.grid.elevation, sort_median_oracle(stack))
        np.testing.assert_array_equal(fused.grid["support_count"], np.isfinite(stack).sum(axis=0))


def test_median_rejects_outliers():
    rng = np.random.default_rng(1)
    geometry = GridGeometry(0.02, (0.0, 0.0), 30, 30)
    X, _ = geometry.cell_centers()
    truth = np.where(X > 0.3, 0.1, 0.0)
    grids, errors = [], []
    for _ in range(10):
        H = truth + rng.normal(scale=0.01, size=truth.shape)
        outliers = rng.random(truth.shape) < 0.1
        H[outliers] += rng.uniform(-1.0, 1.0, size=outliers.sum())
        errors.append(np.mean(np.abs(H - truth)))
        grid = MultiLayerGrid(geometry, frame="map")
        grid.add_layer("elevation", H)
        grids.append(grid)
    fused_error = np.mean(np.abs(fuse_room(grids).grid.elevation - truth))
    assert fused_error < min(errors)
    assert fused_error < 0.01


def test_fuse_room_errors():
    with pytest.raises(EmptyInputError):
        fuse_room([])
    a = MultiLayerGrid(GridGeometry(0.1, (0.0, 0.0), 2, 2))
    b = MultiLayerGrid(GridGeometry(0.05, (0.0, 0.0), 2, 2))
    with pytest.raises(ResolutionMismatchError):
        fuse_room([a, b])


def ramp_submap(capture_pose=None):
    geometry = GridGeometry(0.1, (0.0, 0.0), 10, 20)
    X, _ = geometry.cell_centers()
    grid = MultiLayerGrid(geometry, frame="odom")
    grid.add_layer("elevation", 0.1 * X)
    grid.add_layer("variance", np.full(geometry.shape, 1e-4))
    return Submap(grid, 0, capture_pose)


def test_transform_submap_yaw_90():
    out = transform_submap(ramp_submap(), se3.make_pose(se3.rot_z(np.pi / 2)))
    assert out.frame == "map"
    assert out.has_layer("variance")
    _, Y = out.geometry.cell_centers()
    known = out.known_mask()
    assert known.sum() == 200
    np.testing.assert_allclose(out.elevation[known], 0.1 * Y[known], atol=0.1 * 0.05 + 1e-9)


def test_transform_submap_reanchors_translation():
    capture = se3.make_pose(t=[1.0, 0.0, 0.0])
    optimized = se3.make_pose(t=[1.2, 0.0, 0.1])
    out = transform_submap(ramp_submap(capture), optimized)
    X, _ = out.geometry.cell_centers()
    known = out.known_mask()
    np.testing.assert_allclose(out.elevation[known], 0.1 * (X[known] - 0.2) + 0.1, atol=1e-9)


def test_transform_submap_needs_pose():
    with pytest.raises(MissingPoseError):
        transform_submap(ramp_submap(), None)


def test_fuse_all_rooms_two_rooms():
    graph = PoseGraph(class_names=("office", "lab"))
    positions = [(0.5, 0.5), (1.5, 0.5), (6.5, 0.5), (7.5, 0.5), (8.5, 0.5)]
    for i, (x, y) in enumerate(positions):
        pose = se3.make_pose(t=[x, y, 0.0])
        graph.add_node(pose, float(i))
        graph.assign_room_label(i, {"office" if x < 5 else "lab": 1.0})
        if i != 4:
            geometry = GridGeometry(0.1, (x - 0.5, y - 0.5), 11, 11)
            grid = MultiLayerGrid(geometry, frame="odom")
            grid.elevation[:] = 0.0
            graph.attach_submap(i, Submap(grid, i, pose))

    maps = fuse_all_rooms(graph)
    assert [m.room for m in maps] == [RoomInstance(0, "office"), RoomInstance(1, "lab")]
    assert maps[0].node_ids == [0, 1]
    assert maps[1].node_ids == [2, 3]
    lo, hi = maps[1].grid.geometry.min_corner, maps[1].grid.geometry.max_corner
    assert lo[0] >= 5.9 and hi[0] <= 8.1
    assert maps[0].metadata() == {"instance_id": 0, "class": "office", "node_ids": [0, 1]}
