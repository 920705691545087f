import numpy as np
import pytest

from terrainmaker import se3
from terrainmaker.evaluation import (ReconError, RpeResult, TriMesh, heightmap_to_mesh, point_to_point_error, rpe,
                                     sample_mesh, write_recon_csv, write_rpe_csv)
from terrainmaker.exceptions import DataError, EmptyInputError, TrajectoryError
from terrainmaker.gridmap import GridGeometry, MultiLayerGrid
from terrainmaker.pointcloud import PointCloud
from terrainmaker.trajectory import Trajectory


def straight_walk(length=10.0, step=0.01, scale=1.0, yaw_wobble=0.0):
    n = int(round(length / step)) + 1
    x = np.arange(n) * step
    poses = [se3.make_pose(se3.rot_z(yaw_wobble * np.sin(xi)), [scale * xi, 0.0, 0.0]) for xi in x]
    return Trajectory(np.arange(n) * 0.01, poses)


def test_rpe_identical_is_zero():
    gt = straight_walk()
    result = rpe(gt, gt, 1.0)
    assert result.translation_rmse == pytest.approx(0.0, abs=1e-12)
    assert result.rotation_rmse == pytest.approx(0.0, abs=1e-5)
    assert result.pair_count > 800


def test_rpe_scale_drift():
    gt = straight_walk()
    est = straight_walk(scale=1.04)
    result = rpe(est, gt, 5.0)
    assert result.translation_rmse == pytest.approx(0.20, rel=0.1)
    assert result.rotation_rmse == pytest.approx(0.0, abs=1e-5)
    assert result.pair_count > 400


def test_rpe_ignores_rigid_offset_of_estimate():
    gt = straight_walk()
    est = straight_walk(scale=1.02, yaw_wobble=0.05)
    G = se3.make_pose(se3.rot_z(0.7), [3.0, -2.0, 0.5])
    a = rpe(est, gt, 2.0)
    b = rpe(est.left_multiplied(G), gt, 2.0)
    assert b.translation_rmse == pytest.approx(a.translation_rmse, abs=1e-9)
    assert b.rotation_rmse == pytest.approx(a.rotation_rmse, abs=1e-6)
    assert a.rotation_rmse > 0


def test_rpe_errors():
    gt = straight_walk(length=2.0)
    with pytest.raises(TrajectoryError):
        rpe(gt, gt, 5.0)
    shifted = Trajectory(gt.stamps + 100.0, gt.poses)
    with pytest.raises(TrajectoryError):
        rpe(shifted, gt, 1.0)


def plane_grid(slope=0.0, rows=3, cols=4, res=0.1):
    grid = MultiLayerGrid(GridGeometry(res, (0.0, 0.0), rows, cols), frame="map")
    X, _ = grid.geometry.cell_centers()
    grid.add_layer("elevation", slope * X)
    return grid


def test_heightmap_to_mesh_area():
    mesh = heightmap_to_mesh(plane_grid())
    assert mesh.vertices.shape == (12, 3)
    assert len(mesh) == 12
    assert mesh.surface_area() == pytest.approx(0.06)
    tilted = heightmap_to_mesh(plane_grid(slope=0.5))
    assert tilted.surface_area() == pytest.approx(0.06 * np.sqrt(1.25))
    np.testing.assert_allclose(tilted.slopes(), np.arctan(0.5))


def test_heightmap_to_mesh_skips_unknown_quads():
    grid = plane_grid()
    grid["elevation"][0, 0] = np.nan
    assert len(heightmap_to_mesh(grid)) == 10
    grid["elevation"][:] = np.nan
    with pytest.raises(EmptyInputError):
        heightmap_to_mesh(grid)


def test_heightmap_to_mesh_skips_step_quads():
    grid = plane_grid()
    grid["elevation"][:, 2:] = 0.1
    assert len(heightmap_to_mesh(grid)) == 12
    mesh = heightmap_to_mesh(grid, max_height_span=0.05)
    assert len(mesh) == 8
    assert mesh.surface_area() == pytest.approx(0.04)
    np.testing.assert_allclose(mesh.slopes(), 0.0, atol=1e-12)
    with pytest.raises(EmptyInputError):
        heightmap_to_mesh(plane_grid(slope=1.0), max_height_span=0.05)


def test_trimesh_validation_and_raycast():
    with pytest.raises(DataError):
        TriMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(DataError):
        TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])
    mesh = heightmap_to_mesh(plane_grid())
    t = mesh.raycast([[0.15, 0.15, 1.0], [5.0, 5.0, 1.0]], [[0.0, 0.0, -1.0], [0.0, 0.0, -1.0]])
    assert t[0] == pytest.approx(1.0)
    assert np.isinf(t[1])


def test_sample_mesh():
    mesh = heightmap_to_mesh(plane_grid(slope=0.5))
    cloud = sample_mesh(mesh, density=2000.0, seed=4)
    expected = 2000.0 * mesh.surface_area()
    assert abs(len(cloud) - expected) <= len(mesh)
    p = cloud.points
    np.testing.assert_allclose(p[:, 2], 0.5 * p[:, 0], atol=1e-12)
    assert p[:, 0].min() >= 0.0 and p[:, 0].max() <= 0.3
    assert p[:, 1].min() >= 0.0 and p[:, 1].max() <= 0.2
    np.testing.assert_array_equal(sample_mesh(mesh, 2000.0, seed=4).points, p)
    assert len(sample_mesh(mesh, 2000.0, max_slope=0.2)) == 0


def test_point_to_point_error():
    xs, ys = np.meshgrid(np.arange(10) * 0.1, np.arange(10) * 0.1)
    pts = np.stack([xs.ravel(), ys.ravel(), np.zeros(100)], axis=1)
    err = point_to_point_error(PointCloud(pts + [0.0, 0.0, 0.01]), PointCloud(pts))
    assert err.mean == pytest.approx(1.0)
    assert err.max == pytest.approx(1.0)
    assert err.p90 == pytest.approx(1.0)
    assert err.sample_count == 100
    with pytest.raises(EmptyInputError):
        point_to_point_error(PointCloud(np.zeros((0, 3))), PointCloud(pts))


def test_csv_writers(tmp_path):
    write_rpe_csv(tmp_path / "rpe.csv", [RpeResult(1.0, 0.01, 0.5, 90), RpeResult(5.0, 0.2, 1.5, 50)])
    lines = (tmp_path / "rpe.csv").read_text().splitlines()
    assert lines[0] == "distance,translation_rmse,rotation_rmse_deg,pairs"
    assert lines[2] == "5.000,0.200000,1.500000,50"

    write_recon_csv(tmp_path / "recon.csv", ReconError(1.0, 3.0, 2.0, 10))
    lines = (tmp_path / "recon.csv").read_text().splitlines()
    assert lines[1].startswith("all,1.0000,3.0000,2.0000,10")
    write_recon_csv(tmp_path / "recon.csv", {"room_00_lab": ReconError(1.0, 3.0, 2.0, 10),
                                             "room_01_office": ReconError(2.0, 4.0, 3.0, 20)})
    assert len((tmp_path / "recon.csv").read_text().splitlines()) == 3
