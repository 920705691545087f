import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402

from terrainmaker import se3  # noqa: E402
from terrainmaker.gridmap import GridGeometry, MultiLayerGrid  # noqa: E402
from terrainmaker.parallel import is_master, map_round_robin  # noqa: E402
from terrainmaker.tools.plotting import plot_fscore_sweep, plot_grid_map, plot_trajectories  # noqa: E402
from terrainmaker.trajectory import Trajectory  # noqa: E402
from terrainmaker.traversability import ClassificationReport  # noqa: E402


def test_map_round_robin_keeps_order():
    assert is_master()
    assert map_round_robin(lambda x: x * x, range(7)) == [0, 1, 4, 9, 16, 25, 36]
    assert map_round_robin(str, []) == []


def test_plot_grid_map(tmp_path):
    grid = MultiLayerGrid(GridGeometry(0.1, (0.0, 0.0), 10, 20), frame="map")
    grid["elevation"][:] = np.linspace(0.0, 1.0, 200).reshape(10, 20)
    grid["elevation"][0, 0] = np.nan
    grid.add_layer("traversability", np.full((10, 20), 0.5))
    out = tmp_path / "elevation.png"
    assert plot_grid_map(grid, savefigname=str(out)) is not None
    assert out.stat().st_size > 0
    assert plot_grid_map(grid, "traversability", vmin=0.0, vmax=1.0, savefigname=str(tmp_path / "t.png"))


def test_plot_trajectories_and_sweep(tmp_path):
    poses = [se3.make_pose(t=[0.1 * k, 0.0, 0.0]) for k in range(10)]
    traj = Trajectory(np.arange(10.0), poses)
    plot_trajectories([traj, traj.left_multiplied(se3.make_pose(t=[0.0, 0.2, 0.0]))], ["a", "b"],
                      savefigname=str(tmp_path / "traj.png"))
    report = ClassificationReport([0.0, 0.5, 1.0], [0.5, 0.8, 1.0], [1.0, 0.9, 0.2], [0.67, 0.85, 0.33], 0.5, 0.85)
    plot_fscore_sweep({"step_height": report}, savefigname=str(tmp_path / "sweep.png"))
    assert (tmp_path / "traj.png").exists()
    assert (tmp_path / "sweep.png").exists()
