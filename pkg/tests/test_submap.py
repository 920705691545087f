import json

import numpy as np
import pytest

from terrainmaker import se3
from terrainmaker.exceptions import FileFormatError
from terrainmaker.gmw_extensions import EXGMGridMapWriter, read_exgm
from terrainmaker.gmw_extensions.exgmgridmapwriter import sidecar_name
from terrainmaker.gridmap import GridGeometry, MultiLayerGrid
from terrainmaker.submap import Submap


def make_grid():
    grid = MultiLayerGrid(GridGeometry(0.05, (1.0, -0.5), 4, 6))
    grid.elevation[1:3, 2:5] = 0.25
    grid.add_layer("variance", np.full((4, 6), 1e-4))
    return grid


def test_submap_save_load(tmp_path):
    pose = se3.make_pose(se3.rot_z(0.4), [1.0, 2.0, 0.5])
    Submap(make_grid(), 7, pose).save(str(tmp_path / "s.exgm"))
    back = Submap.load(str(tmp_path / "s.exgm"))
    assert back.capture_node == 7
    np.testing.assert_allclose(back.capture_pose, pose, atol=1e-9)
    assert back.grid.frame == "odom"
    np.testing.assert_array_equal(np.isnan(back.grid.elevation), np.isnan(make_grid().elevation))
    np.testing.assert_allclose(back.grid["variance"], 1e-4, rtol=1e-6)


def test_exgm_is_byte_deterministic(tmp_path):
    for name in ("a.exgm", "b.exgm"):
        EXGMGridMapWriter(str(tmp_path / name)).write(make_grid(), {"instance_id": 1, "class": "lab"})
    assert (tmp_path / "a.exgm").read_bytes() == (tmp_path / "b.exgm").read_bytes()
    assert (tmp_path / "a.exgm.json").read_bytes() == (tmp_path / "b.exgm.json").read_bytes()


def test_exgm_geometry_and_sidecar(tmp_path):
    filename = str(tmp_path / "m.exgm")
    EXGMGridMapWriter(filename).write(make_grid().copy(frame="map"), {"node_ids": [1, 2]})
    grid, meta = read_exgm(filename)
    assert grid.geometry.same_as(make_grid().geometry)
    assert grid.frame == "map"
    assert meta == json.loads(open(sidecar_name(filename)).read())
    assert meta["node_ids"] == [1, 2]


def test_exgm_errors(tmp_path):
    filename = str(tmp_path / "m.exgm")
    EXGMGridMapWriter(filename).write(make_grid())
    data = open(filename, "rb").read()
    (tmp_path / "t.exgm").write_bytes(data[:-10])
    with pytest.raises(FileFormatError):
        read_exgm(str(tmp_path / "t.exgm"))
    (tmp_path / "x.exgm").write_bytes(b"NOPE" + data[4:])
    with pytest.raises(FileFormatError):
        read_exgm(str(tmp_path / "x.exgm"))


def test_load_without_capture_metadata(tmp_path):
    filename = str(tmp_path / "m.exgm")
    EXGMGridMapWriter(filename).write(make_grid())
    with pytest.raises(FileFormatError):
        Submap.load(filename)
