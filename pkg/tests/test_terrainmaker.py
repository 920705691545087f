import numpy as np
import pytest

from terrainmaker.config import load_config
from terrainmaker.scene_library import two_floor
from terrainmaker.simworld import polygon_contains
from terrainmaker.terrainmaker import TerrainMaker

pytestmark = pytest.mark.slow


def pipeline(tmp_path, scene):
    config = load_config(out=str(tmp_path / scene))
    config.scene.name = scene
    return TerrainMaker(config, show_progress=False)


def test_staircase_reconstruction_error(tmp_path):
    tm = pipeline(tmp_path, "staircase_room")
    tm.simulate()
    maps = tm.fuse(tm.build_map())
    errors = tm.evaluate_reconstruction(maps)
    assert len(errors) == 1
    for err in errors.values():
        assert err.sample_count > 1000
        assert err.mean <= 1.0
        assert err.p90 <= 2.0


def coverage_iou(room_map, polygon, area):
    geometry = room_map.grid.geometry
    X, Y = geometry.cell_centers()
    known = room_map.grid.known_mask().ravel()
    inside = polygon_contains(polygon, np.stack([X.ravel(), Y.ravel()], axis=1))
    cell = geometry.resolution**2
    overlap = np.sum(known & inside) * cell
    return overlap / (np.sum(known) * cell + area - overlap)


def test_two_floor_room_instances(tmp_path):
    tm = pipeline(tmp_path, "two_floor")
    tm.simulate()
    maps = tm.fuse(tm.build_map())
    assert [m.class_name for m in maps] == ["office", "stairwell", "office"]
    assert [m.instance_id for m in maps] == [0, 1, 2]

    lower, stairwell, upper = maps
    assert np.nanmedian(lower.grid.elevation) == pytest.approx(0.0, abs=0.05)
    assert np.nanmedian(upper.grid.elevation) == pytest.approx(2.0, abs=0.05)

    rooms = {room.name: room.polygon for room in two_floor().rooms}
    assert coverage_iou(lower, rooms["office_a"], 20.0) >= 0.8
    assert coverage_iou(stairwell, rooms["stairwell"], 20.0) >= 0.8
    assert coverage_iou(upper, rooms["office_b"], 20.0) >= 0.8


def test_revisit_relocalization(tmp_path):
    tm = pipeline(tmp_path, "revisit_loop")
    tm.simulate()
    run = tm.localize(tm.build_map())
    assert run.gt.path_lengths()[-1] >= 79.0
    assert len(run.fixes) >= 50

    errors = run.position_errors()
    at_fix = np.searchsorted(run.gt.stamps, [fix.stamp for fix in run.fixes])
    np.testing.assert_allclose(run.gt.stamps[at_fix], [fix.stamp for fix in run.fixes])
    assert errors[at_fix].max() <= 0.05

    drift_only = np.linalg.norm(run.odometry.positions - run.gt.positions, axis=1)
    assert errors.mean() < drift_only.mean()
