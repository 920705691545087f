import numpy as np
import pytest

from terrainmaker.exceptions import DataError, FileFormatError
from terrainmaker.keyframe import CameraIntrinsics, Keyframe, read_keyframe, write_keyframe


@pytest.fixture
def intrinsics():
    return CameraIntrinsics(525.0, 525.0, 320.0, 240.0, 640, 480)


def test_project_backproject(intrinsics):
    pts = np.array([[0.1, -0.2, 2.0], [0.5, 0.3, 4.0]])
    uv = intrinsics.project(pts)
    np.testing.assert_allclose(intrinsics.backproject(uv, pts[:, 2]), pts)
    assert intrinsics.in_image(uv).all()
    assert not intrinsics.in_image([[-1.0, 10.0]]).any()


def test_invalid_intrinsics():
    with pytest.raises(DataError):
        CameraIntrinsics(0.0, 525.0, 320.0, 240.0, 640, 480)
    with pytest.raises(DataError):
        CameraIntrinsics(525.0, 525.0, 700.0, 240.0, 640, 480)


def test_keyframe_file_roundtrip(tmp_path, intrinsics):
    rng = np.random.default_rng(0)
    kp = rng.uniform(0, 400, size=(25, 2))
    desc = rng.integers(0, 256, size=(25, 32), dtype=np.uint8)
    depths = rng.uniform(0.5, 5.0, size=25)
    depths[3] = np.nan
    write_keyframe(tmp_path / "k.exkf", Keyframe(4, intrinsics, kp, desc, depths, stamp=1.0))
    back = read_keyframe(tmp_path / "k.exkf")
    assert back.node_id == 4
    assert back.intrinsics == intrinsics
    np.testing.assert_allclose(back.keypoints, kp, rtol=1e-6)
    np.testing.assert_array_equal(back.descriptors, desc)
    assert np.isnan(back.depths[3])
    np.testing.assert_allclose(np.delete(back.depths, 3), np.delete(depths, 3), rtol=1e-6)


def test_unattached_keyframe_roundtrip(tmp_path, intrinsics):
    kf = Keyframe(-1, intrinsics, np.ones((3, 2)), np.zeros((3, 32), dtype=np.uint8))
    write_keyframe(tmp_path / "k.exkf", kf)
    payload = (tmp_path / "k.exkf").read_bytes()
    assert payload[4:8] == b"\xff\xff\xff\xff"
    assert read_keyframe(tmp_path / "k.exkf").node_id == -1
    with pytest.raises(DataError):
        write_keyframe(tmp_path / "big.exkf", Keyframe(2**32, intrinsics, np.ones((1, 2)),
                                                      np.zeros((1, 32), dtype=np.uint8)))
    assert not (tmp_path / "big.exkf").exists()


def test_keyframe_file_errors(tmp_path, intrinsics):
    (tmp_path / "bad.exkf").write_bytes(b"XXXX" + bytes(60))
    with pytest.raises(FileFormatError):
        read_keyframe(tmp_path / "bad.exkf")
    kf = Keyframe(0, intrinsics, np.zeros((5, 2)), np.zeros((5, 32), dtype=np.uint8))
    write_keyframe(tmp_path / "k.exkf", kf)
    (tmp_path / "t.exkf").write_bytes((tmp_path / "k.exkf").read_bytes()[:-1])
    with pytest.raises(FileFormatError):
        read_keyframe(tmp_path / "t.exkf")


def test_keyframe_validation(intrinsics):
    with pytest.raises(DataError):
        Keyframe(0, intrinsics, np.zeros((2, 2)), np.zeros((3, 32), dtype=np.uint8))
    with pytest.raises(DataError):
        Keyframe(0, intrinsics, np.zeros((1, 2)), np.zeros((1, 32), dtype=np.uint8), depths=[-1.0])
