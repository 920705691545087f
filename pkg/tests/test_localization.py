import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from terrainmaker import se3
from terrainmaker.exceptions import (ConfigError, EmptyInputError, NoConsensusError, TimestampError,
                                     TooFewPointsError)
from terrainmaker.keyframe import CameraIntrinsics, Keyframe
from terrainmaker.localization import (Correspondence2D3D, LocalizationFix, MapCorrection, RansacConfig,
                                       detect_loop_closures, stack_correspondences,
                                       localized_pose, pnp_ransac, retrieve_candidates, update_correction,
                                       verify_and_fix, write_fix_log)
from terrainmaker.placeretriever import hamming_distances, match_descriptors
from terrainmaker.posegraph import LOOP_CLOSURE, PoseGraph
from terrainmaker.pr_extensions import BruteForceRetriever
from terrainmaker.scene_library import staircase_room
from terrainmaker.simworld import build_scene, make_landmarks, synth_keyframe

INTRINSICS = CameraIntrinsics(525.0, 525.0, 320.0, 240.0, 640, 480)

# optical axes (x right, y down, z forward) in a z-up world looking along +x
R_OPTICAL = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


def camera_pose(x, y, z, yaw=0.0, tilt=0.3):
    return se3.make_pose(se3.rot_z(yaw) @ se3.rot_y(tilt) @ R_OPTICAL, [x, y, z])


def synthetic_correspondences(rng, T_map_cam, n):
    z = rng.uniform(2.0, 8.0, n)
    pc = np.stack([rng.uniform(-0.5, 0.5, n) * z, rng.uniform(-0.4, 0.4, n) * z, z], axis=1)
    return INTRINSICS.project(pc), se3.transform_points(T_map_cam, pc)


def pose_errors(A, B):
    return np.linalg.norm(A[:3, 3] - B[:3, 3]), se3.rotation_angle(A[:3, :3].T @ B[:3, :3])


def random_pnp_trials(trials):
    rng = np.random.default_rng(7)
    for _ in range(trials):
        T = se3.make_pose(Rotation.random(random_state=rng).as_matrix(), rng.uniform(-5, 5, 3))
        uv, X = synthetic_correspondences(rng, T, 30)
        result = pnp_ransac(uv, X, INTRINSICS, RansacConfig(min_inliers=15), seed=1)
        dt, dr = pose_errors(result.pose, T)
        assert dt <= 1e-8 and dr <= 1e-8
        assert result.inliers.all()


def test_pnp_zero_noise():
    random_pnp_trials(50)


@pytest.mark.slow
def test_pnp_zero_noise_many_poses():
    random_pnp_trials(500)


def test_pnp_from_correspondence_list():
    rng = np.random.default_rng(5)
    T = camera_pose(2.0, -1.0, 0.5, yaw=0.4)
    uv, X = synthetic_correspondences(rng, T, 20)
    stacked_uv, stacked_X = stack_correspondences([Correspondence2D3D(a, b) for a, b in zip(uv, X)])
    np.testing.assert_array_equal(stacked_uv, uv)
    np.testing.assert_array_equal(stacked_X, X)
    result = pnp_ransac(stacked_uv, stacked_X, INTRINSICS, seed=2)
    dt, dr = pose_errors(result.pose, T)
    assert dt <= 1e-6 and dr <= 1e-6
    assert stack_correspondences([])[0].shape == (0, 2)


def test_pnp_with_outliers():
    rng = np.random.default_rng(11)
    T = se3.make_pose(se3.rot_z(np.deg2rad(30.0)) @ R_OPTICAL, [1.0, 0.5, 0.2])
    uv, X = synthetic_correspondences(rng, T, 100)
    outliers = rng.permutation(100)[:30]
    uv[outliers] = rng.uniform([0, 0], [640, 480], size=(30, 2))
    result = pnp_ransac(uv, X, INTRINSICS, seed=3)
    dt, dr = pose_errors(result.pose, T)
    assert dt <= 1e-6 and dr <= 1e-6
    inliers = np.setdiff1d(np.arange(100), outliers)
    assert result.inliers[inliers].all()


def test_pnp_failures():
    rng = np.random.default_rng(2)
    with pytest.raises(TooFewPointsError):
        pnp_ransac(np.zeros((3, 2)), np.ones((3, 3)), INTRINSICS)
    uv = rng.uniform([0, 0], [640, 480], size=(20, 2))
    X = rng.uniform(-3, 3, size=(20, 3)) + [0.0, 0.0, 6.0]
    with pytest.raises(NoConsensusError):
        pnp_ransac(uv, X, INTRINSICS, RansacConfig(iterations=50))


def test_ransac_config_validation():
    with pytest.raises(ConfigError):
        RansacConfig(min_inliers=3)
    with pytest.raises(ConfigError):
        RansacConfig(reproj_threshold=0.0)


def test_hamming_distances():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 256, size=(5, 32), dtype=np.uint8)
    b = rng.integers(0, 256, size=(7, 32), dtype=np.uint8)
    expected = np.unpackbits(a[:, None, :] ^ b[None, :, :], axis=2).sum(axis=2)
    np.testing.assert_array_equal(hamming_distances(a, b), expected)


def make_keyframe(node_id, descriptors):
    n = descriptors.shape[0]
    return Keyframe(node_id, INTRINSICS, np.zeros((n, 2)), descriptors, np.ones(n))


def test_match_descriptors_mutual_and_capped():
    rng = np.random.default_rng(1)
    ref = rng.integers(0, 256, size=(40, 32), dtype=np.uint8)
    query = np.vstack([ref[:10], rng.integers(0, 256, size=(5, 32), dtype=np.uint8)])
    pairs = match_descriptors(query, ref)
    np.testing.assert_array_equal(pairs, np.stack([np.arange(10), np.arange(10)], axis=1))
    assert match_descriptors(query[:0], ref).shape == (0, 2)


def test_retrieve_candidates_ranking():
    rng = np.random.default_rng(3)
    base = rng.integers(0, 256, size=(60, 32), dtype=np.uint8)
    query = make_keyframe(-1, base[:30])
    kfs = [make_keyframe(0, base[:10]), make_keyframe(1, base[:20]), make_keyframe(2, base[10:20]),
           make_keyframe(3, rng.integers(0, 256, size=(20, 32), dtype=np.uint8))]
    assert retrieve_candidates(query, kfs, k=3) == [(1, 20), (0, 10), (2, 10)]
    rooms = {0: "lab", 1: "office", 2: "lab", 3: "lab"}
    assert retrieve_candidates(query, kfs, 3, query_room="lab", node_rooms=rooms) == [(0, 10), (2, 10)]
    with pytest.raises(EmptyInputError):
        retrieve_candidates(query, [])


@pytest.fixture(scope="module")
def world():
    scene = build_scene(staircase_room())
    return scene, make_landmarks(scene, density=20.0, seed=0)


def test_verify_and_fix_nearby_keyframes(world):
    scene, landmarks = world
    T_cand = camera_pose(1.0, 2.0, 0.8)
    T_query = camera_pose(1.5, 2.0, 0.8, yaw=0.05)
    cand = synth_keyframe(scene, T_cand, INTRINSICS, landmarks, 0.5, 0.05, seed=0, node_id=4, frame=1)
    query = synth_keyframe(scene, T_query, INTRINSICS, landmarks, 0.5, 0.05, seed=0, stamp=3.0, frame=2)
    assert len(cand) >= 50
    fix = verify_and_fix(query, cand, T_cand)
    assert fix is not None
    assert fix.matched_node == 4
    assert fix.stamp == 3.0
    dt, dr = pose_errors(fix.pose, T_query)
    assert dt < 0.05
    assert dr < np.deg2rad(2.0)


def test_verify_and_fix_rejects_unrelated_place(world):
    scene, landmarks = world
    rng = np.random.default_rng(9)
    cand = synth_keyframe(scene, camera_pose(1.0, 2.0, 0.8), INTRINSICS, landmarks, node_id=0)
    query = Keyframe(-1, INTRINSICS, rng.uniform(0, 400, (100, 2)),
                     rng.integers(0, 256, size=(100, 32), dtype=np.uint8), np.ones(100))
    assert verify_and_fix(query, cand, camera_pose(1.0, 2.0, 0.8)) is None


def test_detect_loop_closures(world):
    scene, landmarks = world
    graph = PoseGraph()
    poses = [camera_pose(1.0, 2.0, 0.8)] + [camera_pose(1.0 + 0.3 * i, 1.0, 0.8) for i in range(1, 12)]
    poses.append(camera_pose(1.3, 2.0, 0.8))
    for i, T in enumerate(poses):
        graph.add_node(T, float(i))
    graph.attach_keyframe(0, synth_keyframe(scene, poses[0], INTRINSICS, landmarks, 0.5, 0.05, frame=0))
    graph.attach_keyframe(12, synth_keyframe(scene, poses[12], INTRINSICS, landmarks, 0.5, 0.05, frame=12))

    assert detect_loop_closures(graph, 12, exclusion=12) == []
    added = detect_loop_closures(graph, 12, exclusion=10, base_information=np.eye(6))
    assert len(added) == 1
    factor = graph.factors[added[0]]
    assert factor.kind == LOOP_CLOSURE
    assert (factor.from_id, factor.to_id) == (0, 12)
    truth = se3.inverse(poses[0]) @ poses[12]
    dt, dr = pose_errors(factor.relative_pose, truth)
    assert dt < 0.05 and dr < np.deg2rad(2.0)
    assert factor.information[0, 0] >= 15


def test_correction_resolves_drift():
    gt = se3.make_pose(se3.rot_z(0.3), [2.0, 1.0, 0.5])
    odom = se3.make_pose(t=[0.3, 0.0, 0.0]) @ gt
    fix = LocalizationFix(0, gt, 40, 0.5, stamp=10.0)
    corr = update_correction(MapCorrection(), fix, odom, odom_stamp=10.1)
    np.testing.assert_allclose(corr.T_map_odom[:3, 3], [-0.3, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(localized_pose(corr, odom), gt, atol=1e-12)
    assert corr.last_fix_stamp == 10.0


def test_stale_fix_rejected():
    fix = LocalizationFix(0, np.eye(4), 40, 0.5, stamp=10.0)
    with pytest.raises(TimestampError):
        update_correction(MapCorrection(), fix, np.eye(4), odom_stamp=15.0, window=0.5)


def test_out_of_order_fix_rejected():
    applied = MapCorrection(se3.make_pose(t=[0.2, 0.0, 0.0]), last_fix_stamp=10.0)
    late = LocalizationFix(0, np.eye(4), 40, 0.5, stamp=5.0)
    with pytest.raises(TimestampError):
        update_correction(applied, late, np.eye(4), odom_stamp=5.0)
    assert applied.last_fix_stamp == 10.0
    same = update_correction(applied, LocalizationFix(0, np.eye(4), 40, 0.5, stamp=10.0), np.eye(4), 10.0)
    np.testing.assert_array_equal(same.T_map_odom, np.eye(4))
    with pytest.raises(TypeError):
        update_correction(MapCorrection(), late, np.eye(4))


def test_fix_log(tmp_path):
    fixes = [LocalizationFix(3, np.eye(4), 40, 0.5, 1.0), LocalizationFix(5, np.eye(4), 22, 1.25, 2.0)]
    write_fix_log(tmp_path / "fixes.csv", fixes)
    lines = (tmp_path / "fixes.csv").read_text().splitlines()
    assert lines[0].startswith("stamp,node,tx")
    assert len(lines) == 3
    assert lines[2].split(",")[1] == "5"
