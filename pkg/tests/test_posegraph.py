import numpy as np
import pytest

from terrainmaker import se3
from terrainmaker.exceptions import (DisconnectedGraphError, InformationMatrixError, LabelError, NonFiniteCostError,
                                     TimestampError, UnknownNodeError)
from terrainmaker.gridmap import GridGeometry, MultiLayerGrid, lattice_geometry
from terrainmaker.posegraph import LOOP_CLOSURE, ODOMETRY, PoseGraph, RoomInstance, SpacingPolicy
from terrainmaker.submap import Submap


def translation(x, y=0.0, z=0.0):
    return se3.make_pose(t=[x, y, z])


def test_two_factor_closed_form():
    graph = PoseGraph()
    graph.add_node(np.eye(4), 0.0)
    graph.add_node(translation(2.0), 1.0)
    graph.add_factor(ODOMETRY, 0, 1, translation(1.0), np.eye(6))
    graph.add_loop_closure(0, 1, translation(2.0), np.eye(6))
    assert graph.cost() == pytest.approx(1.0)
    graph, cost = graph.optimize()
    assert abs(cost - 0.5) < 1e-9
    assert abs(graph.get_node_by_id(1).pose[0, 3] - 1.5) < 1e-9
    np.testing.assert_array_equal(graph.get_node_by_id(0).pose, np.eye(4))


def square_step(i):
    turn = np.pi / 2 if (i + 1) % 5 == 0 else 0.0
    return se3.make_pose(se3.rot_z(turn), [1.0, 0.0, 0.0])


def test_square_loop_closure_reduces_error():
    rng = np.random.default_rng(0)
    gt = [np.eye(4)]
    for i in range(19):
        gt.append(gt[-1] @ square_step(i))
    np.testing.assert_allclose(gt[-1] @ square_step(19), np.eye(4), atol=1e-12)

    sigma_t, sigma_r = 0.02, 0.03
    info = np.diag([sigma_t**-2] * 3 + [sigma_r**-2] * 3)
    graph = PoseGraph(odometry_information=info)
    graph.add_node(np.eye(4), 0.0)
    pose = np.eye(4)
    for i in range(19):
        noise = np.concatenate([rng.normal(scale=sigma_t, size=3), rng.normal(scale=sigma_r, size=3)])
        meas = se3.exp(noise) @ square_step(i)
        pose = pose @ meas
        node = graph.add_node(se3.orthonormalize(pose), float(i + 1))
        graph.add_factor(ODOMETRY, node - 1, node, se3.orthonormalize(meas), info)
    graph.add_loop_closure(19, 0, square_step(19), 1e4 * np.eye(6))

    def ate(poses):
        return np.mean([np.linalg.norm(T[:3, 3] - G[:3, 3]) for T, G in zip(poses, gt)])

    before = ate(graph.poses())
    initial_cost = graph.cost()
    graph, cost = graph.optimize()
    after = ate(graph.poses())
    assert cost < initial_cost
    assert after <= 0.5 * before


def test_spacing_policy():
    graph = PoseGraph(spacing=SpacingPolicy(1.0, np.deg2rad(30.0)))
    assert graph.add_node_if_spaced(np.eye(4), 0.0) == 0
    assert graph.add_node_if_spaced(translation(0.5), 0.1) is None
    assert graph.add_node_if_spaced(se3.make_pose(se3.rot_z(np.deg2rad(31.0))), 0.2) == 1
    assert len(graph.factors) == 1
    assert graph.factors[0].kind == ODOMETRY


def test_straight_walk_node_count():
    graph = PoseGraph(spacing=SpacingPolicy(1.0, np.deg2rad(30.0)))
    for i in range(1001):
        graph.add_node_if_spaced(translation(0.01 * i), 0.01 * i)
    assert len(graph) == 11
    np.testing.assert_allclose(np.diff(graph.poses()[:, 0, 3]), 1.0, atol=0.011)


def test_invalid_inputs():
    graph = PoseGraph()
    graph.add_node(np.eye(4), 1.0)
    graph.add_node(translation(1.0), 2.0)
    with pytest.raises(TimestampError):
        graph.add_node_if_spaced(translation(5.0), 0.5)
    with pytest.raises(UnknownNodeError):
        graph.add_loop_closure(0, 7, np.eye(4), np.eye(6))
    with pytest.raises(InformationMatrixError):
        graph.add_loop_closure(0, 1, np.eye(4), -np.eye(6))
    bad = np.eye(6)
    bad[0, 1] = 1.0
    with pytest.raises(InformationMatrixError):
        graph.add_loop_closure(0, 1, np.eye(4), bad)


def test_disconnected_graph():
    graph = PoseGraph()
    for i in range(3):
        graph.add_node(translation(float(i)), float(i))
    graph.add_factor(ODOMETRY, 0, 1, translation(1.0), np.eye(6))
    with pytest.raises(DisconnectedGraphError):
        graph.optimize()


def test_overflowing_cost():
    graph = PoseGraph()
    graph.add_node(np.eye(4), 0.0)
    graph.add_node(translation(1.0), 1.0)
    graph.add_factor(ODOMETRY, 0, 1, translation(1e200), np.eye(6))
    with np.errstate(over="ignore"), pytest.raises(NonFiniteCostError):
        graph.optimize()


def test_room_label_argmax_and_ties():
    graph = PoseGraph(class_names=("office", "lab"))
    graph.add_node(np.eye(4), 0.0)
    assert graph.assign_room_label(0, {"office": 0.3, "lab": 0.7}).room.class_name == "lab"
    assert graph.assign_room_label(0, {"office": 0.5, "lab": 0.5}).room.class_name == "office"
    with pytest.raises(LabelError):
        graph.assign_room_label(0, {"kitchen": 1.0})
    with pytest.raises(LabelError):
        graph.assign_room_label(0, {"office": 0.5, "lab": 0.6})


def labeled_graph(classes, positions):
    graph = PoseGraph(class_names=("office", "lab"))
    for i, (name, p) in enumerate(zip(classes, positions)):
        graph.add_node(translation(*p), float(i))
        graph.assign_room_label(i, {name: 1.0})
    return graph


def test_grouping_merges_revisited_room():
    graph = labeled_graph(["office", "lab", "office"], [(0, 0, 0), (5, 0, 0), (0.4, 0, 0)])
    groups = graph.group_nodes_by_room(margin=0.5)
    assert groups == {RoomInstance(0, "office"): [0, 2], RoomInstance(1, "lab"): [1]}


def test_grouping_merges_parallel_revisit_by_submap_extent():
    first = [(float(x), 0.0, 0.0) for x in range(5)]
    away = [(10.0, 0.0, 0.0), (11.0, 0.0, 0.0)]
    revisit = [(float(x), 1.5, 0.0) for x in range(5)]
    classes = ["office"] * 5 + ["lab"] * 2 + ["office"] * 5
    graph = labeled_graph(classes, first + away + revisit)
    assert len(graph.group_nodes_by_room()) == 3

    for node in graph:
        grid = MultiLayerGrid(lattice_geometry(0.1, node.position[:2] - 2.0, node.position[:2] + 2.0))
        node.submap = Submap(grid, node.id, node.pose)
    groups = graph.group_nodes_by_room()
    assert groups == {RoomInstance(0, "office"): [0, 1, 2, 3, 4, 7, 8, 9, 10, 11],
                      RoomInstance(1, "lab"): [5, 6]}


def test_grouping_splits_floors():
    graph = labeled_graph(["office", "lab", "office"], [(0, 0, 0), (5, 0, 0), (0, 0, 3.0)])
    groups = graph.group_nodes_by_room(floor_separation=1.5, margin=0.5)
    assert list(groups.values()) == [[0], [1], [2]]


def test_grouping_requires_labels():
    graph = PoseGraph()
    graph.add_node(np.eye(4), 0.0)
    with pytest.raises(LabelError):
        graph.group_nodes_by_room()


def test_smoothing_majority_vote():
    graph = labeled_graph(["office", "lab", "office"], [(0, 0, 0), (1, 0, 0), (2, 0, 0)])
    assert graph.smooth_room_labels(3) == 1
    assert [n.room.class_name for n in graph] == ["office"] * 3


def test_jsonl_roundtrip_with_payloads(tmp_path):
    graph = labeled_graph(["office", "lab"], [(0, 0, 0), (1, 0.5, 0)])
    graph.add_factor(ODOMETRY, 0, 1, translation(1.0, 0.5), np.diag([1.0, 2, 3, 4, 5, 6]))
    graph.add_loop_closure(1, 0, translation(-1.0, -0.5), 10 * np.eye(6))
    submap = Submap(MultiLayerGrid(GridGeometry(0.1, (0.0, 0.0), 3, 3)), 1, graph.get_node_by_id(1).pose)
    submap.save(str(tmp_path / "submap_0001.exgm"))
    graph.get_node_by_id(1).submap_path = "submap_0001.exgm"
    graph.write_jsonl(tmp_path / "graph.jsonl")

    back = PoseGraph.read_jsonl(tmp_path / "graph.jsonl", class_names=("office", "lab"))
    np.testing.assert_allclose(back.poses(), graph.poses(), atol=1e-12)
    assert [n.room.class_name for n in back] == ["office", "lab"]
    assert back.get_node_by_id(1).submap.capture_node == 1
    assert back.get_node_by_id(0).submap is None
    assert [f.kind for f in back.factors] == [ODOMETRY, LOOP_CLOSURE]
    np.testing.assert_allclose(back.factors[0].information, graph.factors[0].information)
    assert back.cost() == pytest.approx(graph.cost())
