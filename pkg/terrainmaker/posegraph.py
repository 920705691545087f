"""
Semantic pose graph.

Nodes are camera poses in the map frame spaced along the walk, each carrying
an optional room label, submap and keyframe. Factors are relative-pose
measurements (odometry between consecutive nodes, verified loop closures).
:meth:`PoseGraph.optimize` runs Levenberg-Marquardt on SE(3) with node 0
held fixed.

"""
import json
import logging
import os
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from terrainmaker import se3
from terrainmaker.exceptions import (DataError, DisconnectedGraphError, InformationMatrixError,
                                     LabelError, NonFiniteCostError, TimestampError, UnknownNodeError)
from terrainmaker.keyframe import Keyframe, read_keyframe
from terrainmaker.submap import Submap

logger = logging.getLogger(__name__)

DEFAULT_ROOM_CLASSES = ("office", "corridor", "lab", "kitchen", "stairwell", "lobby")

ODOMETRY = "odometry"
LOOP_CLOSURE = "loop_closure"

RoomInstance = namedtuple("RoomInstance", ["instance_id", "class_name"])

_TRIU = np.triu_indices(6)


@dataclass
class RoomLabel:
    class_name: str
    score: float
    distribution: Optional[Dict[str, float]] = None


@dataclass
class GraphNode:
    id: int
    pose: np.ndarray
    stamp: float
    room: Optional[RoomLabel] = None
    submap: Optional[Submap] = None
    keyframe: Optional[Keyframe] = None
    submap_path: Optional[str] = None
    keyframe_path: Optional[str] = None

    @property
    def position(self):
        return self.pose[:3, 3]


@dataclass
class Factor:
    kind: str
    from_id: int
    to_id: int
    relative_pose: np.ndarray
    information: np.ndarray = field(default_factory=lambda: np.eye(6))

    def __post_init__(self):
        if self.kind not in (ODOMETRY, LOOP_CLOSURE):
            raise DataError(f"Factor - unknown kind '{self.kind}'")
        if self.from_id == self.to_id:
            raise DataError(f"Factor - from_id and to_id must differ (both {self.from_id})")
        self.relative_pose = se3.check_pose(self.relative_pose, tol=1e-6)
        self.information = check_information(self.information)


@dataclass
class SpacingPolicy:
    """New nodes are created after ``translation`` meters or ``rotation`` radians."""
    translation: float = 1.0
    rotation: float = np.deg2rad(30.0)


def check_information(info):
    """Raise :class:`InformationMatrixError` unless ``info`` is 6x6 symmetric positive definite."""
    info = np.asarray(info, dtype=float)
    if info.shape != (6, 6) or not np.all(np.isfinite(info)):
        raise InformationMatrixError("information matrix must be a finite 6x6 array")
    if not np.allclose(info, info.T, rtol=0, atol=1e-9 * max(1.0, np.abs(info).max())):
        raise InformationMatrixError("information matrix must be symmetric")
    if np.linalg.eigvalsh(info).min() <= 0:
        raise InformationMatrixError("information matrix must be positive definite")
    return info


class PoseGraph:
    """Pose graph with evenly spaced nodes and room labels.

    :param class_names: Allowed room classes; their order breaks label ties.
    :type class_names: sequence of str
    :param spacing: Node spacing thresholds.
    :type spacing: :class:`SpacingPolicy`
    :param odometry_information: Information matrix given to odometry factors.
    :type odometry_information: numpy array (6, 6)

    Example::

        graph = PoseGraph()
        for t, T in odometry:
            graph.add_node_if_spaced(T, t)
        graph.add_loop_closure(12, 0, T_0_12, 10 * np.eye(6))
        graph, cost = graph.optimize()

    """
    def __init__(self, class_names=DEFAULT_ROOM_CLASSES, spacing=None, odometry_information=None):
        self._class_names = tuple(class_names)
        self._spacing = spacing or SpacingPolicy()
        self._odom_info = check_information(np.eye(6) if odometry_information is None else odometry_information)
        self._nodes: List[GraphNode] = []
        self._factors: List[Factor] = []

    def __iter__(self):
        return iter(self._nodes)

    def __len__(self):
        return len(self._nodes)

    @property
    def nodes(self):
        return self._nodes

    @property
    def factors(self):
        return self._factors

    @property
    def nnodes(self):
        return len(self._nodes)

    @property
    def class_names(self):
        return self._class_names

    @property
    def spacing(self):
        return self._spacing

    def poses(self):
        return np.array([n.pose for n in self._nodes]).reshape(-1, 4, 4)

    def get_node_by_id(self, id):
        """Node with id ``id``.

        :raises UnknownNodeError: if the id does not exist.
        """
        if id < 0 or id >= len(self._nodes):
            raise UnknownNodeError(f"PoseGraph - unknown node id {id}")
        return self._nodes[id]

    def add_node(self, pose, stamp, submap=None, keyframe=None):
        """Append a node without any factor."""
        pose = se3.check_pose(pose)
        if self._nodes and stamp < self._nodes[-1].stamp:
            raise TimestampError(f"PoseGraph.add_node - stamp {stamp} precedes last node stamp "
                                 f"{self._nodes[-1].stamp}")
        node = GraphNode(len(self._nodes), pose.copy(), float(stamp))
        self._nodes.append(node)
        if submap is not None:
            self.attach_submap(node.id, submap)
        if keyframe is not None:
            self.attach_keyframe(node.id, keyframe)
        return node.id

    def is_spaced(self, pose):
        """Whether ``pose`` is far enough from the last node to start a new one."""
        if not self._nodes:
            return True
        rel = se3.inverse(self._nodes[-1].pose) @ pose
        return (np.linalg.norm(rel[:3, 3]) >= self._spacing.translation - 1e-9
                or se3.rotation_angle(rel[:3, :3]) >= self._spacing.rotation - 1e-9)

    def add_node_if_spaced(self, pose, stamp, submap=None, keyframe=None):
        """Create a node (plus odometry factor) when the spacing policy allows.

        :returns: new node id, or ``None`` when no node was created.
        :raises TimestampError: if ``stamp`` precedes the last node stamp.
        """
        pose = se3.check_pose(pose)
        if self._nodes and stamp < self._nodes[-1].stamp:
            raise TimestampError(f"PoseGraph.add_node_if_spaced - stamp {stamp} precedes last node stamp "
                                 f"{self._nodes[-1].stamp}")
        if not self.is_spaced(pose):
            return None
        prev = self._nodes[-1] if self._nodes else None
        node_id = self.add_node(pose, stamp, submap, keyframe)
        if prev is not None:
            rel = se3.orthonormalize(se3.inverse(prev.pose) @ pose)
            self.add_factor(ODOMETRY, prev.id, node_id, rel, self._odom_info)
        logger.debug("PoseGraph - node %d at %s", node_id, np.round(pose[:3, 3], 3))
        return node_id

    def attach_submap(self, node_id, submap):
        node = self.get_node_by_id(node_id)
        assert isinstance(submap, Submap), "PoseGraph.attach_submap - 'submap' should be an instance of Submap"
        submap.capture_node = node_id
        node.submap = submap

    def attach_keyframe(self, node_id, keyframe):
        node = self.get_node_by_id(node_id)
        assert isinstance(keyframe, Keyframe), "PoseGraph.attach_keyframe - 'keyframe' should be an instance of Keyframe"
        keyframe.node_id = node_id
        node.keyframe = keyframe

    def add_factor(self, kind, from_id, to_id, relative_pose, information):
        self.get_node_by_id(from_id)
        self.get_node_by_id(to_id)
        self._factors.append(Factor(kind, int(from_id), int(to_id), np.asarray(relative_pose, dtype=float),
                                    np.asarray(information, dtype=float)))
        return len(self._factors) - 1

    def add_loop_closure(self, from_id, to_id, relative_pose, information):
        """Append a verified loop-closure factor.

        :returns: factor id.
        :raises UnknownNodeError: for ids not in the graph.
        :raises InformationMatrixError: for a non-SPD information matrix.
        """
        fid = self.add_factor(LOOP_CLOSURE, from_id, to_id, relative_pose, information)
        logger.info("PoseGraph - loop closure %d -> %d", from_id, to_id)
        return fid

    def loop_closures(self):
        return [f for f in self._factors if f.kind == LOOP_CLOSURE]

    # ------------------------------------------------------------------
    # Optimization

    def _residual(self, f, poses):
        A = se3.inverse(f.relative_pose) @ se3.inverse(poses[f.from_id])
        return se3.log(A @ poses[f.to_id]), A

    def cost(self, poses=None):
        """Total weighted cost ``sum r^T Omega r``."""
        poses = self.poses() if poses is None else poses
        total = 0.0
        for f in self._factors:
            r, _ = self._residual(f, poses)
            total += float(r @ f.information @ r)
        return total

    def _check_connected(self):
        n = len(self._nodes)
        if n <= 1:
            return
        ij = np.array([(f.from_id, f.to_id) for f in self._factors], dtype=int).reshape(-1, 2)
        adj = sps.coo_matrix((np.ones(ij.shape[0]), (ij[:, 0], ij[:, 1])), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp > 1:
            raise DisconnectedGraphError(f"PoseGraph.optimize - graph has {ncomp} disconnected components")

    def _linearize(self, poses):
        n = (len(self._nodes) - 1) * 6
        rows, cols, vals = [], [], []
        b = np.zeros(n)
        for f in self._factors:
            r, A = self._residual(f, poses)
            Jj = se3.left_jacobian_inv(r) @ se3.adjoint(A)
            blocks = {f.from_id: -Jj, f.to_id: Jj}
            for a, Ja in blocks.items():
                if a == 0:
                    continue
                b[(a - 1) * 6:a * 6] += Ja.T @ f.information @ r
                for c, Jc in blocks.items():
                    if c == 0:
                        continue
                    H = Ja.T @ f.information @ Jc
                    rr, cc = np.meshgrid(np.arange(6) + (a - 1) * 6, np.arange(6) + (c - 1) * 6, indexing="ij")
                    rows.append(rr.ravel())
                    cols.append(cc.ravel())
                    vals.append(H.ravel())
        if rows:
            H = sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(n, n)).tocsc()
        else:
            H = sps.csc_matrix((n, n))
        return H, b

    def optimize(self, max_iters=100, tol=1e-9, lambda_init=1e-4):
        """Levenberg-Marquardt over all node poses except node 0.

        :returns: ``(graph, final_cost)``; the graph is updated in place.
        :raises DisconnectedGraphError: if some node is unreachable from node 0.
        :raises NonFiniteCostError: if the cost becomes NaN or infinite.
        """
        self._check_connected()
        poses = self.poses()
        cost = self.cost(poses)
        if not np.isfinite(cost):
            raise NonFiniteCostError("PoseGraph.optimize - initial cost is not finite")
        logger.info("PoseGraph.optimize - %d nodes, %d factors, initial cost %.6e",
                    len(self._nodes), len(self._factors), cost)
        if len(self._nodes) <= 1 or cost == 0.0:
            return self, cost

        lam = lambda_init
        for it in range(max_iters):
            H, b = self._linearize(poses)
            diag = H.diagonal()
            damped = H + sps.diags(lam * np.maximum(diag, 1e-12), format="csc")
            delta = -spsolve(damped, b)
            if not np.all(np.isfinite(delta)):
                raise NonFiniteCostError("PoseGraph.optimize - non-finite update step")

            trial = poses.copy()
            for k in range(1, len(self._nodes)):
                trial[k] = se3.orthonormalize(se3.exp(delta[(k - 1) * 6:k * 6]) @ poses[k])
            new_cost = self.cost(trial)
            if not np.isfinite(new_cost):
                raise NonFiniteCostError(f"PoseGraph.optimize - cost became {new_cost} at iteration {it}")

            if new_cost < cost:
                change = (cost - new_cost) / max(cost, 1e-300)
                poses, cost = trial, new_cost
                lam *= 0.1
                logger.debug("PoseGraph.optimize - iter %d accepted, cost %.6e, lambda %.1e", it, cost, lam)
                if change < tol or cost < 1e-30:
                    break
            else:
                lam *= 10.0
                logger.debug("PoseGraph.optimize - iter %d rejected, lambda %.1e", it, lam)
                if lam > 1e12:
                    break

        for node, T in zip(self._nodes, poses):
            node.pose = T
        logger.info("PoseGraph.optimize - final cost %.6e", cost)
        return self, cost

    # ------------------------------------------------------------------
    # Room labels

    def assign_room_label(self, node_id, distribution):
        """Store a room-class distribution on a node and label it with the argmax.

        Ties go to the class listed first in ``class_names``.

        :raises LabelError: for unknown classes or a distribution not summing to 1.
        """
        node = self.get_node_by_id(node_id)
        for name, p in distribution.items():
            if name not in self._class_names:
                raise LabelError(f"PoseGraph.assign_room_label - unknown room class '{name}'")
            if not 0.0 <= p <= 1.0:
                raise LabelError(f"PoseGraph.assign_room_label - score {p} of '{name}' outside [0, 1]")
        total = sum(distribution.values())
        if abs(total - 1.0) > 1e-6:
            raise LabelError(f"PoseGraph.assign_room_label - distribution sums to {total}, not 1")
        best = max(self._class_names, key=lambda c: (distribution.get(c, 0.0), -self._class_names.index(c)))
        node.room = RoomLabel(best, float(distribution.get(best, 0.0)), dict(distribution))
        return node

    def smooth_room_labels(self, window=3):
        """Majority vote of class names over ``window`` consecutive nodes.

        A node keeps its own label when the vote is tied.

        :returns: number of relabeled nodes.
        """
        labels = [n.room.class_name if n.room else None for n in self._nodes]
        half = window // 2
        changed = 0
        for i, node in enumerate(self._nodes):
            if node.room is None:
                continue
            votes = {}
            for lab in labels[max(0, i - half):i + half + 1]:
                if lab is not None:
                    votes[lab] = votes.get(lab, 0) + 1
            best = max(votes.values())
            winners = [c for c in self._class_names if votes.get(c, 0) == best]
            if labels[i] not in winners:
                dist = node.room.distribution or {}
                node.room = RoomLabel(winners[0], float(dist.get(winners[0], 0.0)), node.room.distribution)
                changed += 1
        return changed

    def _footprint(self, ids):
        """xy bounding box of the submaps of ``ids`` centered on their current node positions.

        Nodes without a submap contribute their position only.
        """
        lo, hi = [], []
        for i in ids:
            node = self._nodes[i]
            half = np.zeros(2)
            if node.submap is not None:
                g = node.submap.grid.geometry
                half = (g.max_corner - g.min_corner) / 2
            lo.append(node.position[:2] - half)
            hi.append(node.position[:2] + half)
        return np.min(lo, axis=0), np.max(hi, axis=0)

    def group_nodes_by_room(self, floor_separation=1.5, margin=0.0):
        """Partition nodes into room instances.

        Consecutive nodes sharing a class form a run. A run joins an earlier
        instance of the same class when their 2D extents (grown by
        ``margin``) intersect and their mean heights differ by no more than
        ``floor_separation``; otherwise it starts a new instance.

        :returns: ``{RoomInstance: [node ids]}`` in creation order.
        :raises LabelError: if any node is unlabeled.
        """
        for node in self._nodes:
            if node.room is None:
                raise LabelError(f"PoseGraph.group_nodes_by_room - node {node.id} has no room label")

        runs = []
        for node in self._nodes:
            if runs and runs[-1][0] == node.room.class_name:
                runs[-1][1].append(node.id)
            else:
                runs.append((node.room.class_name, [node.id]))

        instances = []
        for class_name, ids in runs:
            xyz = np.array([self._nodes[i].position for i in ids])
            lo, hi = self._footprint(ids)
            lo, hi = lo - margin, hi + margin
            zsum = xyz[:, 2].sum()
            for inst in instances:
                if inst["class"] != class_name:
                    continue
                overlap = np.all(lo <= inst["hi"]) and np.all(inst["lo"] <= hi)
                same_floor = abs(inst["zsum"] / len(inst["ids"]) - zsum / len(ids)) <= floor_separation
                if overlap and same_floor:
                    inst["ids"].extend(ids)
                    inst["lo"] = np.minimum(inst["lo"], lo)
                    inst["hi"] = np.maximum(inst["hi"], hi)
                    inst["zsum"] += zsum
                    break
            else:
                instances.append({"class": class_name, "ids": list(ids), "lo": lo, "hi": hi, "zsum": zsum})

        return {RoomInstance(k, inst["class"]): sorted(inst["ids"]) for k, inst in enumerate(instances)}

    # ------------------------------------------------------------------
    # Persistence

    def write_jsonl(self, filename):
        """Write nodes then factors, one JSON record per line."""
        with open(filename, "w") as fid:
            for node in self._nodes:
                room = None
                if node.room is not None:
                    room = {"class": node.room.class_name, "score": node.room.score,
                            "distribution": node.room.distribution}
                rec = {"id": node.id, "stamp": node.stamp, "pose": se3.to_tum(node.pose).tolist(),
                       "room": room, "submap_path": node.submap_path, "keyframe_path": node.keyframe_path}
                fid.write(json.dumps(rec) + "\n")
            for f in self._factors:
                rec = {"kind": f.kind, "from": f.from_id, "to": f.to_id,
                       "rel_pose": se3.to_tum(f.relative_pose).tolist(),
                       "info": f.information[_TRIU].tolist()}
                fid.write(json.dumps(rec) + "\n")

    @staticmethod
    def read_jsonl(filename, class_names=DEFAULT_ROOM_CLASSES, spacing=None, load_payloads=True):
        """Load a graph written by :meth:`write_jsonl`.

        Payload paths are resolved relative to the file's directory.
        """
        graph = PoseGraph(class_names, spacing)
        base = os.path.dirname(os.path.abspath(filename))
        factors = []
        with open(filename, "r") as fid:
            for lineno, line in enumerate(fid, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as err:
                    raise DataError(f"PoseGraph.read_jsonl - {filename}:{lineno} {err}")
                if "kind" in rec:
                    factors.append(rec)
                    continue
                if rec["id"] != len(graph):
                    raise DataError(f"PoseGraph.read_jsonl - node ids must be dense, got {rec['id']}")
                node_id = graph.add_node(se3.from_tum(rec["pose"]), rec["stamp"])
                node = graph.get_node_by_id(node_id)
                if rec.get("room"):
                    room = rec["room"]
                    node.room = RoomLabel(room["class"], room["score"], room.get("distribution"))
                node.submap_path = rec.get("submap_path")
                node.keyframe_path = rec.get("keyframe_path")
                if load_payloads and node.submap_path:
                    graph.attach_submap(node_id, Submap.load(os.path.join(base, node.submap_path)))
                if load_payloads and node.keyframe_path:
                    graph.attach_keyframe(node_id, read_keyframe(os.path.join(base, node.keyframe_path)))
        for rec in factors:
            info = np.zeros((6, 6))
            info[_TRIU] = rec["info"]
            info = info + np.triu(info, 1).T
            graph.add_factor(rec["kind"], rec["from"], rec["to"], se3.from_tum(rec["rel_pose"]), info)
        return graph

    def __str__(self):
        nloops = len(self.loop_closures())
        rep = f"PoseGraph: {len(self._nodes)} nodes, {len(self._factors) - nloops} odometry / {nloops} loop factors\n"
        for node in self._nodes:
            room = node.room.class_name if node.room else "-"
            rep += (f" {node.id:4d} t={node.stamp:9.3f} xyz={np.round(node.position, 3)} room={room}"
                    f" submap={'y' if node.submap else 'n'} keyframe={'y' if node.keyframe else 'n'}\n")
        return rep
