import dataclasses
import glob
import json
import logging
import os
from dataclasses import dataclass
from time import perf_counter
from typing import List

import numpy as np
from tqdm import tqdm

from terrainmaker.config import PipelineConfig
from terrainmaker.elevation import RollingElevationMap, SensorPose
from terrainmaker.evaluation import (heightmap_to_mesh, point_to_point_error, rpe, sample_mesh,
                                     write_recon_csv, write_rpe_csv)
from terrainmaker.exceptions import ConfigError
from terrainmaker.fusion import RoomTerrainMap, fuse_all_rooms
from terrainmaker.gmw_extensions import EXGMGridMapWriter, HDF5GridMapWriter, read_exgm
from terrainmaker.keyframe import read_keyframe, write_keyframe
from terrainmaker.localization import (LocalizationFix, MapCorrection, detect_loop_closures, localized_pose,
                                       retrieve_candidates, update_correction, verify_and_fix, write_fix_log)
from terrainmaker.parallel import barrier, is_master, map_round_robin
from terrainmaker.pointcloud import PointCloud, read_ply, write_mesh_ply, write_ply
from terrainmaker.posegraph import DEFAULT_ROOM_CLASSES, PoseGraph, RoomInstance
from terrainmaker.pr_extensions import BruteForceRetriever
from terrainmaker.rl_extensions import SimulatedRoomLabeler
from terrainmaker.simworld import (build_scene, corrupt_odometry, generate_gait_trajectory, make_landmarks,
                                   polygon_contains, render_depth_cloud, synth_keyframe, traversability_labels)
from terrainmaker.ta_extensions import StepHeight, SurfaceNormals
from terrainmaker.trajectory import Trajectory
from terrainmaker.traversability import evaluate_classification

# Keyframe noise streams of the revisit walk start here so they never
# coincide with the mapping walk's frames.
_QUERY_FRAME_OFFSET = 1 << 20

# meters around a room map from which reference surface is drawn
_REFERENCE_MARGIN = 0.1


@dataclass
class SimulationRun:
    gt: Trajectory
    odometry: Trajectory
    frames: List[int]


@dataclass
class LocalizationRun:
    gt: Trajectory
    odometry: Trajectory
    localized: Trajectory
    fixes: List[LocalizationFix]
    queries: int

    def position_errors(self):
        return np.linalg.norm(self.localized.positions - self.gt.positions, axis=1)


class TerrainMaker:
    """Runs the mapping pipeline stage by stage on a synthetic walk.

    Every stage reads the artifacts of the previous ones from the output
    directory and writes its own there, so stages can be run separately
    from the command line:

    ==================  =====================================================
    stage               artifacts (under ``config.paths.out``)
    ==================  =====================================================
    simulate            ``scene.json``, ``scene_mesh.ply``, ``gt.tum``,
                        ``odom.tum``, ``labels.jsonl``, ``clouds/``,
                        ``keyframes/``
    build_map           ``map/graph.jsonl`` with submaps and keyframes
    fuse                ``rooms/room_<id>_<class>.exgm``
    traverse            ``traversability/room_<id>_<class>.exgm``
    localize            ``localization/`` (revisit walk, fixes, errors)
    evaluate_*          ``reports/*.csv``
    ==================  =====================================================

    :param config: Pipeline settings.
    :type config: :class:`PipelineConfig`
    :param show_progress: Show tqdm progress bars (master rank only).
    :type show_progress: bool

    """
    def __init__(self, config=None, show_progress=True):
        self._config = config or PipelineConfig()
        assert isinstance(self._config, PipelineConfig), \
            "TerrainMaker - 'config' should be an instance of PipelineConfig"
        self._show_progress = show_progress
        self._spec = None
        self._scene = None
        self._logger = logging.getLogger(__name__)

    @property
    def config(self):
        return self._config

    @property
    def out(self):
        return self._config.paths.out

    @property
    def scene(self):
        if self._scene is None:
            self._spec = self._config.scene.load()
            self._scene = build_scene(self._spec)
        return self._scene

    @property
    def class_names(self):
        return DEFAULT_ROOM_CLASSES

    def _path(self, *parts):
        return os.path.join(self.out, *parts)

    def _require(self, *parts):
        path = self._path(*parts)
        if not os.path.exists(path):
            raise ConfigError(f"input '{path}' not found (run the earlier pipeline stages first)")
        return path

    def _makedirs(self, *parts):
        if is_master():
            os.makedirs(self._path(*parts), exist_ok=True)

    def _progress(self, iterable, desc):
        return tqdm(iterable, desc=desc, disable=not (self._show_progress and is_master()))

    def _start_floor(self, waypoint):
        floors = [room.floor_z for room in self.scene.rooms
                  if polygon_contains(room.polygon, np.reshape(waypoint, (1, 2)))[0]]
        return min(floors) if floors else 0.0

    def _walk(self, waypoints):
        cfg = self._config
        return generate_gait_trajectory(cfg.gait, waypoints, cfg.render.dt, self.scene,
                                        start_floor=self._start_floor(waypoints[0]))

    def _frames(self, n):
        return list(range(0, n, self._config.render.frame_stride))

    # ------------------------------------------------------------------
    # Simulation

    def simulate(self):
        """Generate the mapping walk with its depth clouds, keyframes and room labels."""
        cfg = self._config
        perf_time_begin = perf_counter()
        scene = self.scene
        self._logger.info("TerrainMaker.simulate - %s", scene)

        gt = self._walk(self._spec.waypoints)
        odom = corrupt_odometry(gt, dataclasses.replace(cfg.drift, seed=cfg.seed))
        frames = self._frames(len(gt))
        labels = SimulatedRoomLabeler(self._spec.rooms, cfg.labels.epsilon, cfg.labels.mislabel_rate,
                                      cfg.seed).distributions(gt.positions, self.class_names)
        landmarks = make_landmarks(scene, cfg.keyframe.landmark_density, cfg.seed)
        self._logger.info("TerrainMaker.simulate - %d poses, %d frames, %d landmarks",
                          len(gt), len(frames), len(landmarks))

        self._makedirs("clouds")
        self._makedirs("keyframes")
        barrier()
        if is_master():
            with open(self._path("scene.json"), "w") as fid:
                json.dump(dataclasses.asdict(self._spec), fid, indent=1)
            write_mesh_ply(self._path("scene_mesh.ply"), scene.mesh)
            gt.write_tum(self._path("gt.tum"))
            odom.write_tum(self._path("odom.tum"))
            with open(self._path("labels.jsonl"), "w") as fid:
                for stamp, dist in zip(gt.stamps, labels):
                    fid.write(json.dumps({"stamp": round(float(stamp), 6), "distribution": dist},
                                         sort_keys=True) + "\n")

        render = cfg.render
        kf = cfg.keyframe
        for k in self._progress(frames, "simulate"):
            stamp, pose = gt[k]
            cloud = render_depth_cloud(scene, pose, render.intrinsics, render.noise_sigma, cfg.seed,
                                       render.max_range, stamp, frame=k)
            keyframe = synth_keyframe(scene, pose, kf.intrinsics, landmarks, kf.pixel_noise, kf.bit_flip_rate,
                                      cfg.seed, -1, stamp, kf.max_range, frame=k)
            if is_master():
                write_ply(self._path("clouds", f"frame_{k:05d}.ply"), cloud)
                write_keyframe(self._path("keyframes", f"frame_{k:05d}.exkf"), keyframe)
            if len(cloud) == 0:
                self._logger.warning("TerrainMaker.simulate - frame %d rendered no points", k)
        barrier()
        self._logger.info("TerrainMaker.simulate - done in %.2f s", perf_counter() - perf_time_begin)
        return SimulationRun(gt, odom, frames)

    # ------------------------------------------------------------------
    # Mapping

    def _read_labels(self):
        with open(self._require("labels.jsonl")) as fid:
            return [json.loads(line)["distribution"] for line in fid if line.strip()]

    def build_map(self):
        """Integrate the walk's clouds into a rolling map and build the labeled pose graph.

        Nodes are created by the spacing policy; each takes a submap
        snapshot, the frame's keyframe and room label. With loop closures
        enabled every new node is verified against older ones, and the graph
        is optimized at the end.
        """
        cfg = self._config
        perf_time_begin = perf_counter()
        traj = Trajectory.read_tum(self._require("odom.tum" if cfg.mapping.use_odometry else "gt.tum"))
        labels = self._read_labels()
        if len(labels) != len(traj):
            raise ConfigError("TerrainMaker.build_map - labels.jsonl and the trajectory differ in length")

        rolling = RollingElevationMap(cfg.mapping.rolling, traj.poses[0][:2, 3])
        graph = PoseGraph(self.class_names, cfg.mapping.spacing, cfg.graph.odometry_information)
        retriever = BruteForceRetriever()
        loop_information = cfg.graph.loop_information * cfg.graph.odometry_information

        for k in self._progress(self._frames(len(traj)), "map"):
            stamp, pose = traj[k]
            rolling.recenter(pose[:2, 3])
            cloud = read_ply(self._require("clouds", f"frame_{k:05d}.ply"))
            rolling.integrate_cloud(cloud, SensorPose(pose, stamp))
            if not graph.is_spaced(pose):
                continue
            submap = rolling.snapshot_submap(pose, cfg.mapping.submap_side)
            keyframe = read_keyframe(self._require("keyframes", f"frame_{k:05d}.exkf"))
            node_id = graph.add_node_if_spaced(pose, stamp, submap, keyframe)
            graph.assign_room_label(node_id, labels[k])
            if cfg.graph.loop_closures:
                detect_loop_closures(graph, node_id, retriever, cfg.ransac, cfg.graph.loop_candidates,
                                     cfg.graph.loop_exclusion, loop_information, cfg.seed)

        if cfg.labels.smooth_window > 1:
            graph.smooth_room_labels(cfg.labels.smooth_window)
        graph, cost = graph.optimize(cfg.graph.max_iters, cfg.graph.tol, cfg.graph.lambda_init)
        self._logger.info("TerrainMaker.build_map - %d nodes, %d loop closures, final cost %.3e",
                          len(graph), len(graph.loop_closures()), cost)

        self._makedirs("map")
        if is_master():
            for node in graph:
                node.submap_path = f"submap_{node.id:04d}.exgm"
                node.keyframe_path = f"keyframe_{node.id:04d}.exkf"
                node.submap.save(self._path("map", node.submap_path))
                write_keyframe(self._path("map", node.keyframe_path), node.keyframe)
            graph.write_jsonl(self._path("map", "graph.jsonl"))
        barrier()
        self._logger.info("TerrainMaker.build_map - done in %.2f s", perf_counter() - perf_time_begin)
        return graph

    def read_graph(self, load_payloads=True):
        return PoseGraph.read_jsonl(self._require("map", "graph.jsonl"), self.class_names,
                                    self._config.mapping.spacing, load_payloads)

    # ------------------------------------------------------------------
    # Fusion and traversability

    @staticmethod
    def _room_filename(room):
        return f"room_{room.instance_id:02d}_{room.class_name}.exgm"

    def _write_rooms(self, maps, folder):
        self._makedirs(folder)
        if is_master():
            for m in maps:
                filename = self._path(folder, self._room_filename(m.room))
                EXGMGridMapWriter(filename).write(m.grid, m.metadata())
                if self._config.paths.export_hdf5:
                    HDF5GridMapWriter(os.path.splitext(filename)[0] + ".hdf5").write(m.grid, m.metadata())
        barrier()

    def read_rooms(self, folder="rooms"):
        self._require(folder)
        maps = []
        for filename in sorted(glob.glob(self._path(folder, "room_*.exgm"))):
            grid, meta = read_exgm(filename)
            maps.append(RoomTerrainMap(RoomInstance(meta["instance_id"], meta["class"]), grid, meta["node_ids"]))
        return maps

    def fuse(self, graph=None):
        """One median-fused terrain map per room instance of the optimized graph."""
        cfg = self._config
        graph = graph or self.read_graph()
        maps = fuse_all_rooms(graph, cfg.fusion.floor_separation, cfg.fusion.margin)
        self._write_rooms(maps, "rooms")
        return maps

    def _score_room(self, room):
        t = self._config.traversability
        StepHeight(t.params).score(room)
        baseline = SurfaceNormals(t.normals_fit_radius, np.deg2rad(t.normals_max_slope_deg)).score(room.grid.copy())
        room.grid.add_layer("traversability_normals", baseline.scores)
        return room

    def traverse(self, maps=None):
        """Score every fused room map with the step-height method and the normals baseline."""
        maps = maps if maps is not None else self.read_rooms("rooms")
        maps = map_round_robin(self._score_room, maps)
        self._write_rooms(maps, "traversability")
        for m in maps:
            s = m.grid["traversability"]
            known = np.isfinite(s)
            self._logger.info("TerrainMaker.traverse - room %d (%s): %d cells, %.1f%% traversable at 0.5",
                              m.instance_id, m.class_name, int(known.sum()),
                              100.0 * float(np.mean(s[known] >= 0.5)) if known.any() else 0.0)
        return maps

    # ------------------------------------------------------------------
    # Localization

    def localize(self, graph=None):
        """Walk the scene again, offset sideways, with drifting odometry and relocalize against the map.

        A query keyframe is taken every ``query_spacing`` meters of odometry
        travel; the first verified candidate resets the map-from-odom
        correction.
        """
        cfg = self._config
        loc = cfg.localization
        kf = cfg.keyframe
        perf_time_begin = perf_counter()
        graph = graph or self.read_graph()
        nodes = {node.id: node for node in graph if node.keyframe is not None}
        map_keyframes = [node.keyframe for node in nodes.values()]
        scene = self.scene

        waypoints = np.asarray(self._spec.waypoints, dtype=float) + np.array([0.0, loc.revisit_offset])
        gt = self._walk(waypoints)
        odom = corrupt_odometry(gt, dataclasses.replace(cfg.drift, seed=cfg.seed + 1))
        landmarks = make_landmarks(scene, kf.landmark_density, cfg.seed)
        retriever = BruteForceRetriever()

        correction = MapCorrection()
        fixes, localized = [], np.empty_like(odom.poses)
        traveled, queries = np.inf, 0
        for k in self._progress(range(len(odom)), "localize"):
            stamp, odom_pose = odom[k]
            if k > 0:
                traveled += np.linalg.norm(odom_pose[:3, 3] - odom.poses[k - 1][:3, 3])
            if traveled >= loc.query_spacing:
                traveled = 0.0
                queries += 1
                query = synth_keyframe(scene, gt.poses[k], kf.intrinsics, landmarks, kf.pixel_noise,
                                       kf.bit_flip_rate, cfg.seed, -1, stamp, kf.max_range,
                                       frame=_QUERY_FRAME_OFFSET + k)
                for node_id, score in retrieve_candidates(query, map_keyframes, loc.candidates, retriever):
                    node = nodes[node_id]
                    fix = verify_and_fix(query, node.keyframe, node.pose, cfg.ransac, retriever, cfg.seed)
                    if fix is not None:
                        correction = update_correction(correction, fix, odom_pose, stamp, loc.fix_window)
                        fixes.append(fix)
                        break
                else:
                    self._logger.debug("TerrainMaker.localize - no fix at t=%.3f", stamp)
            localized[k] = localized_pose(correction, odom_pose)

        run = LocalizationRun(gt, odom, Trajectory(odom.stamps, localized), fixes, queries)
        errors = run.position_errors()
        self._logger.info("TerrainMaker.localize - %d fixes from %d queries over %.1f m, "
                          "mean error %.3f m (odometry only %.3f m)", len(fixes), queries,
                          gt.path_lengths()[-1], errors.mean(),
                          np.linalg.norm(odom.positions - gt.positions, axis=1).mean())
        if queries and not fixes:
            self._logger.warning("TerrainMaker.localize - no query could be localized")

        self._makedirs("localization")
        if is_master():
            gt.write_tum(self._path("localization", "revisit_gt.tum"))
            odom.write_tum(self._path("localization", "revisit_odom.tum"))
            run.localized.write_tum(self._path("localization", "localized.tum"))
            write_fix_log(self._path("localization", "fixes.csv"), fixes)
            with open(self._path("localization", "errors.csv"), "w") as fid:
                fid.write("stamp,position_error\n")
                for stamp, err in zip(gt.stamps, errors):
                    fid.write(f"{stamp:.6f},{err:.6f}\n")
        barrier()
        self._logger.info("TerrainMaker.localize - done in %.2f s", perf_counter() - perf_time_begin)
        return run

    # ------------------------------------------------------------------
    # Evaluation

    def evaluate_rpe(self, estimate=None, ground_truth=None):
        """RPE of an estimated trajectory (default: the simulated odometry) at every configured distance."""
        ev = self._config.evaluation
        est = Trajectory.read_tum(estimate or self._require("odom.tum"))
        gt = Trajectory.read_tum(ground_truth or self._require("gt.tum"))
        results = [rpe(est, gt, d, ev.max_dt) for d in ev.distances]
        self._makedirs("reports")
        if is_master():
            write_rpe_csv(self._path("reports", "rpe.csv"), results)
        return results

    def evaluate_reconstruction(self, maps=None):
        """Point-to-point error of every fused room map against the scene surface, in centimeters.

        The map mesh is sampled at ``sample_density`` with the steep-surface
        filter; the reference is the scene mesh around the map, vertical faces
        included, sampled at ``reference_density``.
        """
        cfg = self._config
        ev = cfg.evaluation
        maps = maps if maps is not None else self.read_rooms("rooms")
        max_slope = np.deg2rad(ev.max_slope_deg)
        mesh = self.scene.mesh
        corners = mesh.vertices[mesh.triangles][:, :, :2]
        tri_lo, tri_hi = corners.min(axis=1), corners.max(axis=1)
        errors = {}
        for m in maps:
            lo = np.asarray(m.grid.geometry.min_corner) - _REFERENCE_MARGIN
            hi = np.asarray(m.grid.geometry.max_corner) + _REFERENCE_MARGIN
            near = np.all((tri_lo <= hi) & (tri_hi >= lo), axis=1)
            reference = sample_mesh(mesh.subset(near), ev.reference_density, cfg.seed + 1)
            inside = np.all((reference.points[:, :2] >= lo) & (reference.points[:, :2] <= hi), axis=1)
            sampled = sample_mesh(heightmap_to_mesh(m.grid, ev.max_quad_span), ev.sample_density, cfg.seed, max_slope)
            errors[os.path.splitext(self._room_filename(m.room))[0]] = \
                point_to_point_error(sampled, PointCloud(reference.points[inside], frame="map"))
        for name, err in errors.items():
            self._logger.info("TerrainMaker.evaluate_reconstruction - %s: mean %.3f cm, p90 %.3f cm, max %.3f cm",
                              name, err.mean, err.p90, err.max)
        self._makedirs("reports")
        if is_master():
            write_recon_csv(self._path("reports", "recon.csv"), errors)
        return errors

    def evaluate_traversability(self, maps=None):
        """Precision/recall/F sweeps of both scoring methods against analytic scene labels."""
        cfg = self._config
        t = cfg.traversability
        maps = maps if maps is not None else self.read_rooms("traversability")
        truth, preds = [], {"step_height": [], "surface_normals": []}
        for m in maps:
            top = np.nanmax(m.grid.elevation) if m.grid.known_mask().any() else 0.0
            labels = traversability_labels(self.scene, m.grid.geometry, t.stride_radius, t.step_height,
                                           below=top + 0.05)
            # cells the map never observed are not evaluated
            truth.append(np.where(m.grid.known_mask(), labels, np.nan).ravel())
            preds["step_height"].append(m.grid["traversability"].ravel())
            preds["surface_normals"].append(m.grid["traversability_normals"].ravel())
        truth = np.concatenate(truth)
        thresholds = np.round(np.linspace(0.0, 1.0, cfg.evaluation.thresholds), 10)
        reports = {name: evaluate_classification(np.concatenate(p), truth, thresholds) for name, p in preds.items()}
        self._makedirs("reports")
        if is_master():
            for name, report in reports.items():
                report.write_csv(self._path("reports", f"traversability_{name}.csv"))
        for name, report in reports.items():
            self._logger.info("TerrainMaker.evaluate_traversability - %s: best F %.3f at threshold %.2f",
                              name, report.best_f, report.best_threshold)
        return reports
