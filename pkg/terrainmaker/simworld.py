"""
Deterministic synthetic walking world.

Scenes are made of room floors (horizontal polygons, visible from above
only) and solid boxes (walls, obstacles and staircase steps). From a scene
this module derives the analytic heightfield and its triangle mesh, gait-like
camera trajectories, ray-cast depth clouds, drifting odometry, synthetic
keyframes and room-label distributions.

All randomness comes from ``numpy.random.Generator(Philox)`` keyed by a seed
and a stream id, so every generator is a pure function of its inputs.

Camera poses are optical frames (x right, y down, z forward) in the world
frame; the world is z-up.

"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from matplotlib.path import Path

from terrainmaker import se3
from terrainmaker.evaluation import TriMesh, sample_mesh
from terrainmaker.exceptions import ConfigError
from terrainmaker.gridmap import MultiLayerGrid
from terrainmaker.keyframe import DESCRIPTOR_BYTES, CameraIntrinsics, Keyframe
from terrainmaker.pointcloud import PointCloud
from terrainmaker.posegraph import DEFAULT_ROOM_CLASSES
from terrainmaker.trajectory import Trajectory
from terrainmaker.traversability import max_height_diff_map

logger = logging.getLogger(__name__)

CORRIDOR = "corridor"

# Stream ids keeping the random sequences of different generators apart.
STREAM_RENDER = 1
STREAM_ODOMETRY = 2
STREAM_LANDMARKS = 3
STREAM_KEYFRAME = 4
STREAM_LABELS = 5

_BOUNDARY_TOL = 1e-9

# Optical camera axes expressed in a forward-looking (x forward, z up) body frame.
_R_BODY_OPTICAL = np.array([[0.0, 0.0, 1.0],
                            [-1.0, 0.0, 0.0],
                            [0.0, -1.0, 0.0]])


def make_rng(seed, *stream):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed)] + [int(s) for s in stream])))


# ----------------------------------------------------------------------
# Scene description

@dataclass
class RoomSpec:
    name: str
    class_name: str
    polygon: List[Tuple[float, float]]
    floor_z: float = 0.0


@dataclass
class WallSpec:
    start: Tuple[float, float]
    end: Tuple[float, float]
    height: float = 1.0
    thickness: float = 0.1
    base_z: float = 0.0


@dataclass
class StaircaseSpec:
    """Straight staircase climbing along ``yaw`` from ``start`` (center of the first riser's foot)."""
    start: Tuple[float, float]
    riser: float
    tread: float
    steps: int
    width: float
    yaw: float = 0.0
    base_z: float = 0.0


@dataclass
class ObstacleSpec:
    center: Tuple[float, float]
    size: Tuple[float, float]
    height: float
    yaw: float = 0.0
    base_z: float = 0.0


@dataclass
class SceneSpec:
    name: str = "scene"
    rooms: List[RoomSpec] = field(default_factory=list)
    walls: List[WallSpec] = field(default_factory=list)
    staircases: List[StaircaseSpec] = field(default_factory=list)
    obstacles: List[ObstacleSpec] = field(default_factory=list)
    waypoints: List[Tuple[float, float]] = field(default_factory=list)

    def validate(self):
        """Raise :class:`ConfigError` for malformed rooms, walls, staircases or obstacles."""
        if not self.rooms:
            raise ConfigError(f"SceneSpec '{self.name}' - at least one room is required")
        for room in self.rooms:
            poly = np.asarray(room.polygon, dtype=float)
            if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
                raise ConfigError(f"SceneSpec - room '{room.name}' polygon needs >= 3 (x, y) vertices")
            if not _is_simple(poly):
                raise ConfigError(f"SceneSpec - room '{room.name}' polygon is not simple")
        for wall in self.walls:
            if not (wall.height > 0 and wall.thickness > 0):
                raise ConfigError("SceneSpec - wall height and thickness must be > 0")
            if np.allclose(wall.start, wall.end):
                raise ConfigError("SceneSpec - wall start and end coincide")
        for st in self.staircases:
            if not (st.riser > 0 and st.tread > 0 and st.width > 0 and st.steps >= 1):
                raise ConfigError("SceneSpec - staircase riser, tread, width must be > 0 and steps >= 1")
        for ob in self.obstacles:
            if not (ob.size[0] > 0 and ob.size[1] > 0 and ob.height > 0):
                raise ConfigError("SceneSpec - obstacle size and height must be > 0")
        return self


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    return (orient(p1, p2, q1) * orient(p1, p2, q2) < 0) and (orient(q1, q2, p1) * orient(q1, q2, p2) < 0)


def _is_simple(poly):
    n = poly.shape[0]
    if abs(_signed_area(poly)) < 1e-12:
        return False
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]):
                return False
    return True


def _signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def triangulate_polygon(poly):
    """Ear-clipping triangulation of a simple polygon; triangles are counter-clockwise."""
    poly = np.asarray(poly, dtype=float)
    idx = list(range(poly.shape[0]))
    if _signed_area(poly) < 0:
        idx.reverse()
    triangles = []
    guard = 0
    while len(idx) > 3 and guard < 10 * poly.shape[0]**2:
        guard += 1
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cross <= 1e-14:
                continue
            others = [poly[j] for j in idx if j not in (i0, i1, i2)]
            if any(_in_triangle(p, a, b, c) for p in others):
                continue
            triangles.append((i0, i1, i2))
            idx.pop(k)
            break
    triangles.append(tuple(idx))
    return np.array(triangles, dtype=np.int64)


def _in_triangle(p, a, b, c):
    def side(u, v, w):
        return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])
    return side(a, b, p) >= 0 and side(b, c, p) >= 0 and side(c, a, p) >= 0


def polygon_contains(polygon, xy, tol=_BOUNDARY_TOL):
    """Points of ``xy`` inside ``polygon`` or on its boundary."""
    poly = np.asarray(polygon, dtype=float)
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    inside = Path(poly).contains_points(xy)
    n = poly.shape[0]
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        ab = b - a
        s = np.clip(((xy - a) @ ab) / (ab @ ab), 0.0, 1.0)
        inside |= np.linalg.norm(xy - (a + s[:, None] * ab), axis=1) <= tol
    return inside


# ----------------------------------------------------------------------
# Built scene

class Scene:
    """Analytic scene built from a :class:`SceneSpec`.

    Boxes are stored as ``(cx, cy, half_x, half_y, yaw, z0, z1)``.
    """
    def __init__(self, spec):
        self._spec = spec.validate()
        boxes = []
        for w in spec.walls:
            s, e = np.asarray(w.start, dtype=float), np.asarray(w.end, dtype=float)
            length = np.linalg.norm(e - s)
            c = (s + e) / 2
            yaw = np.arctan2(e[1] - s[1], e[0] - s[0])
            boxes.append((c[0], c[1], length / 2 + w.thickness / 2, w.thickness / 2, yaw, w.base_z, w.base_z + w.height))
        for st in spec.staircases:
            u = np.array([np.cos(st.yaw), np.sin(st.yaw)])
            for k in range(st.steps):
                c = np.asarray(st.start, dtype=float) + (k + 0.5) * st.tread * u
                boxes.append((c[0], c[1], st.tread / 2, st.width / 2, st.yaw, st.base_z,
                              st.base_z + (k + 1) * st.riser))
        for ob in spec.obstacles:
            boxes.append((ob.center[0], ob.center[1], ob.size[0] / 2, ob.size[1] / 2, ob.yaw,
                          ob.base_z, ob.base_z + ob.height))
        self._boxes = np.array(boxes, dtype=float).reshape(-1, 7)
        self._mesh = None

    @property
    def spec(self):
        return self._spec

    @property
    def rooms(self):
        return self._spec.rooms

    @property
    def boxes(self):
        return self._boxes

    @property
    def mesh(self):
        if self._mesh is None:
            self._mesh = self._build_mesh()
        return self._mesh

    def _box_local(self, k, xy):
        cx, cy, _, _, yaw = self._boxes[k, :5]
        c, s = np.cos(yaw), np.sin(yaw)
        d = xy - np.array([cx, cy])
        return np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1]], axis=1)

    def height(self, x, y, below=None):
        """Top surface height at ``(x, y)``; ``NaN`` where no surface exists.

        With ``below``, only surfaces whose top is at or under ``below`` count
        (the floor a walker at that height stands on).
        """
        x = np.asarray(x, dtype=float)
        shape = x.shape
        xy = np.stack([x.reshape(-1), np.asarray(y, dtype=float).reshape(-1)], axis=1)
        h = np.full(xy.shape[0], np.nan)
        for room in self._spec.rooms:
            if below is not None and room.floor_z > below + 1e-12:
                continue
            m = polygon_contains(room.polygon, xy)
            h = np.fmax(h, np.where(m, room.floor_z, np.nan))
        for k in range(self._boxes.shape[0]):
            hx, hy, z1 = self._boxes[k, 2], self._boxes[k, 3], self._boxes[k, 6]
            if below is not None and z1 > below + 1e-12:
                continue
            loc = self._box_local(k, xy)
            m = (np.abs(loc[:, 0]) < hx) & (np.abs(loc[:, 1]) < hy)
            h = np.fmax(h, np.where(m, z1, np.nan))
        return h.reshape(shape)

    def room_at(self, position):
        """The room containing a 3D position (highest floor not above it), or ``None``."""
        best = None
        for room in self._spec.rooms:
            if room.floor_z > position[2] + 1e-9:
                continue
            if polygon_contains(room.polygon, np.asarray(position[:2]).reshape(1, 2))[0]:
                if best is None or room.floor_z > best.floor_z:
                    best = room
        return best

    def raycast(self, origins, directions):
        """Ray parameter ``t`` of the first surface hit (``inf`` on a miss)."""
        o = np.asarray(origins, dtype=float).reshape(-1, 3)
        d = np.asarray(directions, dtype=float).reshape(-1, 3)
        if o.shape[0] == 1 and d.shape[0] > 1:
            o = np.repeat(o, d.shape[0], axis=0)
        best = np.full(d.shape[0], np.inf)

        with np.errstate(divide="ignore", invalid="ignore"):
            for room in self._spec.rooms:
                t = (room.floor_z - o[:, 2]) / d[:, 2]
                ok = (d[:, 2] < 0) & (o[:, 2] > room.floor_z) & (t > 1e-9) & (t < best)
                if ok.any():
                    hit = o[ok, :2] + t[ok, None] * d[ok, :2]
                    inside = polygon_contains(room.polygon, hit)
                    idx = np.flatnonzero(ok)[inside]
                    best[idx] = t[idx]

            for k in range(self._boxes.shape[0]):
                hx, hy, _, z0, z1 = self._boxes[k, 2:7]
                lo_ = self._box_local(k, o[:, :2])
                c, s = np.cos(self._boxes[k, 4]), np.sin(self._boxes[k, 4])
                ld = np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]], axis=1)
                lo = np.stack([lo_[:, 0], lo_[:, 1], o[:, 2]], axis=1)
                bmin = np.array([-hx, -hy, z0])
                bmax = np.array([hx, hy, z1])
                t1 = (bmin - lo) / ld
                t2 = (bmax - lo) / ld
                zero = ld == 0
                inside_slab = (lo >= bmin) & (lo <= bmax)
                t1 = np.where(zero, np.where(inside_slab, -np.inf, np.inf), t1)
                t2 = np.where(zero, np.where(inside_slab, np.inf, -np.inf), t2)
                tnear = np.max(np.minimum(t1, t2), axis=1)
                tfar = np.min(np.maximum(t1, t2), axis=1)
                hit = (tnear <= tfar) & (tnear > 1e-9) & (tnear < best)
                best[hit] = tnear[hit]
        return best

    def _build_mesh(self):
        vertices, triangles = [], []
        base = 0
        for room in self._spec.rooms:
            poly = np.asarray(room.polygon, dtype=float)
            tris = triangulate_polygon(poly)
            vertices.append(np.column_stack([poly, np.full(poly.shape[0], room.floor_z)]))
            triangles.append(tris + base)
            base += poly.shape[0]
        # top face then four sides, all facing outward
        faces = np.array([[4, 5, 6], [4, 6, 7],
                          [0, 1, 5], [0, 5, 4], [1, 2, 6], [1, 6, 5],
                          [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]])
        for cx, cy, hx, hy, yaw, z0, z1 in self._boxes:
            c, s = np.cos(yaw), np.sin(yaw)
            local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
            xy = local @ np.array([[c, s], [-s, c]]) + np.array([cx, cy])
            vertices.append(np.vstack([np.column_stack([xy, np.full(4, z0)]), np.column_stack([xy, np.full(4, z1)])]))
            triangles.append(faces + base)
            base += 8
        return TriMesh(np.vstack(vertices), np.vstack(triangles))

    def __str__(self):
        return (f"Scene '{self._spec.name}': {len(self._spec.rooms)} rooms, {len(self._spec.walls)} walls, "
                f"{len(self._spec.staircases)} staircases, {len(self._spec.obstacles)} obstacles")


def build_scene(spec):
    """Validate ``spec`` and build its analytic :class:`Scene`.

    :raises ConfigError: for an invalid spec.
    """
    assert isinstance(spec, SceneSpec), "build_scene - 'spec' should be an instance of SceneSpec"
    scene = Scene(spec)
    logger.info("build_scene - %s", scene)
    return scene


def rasterize_heightfield(scene, geometry, below=None, frame="map"):
    """Analytic heights sampled at the cell centers of ``geometry``."""
    X, Y = geometry.cell_centers()
    grid = MultiLayerGrid(geometry, frame=frame)
    grid.add_layer("elevation", scene.height(X, Y, below=below))
    return grid


def traversability_labels(scene, geometry, stride_radius=0.20, step_height=0.20, below=None):
    """Ground-truth labels: 1 where the true height step within ``stride_radius``
    does not exceed ``step_height``, 0 where it does, ``NaN`` off the scene."""
    grid = rasterize_heightfield(scene, geometry, below)
    h_max, _, _ = max_height_diff_map(grid, stride_radius)
    return np.where(np.isfinite(h_max), (h_max <= step_height + 1e-12).astype(float), np.nan)


# ----------------------------------------------------------------------
# Trajectories

@dataclass
class GaitConfig:
    """Walking motion of a thigh-mounted camera.

    The camera rides ``mount_height`` above the floor, oscillates in pitch
    and height at ``step_frequency`` and is tilted down by ``camera_tilt``.
    """
    speed: float = 0.8
    step_frequency: float = 1.0
    pitch_amplitude: float = 0.15
    bob_amplitude: float = 0.02
    foot_strike_amplitude: float = 20.0
    mount_height: float = 0.5
    camera_tilt: float = 0.5
    max_yaw_rate: float = 1.5
    max_angular_rate: float = 5.0
    step_up: float = 0.35
    ground_time_constant: float = 0.2

    def __post_init__(self):
        if not self.speed > 0 or not self.step_frequency > 0:
            raise ConfigError("GaitConfig - 'speed' and 'step_frequency' must be > 0")
        if min(self.pitch_amplitude, self.bob_amplitude, self.foot_strike_amplitude) < 0:
            raise ConfigError("GaitConfig - amplitudes must be >= 0")

    @property
    def mount_offset(self):
        """Camera-from-thigh offset (optical axes, tilted down)."""
        return se3.make_pose(se3.rot_y(self.camera_tilt) @ _R_BODY_OPTICAL)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def generate_gait_trajectory(cfg, waypoints, dt, scene=None, start_stamp=0.0, start_floor=0.0):
    """Ground-truth camera trajectory walking along ``waypoints``.

    The base follows the polyline at constant speed with a rate-limited
    heading; the thigh pitches and bobs at the step frequency; the camera is
    the thigh pose composed with the mount offset. With a scene the base
    follows the floor it stands on.

    Foot-strike times and a vertical acceleration trace are attached as
    metadata.
    """
    assert isinstance(cfg, GaitConfig), "generate_gait_trajectory - 'cfg' should be an instance of GaitConfig"
    wp = np.asarray(waypoints, dtype=float).reshape(-1, 2)
    if wp.shape[0] < 2:
        raise ConfigError("generate_gait_trajectory - at least two waypoints are required")
    if not dt > 0:
        raise ConfigError("generate_gait_trajectory - 'dt' must be > 0")

    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    n = int(np.floor(cum[-1] / (cfg.speed * dt) + 1e-9)) + 1
    t = np.arange(n) * dt
    s = np.minimum(cfg.speed * t, cum[-1])
    x = np.interp(s, cum, wp[:, 0])
    y = np.interp(s, cum, wp[:, 1])
    iseg = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, wp.shape[0] - 2)
    heading = np.arctan2(wp[iseg + 1, 1] - wp[iseg, 1], wp[iseg + 1, 0] - wp[iseg, 0])

    yaw = np.empty(n)
    yaw[0] = heading[0]
    step = cfg.max_yaw_rate * dt
    for k in range(1, n):
        yaw[k] = yaw[k - 1] + np.clip(_wrap(heading[k] - yaw[k - 1]), -step, step)

    ground = np.zeros(n)
    if scene is not None:
        # the support surface is looked up from the unfiltered stance height;
        # only the camera height is smoothed
        stance = level = start_floor
        alpha = dt / (cfg.ground_time_constant + dt)
        for k in range(n):
            h = scene.height(x[k], y[k], below=stance + cfg.step_up)
            stance = float(h) if np.isfinite(h) else stance
            level = stance if k == 0 else level + alpha * (stance - level)
            ground[k] = level
    else:
        ground[:] = start_floor

    phase = 2 * np.pi * cfg.step_frequency * t
    z = ground + cfg.mount_height + cfg.bob_amplitude * np.sin(phase)
    pitch = cfg.pitch_amplitude * np.sin(phase)
    mount = cfg.mount_offset
    poses = np.empty((n, 4, 4))
    for k in range(n):
        thigh = se3.make_pose(se3.rot_z(yaw[k]) @ se3.rot_y(pitch[k]), [x[k], y[k], z[k]])
        poses[k] = thigh @ mount

    strikes = (np.arange(int(t[-1] * cfg.step_frequency) + 1) + 0.75) / cfg.step_frequency
    strikes = strikes[strikes <= t[-1]]
    accel = -cfg.bob_amplitude * (2 * np.pi * cfg.step_frequency)**2 * np.sin(phase)
    for ts in strikes:
        accel += cfg.foot_strike_amplitude * np.exp(-((t - ts) / 0.02)**2)

    traj = Trajectory(t + start_stamp, poses, {"foot_strike_stamps": strikes + start_stamp,
                                               "vertical_acceleration": accel})
    rates = angular_rates(traj)
    if rates.size and rates.max() > cfg.max_angular_rate:
        logger.warning("generate_gait_trajectory - peak angular rate %.2f rad/s exceeds %.2f rad/s",
                       rates.max(), cfg.max_angular_rate)
    return traj


def angular_rates(traj):
    """Finite-difference angular speed (rad/s) between consecutive poses."""
    P = traj.poses
    if P.shape[0] < 2:
        return np.zeros(0)
    rel = np.einsum("nji,njk->nik", P[:-1, :3, :3], P[1:, :3, :3])
    ang = np.arccos(np.clip((np.trace(rel, axis1=1, axis2=2) - 1) / 2, -1.0, 1.0))
    return ang / np.diff(traj.stamps)


@dataclass
class DriftConfig:
    """Odometry corruption: translation scale error, yaw drift per meter and white noise."""
    scale_drift: float = 0.04
    yaw_drift: float = 0.0
    translation_noise: float = 0.0
    rotation_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.scale_drift, self.yaw_drift, self.translation_noise, self.rotation_noise) < 0:
            raise ConfigError("DriftConfig - drift and noise values must be >= 0")

    @property
    def is_zero(self):
        return self.scale_drift == 0 and self.yaw_drift == 0 and \
            self.translation_noise == 0 and self.rotation_noise == 0


def corrupt_odometry(gt, cfg):
    """Drifting odometry obtained by re-integrating corrupted relative motions.

    Each step's translation is scaled by ``1 + scale_drift``, a yaw error of
    ``yaw_drift`` rad per meter (about the world vertical) is added, and
    seeded white noise scaled by the square root of the step length is
    applied. The first pose is exact.
    """
    assert isinstance(gt, Trajectory), "corrupt_odometry - 'gt' should be an instance of Trajectory"
    if cfg.is_zero or len(gt) == 0:
        return gt.copy()
    rng = make_rng(cfg.seed, STREAM_ODOMETRY)
    P = gt.poses
    out = np.empty_like(P)
    out[0] = P[0]
    for k in range(1, len(gt)):
        rel = se3.inverse(P[k - 1]) @ P[k]
        step = np.linalg.norm(rel[:3, 3])
        dpsi = cfg.yaw_drift * step + cfg.rotation_noise * np.sqrt(step) * rng.standard_normal()
        R_prev = P[k - 1][:3, :3]
        R_err = R_prev.T @ se3.rot_z(dpsi) @ R_prev
        t_err = (1.0 + cfg.scale_drift) * rel[:3, 3] + cfg.translation_noise * np.sqrt(step) * rng.standard_normal(3)
        out[k] = se3.orthonormalize(out[k - 1] @ se3.make_pose(R_err @ rel[:3, :3], t_err))
    return Trajectory(gt.stamps.copy(), out, dict(gt.metadata))


# ----------------------------------------------------------------------
# Sensing

def _pixel_rays(intrinsics, stride=1):
    us = np.arange(0, intrinsics.width, stride) + 0.5
    vs = np.arange(0, intrinsics.height, stride) + 0.5
    U, V = np.meshgrid(us, vs)
    return np.stack([(U.ravel() - intrinsics.cx) / intrinsics.fx,
                     (V.ravel() - intrinsics.cy) / intrinsics.fy,
                     np.ones(U.size)], axis=1)


def render_depth_cloud(scene, pose, intrinsics, noise_sigma=0.0, seed=0, max_range=6.0, stamp=0.0, stride=1,
                       frame=0):
    """Ray-cast depth cloud in the camera (optical) frame.

    Depth noise is Gaussian with standard deviation ``noise_sigma * range**2``.
    """
    assert isinstance(intrinsics, CameraIntrinsics), \
        "render_depth_cloud - 'intrinsics' should be an instance of CameraIntrinsics"
    pose = se3.check_pose(pose, tol=1e-6)
    rays = _pixel_rays(intrinsics, stride)
    dirs = rays @ pose[:3, :3].T
    t = scene.raycast(pose[:3, 3].reshape(1, 3), dirs)
    rng_ = np.linalg.norm(rays, axis=1) * t
    hit = np.isfinite(t) & (rng_ <= max_range)
    depth = t[hit]
    sigma = None
    if noise_sigma > 0:
        rng = make_rng(seed, STREAM_RENDER, frame)
        sd = noise_sigma * rng_[hit]**2
        depth = depth + sd * rng.standard_normal(depth.shape[0])
        keep = depth > 0
        depth, sd, rays_hit = depth[keep], sd[keep], rays[hit][keep]
        sigma = sd
    else:
        rays_hit = rays[hit]
    return PointCloud(rays_hit * depth[:, None], sigma, frame="camera", stamp=stamp)


def sample_surface_cloud(scene, pose, radius, resolution, stamp=0.0, max_above=1.0):
    """Points on the true top surface within ``radius`` of the sensor, in the sensor frame.

    Surfaces more than ``max_above`` over the sensor are left out. This is a
    noise-free, occlusion-free stand-in for depth rendering.
    """
    c = pose[:2, 3]
    n = int(np.ceil(radius / resolution))
    k0 = np.round(c / resolution)
    offs = np.arange(-n, n + 1)
    GX, GY = np.meshgrid((k0[0] + offs) * resolution, (k0[1] + offs) * resolution)
    X, Y = GX.ravel(), GY.ravel()
    keep = (X - c[0])**2 + (Y - c[1])**2 <= radius**2
    X, Y = X[keep], Y[keep]
    Z = scene.height(X, Y, below=pose[2, 3] + max_above)
    ok = np.isfinite(Z)
    world = np.stack([X[ok], Y[ok], Z[ok]], axis=1)
    return PointCloud(se3.transform_points(se3.inverse(pose), world), frame="camera", stamp=stamp)


@dataclass
class LandmarkSet:
    points: np.ndarray
    descriptors: np.ndarray

    def __len__(self):
        return self.points.shape[0]


def make_landmarks(scene, density=20.0, seed=0):
    """Landmarks uniformly spread over every scene surface, each with a random 256-bit descriptor."""
    cloud = sample_mesh(scene.mesh, density, seed=int(make_rng(seed, STREAM_LANDMARKS).integers(2**31)))
    rng = make_rng(seed, STREAM_LANDMARKS, 1)
    desc = rng.integers(0, 256, size=(len(cloud), DESCRIPTOR_BYTES), dtype=np.uint8)
    return LandmarkSet(cloud.points, desc)


def synth_keyframe(scene, pose, intrinsics, landmarks, pixel_noise=0.0, bit_flip_rate=0.0, seed=0,
                   node_id=-1, stamp=0.0, max_range=8.0, min_depth=0.1, frame=0):
    """Keyframe of the landmarks visible from camera ``pose``.

    Keypoints are the projections plus Gaussian pixel noise; descriptors get
    each bit flipped with probability ``bit_flip_rate``; depths are the true
    z-depths.
    """
    pose = se3.check_pose(pose, tol=1e-6)
    pc = se3.transform_points(se3.inverse(pose), landmarks.points)
    cand = (pc[:, 2] > min_depth) & (np.linalg.norm(pc, axis=1) <= max_range)
    uv = np.full((pc.shape[0], 2), -1.0)
    uv[cand] = intrinsics.project(pc[cand])
    cand &= intrinsics.in_image(uv)
    idx = np.flatnonzero(cand)
    if idx.size:
        origin = pose[:3, 3]
        rays = landmarks.points[idx] - origin
        dist = np.linalg.norm(rays, axis=1)
        t = scene.raycast(origin.reshape(1, 3), rays / dist[:, None])
        idx = idx[t >= dist - 1e-6 * np.maximum(dist, 1.0) - 1e-6]

    rng = make_rng(seed, STREAM_KEYFRAME, frame)
    kp = uv[idx] + (pixel_noise * rng.standard_normal((idx.size, 2)) if pixel_noise > 0 else 0.0)
    desc = landmarks.descriptors[idx]
    if bit_flip_rate > 0 and idx.size:
        bits = np.unpackbits(desc, axis=1)
        flips = rng.random(bits.shape) < bit_flip_rate
        desc = np.packbits(bits ^ flips.astype(np.uint8), axis=1)
    return Keyframe(node_id, intrinsics, kp, desc.copy(), pc[idx, 2], stamp)


# ----------------------------------------------------------------------
# Room labels

def label_rooms(positions, rooms, class_names=DEFAULT_ROOM_CLASSES, epsilon=0.05, mislabel_rate=0.0, seed=0):
    """Room-class distributions for 3D positions.

    The containing room (highest floor not above the position, first listed
    room on ties) receives ``1 - epsilon``; the rest is spread uniformly over
    the other classes. Positions outside every room get the corridor class.
    With ``mislabel_rate`` > 0, a seeded subset of positions is assigned a
    different, random class instead.
    """
    if isinstance(positions, Trajectory):
        positions = positions.positions
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    class_names = tuple(class_names)
    for room in rooms:
        if room.class_name not in class_names:
            raise ConfigError(f"label_rooms - room class '{room.class_name}' not in {class_names}")
    rng = make_rng(seed, STREAM_LABELS)
    flip = rng.random(positions.shape[0]) < mislabel_rate
    pick = rng.integers(0, len(class_names) - 1, size=positions.shape[0])

    out = []
    for k, p in enumerate(positions):
        best = None
        for room in rooms:
            if room.floor_z > p[2] + 1e-9:
                continue
            if polygon_contains(room.polygon, p[:2].reshape(1, 2))[0]:
                if best is None or room.floor_z > best.floor_z:
                    best = room
        name = best.class_name if best is not None else CORRIDOR
        if flip[k]:
            others = [c for c in class_names if c != name]
            name = others[pick[k] % len(others)]
        rest = epsilon / (len(class_names) - 1)
        out.append({c: (1.0 - epsilon if c == name else rest) for c in class_names})
    return out
