"""
Rolling local elevation map.

The map is a fixed-size window of the global ``k * resolution`` lattice that
follows the sensor. Depth clouds are fused cell by cell with a scalar Kalman
filter on height; measurements whose innovation exceeds the Mahalanobis gate
are rejected as outliers.

"""
import logging
from dataclasses import dataclass

import numpy as np

from terrainmaker import se3
from terrainmaker.exceptions import ConfigError, OutOfBoundsError
from terrainmaker.gridmap import GridGeometry, MultiLayerGrid
from terrainmaker.pointcloud import PointCloud
from terrainmaker.submap import Submap

logger = logging.getLogger(__name__)

# Floor on measurement variance so noise-free clouds still yield finite gates.
_MIN_VARIANCE = 1e-10


@dataclass
class RollingMapConfig:
    """Parameters of the rolling elevation map.

    The height clip is relative to the sensor height, so terrain far above
    or below the walker (another floor of the building) is never integrated.
    """
    window_side: float = 6.0
    resolution: float = 0.02
    sensor_sigma_at_1m: float = 0.01
    mahalanobis_gate: float = 3.0
    min_height: float = -2.0
    max_height: float = 1.0

    def __post_init__(self):
        if not self.window_side > 0:
            raise ConfigError(f"RollingMapConfig - 'window_side' must be > 0, got {self.window_side}")
        if not self.resolution > 0:
            raise ConfigError(f"RollingMapConfig - 'resolution' must be > 0, got {self.resolution}")
        if not self.mahalanobis_gate > 0:
            raise ConfigError(f"RollingMapConfig - 'mahalanobis_gate' must be > 0, got {self.mahalanobis_gate}")
        if not self.sensor_sigma_at_1m >= 0:
            raise ConfigError("RollingMapConfig - 'sensor_sigma_at_1m' must be >= 0")
        if self.min_height >= self.max_height:
            raise ConfigError("RollingMapConfig - 'min_height' must be below 'max_height'")

    @property
    def cells_per_side(self):
        return max(int(round(self.window_side / self.resolution)), 1)


@dataclass
class SensorPose:
    """Pose of the sensor in the odom frame at ``stamp``."""
    pose: np.ndarray
    stamp: float = 0.0

    def __post_init__(self):
        self.pose = se3.check_pose(self.pose)


class RollingElevationMap:
    """Sensor-centered 2.5D map with layers ``elevation``, ``variance``,
    ``sample_count`` and ``last_update``.

    :param config: Map parameters.
    :type config: :class:`RollingMapConfig`
    :param center: Initial ``(x, y)`` of the window center in the odom frame.
    :type center: tuple

    Example::

        emap = RollingElevationMap(RollingMapConfig())
        emap.recenter(sensor_pose.pose[:2, 3])
        emap.integrate_cloud(cloud, sensor_pose)
        submap = emap.snapshot_submap(node_pose, side=2.0)

    """
    def __init__(self, config=None, center=(0.0, 0.0)):
        self._config = config or RollingMapConfig()
        assert isinstance(self._config, RollingMapConfig), \
            "RollingElevationMap - 'config' should be an instance of RollingMapConfig"
        self._grid = self._empty_grid(self._window_geometry(center))

    @property
    def config(self):
        return self._config

    @property
    def grid(self):
        return self._grid

    @property
    def geometry(self):
        return self._grid.geometry

    @property
    def center(self):
        g = self._grid.geometry
        half = g.cols // 2
        return np.array([g.origin[0] + half * g.resolution, g.origin[1] + half * g.resolution])

    def _window_geometry(self, center):
        res = self._config.resolution
        n = self._config.cells_per_side
        k = np.ceil(np.asarray(center, dtype=float) / res - 0.5 - 1e-9) - n // 2
        return GridGeometry(res, (k[0] * res, k[1] * res), n, n)

    @staticmethod
    def _empty_grid(geometry):
        grid = MultiLayerGrid(geometry, frame="odom")
        grid.add_layer("variance")
        grid.add_layer("sample_count", np.zeros(geometry.shape))
        grid.add_layer("last_update")
        return grid

    def integrate_cloud(self, cloud, pose):
        """Fuse a sensor-frame cloud taken at ``pose`` into the map.

        :returns: number of accepted measurements.
        """
        assert isinstance(cloud, PointCloud), \
            "RollingElevationMap.integrate_cloud - 'cloud' should be an instance of PointCloud"
        if not isinstance(pose, SensorPose):
            pose = SensorPose(pose, cloud.stamp)
        if len(cloud) == 0:
            return 0

        cfg = self._config
        g = self._grid.geometry
        pts = se3.transform_points(pose.pose, cloud.points)
        if cloud.sigma is not None:
            var = cloud.sigma**2
        else:
            var = np.sum(cloud.points**2, axis=1) * cfg.sensor_sigma_at_1m**2
        var = np.maximum(var, _MIN_VARIANCE)

        rel_z = pts[:, 2] - pose.pose[2, 3]
        rows, cols, inside = g.world_to_cells(pts[:, :2])
        keep = inside & (rel_z >= cfg.min_height) & (rel_z <= cfg.max_height)
        if not keep.any():
            logger.debug("integrate_cloud - no point of %d falls in the window", len(cloud))
            return 0

        flat = rows[keep] * g.cols + cols[keep]
        z = pts[keep, 2]
        var = var[keep]

        # Points are applied in cloud order; within one pass every cell gets
        # at most one measurement, so passes are vectorized.
        order = np.argsort(flat, kind="stable")
        flat, z, var = flat[order], z[order], var[order]
        starts = np.r_[0, np.flatnonzero(np.diff(flat)) + 1]
        counts = np.diff(np.r_[starts, flat.shape[0]])
        rank = np.arange(flat.shape[0]) - np.repeat(starts, counts)

        h = self._grid["elevation"].reshape(-1)
        P = self._grid["variance"].reshape(-1)
        n = self._grid["sample_count"].reshape(-1)
        stamp = self._grid["last_update"].reshape(-1)

        accepted = 0
        for k in range(int(rank.max()) + 1):
            sel = rank == k
            c, zk, rk = flat[sel], z[sel], var[sel]
            empty = n[c] == 0
            ce = c[empty]
            h[ce], P[ce], n[ce], stamp[ce] = zk[empty], rk[empty], 1, pose.stamp
            accepted += ce.shape[0]

            cu, zu, ru = c[~empty], zk[~empty], rk[~empty]
            innov = zu - h[cu]
            S = P[cu] + ru
            ok = innov**2 <= cfg.mahalanobis_gate**2 * S
            cu, innov, S, ru = cu[ok], innov[ok], S[ok], ru[ok]
            K = P[cu] / S
            h[cu] = h[cu] + K * innov
            P[cu] = P[cu] * ru / S
            n[cu] += 1
            stamp[cu] = pose.stamp
            accepted += cu.shape[0]

        logger.debug("integrate_cloud - %d/%d points accepted at t=%.3f", accepted, len(cloud), pose.stamp)
        return accepted

    def recenter(self, new_center):
        """Translate the window by whole cells so it is centered near ``new_center``."""
        geometry = self._window_geometry(new_center)
        if geometry.same_as(self._grid.geometry):
            return self
        grid = self._empty_grid(geometry)
        for name in self._grid.layer_names:
            grid.paste(self._grid, name)
        self._grid = grid
        return self

    def snapshot_submap(self, node_pose, side, node_id=-1):
        """Frozen ``side x side`` crop centered on ``node_pose``'s position.

        :raises OutOfBoundsError: if the node lies outside the window or
            ``side`` exceeds the window.
        """
        node_pose = se3.check_pose(node_pose)
        g = self._grid.geometry
        if side > self._config.window_side + 1e-9:
            raise OutOfBoundsError(f"RollingElevationMap.snapshot_submap - side {side} m exceeds "
                                   f"window {self._config.window_side} m")
        center = node_pose[:2, 3]
        if not g.contains(center):
            raise OutOfBoundsError(f"RollingElevationMap.snapshot_submap - node position {tuple(center)} "
                                   "outside the rolling window")
        crop = self._grid.crop(center - side / 2, center + side / 2)
        grid = MultiLayerGrid(crop.geometry, frame="odom")
        grid.add_layer("elevation", crop["elevation"].copy())
        grid.add_layer("variance", crop["variance"].copy())
        logger.debug("snapshot_submap - node %d, %d known cells", node_id, int(grid.known_mask().sum()))
        return Submap(grid, node_id, node_pose.copy())

    def __str__(self):
        return "RollingElevationMap\n" + str(self._grid)
