"""
Evaluation metrics.

* Relative pose error at a traveled distance (RMSE of translation and
  rotation of relative-motion errors).
* Reconstruction error: terrain map -> triangle mesh -> dense point sample
  -> nearest-neighbor distances to ground truth.

"""
import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from terrainmaker.exceptions import DataError, EmptyInputError, TrajectoryError
from terrainmaker.pointcloud import PointCloud
from terrainmaker.trajectory import Trajectory

logger = logging.getLogger(__name__)


@dataclass
class RpeResult:
    distance: float
    translation_rmse: float
    rotation_rmse: float
    pair_count: int

    def as_row(self):
        return [f"{self.distance:.3f}", f"{self.translation_rmse:.6f}", f"{self.rotation_rmse:.6f}", self.pair_count]


@dataclass
class ReconError:
    """Point-to-point reconstruction error in centimeters."""
    mean: float
    max: float
    p90: float
    sample_count: int

    def as_row(self):
        return [f"{self.mean:.4f}", f"{self.max:.4f}", f"{self.p90:.4f}", self.sample_count]


class TriMesh:
    """Triangle mesh.

    :param vertices: Vertex positions.
    :type vertices: numpy array (V, 3)
    :param triangles: Vertex indices, counter-clockwise seen from the front.
    :type triangles: numpy array (T, 3) int

    """
    def __init__(self, vertices, triangles):
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 3)
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= vertices.shape[0]):
            raise DataError("TriMesh - triangle index out of range")
        self._vertices = vertices
        self._triangles = triangles
        if np.any(self.areas() <= 0):
            raise DataError("TriMesh - degenerate (zero-area) triangle")

    @property
    def vertices(self):
        return self._vertices

    @property
    def triangles(self):
        return self._triangles

    def __len__(self):
        return self._triangles.shape[0]

    def _corners(self):
        v = self._vertices[self._triangles]
        return v[:, 0], v[:, 1], v[:, 2]

    def _cross(self):
        a, b, c = self._corners()
        return np.cross(b - a, c - a)

    def areas(self):
        return 0.5 * np.linalg.norm(self._cross(), axis=1)

    def surface_area(self):
        return float(self.areas().sum())

    def normals(self):
        n = self._cross()
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def slopes(self):
        """Angle (rad) between each triangle's normal and the vertical."""
        return np.arccos(np.clip(np.abs(self.normals()[:, 2]), 0.0, 1.0))

    def subset(self, mask):
        return TriMesh(self._vertices, self._triangles[mask])

    def raycast(self, origins, directions):
        """Distance along each ray to the first triangle hit (``inf`` for a miss).

        Plain Moller-Trumbore over every triangle; meant for small meshes.
        """
        origins = np.asarray(origins, dtype=float).reshape(-1, 3)
        directions = np.asarray(directions, dtype=float).reshape(-1, 3)
        a, b, c = self._corners()
        e1, e2 = b - a, c - a
        best = np.full(origins.shape[0], np.inf)
        for k in range(len(self)):
            p = np.cross(directions, e2[k])
            det = p @ e1[k]
            ok = np.abs(det) > 1e-14
            inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
            s = origins - a[k]
            u = np.einsum("ij,ij->i", s, p) * inv
            q = np.cross(s, e1[k])
            v = np.einsum("ij,ij->i", directions, q) * inv
            t = q @ e2[k] * inv
            hit = ok & (u >= -1e-12) & (v >= -1e-12) & (u + v <= 1 + 1e-12) & (t > 0)
            best = np.where(hit & (t < best), t, best)
        return best


def rpe(est, gt, d, max_dt=0.02):
    """Relative pose error over pairs separated by ``d`` meters of ground-truth travel.

    :returns: :class:`RpeResult` with translation RMSE (m) and rotation RMSE (deg).
    :raises TrajectoryError: when association fails or ``gt`` is shorter than ``d``.
    """
    assert isinstance(est, Trajectory) and isinstance(gt, Trajectory), \
        "rpe - 'est' and 'gt' should be instances of Trajectory"
    pairs = est.associate(gt, max_dt)
    if pairs.shape[0] < 2:
        raise TrajectoryError(f"rpe - only {pairs.shape[0]} poses associated within {max_dt} s")
    E = est.poses[pairs[:, 0]]
    G = gt.poses[pairs[:, 1]]
    steps = np.linalg.norm(np.diff(G[:, :3, 3], axis=0), axis=1)
    L = np.concatenate([[0.0], np.cumsum(steps)])
    if L[-1] < d - 1e-9:
        raise TrajectoryError(f"rpe - ground truth path {L[-1]:.3f} m shorter than {d} m")

    rot_e = Rotation.from_matrix(E[:, :3, :3])
    rot_g = Rotation.from_matrix(G[:, :3, :3])
    t_err, r_err = [], []
    for i in range(L.shape[0]):
        j = int(np.searchsorted(L, L[i] + d - 1e-9, side="left"))
        if j >= L.shape[0]:
            break
        rel_g = rot_g[i].inv() * rot_g[j]
        rel_e = rot_e[i].inv() * rot_e[j]
        tg = rot_g[i].inv().apply(G[j, :3, 3] - G[i, :3, 3])
        te = rot_e[i].inv().apply(E[j, :3, 3] - E[i, :3, 3])
        t_err.append(np.linalg.norm(rel_g.inv().apply(te - tg)))
        r_err.append(np.rad2deg((rel_g.inv() * rel_e).magnitude()))
    t_err, r_err = np.array(t_err), np.array(r_err)
    result = RpeResult(float(d), float(np.sqrt(np.mean(t_err**2))), float(np.sqrt(np.mean(r_err**2))), len(t_err))
    logger.info("rpe - d=%.2f m: %.4f m, %.4f deg over %d pairs", d, result.translation_rmse,
                result.rotation_rmse, result.pair_count)
    return result


def heightmap_to_mesh(grid, max_height_span=None):
    """Two triangles per quad of four known neighboring cells, vertices at cell centers.

    With ``max_height_span`` quads whose corner heights differ by more than
    that many meters are skipped; they bridge a step or a wall face rather
    than sample a surface.

    :raises EmptyInputError: when no fully known 2x2 block exists.
    """
    grid = getattr(grid, "grid", grid)
    H = grid.elevation
    X, Y = grid.geometry.cell_centers()
    known = np.isfinite(H)
    quad = known[:-1, :-1] & known[:-1, 1:] & known[1:, :-1] & known[1:, 1:]
    if max_height_span is not None:
        with np.errstate(invalid="ignore"):
            corners = np.stack([H[:-1, :-1], H[:-1, 1:], H[1:, :-1], H[1:, 1:]])
            quad &= (corners.max(axis=0) - corners.min(axis=0)) <= max_height_span
    if not quad.any():
        raise EmptyInputError("heightmap_to_mesh - no 2x2 block of known cells")
    index = np.full(H.shape, -1, dtype=np.int64)
    index[known] = np.arange(int(known.sum()))
    vertices = np.stack([X[known], Y[known], H[known]], axis=1)
    r, c = np.nonzero(quad)
    a, b = index[r, c], index[r, c + 1]
    cc, dd = index[r + 1, c + 1], index[r + 1, c]
    triangles = np.concatenate([np.stack([a, b, cc], axis=1), np.stack([a, cc, dd], axis=1)])
    return TriMesh(vertices, triangles)


def sample_mesh(mesh, density=10000.0, seed=0, max_slope=None):
    """Uniform random points on ``mesh`` at ``density`` points per square meter.

    Each triangle receives ``floor(area * density)`` points plus one more with
    probability equal to the fractional remainder. Triangles steeper than
    ``max_slope`` radians are skipped when it is given.
    """
    assert density > 0, "sample_mesh - 'density' must be > 0"
    rng = np.random.Generator(np.random.Philox(seed))
    tris = mesh.triangles
    if max_slope is not None:
        tris = tris[mesh.slopes() <= max_slope]
    if tris.shape[0] == 0:
        return PointCloud(np.zeros((0, 3)), frame="map")
    v = mesh.vertices[tris]
    areas = 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
    expected = areas * density
    counts = np.floor(expected).astype(np.int64)
    counts += rng.random(counts.shape[0]) < (expected - counts)
    owner = np.repeat(np.arange(tris.shape[0]), counts)
    r1 = rng.random(owner.shape[0])
    r2 = rng.random(owner.shape[0])
    flip = r1 + r2 > 1
    r1[flip], r2[flip] = 1 - r1[flip], 1 - r2[flip]
    a, b, c = v[owner, 0], v[owner, 1], v[owner, 2]
    pts = a + r1[:, None] * (b - a) + r2[:, None] * (c - a)
    return PointCloud(pts, frame="map")


def point_to_point_error(sampled, gt):
    """Nearest-neighbor distances from ``sampled`` to ``gt``, summarized in centimeters.

    :raises EmptyInputError: if either cloud is empty.
    """
    if len(sampled) == 0 or len(gt) == 0:
        raise EmptyInputError("point_to_point_error - empty point cloud")
    d, _ = cKDTree(gt.points).query(sampled.points, k=1)
    d = 100.0 * d
    return ReconError(float(d.mean()), float(d.max()), float(np.percentile(d, 90)), int(d.shape[0]))


def write_rpe_csv(filename, results):
    with open(filename, "w", newline="") as fid:
        writer = csv.writer(fid)
        writer.writerow(["distance", "translation_rmse", "rotation_rmse_deg", "pairs"])
        for r in results:
            writer.writerow(r.as_row())


def write_recon_csv(filename, errors):
    """One row per named :class:`ReconError` (a bare error is written as ``all``)."""
    if isinstance(errors, ReconError):
        errors = {"all": errors}
    with open(filename, "w", newline="") as fid:
        writer = csv.writer(fid)
        writer.writerow(["map", "mean_cm", "max_cm", "p90_cm", "samples"])
        for name, err in errors.items():
            writer.writerow([name] + err.as_row())
