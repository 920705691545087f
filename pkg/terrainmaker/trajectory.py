"""
Timestamped SE(3) pose sequences and TUM trajectory files.

A TUM file holds one pose per line: ``stamp tx ty tz qx qy qz qw``.
Lines starting with ``#`` are comments.

"""
import numpy as np

from terrainmaker import se3
from terrainmaker.exceptions import FileFormatError, TrajectoryError


class Trajectory:
    """Ordered ``(stamp, pose)`` pairs.

    :param stamps: Strictly increasing times in seconds.
    :type stamps: numpy array (N,)
    :param poses: Homogeneous poses.
    :type poses: numpy array (N, 4, 4)
    :param metadata: Extra per-trajectory information (e.g. foot strikes).
    :type metadata: dict

    Example::

        traj = Trajectory.read_tum("gt.txt")
        print(traj.path_lengths()[-1])

    """
    def __init__(self, stamps, poses, metadata=None):
        stamps = np.asarray(stamps, dtype=float).reshape(-1)
        poses = np.asarray(poses, dtype=float).reshape(-1, 4, 4)
        if stamps.shape[0] != poses.shape[0]:
            raise TrajectoryError("Trajectory - 'stamps' and 'poses' lengths differ")
        if stamps.shape[0] > 1 and np.any(np.diff(stamps) <= 0):
            raise TrajectoryError("Trajectory - stamps must be strictly increasing")
        for T in poses:
            se3.check_pose(T, tol=1e-6)
        self._stamps = stamps
        self._poses = poses
        self._metadata = dict(metadata or {})

    @property
    def stamps(self):
        return self._stamps

    @property
    def poses(self):
        return self._poses

    @property
    def metadata(self):
        return self._metadata

    @property
    def positions(self):
        return self._poses[:, :3, 3]

    def __len__(self):
        return self._stamps.shape[0]

    def __iter__(self):
        return iter(zip(self._stamps, self._poses))

    def __getitem__(self, i):
        return self._stamps[i], self._poses[i]

    def path_lengths(self):
        """Cumulative traveled distance at every entry (starts at 0)."""
        if len(self) == 0:
            return np.zeros(0)
        steps = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def nearest_index(self, stamp):
        i = int(np.searchsorted(self._stamps, stamp))
        if i == 0:
            return 0
        if i >= len(self):
            return len(self) - 1
        return i if self._stamps[i] - stamp < stamp - self._stamps[i - 1] else i - 1

    def pose_at(self, stamp, max_dt=0.02):
        """Pose with the nearest stamp.

        :raises TrajectoryError: if no entry lies within ``max_dt`` seconds.
        """
        if len(self) == 0:
            raise TrajectoryError("Trajectory.pose_at - empty trajectory")
        i = self.nearest_index(stamp)
        if abs(self._stamps[i] - stamp) > max_dt:
            raise TrajectoryError(f"Trajectory.pose_at - no pose within {max_dt} s of {stamp}")
        return self._poses[i]

    def associate(self, other, max_dt=0.02):
        """Index pairs ``(i, j)`` matching each entry of ``self`` to the
        nearest-stamp entry of ``other`` within ``max_dt``. Unmatched
        entries are dropped; each entry of ``other`` is used at most once.
        """
        if len(other) == 0:
            return np.zeros((0, 2), dtype=int)
        pairs, used = [], set()
        for i, t in enumerate(self._stamps):
            j = other.nearest_index(t)
            if abs(other.stamps[j] - t) <= max_dt and j not in used:
                pairs.append((i, j))
                used.add(j)
        return np.array(pairs, dtype=int).reshape(-1, 2)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return Trajectory(self._stamps[indices], self._poses[indices], self._metadata)

    def left_multiplied(self, G):
        """Every pose replaced by ``G @ pose``."""
        return Trajectory(self._stamps, np.einsum("ij,njk->nik", G, self._poses), self._metadata)

    def copy(self):
        return Trajectory(self._stamps.copy(), self._poses.copy(), dict(self._metadata))

    @staticmethod
    def read_tum(filename):
        stamps, poses = [], []
        with open(filename, "r") as fid:
            for lineno, line in enumerate(fid, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                words = line.replace(",", " ").split()
                if len(words) != 8:
                    raise FileFormatError(f"Trajectory.read_tum - {filename}:{lineno} expected 8 values, got {len(words)}")
                try:
                    vals = [float(w) for w in words]
                except ValueError:
                    raise FileFormatError(f"Trajectory.read_tum - {filename}:{lineno} non-numeric entry")
                stamps.append(vals[0])
                poses.append(se3.from_tum(vals[1:]))
        return Trajectory(stamps, np.array(poses).reshape(-1, 4, 4))

    def write_tum(self, filename):
        with open(filename, "w") as fid:
            fid.write("# stamp tx ty tz qx qy qz qw\n")
            for t, T in self:
                v = se3.to_tum(T)
                fid.write(f"{t:.6f} " + " ".join(f"{x:.9f}" for x in v) + "\n")

    def __str__(self):
        if len(self) == 0:
            return "Trajectory (empty)"
        return (f"Trajectory with {len(self)} poses, "
                f"t = [{self._stamps[0]:.3f}, {self._stamps[-1]:.3f}] s, "
                f"length {self.path_lengths()[-1]:.2f} m")
