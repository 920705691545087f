"""
Camera intrinsics, keyframes and the EXKF keyframe file.

EXKF layout (little endian)::

    b"EXKF"
    node_id           u32 (0xFFFFFFFF = not attached to a node)
    fx fy cx cy w h   6 x f64
    n                 u32
    n x (u f32, v f32, depth f32 [NaN = unknown], descriptor 32 bytes)

"""
import struct
from dataclasses import dataclass

import numpy as np

from terrainmaker.exceptions import DataError, FileFormatError

DESCRIPTOR_BYTES = 32

NO_NODE = 0xFFFFFFFF

_KP_DTYPE = np.dtype([("u", "<f4"), ("v", "<f4"), ("depth", "<f4"), ("desc", "u1", (DESCRIPTOR_BYTES,))])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DataError(f"CameraIntrinsics - focal lengths must be > 0, got {self.fx}, {self.fy}")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise DataError("CameraIntrinsics - principal point outside the image")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project(self, points_cam):
        """Pixel coordinates of camera-frame points (optical frame, z forward)."""
        p = np.asarray(points_cam, dtype=float).reshape(-1, 3)
        return np.stack([self.fx * p[:, 0] / p[:, 2] + self.cx,
                         self.fy * p[:, 1] / p[:, 2] + self.cy], axis=1)

    def backproject(self, uv, depth):
        """Camera-frame points of pixels ``uv`` at z-depth ``depth``."""
        uv = np.asarray(uv, dtype=float).reshape(-1, 2)
        depth = np.asarray(depth, dtype=float).reshape(-1)
        x = (uv[:, 0] - self.cx) / self.fx * depth
        y = (uv[:, 1] - self.cy) / self.fy * depth
        return np.stack([x, y, depth], axis=1)

    def in_image(self, uv):
        uv = np.asarray(uv, dtype=float).reshape(-1, 2)
        return (uv[:, 0] >= 0) & (uv[:, 0] < self.width) & (uv[:, 1] >= 0) & (uv[:, 1] < self.height)

    def as_array(self):
        return np.array([self.fx, self.fy, self.cx, self.cy, self.width, self.height], dtype=float)


class Keyframe:
    """Keypoints, 256-bit binary descriptors and depths stored at a graph node.

    :param node_id: Owning graph node.
    :type node_id: int
    :param intrinsics: Camera model.
    :type intrinsics: :class:`CameraIntrinsics`
    :param keypoints: Pixel positions.
    :type keypoints: numpy array (N, 2)
    :param descriptors: Packed descriptors.
    :type descriptors: numpy array (N, 32) uint8
    :param depths: z-depth per keypoint in meters, ``NaN`` when unknown.
    :type depths: numpy array (N,)
    :param stamp: Capture time.
    :type stamp: float

    """
    def __init__(self, node_id, intrinsics, keypoints, descriptors, depths=None, stamp=0.0):
        assert isinstance(intrinsics, CameraIntrinsics), \
            "Keyframe - 'intrinsics' should be an instance of CameraIntrinsics"
        keypoints = np.asarray(keypoints, dtype=float).reshape(-1, 2)
        descriptors = np.asarray(descriptors, dtype=np.uint8).reshape(-1, DESCRIPTOR_BYTES)
        n = keypoints.shape[0]
        depths = np.full(n, np.nan) if depths is None else np.asarray(depths, dtype=float).reshape(-1)
        if descriptors.shape[0] != n or depths.shape[0] != n:
            raise DataError("Keyframe - keypoints, descriptors and depths must have equal lengths")
        known = np.isfinite(depths)
        if np.any(depths[known] <= 0):
            raise DataError("Keyframe - known depths must be > 0")
        self._node_id = int(node_id)
        self._intrinsics = intrinsics
        self._keypoints = keypoints
        self._descriptors = descriptors
        self._depths = depths
        self._stamp = float(stamp)

    @property
    def node_id(self):
        return self._node_id

    @node_id.setter
    def node_id(self, value):
        self._node_id = int(value)

    @property
    def intrinsics(self):
        return self._intrinsics

    @property
    def keypoints(self):
        return self._keypoints

    @property
    def descriptors(self):
        return self._descriptors

    @property
    def depths(self):
        return self._depths

    @property
    def stamp(self):
        return self._stamp

    def __len__(self):
        return self._keypoints.shape[0]

    def __str__(self):
        return (f"Keyframe of node {self._node_id}: {len(self)} keypoints, "
                f"{int(np.isfinite(self._depths).sum())} with depth")


def write_keyframe(filename, keyframe):
    """Write a :class:`Keyframe` as an EXKF file."""
    if keyframe.node_id >= NO_NODE:
        raise DataError(f"write_keyframe - node id {keyframe.node_id} does not fit the EXKF header")
    node_id = NO_NODE if keyframe.node_id < 0 else keyframe.node_id
    records = np.zeros(len(keyframe), dtype=_KP_DTYPE)
    records["u"] = keyframe.keypoints[:, 0]
    records["v"] = keyframe.keypoints[:, 1]
    records["depth"] = keyframe.depths
    records["desc"] = keyframe.descriptors
    with open(filename, "wb") as fid:
        fid.write(b"EXKF")
        fid.write(struct.pack("<I", node_id))
        fid.write(struct.pack("<6d", *keyframe.intrinsics.as_array()))
        fid.write(struct.pack("<I", len(keyframe)))
        fid.write(records.tobytes())


def read_keyframe(filename):
    """Read an EXKF file into a :class:`Keyframe`."""
    with open(filename, "rb") as fid:
        payload = fid.read()
    head = 4 + 4 + 48 + 4
    if len(payload) < head or payload[:4] != b"EXKF":
        raise FileFormatError(f"read_keyframe - '{filename}' is not an EXKF file")
    try:
        node_id, = struct.unpack_from("<I", payload, 4)
        fx, fy, cx, cy, w, h = struct.unpack_from("<6d", payload, 8)
        n, = struct.unpack_from("<I", payload, 56)
    except struct.error as err:
        raise FileFormatError(f"read_keyframe - '{filename}': {err}") from err
    node_id = -1 if node_id == NO_NODE else node_id
    if len(payload) < head + n * _KP_DTYPE.itemsize:
        raise FileFormatError(f"read_keyframe - '{filename}' is truncated")
    records = np.frombuffer(payload, dtype=_KP_DTYPE, count=n, offset=head)
    intrinsics = CameraIntrinsics(fx, fy, cx, cy, int(w), int(h))
    keypoints = np.stack([records["u"], records["v"]], axis=1).astype(float)
    return Keyframe(node_id, intrinsics, keypoints, records["desc"].copy(), records["depth"].astype(float))
