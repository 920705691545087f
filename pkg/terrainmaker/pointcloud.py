"""
Point clouds and PLY files.

Reads ASCII and binary little-endian PLY vertex elements with float or
double ``x``/``y``/``z`` properties (other properties are skipped).
Clouds are written as binary little-endian PLY, meshes as ASCII PLY.

"""
import numpy as np

from terrainmaker import se3
from terrainmaker.exceptions import DataError, FileFormatError

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


class PointCloud:
    """A set of 3D points captured (or expressed) in one frame.

    :param points: Point coordinates in meters.
    :type points: numpy array (N, 3)
    :param sigma: Optional per-point measurement standard deviation (m).
    :type sigma: numpy array (N,)
    :param frame: Name of the frame the points are expressed in.
    :type frame: str
    :param stamp: Capture time in seconds.
    :type stamp: float

    """
    def __init__(self, points, sigma=None, frame="sensor", stamp=0.0):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise DataError("PointCloud - coordinates must be finite")
        if sigma is not None:
            sigma = np.asarray(sigma, dtype=float).reshape(-1)
            if sigma.shape[0] != points.shape[0]:
                raise DataError("PointCloud - 'sigma' must have one entry per point")
            if np.any(~(sigma > 0)):
                raise DataError("PointCloud - 'sigma' must be > 0")
        self._points = points
        self._sigma = sigma
        self._frame = frame
        self._stamp = float(stamp)

    @property
    def points(self):
        return self._points

    @property
    def sigma(self):
        return self._sigma

    @property
    def frame(self):
        return self._frame

    @property
    def stamp(self):
        return self._stamp

    def __len__(self):
        return self._points.shape[0]

    def transformed(self, T, frame):
        """The cloud expressed in another frame through pose ``T`` (target-from-source)."""
        return PointCloud(se3.transform_points(T, self._points), self._sigma, frame, self._stamp)


def read_ply(filename):
    """Read the vertex positions of a PLY file into a :class:`PointCloud`."""
    with open(filename, "rb") as fid:
        fmt, count, props, header_len = _read_ply_header(fid, filename)
        fid.seek(header_len)
        payload = fid.read()

    names = [p[0] for p in props]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise FileFormatError(f"read_ply - '{filename}' has no '{axis}' vertex property")

    if fmt == "ascii":
        rows = payload.decode("ascii").split("\n")
        rows = [r for r in rows if r.strip()][:count]
        if len(rows) < count:
            raise FileFormatError(f"read_ply - '{filename}' is truncated")
        table = np.array([[float(v) for v in r.split()[:len(props)]] for r in rows]).reshape(count, len(props))
        xyz = table[:, [names.index("x"), names.index("y"), names.index("z")]]
    elif fmt == "binary_little_endian":
        dtype = np.dtype([(name, "<" + _PLY_TYPES[kind]) for name, kind in props])
        if len(payload) < dtype.itemsize * count:
            raise FileFormatError(f"read_ply - '{filename}' is truncated")
        data = np.frombuffer(payload, dtype=dtype, count=count)
        xyz = np.stack([data["x"], data["y"], data["z"]], axis=1).astype(float)
    else:
        raise FileFormatError(f"read_ply - unsupported PLY format '{fmt}'")

    return PointCloud(xyz, frame="sensor")


def _read_ply_header(fid, filename):
    first = fid.readline()
    if first.strip() != b"ply":
        raise FileFormatError(f"read_ply - '{filename}' is not a PLY file")
    fmt, count, props = None, 0, []
    in_vertex = False
    while True:
        line = fid.readline()
        if not line:
            raise FileFormatError(f"read_ply - '{filename}' header has no end_header")
        words = line.decode("ascii").split()
        if not words:
            continue
        if words[0] == "format":
            fmt = words[1]
        elif words[0] == "element":
            in_vertex = words[1] == "vertex"
            if in_vertex:
                count = int(words[2])
        elif words[0] == "property" and in_vertex:
            if words[1] == "list":
                raise FileFormatError(f"read_ply - list properties on vertices are not supported ('{filename}')")
            if words[1] not in _PLY_TYPES:
                raise FileFormatError(f"read_ply - unknown property type '{words[1]}'")
            props.append((words[2], words[1]))
        elif words[0] == "end_header":
            return fmt, count, props, fid.tell()


def write_ply(filename, cloud):
    """Write a :class:`PointCloud` as binary little-endian PLY (``float`` x/y/z)."""
    pts = np.ascontiguousarray(cloud.points, dtype="<f4")
    header = ("ply\nformat binary_little_endian 1.0\n"
              f"comment frame {cloud.frame} stamp {cloud.stamp:.9f}\n"
              f"element vertex {pts.shape[0]}\n"
              "property float x\nproperty float y\nproperty float z\nend_header\n")
    with open(filename, "wb") as fid:
        fid.write(header.encode("ascii"))
        fid.write(pts.tobytes())


def write_mesh_ply(filename, mesh):
    """Write a triangle mesh (``vertices``/``triangles`` attributes) as ASCII PLY."""
    with open(filename, "w") as fid:
        fid.write("ply\nformat ascii 1.0\n")
        fid.write(f"element vertex {len(mesh.vertices)}\n")
        fid.write("property double x\nproperty double y\nproperty double z\n")
        fid.write(f"element face {len(mesh.triangles)}\n")
        fid.write("property list uchar int vertex_indices\nend_header\n")
        for v in mesh.vertices:
            fid.write(f"{v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
        for t in mesh.triangles:
            fid.write(f"3 {t[0]} {t[1]} {t[2]}\n")
