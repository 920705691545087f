"""
EXGM binary grid maps.

Layout (little endian)::

    b"EXGM"
    version         u16
    resolution      f64
    origin x, y     2 x f64
    rows, cols      2 x u32
    layer count     u16
    per layer: name length u16, UTF-8 name, rows x cols f32 row-major

Unknown cells are stored as quiet NaN. Metadata that does not fit the
binary header (frame, room instance, contributing nodes) is written to a
JSON sidecar ``<filename>.json``.

"""
import json
import os
import struct

import numpy as np

from terrainmaker.exceptions import FileFormatError
from terrainmaker.gridmap import GridGeometry, MultiLayerGrid
from terrainmaker.gridmapwriter import GridMapWriter

EXGM_VERSION = 1

_HEADER = struct.Struct("<4sHd2d2IH")


class EXGMGridMapWriter(GridMapWriter):

    def __init__(self, filename, sidecar=True):
        GridMapWriter.__init__(self, filename)
        self._sidecar = sidecar
        self._fid = None
        self._shape = None

    def initialize(self, grid):
        if self._filename is None or self._filename == "":
            self._filename = "map.exgm"
        g = grid.geometry
        self._shape = g.shape
        self._fid = open(self._filename, "wb")
        self._fid.write(_HEADER.pack(b"EXGM", EXGM_VERSION, g.resolution, g.origin[0], g.origin[1],
                                     g.rows, g.cols, len(grid.layer_names)))

    def write_metadata(self, metadata):
        assert self._fid, "EXGMGridMapWriter.write_metadata uninitialized file"
        if self._sidecar:
            with open(sidecar_name(self._filename), "w") as fid:
                json.dump(metadata, fid, indent=1, sort_keys=True)

    def write_layer(self, name, values):
        assert self._fid, "EXGMGridMapWriter.write_layer uninitialized file"
        encoded = name.encode("utf-8")
        self._fid.write(struct.pack("<H", len(encoded)))
        self._fid.write(encoded)
        self._fid.write(np.asarray(values, dtype="<f4").reshape(self._shape).tobytes(order="C"))

    def close(self):
        assert self._fid, "EXGMGridMapWriter.close uninitialized file"
        self._fid.close()
        self._fid = None


GridMapWriter.register(EXGMGridMapWriter)


def sidecar_name(filename):
    return f"{filename}.json"


def read_exgm(filename):
    """Read an EXGM file.

    :returns: ``(grid, metadata)``; ``metadata`` is the sidecar content or an
        empty dict when there is no sidecar.
    :raises FileFormatError: on a bad magic, unknown version or truncation.
    """
    with open(filename, "rb") as fid:
        payload = fid.read()
    if len(payload) < _HEADER.size:
        raise FileFormatError(f"read_exgm - '{filename}' is truncated")
    magic, version, res, ox, oy, rows, cols, nlayers = _HEADER.unpack_from(payload, 0)
    if magic != b"EXGM":
        raise FileFormatError(f"read_exgm - '{filename}' is not an EXGM file")
    if version != EXGM_VERSION:
        raise FileFormatError(f"read_exgm - unsupported EXGM version {version}")

    metadata = {}
    if os.path.exists(sidecar_name(filename)):
        with open(sidecar_name(filename)) as fid:
            metadata = json.load(fid)

    grid = MultiLayerGrid(GridGeometry(res, (ox, oy), rows, cols), frame=metadata.get("frame", "map"))
    pos = _HEADER.size
    nbytes = rows * cols * 4
    for _ in range(nlayers):
        if pos + 2 > len(payload):
            raise FileFormatError(f"read_exgm - '{filename}' is truncated")
        n, = struct.unpack_from("<H", payload, pos)
        pos += 2
        if pos + n + nbytes > len(payload):
            raise FileFormatError(f"read_exgm - '{filename}' is truncated")
        name = payload[pos:pos + n].decode("utf-8")
        pos += n
        grid.add_layer(name, np.frombuffer(payload, dtype="<f4", count=rows * cols, offset=pos).astype(float))
        pos += nbytes
    return grid, metadata
