import h5py
import numpy as np

from terrainmaker.gridmapwriter import GridMapWriter


class HDF5GridMapWriter(GridMapWriter):
    """HDF5 export: one dataset per layer under ``/Layers``, geometry as
    root attributes and metadata under ``/Metadata``."""

    def __init__(self, filename):
        GridMapWriter.__init__(self, filename)

        self._h5file = None

    def initialize(self, grid):
        if self._filename is None or self._filename == "":
            self._filename = "map.hdf5"

        self._h5file = h5py.File(self._filename, mode="w", track_order=True)

        g = grid.geometry
        self._h5file.attrs["resolution"] = g.resolution
        self._h5file.attrs["origin"] = np.array(g.origin)
        self._h5file.attrs["shape"] = np.array(g.shape, dtype=np.int64)

        self._h5file.create_group("/Layers")
        self._h5file.create_group("/Metadata")

    def write_metadata(self, metadata):
        assert self._h5file, "HDF5GridMapWriter.write_metadata uninitialized HDF5 file"

        grp_metadata = self._h5file['Metadata']
        for key, value in metadata.items():
            grp_metadata.create_dataset(key, data=value, track_times=False)

    def write_layer(self, name, values):
        assert self._h5file, "HDF5GridMapWriter.write_layer uninitialized HDF5 file"

        self._h5file['Layers'].create_dataset(name, data=np.asarray(values, dtype=np.float32), track_times=False)

    def close(self):
        assert self._h5file, "HDF5GridMapWriter.close uninitialized HDF5 file"

        self._h5file.close()
        self._h5file = None


GridMapWriter.register(HDF5GridMapWriter)
