from terrainmaker.gmw_extensions.exgmgridmapwriter import EXGMGridMapWriter, read_exgm
from terrainmaker.gmw_extensions.hdf5gridmapwriter import HDF5GridMapWriter
