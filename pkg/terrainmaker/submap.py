import numpy as np

from terrainmaker import se3
from terrainmaker.exceptions import DataError, FileFormatError
from terrainmaker.gmw_extensions import EXGMGridMapWriter, read_exgm
from terrainmaker.gridmap import MultiLayerGrid


class Submap:
    """A frozen local elevation crop tied to a pose-graph node.

    The grid stays in the odom frame it was captured in; ``capture_pose`` is
    the node pose at capture time, used later to re-anchor the crop once the
    node has been optimized.

    :param grid: Elevation (and variance) layers in the odom frame.
    :type grid: :class:`MultiLayerGrid`
    :param capture_node: Id of the owning graph node (``-1`` if not yet attached).
    :type capture_node: int
    :param capture_pose: Node pose when the crop was taken.
    :type capture_pose: numpy array (4, 4)

    """
    def __init__(self, grid, capture_node=-1, capture_pose=None):
        assert isinstance(grid, MultiLayerGrid), \
            "Submap - 'grid' should be an instance of MultiLayerGrid"
        if not grid.has_layer("elevation"):
            raise DataError("Submap - grid has no elevation layer")
        self._grid = grid
        self._capture_node = int(capture_node)
        self._capture_pose = se3.check_pose(np.eye(4) if capture_pose is None else capture_pose)

    @property
    def grid(self):
        return self._grid

    @property
    def capture_node(self):
        return self._capture_node

    @capture_node.setter
    def capture_node(self, value):
        self._capture_node = int(value)

    @property
    def capture_pose(self):
        return self._capture_pose

    def save(self, filename):
        """Save the submap as an EXGM file; node and capture pose go to the JSON sidecar.

        Example::

            submap.save("submap_0003.exgm")

        """
        metadata = {"capture_node": self._capture_node,
                    "capture_pose": [float(v) for v in se3.to_tum(self._capture_pose)]}
        EXGMGridMapWriter(filename).write(self._grid, metadata)

    @staticmethod
    def load(filename):
        """Load a submap written by :meth:`save`."""
        grid, metadata = read_exgm(filename)
        try:
            return Submap(grid, int(metadata["capture_node"]), se3.from_tum(metadata["capture_pose"]))
        except KeyError as err:
            raise FileFormatError(f"Submap.load - '{filename}' sidecar is missing entry {err}")

    def __str__(self):
        return f"Submap of node {self._capture_node}\n" + str(self._grid)
