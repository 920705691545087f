import abc

from terrainmaker.gridmap import MultiLayerGrid


class GridMapWriter(metaclass=abc.ABCMeta):
    """Base class of grid-map exporters.

    :meth:`write` drives the concrete writer: ``initialize`` with the grid,
    ``write_metadata``, one ``write_layer`` per layer, then ``close``.
    """

    def __init__(self, filename):
        self._filename = filename

    def write(self, grid, metadata=None):
        grid = getattr(grid, "grid", grid)
        assert isinstance(grid, MultiLayerGrid), \
            "GridMapWriter.write - 'grid' should be an instance of MultiLayerGrid"

        self.initialize(grid)
        self.write_metadata(dict(metadata or {}, frame=grid.frame))
        for name in grid.layer_names:
            self.write_layer(name, grid[name])
        self.close()

    @abc.abstractmethod
    def initialize(self, grid):
        raise NotImplementedError('derived class must define method initialize')

    @abc.abstractmethod
    def write_layer(self, name, values):
        raise NotImplementedError('derived class must define method write_layer')

    @abc.abstractmethod
    def write_metadata(self, metadata):
        raise NotImplementedError('derived class must define method write_metadata')

    @abc.abstractmethod
    def close(self):
        raise NotImplementedError('derived class must define method close')

    @property
    def filename(self):
        return self._filename
