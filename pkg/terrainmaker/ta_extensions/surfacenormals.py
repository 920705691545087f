import numpy as np

from terrainmaker.traversability import TraversabilityAnalyzer, normals_scores


class SurfaceNormals(TraversabilityAnalyzer):
    """Baseline scoring cells by the tilt of a locally fitted plane.

    :param fit_radius: Radius of the plane-fit neighborhood (m).
    :type fit_radius: float
    :param max_slope: Tilt (rad) at and beyond which a cell scores 0.
    :type max_slope: float

    """
    name = "surface_normals"

    def __init__(self, fit_radius=0.10, max_slope=np.deg2rad(45.0)):
        assert fit_radius > 0, "SurfaceNormals - 'fit_radius' must be > 0"
        assert max_slope > 0, "SurfaceNormals - 'max_slope' must be > 0"
        self._fit_radius = fit_radius
        self._max_slope = max_slope

    def _score_elevation(self, grid):
        return normals_scores(grid, self._fit_radius, self._max_slope)


TraversabilityAnalyzer.register(SurfaceNormals)
