from terrainmaker.traversability import TraversabilityAnalyzer, TraversabilityParams, step_height_scores


class StepHeight(TraversabilityAnalyzer):
    """Step-height traversability.

    .. math::

        h_i^{max} = \\max_{j \\in \\mathcal{C}_{s^*}(i)} |h_j - h_i|, \\qquad
        t_i = 1 - \\min\\left(h_i^{max} / h^*, 1\\right)

    :param params: Stride radius, step height and support settings.
    :type params: :class:`TraversabilityParams`

    """
    name = "step_height"

    def __init__(self, params=None):
        self._params = params or TraversabilityParams()
        assert isinstance(self._params, TraversabilityParams), \
            "StepHeight - 'params' should be an instance of TraversabilityParams"

    @property
    def params(self):
        return self._params

    def _score_elevation(self, grid):
        return step_height_scores(grid, self._params)


TraversabilityAnalyzer.register(StepHeight)
