from terrainmaker.placeretriever import PlaceRetriever, match_descriptors


class BruteForceRetriever(PlaceRetriever):
    """Scores a stored keyframe by its number of mutual-nearest-neighbor
    descriptor matches with the query.

    :param ratio: Ratio-test factor between best and second-best distance.
    :type ratio: float
    :param max_distance: Hamming distance cap (bits).
    :type max_distance: int

    """
    def __init__(self, ratio=0.8, max_distance=64):
        self._ratio = ratio
        self._max_distance = max_distance

    @property
    def ratio(self):
        return self._ratio

    @property
    def max_distance(self):
        return self._max_distance

    def matches(self, query, keyframe):
        return match_descriptors(query.descriptors, keyframe.descriptors, self._ratio, self._max_distance)

    def similarity(self, query, keyframe):
        return int(self.matches(query, keyframe).shape[0])


PlaceRetriever.register(BruteForceRetriever)
