from terrainmaker.roomlabeler import RoomLabeler
from terrainmaker.simworld import label_rooms


class SimulatedRoomLabeler(RoomLabeler):
    """Labels from the room polygons of a synthetic scene.

    :param rooms: Room descriptions of the scene.
    :type rooms: list of :class:`RoomSpec`
    :param epsilon: Probability mass spread over the other classes.
    :type epsilon: float
    :param mislabel_rate: Fraction of positions given a wrong class.
    :type mislabel_rate: float
    :param seed: Seed of the mislabeling draw.
    :type seed: int

    """
    def __init__(self, rooms, epsilon=0.05, mislabel_rate=0.0, seed=0):
        self._rooms = list(rooms)
        self._epsilon = epsilon
        self._mislabel_rate = mislabel_rate
        self._seed = seed

    @property
    def rooms(self):
        return self._rooms

    def distributions(self, positions, class_names):
        return label_rooms(positions, self._rooms, class_names, self._epsilon, self._mislabel_rate, self._seed)


RoomLabeler.register(SimulatedRoomLabeler)
