# -*- coding: utf-8 -*-
"""

"""
from terrainmaker.simworld import RoomSpec, SceneSpec, StaircaseSpec, WallSpec, ObstacleSpec


def box_walls(x0, y0, x1, y1, height=1.0, thickness=0.1, base_z=0.0):
    """Four walls on the edges of the rectangle ``[x0, x1] x [y0, y1]``."""
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    return [WallSpec(corners[k], corners[(k + 1) % 4], height, thickness, base_z) for k in range(4)]


def staircase_room(riser=0.10, tread=0.30, steps=5):
    """A 6 x 4 m room with 1 m walls and a straight staircase.

    The staircase starts at ``x = 2`` and climbs along ``+x`` over the full
    room width (``0.1 <= y <= 3.9``) onto a landing box that reaches the far
    wall at the height of the top step.

    Arguments:
    :param riser: Step height (m).
    :type riser: float
    :param tread: Step depth (m).
    :type tread: float
    :param steps: Number of steps.
    :type steps: int

    Returns:
    :returns: :class:`terrainmaker.simworld.SceneSpec`

    """
    x_top = 2.0 + steps * tread
    landing_end = 5.95
    spec = SceneSpec(name="staircase_room")
    spec.rooms = [RoomSpec("room", "lab", [(0.0, 0.0), (6.0, 0.0), (6.0, 4.0), (0.0, 4.0)], 0.0)]
    spec.walls = box_walls(0.0, 0.0, 6.0, 4.0)
    spec.staircases = [StaircaseSpec((2.0, 2.0), riser, tread, steps, 3.8)]
    spec.obstacles = [ObstacleSpec(((x_top + landing_end) / 2, 2.0), (landing_end - x_top, 3.8), steps * riser)]
    spec.waypoints = [(0.5, 1.2), (5.2, 1.2), (5.2, 2.8), (0.5, 2.8), (0.5, 1.2)]
    return spec
