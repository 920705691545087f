# -*- coding: utf-8 -*-
"""Predefined multi-room scenes."""
from terrainmaker.scene_library.staircase import box_walls
from terrainmaker.simworld import ObstacleSpec, RoomSpec, SceneSpec, StaircaseSpec, WallSpec


def _rect(x0, y0, x1, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def two_room():
    """An office and a lab, 5 x 4 m each, joined by a 1 m door at ``x = 5``."""
    spec = SceneSpec(name="two_room")
    spec.rooms = [RoomSpec("office", "office", _rect(0.0, 0.0, 5.0, 4.0)),
                  RoomSpec("lab", "lab", _rect(5.0, 0.0, 10.0, 4.0))]
    spec.walls = box_walls(0.0, 0.0, 10.0, 4.0)
    spec.walls += [WallSpec((5.0, 0.0), (5.0, 1.5)), WallSpec((5.0, 2.5), (5.0, 4.0))]
    spec.obstacles = [ObstacleSpec((2.5, 3.3), (1.2, 0.6), 0.75), ObstacleSpec((8.0, 0.7), (1.6, 0.8), 0.9)]
    spec.waypoints = [(0.8, 2.0), (4.2, 2.0), (4.2, 1.0), (1.0, 1.0), (1.0, 2.0),
                      (9.2, 2.0), (9.2, 3.0), (6.0, 3.0), (6.0, 2.0)]
    return spec


def two_floor():
    """Two offices stacked 2 m apart, connected through a stairwell.

    The lower office and the stairwell share a door in line with a 16-step
    staircase (riser 0.125 m, tread 0.25 m). At the top an L-shaped landing
    leads back over the lower stairwell to the upper office. The walk sweeps
    each office in two rows 2 m apart.
    """
    upper = 2.0
    spec = SceneSpec(name="two_floor")
    spec.rooms = [RoomSpec("office_a", "office", _rect(0.0, 0.0, 5.0, 4.0), 0.0),
                  RoomSpec("stairwell", "stairwell", _rect(5.0, 0.0, 10.0, 4.0), 0.0),
                  RoomSpec("landing", "stairwell",
                           [(9.5, 0.2), (10.0, 0.2), (10.0, 4.0), (5.0, 4.0), (5.0, 1.8), (9.5, 1.8)], upper),
                  RoomSpec("office_b", "office", _rect(0.0, 0.0, 5.0, 4.0), upper)]
    spec.walls = box_walls(0.0, 0.0, 10.0, 4.0)
    spec.walls += [WallSpec((5.0, 0.0), (5.0, 0.4)), WallSpec((5.0, 1.6), (5.0, 4.0))]
    spec.walls += [WallSpec((0.0, 0.0), (5.0, 0.0), base_z=upper),
                   WallSpec((0.0, 4.0), (5.0, 4.0), base_z=upper),
                   WallSpec((0.0, 0.0), (0.0, 4.0), base_z=upper),
                   WallSpec((5.0, 0.0), (5.0, 2.5), base_z=upper),
                   WallSpec((5.0, 3.5), (5.0, 4.0), base_z=upper)]
    spec.staircases = [StaircaseSpec((5.5, 1.0), 0.125, 0.25, 16, 1.6)]
    spec.obstacles = [ObstacleSpec((2.0, 2.0), (1.2, 0.6), 0.75),
                      ObstacleSpec((2.0, 2.0), (1.0, 0.8), 0.45, base_z=upper)]
    office_rows = [(1.0, 1.0), (4.0, 1.0), (4.0, 3.0), (1.0, 3.0), (1.0, 1.0)]
    spec.waypoints = office_rows + [(9.75, 1.0), (9.75, 3.0), (1.0, 3.0), (1.0, 1.0), (4.0, 1.0)]
    return spec


def revisit_loop(laps=2):
    """A 12 x 8 m rectangular corridor loop around a solid block, walked ``laps`` times."""
    spec = SceneSpec(name="revisit_loop")
    spec.rooms = [RoomSpec("loop", "corridor", _rect(-1.5, -1.5, 13.5, 9.5))]
    spec.walls = box_walls(-1.5, -1.5, 13.5, 9.5, height=2.0)
    spec.obstacles = [ObstacleSpec((6.0, 4.0), (9.0, 5.0), 2.0),
                      ObstacleSpec((3.0, -1.0), (0.8, 0.6), 0.8),
                      ObstacleSpec((13.0, 4.0), (0.6, 1.2), 1.2),
                      ObstacleSpec((8.0, 9.0), (1.0, 0.6), 0.6),
                      ObstacleSpec((-1.0, 6.0), (0.6, 0.8), 1.0)]
    lap = [(0.0, 0.0), (12.0, 0.0), (12.0, 8.0), (0.0, 8.0)]
    spec.waypoints = lap * laps + [(0.0, 0.0)]
    return spec
