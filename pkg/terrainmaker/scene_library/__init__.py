# -*- coding: utf-8 -*-
"""
Ready-made synthetic scenes.

"""
from terrainmaker.exceptions import ConfigError
from terrainmaker.scene_library.multiroom import revisit_loop, two_floor, two_room
from terrainmaker.scene_library.staircase import staircase_room

SCENES = {
    "staircase_room": staircase_room,
    "two_room": two_room,
    "two_floor": two_floor,
    "revisit_loop": revisit_loop,
}


def get_scene(name):
    """The :class:`SceneSpec` registered under ``name``."""
    if name not in SCENES:
        raise ConfigError(f"get_scene - unknown scene '{name}', expected one of {sorted(SCENES)}")
    return SCENES[name]()
