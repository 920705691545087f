from terrainmaker.version import terrainmaker_version

__version__ = terrainmaker_version
