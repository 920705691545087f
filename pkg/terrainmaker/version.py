terrainmaker_version = "1.0"
