from terrainmaker.rl_extensions.simulatedroomlabeler import SimulatedRoomLabeler
