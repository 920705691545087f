from terrainmaker.ta_extensions.stepheight import StepHeight
from terrainmaker.ta_extensions.surfacenormals import SurfaceNormals
