"""
Exceptions raised by terrainmaker.

Every exception carries the process exit code the command line
interface returns when it escapes a subcommand:

    * 2 -- configuration errors
    * 3 -- data errors (bad inputs, malformed files, inconsistent maps)
    * 4 -- numerical failures

"""


class TerrainMakerError(Exception):
    exit_code = 1


class ConfigError(TerrainMakerError):
    exit_code = 2


class DataError(TerrainMakerError):
    exit_code = 3


class NumericalError(TerrainMakerError):
    exit_code = 4


class OutOfBoundsError(DataError, IndexError):
    pass


class EmptyIntersectionError(DataError):
    pass


class MalformedPoseError(DataError):
    pass


class TimestampError(DataError):
    pass


class UnknownNodeError(DataError, KeyError):
    pass


class InformationMatrixError(DataError):
    pass


class LabelError(DataError):
    pass


class MissingPoseError(DataError):
    pass


class ResolutionMismatchError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class UnknownCellError(DataError):
    pass


class MisalignedGridError(DataError):
    pass


class DegenerateLabelsError(DataError):
    pass


class TooFewPointsError(DataError):
    pass


class TrajectoryError(DataError):
    pass


class DisconnectedGraphError(DataError):
    pass


class FileFormatError(DataError):
    pass


class NonFiniteCostError(NumericalError):
    pass


class NoConsensusError(NumericalError):
    pass
