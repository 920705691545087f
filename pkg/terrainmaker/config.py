"""
Pipeline configuration.

A configuration file is TOML with one table per block; every key is
optional and defaults to the values below, so an empty file is valid::

    seed = 7

    [scene]
    name = "staircase_room"      # or: path = "my_scene.toml"

    [drift]
    scale_drift = 0.04

    [mapping]
    resolution = 0.02
    submap_side = 2.4

    [traversability]
    stride_radius = 0.20
    step_height = 0.20

Unknown blocks or keys and out-of-range values raise :class:`ConfigError`
naming the offending key.

Scene files use ``[[rooms]]``, ``[[walls]]``, ``[[staircases]]`` and
``[[obstacles]]`` arrays whose keys are the fields of
:class:`RoomSpec`, :class:`WallSpec`, :class:`StaircaseSpec` and
:class:`ObstacleSpec`, plus top-level ``name`` and ``waypoints``.

"""
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from terrainmaker.elevation import RollingMapConfig
from terrainmaker.exceptions import ConfigError
from terrainmaker.keyframe import CameraIntrinsics
from terrainmaker.localization import RansacConfig
from terrainmaker.posegraph import SpacingPolicy
from terrainmaker.scene_library import get_scene
from terrainmaker.simworld import (DriftConfig, GaitConfig, ObstacleSpec, RoomSpec, SceneSpec,
                                   StaircaseSpec, WallSpec)
from terrainmaker.traversability import TraversabilityParams

logger = logging.getLogger(__name__)


@dataclass
class PathsConfig:
    out: str = "out"
    export_hdf5: bool = False


@dataclass
class SceneConfig:
    name: str = "staircase_room"
    path: Optional[str] = None

    def load(self):
        """The configured :class:`SceneSpec` (scene file first, library name otherwise)."""
        if self.path:
            return read_scene_toml(self.path)
        return get_scene(self.name)


@dataclass
class RenderConfig:
    """Depth camera used for terrain mapping and the frame rate of the walk."""
    width: int = 80
    height: int = 60
    fx: float = 60.0
    fy: float = 60.0
    cx: float = 40.0
    cy: float = 30.0
    noise_sigma: float = 0.005
    max_range: float = 6.0
    dt: float = 1.0 / 15.0
    frame_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0 or self.frame_stride < 1:
            raise ConfigError("[render] 'dt' must be > 0 and 'frame_stride' >= 1")
        if self.noise_sigma < 0 or not self.max_range > 0:
            raise ConfigError("[render] 'noise_sigma' must be >= 0 and 'max_range' > 0")

    @property
    def intrinsics(self):
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)


@dataclass
class KeyframeConfig:
    """Feature camera and synthetic feature noise."""
    width: int = 640
    height: int = 480
    fx: float = 525.0
    fy: float = 525.0
    cx: float = 320.0
    cy: float = 240.0
    pixel_noise: float = 0.5
    bit_flip_rate: float = 0.05
    landmark_density: float = 20.0
    max_range: float = 8.0

    def __post_init__(self):
        if self.pixel_noise < 0 or not 0 <= self.bit_flip_rate <= 0.5:
            raise ConfigError("[keyframe] 'pixel_noise' must be >= 0 and 'bit_flip_rate' in [0, 0.5]")
        if not self.landmark_density > 0:
            raise ConfigError("[keyframe] 'landmark_density' must be > 0")

    @property
    def intrinsics(self):
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)


@dataclass
class MappingConfig:
    window_side: float = 6.0
    resolution: float = 0.02
    sensor_sigma_at_1m: float = 0.01
    mahalanobis_gate: float = 3.0
    min_height: float = -2.0
    max_height: float = 1.0
    node_translation: float = 1.0
    node_rotation_deg: float = 30.0
    submap_side: float = 2.4
    use_odometry: bool = False

    def __post_init__(self):
        if not self.node_translation > 0 or not self.node_rotation_deg > 0:
            raise ConfigError("[mapping] node spacing thresholds must be > 0")
        if not 0 < self.submap_side <= self.window_side:
            raise ConfigError("[mapping] 'submap_side' must be in (0, window_side]")
        self.rolling  # raises ConfigError for out-of-range map settings

    @property
    def rolling(self):
        return RollingMapConfig(self.window_side, self.resolution, self.sensor_sigma_at_1m,
                                self.mahalanobis_gate, self.min_height, self.max_height)

    @property
    def spacing(self):
        return SpacingPolicy(self.node_translation, np.deg2rad(self.node_rotation_deg))


@dataclass
class GraphConfig:
    max_iters: int = 100
    tol: float = 1e-9
    lambda_init: float = 1e-4
    sigma_translation: float = 0.05
    sigma_rotation: float = 0.02
    loop_closures: bool = True
    loop_exclusion: int = 10
    loop_candidates: int = 3
    loop_information: float = 1.0

    def __post_init__(self):
        if not (self.sigma_translation > 0 and self.sigma_rotation > 0 and self.loop_information > 0):
            raise ConfigError("[graph] sigmas and 'loop_information' must be > 0")
        if self.max_iters < 1:
            raise ConfigError("[graph] 'max_iters' must be >= 1")

    @property
    def odometry_information(self):
        return np.diag([self.sigma_translation**-2] * 3 + [self.sigma_rotation**-2] * 3)


@dataclass
class LabelConfig:
    epsilon: float = 0.05
    mislabel_rate: float = 0.0
    smooth_window: int = 0

    def __post_init__(self):
        if not (0 <= self.epsilon < 1 and 0 <= self.mislabel_rate <= 1):
            raise ConfigError("[labels] 'epsilon' must be in [0, 1) and 'mislabel_rate' in [0, 1]")


@dataclass
class FusionConfig:
    floor_separation: float = 1.5
    margin: float = 0.0


@dataclass
class TraversabilityConfig:
    stride_radius: float = 0.20
    step_height: float = 0.20
    min_support: int = 3
    treat_unknown_as_untraversable: bool = False
    normals_fit_radius: float = 0.10
    normals_max_slope_deg: float = 45.0

    def __post_init__(self):
        self.params  # raises ConfigError for out-of-range step settings
        if not self.normals_fit_radius > 0 or not 0 < self.normals_max_slope_deg <= 90:
            raise ConfigError("[traversability] normals settings out of range")

    @property
    def params(self):
        return TraversabilityParams(self.stride_radius, self.step_height, self.min_support,
                                    self.treat_unknown_as_untraversable)


@dataclass
class LocalizationConfig:
    candidates: int = 3
    query_spacing: float = 0.8
    fix_window: float = 0.5
    revisit_offset: float = 0.3

    def __post_init__(self):
        if self.candidates < 1 or not self.query_spacing > 0:
            raise ConfigError("[localization] 'candidates' must be >= 1 and 'query_spacing' > 0")


@dataclass
class EvaluationConfig:
    distances: List[float] = field(default_factory=lambda: [1.0, 5.0])
    max_dt: float = 0.02
    sample_density: float = 10000.0
    reference_density: float = 40000.0
    max_slope_deg: float = 80.0
    max_quad_span: float = 0.05
    thresholds: int = 21

    def __post_init__(self):
        if not self.distances or min(self.distances) <= 0:
            raise ConfigError("[evaluation] 'distances' must be a non-empty list of positive values")
        if self.thresholds < 2:
            raise ConfigError("[evaluation] 'thresholds' must be >= 2")
        if not self.sample_density > 0 or not self.reference_density > 0:
            raise ConfigError("[evaluation] 'sample_density' and 'reference_density' must be > 0")
        if not self.max_quad_span > 0:
            raise ConfigError("[evaluation] 'max_quad_span' must be > 0")


@dataclass
class PipelineConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    gait: GaitConfig = field(default_factory=GaitConfig)
    drift: DriftConfig = field(default_factory=DriftConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    keyframe: KeyframeConfig = field(default_factory=KeyframeConfig)
    mapping: MappingConfig = field(default_factory=MappingConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    traversability: TraversabilityConfig = field(default_factory=TraversabilityConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    localization: LocalizationConfig = field(default_factory=LocalizationConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    @property
    def out(self):
        return self.paths.out

    def as_dict(self):
        return dataclasses.asdict(self)


# Keys the global seed replaces.
_EXCLUDED = {"drift": {"seed"}}


def _coerce(value, ftype, where):
    if ftype is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if ftype in (float, int, bool, str) and not isinstance(value, ftype):
        raise ConfigError(f"{where} expected {ftype.__name__}, got {value!r}")
    if ftype is int and isinstance(value, bool):
        raise ConfigError(f"{where} expected int, got {value!r}")
    return value


def _from_table(cls, table, block):
    if not isinstance(table, dict):
        raise ConfigError(f"[{block}] must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in known or key in _EXCLUDED.get(block, ()):
            raise ConfigError(f"[{block}] unknown key '{key}'")
        kwargs[key] = _coerce(value, known[key].type, f"[{block}] '{key}'")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[{block}] {err}")


def config_from_dict(data):
    """Build a :class:`PipelineConfig` from parsed TOML."""
    data = dict(data)
    kwargs = {}
    if "seed" in data:
        kwargs["seed"] = _coerce(data.pop("seed"), int, "'seed'")
    blocks = {f.name: f.type for f in dataclasses.fields(PipelineConfig) if f.name != "seed"}
    for block, table in data.items():
        if block not in blocks:
            raise ConfigError(f"unknown configuration block '{block}'")
        kwargs[block] = _from_table(blocks[block], table, block)
    return PipelineConfig(**kwargs)


def load_config(filename=None, seed=None, out=None):
    """Read a configuration file (``None`` means all defaults) and apply CLI overrides.

    :raises ConfigError: for a missing or malformed file, unknown keys and
        out-of-range values, and a missing scene file.
    """
    data = {}
    if filename is not None:
        data = _read_toml(filename)
    config = config_from_dict(data)
    if seed is not None:
        config.seed = int(seed)
    if out is not None:
        config.paths.out = out
    if config.scene.path:
        base = os.path.dirname(os.path.abspath(filename)) if filename else os.getcwd()
        path = config.scene.path if os.path.isabs(config.scene.path) else os.path.join(base, config.scene.path)
        if not os.path.exists(path):
            raise ConfigError(f"scene file '{config.scene.path}' not found")
        config.scene.path = path
    logger.debug("load_config - %s", config)
    return config


def _read_toml(filename):
    if not os.path.exists(filename):
        raise ConfigError(f"configuration file '{filename}' not found")
    with open(filename, "rb") as fid:
        try:
            return tomllib.load(fid)
        except tomllib.TOMLDecodeError as err:
            raise ConfigError(f"'{filename}': {err}")


def read_scene_toml(filename):
    """Read a :class:`SceneSpec` from a TOML scene file and validate it."""
    data = _read_toml(filename)
    spec = SceneSpec(name=data.pop("name", os.path.splitext(os.path.basename(filename))[0]))
    spec.waypoints = [tuple(p) for p in data.pop("waypoints", [])]
    arrays = {"rooms": RoomSpec, "walls": WallSpec, "staircases": StaircaseSpec, "obstacles": ObstacleSpec}
    for key, entries in data.items():
        if key not in arrays:
            raise ConfigError(f"scene '{filename}': unknown key '{key}'")
        setattr(spec, key, [_from_table(arrays[key], entry, key) for entry in entries])
    return spec.validate()
