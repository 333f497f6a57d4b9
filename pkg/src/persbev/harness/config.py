"""Pipeline configuration and its YAML file schema.

A config file mirrors :class:`PipelineConfig` field names::

    sampling_mode: grid_nearest      # none | grid_nearest | grid_trilinear | voxel_pool
    depth_mode: onehot_oracle        # onehot_oracle | uniform_one | static_random | predicted_stub
    channels: 64
    depth_seed: 0
    thread_count: 1
    frustum: {image_w: 704, image_h: 256, focal: 560.0, stride: 16,
              depth_bins: 56, depth_min: 2.0, depth_max: 58.0}
    voxel: {x_range: [-40, 40], z_range: [2, 58], y_range: [-5, 3],
            voxel_size: [0.64, 0.64, 0.64]}
    loss: {w_d: 3.0, heatmap_radius_min: 2}
    decode: {threshold: 0.3, k_max: 100, max_match_dist: 2.0, readout: targets}
    scene: {n_objects: 5}

Every key is optional. A file may also hold a ``runs:`` list; each entry is a
partial override of the top-level settings plus an ``id``.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from ..errors import ConfigError
from ..geometry import CameraIntrinsics, FrustumGrid, make_frustum_grid
from ..sampling import VoxelGridSpec, build_voxel_grid
from ..targets import LossConfig

SAMPLING_MODES = ("none", "grid_nearest", "grid_trilinear", "voxel_pool")
PIPELINE_DEPTH_MODES = ("onehot_oracle", "uniform_one", "static_random", "predicted_stub")
READOUTS = ("targets", "signature")


@dataclass(frozen=True)
class FrustumConfig:
    image_w: int = 704
    image_h: int = 256
    focal: float = 560.0
    fy: float | None = None
    cx: float | None = None
    cy: float | None = None
    stride: int = 16
    depth_bins: int = 56
    depth_min: float = 2.0
    depth_max: float = 58.0

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.focal,
            fy=self.focal if self.fy is None else self.fy,
            cx=self.image_w / 2.0 if self.cx is None else self.cx,
            cy=self.image_h / 2.0 if self.cy is None else self.cy,
            image_w=self.image_w,
            image_h=self.image_h,
        )

    def build(self) -> FrustumGrid:
        return make_frustum_grid(
            self.intrinsics(), self.stride, self.depth_bins, self.depth_min, self.depth_max
        )


@dataclass(frozen=True)
class VoxelConfig:
    x_range: tuple[float, float] = (-40.0, 40.0)
    z_range: tuple[float, float] = (2.0, 58.0)
    y_range: tuple[float, float] = (-5.0, 3.0)
    voxel_size: tuple[float, float, float] = (0.64, 0.64, 0.64)

    def build(self) -> VoxelGridSpec:
        return build_voxel_grid(self.x_range, self.z_range, self.y_range, self.voxel_size)


@dataclass(frozen=True)
class DecodeConfig:
    """Readout settings.

    ``readout="targets"`` uses encoded targets as head predictions (geometry
    only); ``"signature"`` finds each object's peak in its own BEV feature
    channel. ``jitter`` is the amplitude of seeded noise added to signature
    scores, standing in for an untrained head when the features are flat.
    """

    threshold: float = 0.3
    k_max: int = 100
    max_match_dist: float = 2.0
    readout: str = "targets"
    jitter: float = 1e-6
    jitter_seed: int = 0


@dataclass(frozen=True)
class SceneConfig:
    n_objects: int = 5
    camera_height: float = 1.6
    min_depth: float = 4.0
    edge_margin_px: float = 8.0
    max_tries: int = 500


@dataclass(frozen=True)
class PipelineConfig:
    sampling_mode: str = "none"
    depth_mode: str = "onehot_oracle"
    channels: int = 64
    depth_seed: int = 0
    thread_count: int = 1
    frustum: FrustumConfig = field(default_factory=FrustumConfig)
    voxel: VoxelConfig = field(default_factory=VoxelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)

    def validate(self) -> "PipelineConfig":
        if self.sampling_mode not in SAMPLING_MODES:
            raise ConfigError(f"sampling_mode must be one of {SAMPLING_MODES}, got {self.sampling_mode!r}")
        if self.depth_mode not in PIPELINE_DEPTH_MODES:
            raise ConfigError(f"depth_mode must be one of {PIPELINE_DEPTH_MODES}, got {self.depth_mode!r}")
        if self.decode.readout not in READOUTS:
            raise ConfigError(f"readout must be one of {READOUTS}, got {self.decode.readout!r}")
        if self.channels < 1:
            raise ConfigError("channels must be positive")
        if self.thread_count < 1:
            raise ConfigError("thread_count must be at least 1")
        if not 0 <= self.decode.threshold <= 1:
            raise ConfigError("decode.threshold must lie in [0, 1]")
        if self.decode.k_max < 1 or self.decode.max_match_dist <= 0:
            raise ConfigError("decode.k_max and decode.max_match_dist must be positive")
        if self.scene.n_objects < 0:
            raise ConfigError("scene.n_objects must be non-negative")
        if self.decode.readout == "signature" and self.scene.n_objects > self.channels:
            raise ConfigError(
                f"signature readout needs one channel per object: {self.scene.n_objects} objects, "
                f"{self.channels} channels"
            )
        self.frustum.build()
        if self.sampling_mode != "none":
            self.voxel.build()
        return self

    @property
    def sampled(self) -> bool:
        return self.sampling_mode != "none"

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        return config_from_dict(overrides, base=self)


_NESTED = {
    "frustum": FrustumConfig,
    "voxel": VoxelConfig,
    "loss": LossConfig,
    "decode": DecodeConfig,
    "scene": SceneConfig,
}


def _coerce(cls, current, values: dict):
    if not isinstance(values, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(values).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    vals = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    try:
        return replace(current, **vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


def config_from_dict(data: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    data = copy.deepcopy(data or {})
    data.pop("id", None)
    data.pop("runs", None)
    top = {}
    for key, val in data.items():
        if key in _NESTED:
            top[key] = _coerce(_NESTED[key], getattr(cfg, key), val)
        else:
            top[key] = val
    return _coerce(PipelineConfig, cfg, top)


def load_config(path) -> list[tuple[str, PipelineConfig]]:
    """Read a YAML config file into ``[(config_id, config), ...]``.

    Without a ``runs:`` list the file yields a single config with id
    ``"default"`` (or the top-level ``id``).
    """
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    base = config_from_dict(data)
    runs = data.get("runs")
    if not runs:
        return [(str(data.get("id", "default")), base.validate())]
    out = []
    for i, run in enumerate(runs):
        if not isinstance(run, dict):
            raise ConfigError(f"runs[{i}] in {path} must be a mapping")
        out.append((str(run.get("id", f"run{i}")), config_from_dict(run, base=base).validate()))
    return out
