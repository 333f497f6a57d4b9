"""Perspective-BEV view transformation kernels.

Image features are lifted into the camera frustum by an outer product with a
categorical depth distribution and collapsed over image height, without any
resampling onto a world-aligned grid. Detection targets live on the matching
perspective anchor lattice. The legacy grid-sampling and voxel-pooling paths
are kept alongside as baselines, together with tools to measure what they
cost: the sampling census, a tensor memory model and a latency harness.

Modules
-------
geometry    pinhole camera, frustum anchors, inverse projection
lift        depth distributions, outer-product lift, height collapse
sampling    grid sampling, voxel pooling, sampling census, memory model
targets     heatmap and attribute targets, detection / depth / total losses
decode      peak extraction, box decoding, center-distance matching
harness     synthetic scenes, end-to-end pipeline, benchmarks, reports
"""

from .errors import ConfigError, DomainError, FormatError, PersBEVError, ShapeError
from .geometry import (
    CameraIntrinsics,
    FrustumGrid,
    WorldPoint,
    anchor_spacing_profile,
    inverse_project,
    make_frustum_grid,
    default_grid,
    project,
)
from .lift import (
    DepthDistribution,
    FeatureMap,
    Frustum3DFeature,
    PerspBEVFeature,
    collapse_height,
    make_depth_mode,
    outer_product_lift,
    softmax_depth,
)
from .sampling import (
    SampledBEVFeature,
    SamplingCensus,
    VoxelGridSpec,
    build_voxel_grid,
    grid_sample,
    memory_footprint,
    memory_report,
    default_voxel_grid,
    sampling_census,
    voxel_pool,
)
from .targets import (
    Box3D,
    LossConfig,
    TargetSet,
    depth_loss,
    detection_loss,
    direction_class,
    encode_targets,
    local_yaw,
    total_loss,
)
from .decode import Detection, MatchReport, decode_boxes, extract_peaks, match_and_score

__version__ = "0.1.0"
