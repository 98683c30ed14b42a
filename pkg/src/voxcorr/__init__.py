"""voxcorr: training-free 3D voxel correspondence on multi-scale feature volumes."""

from .descriptor import (
    DescriptorSampler,
    FeatureLevel,
    FeatureSet,
    fuse,
    normalize_l2,
    sample_descriptor,
    upsample_level,
)
from .diffusion import (
    LatentVolume,
    NoiseSchedule,
    forward_noise,
    load_schedule,
    make_schedule,
    synth_features,
)
from .io_formats import (
    read_keypoints,
    read_mdf,
    read_raw_volume,
    write_keypoints,
    write_mdf,
    write_raw_volume,
    write_report,
)
from .matcher import (
    MatchError,
    MatchResult,
    SearchRegion,
    cosine_similarity,
    match_boxed,
    match_global,
    similarity_map,
)
from .metrics import (
    CaseErrors,
    MetricsReport,
    SweepTable,
    aggregate,
    box_from_percentile,
    keypoint_errors,
    nearest_rank_percentile,
    sweep_aggregate,
)
from .volume import (
    KeypointSet,
    Volume3D,
    normalize_intensity,
    resample_trilinear,
    sample_trilinear,
    voxel_to_world,
)

__version__ = "0.1.0"
