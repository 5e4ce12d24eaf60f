"""Keypoint-based monocular pose estimation for uncooperative spacecraft.

The package covers the geometric portion of a detector + regressor + PnP
pipeline: camera and quaternion conventions, region-of-interest handling,
dense displacement-field decoding, EPnP with RANSAC, pose error metrics,
an error-gated rejection stage, and a synthetic scenario generator used
to exercise all of it without a trained network.
"""

from .displacement import (
    CELLS,
    GRID,
    STRIDE,
    DisplacementField,
    KeypointPredictions,
    anchor,
    anchor_grid,
    decode,
    encode,
    encode_predictions,
    keypoint_error,
    load_field,
    save_field,
)
from .errors import (
    DegenerateConfiguration,
    EmptyDataset,
    EmptyMask,
    InsufficientGeometry,
    InvalidFov,
    MissingConfig,
    NoDetection,
    PointBehindCamera,
    SatposeError,
    SolutionBehindCamera,
    ZeroGroundTruthRange,
)
from .gate import (
    DEFAULT_GATE_THRESHOLD_PX,
    BinaryMask,
    GateDecision,
    estimate_error_dispersion,
    estimate_error_oracle,
    gate,
    make_cutout,
    rasterize_mask,
    read_pgm,
    write_pgm,
)
from .geometry import (
    CameraModel,
    MeshModel,
    Pose,
    Quaternion,
    camera_from_fov,
    load_obj,
    make_box_mesh,
    make_cylinder_mesh,
    project_camera_points,
    project_points,
    random_rotation,
    rotate_point,
    transform_points,
)
from .keypoints import (
    SPEED_KEYPOINT_COUNT,
    KeypointSet,
    load_keypoints,
    sample_surface,
    save_keypoints,
    select_keypoints,
    speed_keypoints,
    triangle_areas,
)
from .metrics import (
    ErrorReport,
    EvalSummary,
    MetricStats,
    SymmetryGroup,
    aggregate,
    combined_error,
    make_report,
    normalized_translation_error,
    rotation_error,
    summary_csv,
    summary_table,
    symmetric_rotation_error,
    translation_error,
)
from .pipeline import (
    HISTOGRAM_BINS,
    CampaignResult,
    HistogramTable,
    PipelineConfig,
    PipelineOutcome,
    StageTimings,
    compute_histogram,
    emulate_detection,
    jittered_bbox,
    run_benchmark,
    run_campaign,
    run_pipeline,
)
from .pnp import Correspondence, PnPResult, RansacParams, epnp_solve, ransac_pnp
from .roi import (
    CROP_RESOLUTION,
    BBox,
    RoI,
    from_crop,
    iou,
    roi_accuracy,
    roi_contains,
    square_and_expand,
    to_crop,
)
from .synth import (
    CAMERA_PRESETS,
    NOISE_PRESETS,
    CameraPreset,
    DatasetRecord,
    NoiseModel,
    ScenarioConfig,
    corrupt,
    generate_dataset,
    load_dataset,
    sample_scenario,
    save_dataset,
    split_dataset,
    standard_mix,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
