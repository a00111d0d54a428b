"""Synthetic multi-view toolkit: rendering, reprojection ground truth,
pseudo-label generation, descriptor losses, and geometric evaluation."""

from .adaptation import (
    AdaptationParams,
    PseudoLabels,
    generate_pseudo_labels,
    pseudo_labels_for_frame,
)
from .config import (
    EvalParams,
    RunConfig,
    config_digest,
    default_config,
    load_config,
    load_scene,
    save_config,
)
from .correspondence import (
    CellCorrespondence,
    CorrespondenceMap,
    PairSampler,
    PairSamplingParams,
    cell_correspondence_homography,
    cell_correspondence_reprojection,
    dense_correspondences,
)
from .dataset import Dataset, read_dataset, write_dataset
from .errors import (
    BehindCameraError,
    ConfigError,
    DatasetError,
    DegenerateConfigurationError,
    EmptySceneError,
    EstimationFailedError,
    ImageTooSmallError,
    InvalidDepthError,
    InvalidSpecError,
    ReprojkitError,
    ShapeError,
)
from .evaluation import (
    HomographyEstimate,
    HomographyMap,
    PosePairRecord,
    RegistrationResult,
    RelativePose,
    ReprojectionMap,
    chamfer_distance,
    corner_error,
    estimate_essential,
    estimate_homography,
    fit_homography,
    kabsch_weighted,
    matching_score,
    mma,
    pose_auc,
    pose_error,
    pose_split_eval,
    register_pair,
    repeatability,
    rotation_error_deg,
    translation_error_deg,
)
from .frontend import KeypointSet, MatchSet, describe, detect, match_mnn, top_k
from .geometry import (
    CameraIntrinsics,
    DepthMap,
    PoseSE3,
    RejectReason,
    ReprojectionParams,
    ReprojectionResult,
    backproject,
    project,
    relative_pose,
    reproject,
    reproject_points,
    robust_depth,
    robust_depth_map,
)
from .losses import (
    DescriptorLossParams,
    descriptor_loss,
    detector_loss,
    detector_targets,
    hinge_term,
)
from .scene import (
    Box,
    Plane,
    RenderedView,
    SceneSpec,
    Sphere,
    TrajectorySpec,
    generate_trajectory,
    look_at,
    render_view,
)
from .textures import CheckerTexture, NoiseTexture, StripeTexture

__all__ = [
    "AdaptationParams",
    "BehindCameraError",
    "Box",
    "CameraIntrinsics",
    "CellCorrespondence",
    "CheckerTexture",
    "ConfigError",
    "CorrespondenceMap",
    "Dataset",
    "DatasetError",
    "DegenerateConfigurationError",
    "DepthMap",
    "DescriptorLossParams",
    "EmptySceneError",
    "EstimationFailedError",
    "EvalParams",
    "HomographyEstimate",
    "HomographyMap",
    "ImageTooSmallError",
    "InvalidDepthError",
    "InvalidSpecError",
    "KeypointSet",
    "MatchSet",
    "NoiseTexture",
    "PairSampler",
    "PairSamplingParams",
    "Plane",
    "PosePairRecord",
    "PoseSE3",
    "PseudoLabels",
    "RegistrationResult",
    "RejectReason",
    "RelativePose",
    "RenderedView",
    "ReprojectionMap",
    "ReprojectionParams",
    "ReprojectionResult",
    "ReprojkitError",
    "RunConfig",
    "SceneSpec",
    "ShapeError",
    "Sphere",
    "StripeTexture",
    "TrajectorySpec",
    "backproject",
    "cell_correspondence_homography",
    "cell_correspondence_reprojection",
    "chamfer_distance",
    "config_digest",
    "corner_error",
    "default_config",
    "dense_correspondences",
    "describe",
    "detect",
    "detector_loss",
    "detector_targets",
    "descriptor_loss",
    "estimate_essential",
    "estimate_homography",
    "fit_homography",
    "generate_pseudo_labels",
    "generate_trajectory",
    "hinge_term",
    "kabsch_weighted",
    "load_config",
    "load_scene",
    "look_at",
    "match_mnn",
    "matching_score",
    "mma",
    "pose_auc",
    "pose_error",
    "pose_split_eval",
    "project",
    "pseudo_labels_for_frame",
    "read_dataset",
    "register_pair",
    "relative_pose",
    "render_view",
    "repeatability",
    "reproject",
    "reproject_points",
    "robust_depth",
    "robust_depth_map",
    "rotation_error_deg",
    "save_config",
    "top_k",
    "translation_error_deg",
    "write_dataset",
]
