"""Correspondence-free relative pose estimation from unordered point sets.

Two point sets related by an unknown pose and an unknown point-to-point
correspondence are summarized by order-free aggregate feature vectors;
the pose is recovered by nonlinear least squares on the aggregate
difference, with optional consensus-based outlier rejection and
gray-cluster occlusion filtering.
"""

from .estimator import CorrespondenceFreePoseEstimator
from .exceptions import (
    CfposeError,
    CorruptFileError,
    DegenerateDirectionError,
    EmptySegmentationError,
    GenerationError,
    NoConsensusError,
    NonFiniteError,
    PointSetFormatError,
    UnsupportedFormatError,
    ZeroSpreadError,
)
from .features import (
    AggregateFeatures,
    FeatureBasis,
    NormalizationStats,
    aggregate,
    aggregate_mapped,
    basis_from_json,
    basis_to_json,
    default_basis_18,
    get_basis,
    normalize_bearing_set,
)
from .geometry import (
    CorrespondenceModel,
    EulerAngles,
    ModelKind,
    PointSet,
    PoseParams,
    apply_model,
    apply_q_model,
    euler_from_rotation,
    rotation_from_euler,
    skew,
    unit_bearings,
)
from .ingest import HsvThreshold, load_image, segment_hsv
from .pointset_io import load_pointset, save_pointset
from .robust import (
    ClusterPairing,
    GrayCluster,
    RansacConfig,
    kmeans_gray,
    occlusion_filter,
    pair_clusters,
    per_point_residual,
    ransac_solve,
)
from .simgen import (
    NoiseConfig,
    OraclePermutation,
    SceneConfig,
    gen_occlusion_scene,
    gen_scene,
    inject_outliers,
    model_for,
    perturb,
    random_theta,
    subsample_mismatch,
)
from .solver import (
    Estimate,
    Problem,
    SolverConfig,
    jacobian,
    levenberg_marquardt,
    residual,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "AggregateFeatures",
    "CfposeError",
    "ClusterPairing",
    "CorrespondenceFreePoseEstimator",
    "CorrespondenceModel",
    "CorruptFileError",
    "DegenerateDirectionError",
    "EmptySegmentationError",
    "Estimate",
    "EulerAngles",
    "FeatureBasis",
    "GenerationError",
    "GrayCluster",
    "HsvThreshold",
    "ModelKind",
    "NoConsensusError",
    "NoiseConfig",
    "NonFiniteError",
    "NormalizationStats",
    "OraclePermutation",
    "PointSet",
    "PointSetFormatError",
    "PoseParams",
    "Problem",
    "RansacConfig",
    "SceneConfig",
    "SolverConfig",
    "UnsupportedFormatError",
    "ZeroSpreadError",
    "aggregate",
    "aggregate_mapped",
    "apply_model",
    "apply_q_model",
    "basis_from_json",
    "basis_to_json",
    "default_basis_18",
    "euler_from_rotation",
    "gen_occlusion_scene",
    "gen_scene",
    "get_basis",
    "inject_outliers",
    "jacobian",
    "kmeans_gray",
    "levenberg_marquardt",
    "load_image",
    "load_pointset",
    "model_for",
    "normalize_bearing_set",
    "occlusion_filter",
    "pair_clusters",
    "per_point_residual",
    "perturb",
    "random_theta",
    "ransac_solve",
    "residual",
    "rotation_from_euler",
    "save_pointset",
    "segment_hsv",
    "skew",
    "solve",
    "subsample_mismatch",
    "unit_bearings",
]
