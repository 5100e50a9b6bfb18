"""Plane-sweep multi-view stereo with per-pixel non-uniform hypothesis planes."""

from .cascade import CascadeConfig, cascade_loss, run_cascade, smooth_l1
from .costvol import CostVolume, DepthEstimate, build_cost_volume, depth_regression, regularize
from .errors import (ConfigError, InputShapeError, InvalidCameraError, NucvError, NumericError,
                     ParseError, StructuralError)
from .fusion import FusionConfig, PointCloud, fuse, geometric_consistency
from .geometry import CameraView, homography_for_depth, warp_by_depth
from .metrics import evaluate_depth
from .sampler import PatchSamplerParams, SamplerInput, heuristic_distribution, patchnet_forward
from .sampling import HypothesisPlanes, place_planes, sample_cost
from .scene import SceneBundle, read_scene, write_scene
from .synthetic import SyntheticScene, generate_synthetic

__all__ = [
    "CascadeConfig", "cascade_loss", "run_cascade", "smooth_l1", "CostVolume", "DepthEstimate",
    "build_cost_volume", "depth_regression", "regularize", "ConfigError", "InputShapeError",
    "InvalidCameraError", "NucvError", "NumericError", "ParseError", "StructuralError",
    "FusionConfig", "PointCloud", "fuse", "geometric_consistency", "CameraView",
    "homography_for_depth", "warp_by_depth", "evaluate_depth", "PatchSamplerParams", "SamplerInput",
    "heuristic_distribution", "patchnet_forward", "HypothesisPlanes", "place_planes", "sample_cost",
    "SceneBundle", "read_scene", "write_scene", "SyntheticScene", "generate_synthetic",
]

__version__ = "0.1.0"
