"""Joint camera intrinsic and camera-LiDAR extrinsic calibration from pixel-point correspondences."""

from ._backend import NAME as BACKEND
from .camera import CameraIntrinsics, PixelPoint, ProjectionResult, distort, max_valid_radius, project, unproject
from .geometry import Pose, Quaternion
from .metrics import CalibrationError, extrinsic_error, intrinsic_reproj_error
from .pipeline import RefinementConfig, RefinementTrace, run_refinement
from .providers import NoiseSchedule, PerturbationRanges, SyntheticProvider, sample_perturbed_params
from .remap import RemapField, build_remap, warp_image
from .residuals import Correspondence, CorrespondenceSet, ParamBlock
from .solver import SolveOptions, SolveReport, Termination, evaluate_objective, solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CalibrationError",
    "CameraIntrinsics",
    "Correspondence",
    "CorrespondenceSet",
    "NoiseSchedule",
    "ParamBlock",
    "PerturbationRanges",
    "PixelPoint",
    "Pose",
    "ProjectionResult",
    "Quaternion",
    "RefinementConfig",
    "RefinementTrace",
    "RemapField",
    "SolveOptions",
    "SolveReport",
    "SyntheticProvider",
    "Termination",
    "build_remap",
    "distort",
    "evaluate_objective",
    "extrinsic_error",
    "intrinsic_reproj_error",
    "max_valid_radius",
    "project",
    "run_refinement",
    "sample_perturbed_params",
    "solve",
    "unproject",
    "warp_image",
]
