"""Rolling-shutter camera simulation and supporting numerics."""

from rollsim.geometry import Intrinsics, Pose, backproject, compose, inverse, project
from rollsim.distortion import (
    InverseRadialDistortion,
    RadialDistortion,
    apply_inverse,
    distort,
    fit_inverse,
    undistort_numeric,
)
from rollsim.shutter import ShutterTiming, complete_timing, row_start_time

__version__ = "0.1.0"

__all__ = [
    "Intrinsics",
    "InverseRadialDistortion",
    "Pose",
    "RadialDistortion",
    "ShutterTiming",
    "apply_inverse",
    "backproject",
    "complete_timing",
    "compose",
    "distort",
    "fit_inverse",
    "inverse",
    "project",
    "row_start_time",
    "undistort_numeric",
]
