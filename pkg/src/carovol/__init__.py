"""Freehand 3D carotid ultrasound toolkit.

Turns a tracked sweep (2D frames + noisy rigid poses + vessel masks) into
a regularized voxel volume and quantitative atherosclerosis measurements,
with evaluation metrics and a synthetic phantom oracle.
"""

__version__ = "0.1.0"

from .pose import (
    MetricWeights,
    Pose,
    PoseSequence,
    Rotation,
    Twist,
    compose,
    exp_map,
    geodesic_distance,
    geodesic_interpolate,
    huber,
    inverse,
    log_map,
)

__all__ = [
    "MetricWeights",
    "Pose",
    "PoseSequence",
    "Rotation",
    "Twist",
    "compose",
    "exp_map",
    "geodesic_distance",
    "geodesic_interpolate",
    "huber",
    "inverse",
    "log_map",
    "__version__",
]
